//! Deterministic world-suite generators at desk scale: corridor, rooms,
//! and maze families.
//!
//! Each episode comes from its own seed derived from (suite seed, family,
//! index), so suites are reproducible and insertion order never matters.
//! A candidate world is kept only if it validates and its goal is
//! reachable on the grid; otherwise the generator redraws with a fresh
//! derived seed, up to a retry cap.

use super::{grid_shortest_path, HarnessError};
use crate::geometry::Pose2D;
use crate::seeding::derive_seed;
use crate::worldsim::{
    Episode, Landmark, Subtask, SubtaskPredicate, WorldMap, DEFAULT_SUCCESS_RADIUS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// World layout family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorldFamily {
    /// One long hallway with wall posts; straight-line tasks.
    Corridor,
    /// Two rooms joined by a doorway; funnel tasks.
    Rooms,
    /// Perfect maze with 1.5 m lanes; hard detour tasks.
    Maze,
}

impl fmt::Display for WorldFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorldFamily::Corridor => "corridor",
            WorldFamily::Rooms => "rooms",
            WorldFamily::Maze => "maze",
        })
    }
}

impl FromStr for WorldFamily {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corridor" => Ok(WorldFamily::Corridor),
            "rooms" => Ok(WorldFamily::Rooms),
            "maze" => Ok(WorldFamily::Maze),
            other => Err(HarnessError::InvalidArgument(format!(
                "unknown world family {other:?} (expected corridor, rooms, or maze)"
            ))),
        }
    }
}

fn family_tag(family: WorldFamily) -> u64 {
    match family {
        WorldFamily::Corridor => 11,
        WorldFamily::Rooms => 12,
        WorldFamily::Maze => 13,
    }
}

/// Suite shape: family, episode count, and map parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub family: WorldFamily,
    pub count: usize,
    /// Grid cell size, meters.
    pub resolution: f64,
    pub success_radius: f64,
}

impl GeneratorConfig {
    pub fn new(family: WorldFamily, count: usize) -> Self {
        Self { family, count, resolution: 0.5, success_radius: DEFAULT_SUCCESS_RADIUS }
    }
}

const RETRY_CAP: usize = 32;

/// Generates `cfg.count` validated, grid-solvable episodes. Episode `i`
/// depends only on (seed, family, i), never on the other episodes.
pub fn generate_world_suite(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Episode>, HarnessError> {
    if cfg.count == 0 {
        return Err(HarnessError::InvalidArgument("episode count must be positive".into()));
    }
    if !(cfg.resolution > 0.0 && cfg.resolution.is_finite()) {
        return Err(HarnessError::InvalidArgument(format!(
            "resolution {} must be positive",
            cfg.resolution
        )));
    }
    if !(cfg.success_radius > 0.0 && cfg.success_radius.is_finite()) {
        return Err(HarnessError::InvalidArgument(format!(
            "success radius {} must be positive",
            cfg.success_radius
        )));
    }
    (0..cfg.count).map(|i| generate_episode(cfg, seed, i)).collect()
}

/// The fixed 100-episode benchmark: 50 corridor + 50 rooms worlds.
pub fn standard_suite(seed: u64) -> Result<Vec<Episode>, HarnessError> {
    let mut episodes = generate_world_suite(
        &GeneratorConfig::new(WorldFamily::Corridor, 50),
        derive_seed(seed, &[1]),
    )?;
    episodes.extend(generate_world_suite(
        &GeneratorConfig::new(WorldFamily::Rooms, 50),
        derive_seed(seed, &[2]),
    )?);
    Ok(episodes)
}

fn generate_episode(cfg: &GeneratorConfig, seed: u64, index: usize) -> Result<Episode, HarnessError> {
    for attempt in 0..RETRY_CAP {
        let child = derive_seed(seed, &[family_tag(cfg.family), index as u64, attempt as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(child);
        let id = format!("{}-{seed:08x}-{index:03}", cfg.family);
        let candidate = match cfg.family {
            WorldFamily::Corridor => corridor_episode(cfg, &mut rng, &id),
            WorldFamily::Rooms => rooms_episode(cfg, &mut rng, &id),
            WorldFamily::Maze => maze_episode(cfg, &mut rng, &id),
        };
        if let Some(ep) = candidate {
            if ep.validate().is_ok() && solvable(&ep) {
                return Ok(ep);
            }
        }
    }
    Err(HarnessError::Generator {
        attempts: RETRY_CAP,
        message: format!("{} episode {index} under suite seed {seed}", cfg.family),
    })
}

fn solvable(ep: &Episode) -> bool {
    let route = grid_shortest_path(&ep.map, (ep.start.x, ep.start.y), ep.goal);
    let direct = (ep.start.x - ep.goal.0).hypot(ep.start.y - ep.goal.1);
    matches!(route, Some(l) if l.is_finite()) && direct > ep.success_radius + 1.0
}

fn reach(id: usize, text: &str, center: (f64, f64), radius: f64) -> Subtask {
    Subtask {
        id,
        text: text.to_string(),
        predicate: SubtaskPredicate::ReachRegion { center, radius },
    }
}

fn border_rows(w: usize, h: usize) -> Vec<Vec<bool>> {
    (0..h)
        .map(|iy| (0..w).map(|ix| ix == 0 || iy == 0 || ix == w - 1 || iy == h - 1).collect())
        .collect()
}

fn corridor_episode(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, id: &str) -> Option<Episode> {
    let res = cfg.resolution;
    let len = rng.gen_range(94..=100usize);
    let interior = rng.gen_range(6..=8usize);
    let h = interior + 2;
    let rows = border_rows(len, h);
    let cy = h as f64 * res / 2.0;

    // Starting away from the near end leaves room behind the agent: a
    // run that sets off the wrong way pays for the detour.
    let start = Pose2D::new(
        rng.gen_range(5.0..8.0),
        cy + rng.gen_range(-0.25..0.25),
        rng.gen_range(-PI..PI),
    );
    let gx = (len as f64 - 2.5) * res + rng.gen_range(-0.25..0.25);
    let goal = (gx, cy + rng.gen_range(-0.25..0.25));

    let mut landmarks = vec![Landmark {
        id: "goal-marker".to_string(),
        name: "goal marker".to_string(),
        position: goal,
        radius: 0.3,
    }];
    for k in 0..rng.gen_range(1..=2usize) {
        let px = rng.gen_range(2.0..goal.0 - 1.0);
        let py = if rng.gen_bool(0.5) { 1.5 * res } else { (h as f64 - 1.5) * res };
        landmarks.push(Landmark {
            id: format!("post-{k}"),
            name: "corridor post".to_string(),
            position: (px, py),
            radius: 0.25,
        });
    }

    let map = WorldMap::new(res, rows, landmarks).ok()?;
    let mut subtasks = Vec::new();
    if len >= 25 {
        let mid = ((start.x + goal.0) / 2.0, cy);
        subtasks.push(reach(subtasks.len(), "pass the corridor midpoint", mid, 2.0));
    }
    subtasks.push(reach(
        subtasks.len(),
        "stop at the goal marker",
        goal,
        cfg.success_radius,
    ));

    Some(Episode {
        id: id.to_string(),
        map,
        start,
        goal,
        instruction: "walk down the corridor and stop at the goal marker".to_string(),
        subtasks,
        success_radius: cfg.success_radius,
    })
}

fn rooms_episode(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, id: &str) -> Option<Episode> {
    let res = cfg.resolution;
    let w = rng.gen_range(26..=30usize);
    let h = rng.gen_range(14..=18usize);
    let wall_x = rng.gen_range(w / 2 - 3..=w / 2 + 3);
    let gap = rng.gen_range(3..=4usize);
    let gap_y = rng.gen_range(2..=h - 2 - gap);

    let mut rows = border_rows(w, h);
    for (iy, row) in rows.iter_mut().enumerate() {
        if !(gap_y..gap_y + gap).contains(&iy) {
            row[wall_x] = true;
        }
    }

    let door = ((wall_x as f64 + 0.5) * res, (gap_y as f64 + gap as f64 / 2.0) * res);
    let start = Pose2D::new(
        rng.gen_range(1.25..(wall_x as f64 - 2.0) * res),
        rng.gen_range(1.25..(h as f64 - 2.5) * res),
        rng.gen_range(-PI..PI),
    );
    let goal = (
        rng.gen_range((wall_x as f64 + 3.0) * res..(w as f64 - 2.5) * res),
        rng.gen_range(1.25..(h as f64 - 2.5) * res),
    );

    let door_front = (door.0 - 1.25, door.1);
    let door_exit = (door.0 + 1.25, door.1);

    let landmarks = vec![
        Landmark {
            id: "door-marker".to_string(),
            name: "doorway marker".to_string(),
            position: door,
            radius: 0.2,
        },
        Landmark {
            id: "goal-marker".to_string(),
            name: "goal marker".to_string(),
            position: goal,
            radius: 0.3,
        },
    ];
    let map = WorldMap::new(res, rows, landmarks).ok()?;
    if !(map.is_free(door_front.0, door_front.1) && map.is_free(door_exit.0, door_exit.1)) {
        return None;
    }

    let subtasks = vec![
        reach(0, "go to the doorway marker", door_front, 1.5),
        reach(1, "pass through the doorway", door_exit, 1.2),
        reach(2, "stop at the goal marker", goal, cfg.success_radius),
    ];

    Some(Episode {
        id: id.to_string(),
        map,
        start,
        goal,
        instruction: "leave the first room through the doorway and stop at the goal marker"
            .to_string(),
        subtasks,
        success_radius: cfg.success_radius,
    })
}

/// Lane width of maze passages, in cells.
const MAZE_LANE: usize = 3;
/// Cell pitch of one maze unit: a lane plus one dividing wall.
const MAZE_PITCH: usize = MAZE_LANE + 1;

fn maze_episode(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, id: &str) -> Option<Episode> {
    let res = cfg.resolution;
    let mw = rng.gen_range(4..=5usize);
    let mh = rng.gen_range(3..=4usize);
    let gw = mw * MAZE_PITCH + 1;
    let gh = mh * MAZE_PITCH + 1;
    let mut rows = vec![vec![true; gw]; gh];

    let carve_cell = |rows: &mut Vec<Vec<bool>>, cx: usize, cy: usize| {
        for iy in cy * MAZE_PITCH + 1..=cy * MAZE_PITCH + MAZE_LANE {
            for ix in cx * MAZE_PITCH + 1..=cx * MAZE_PITCH + MAZE_LANE {
                rows[iy][ix] = false;
            }
        }
    };
    // Opens the dividing wall strip between two adjacent maze cells.
    let carve_link = |rows: &mut Vec<Vec<bool>>, a: (usize, usize), b: (usize, usize)| {
        if a.0 != b.0 {
            let wall_ix = a.0.max(b.0) * MAZE_PITCH;
            for iy in a.1 * MAZE_PITCH + 1..=a.1 * MAZE_PITCH + MAZE_LANE {
                rows[iy][wall_ix] = false;
            }
        } else {
            let wall_iy = a.1.max(b.1) * MAZE_PITCH;
            for ix in a.0 * MAZE_PITCH + 1..=a.0 * MAZE_PITCH + MAZE_LANE {
                rows[wall_iy][ix] = false;
            }
        }
    };

    let mut visited = vec![vec![false; mw]; mh];
    let mut stack = vec![(0usize, rng.gen_range(0..mh))];
    visited[stack[0].1][stack[0].0] = true;
    carve_cell(&mut rows, stack[0].0, stack[0].1);
    while let Some(&(cx, cy)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::new();
        if cx > 0 && !visited[cy][cx - 1] {
            options.push((cx - 1, cy));
        }
        if cx + 1 < mw && !visited[cy][cx + 1] {
            options.push((cx + 1, cy));
        }
        if cy > 0 && !visited[cy - 1][cx] {
            options.push((cx, cy - 1));
        }
        if cy + 1 < mh && !visited[cy + 1][cx] {
            options.push((cx, cy + 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let next = options[rng.gen_range(0..options.len())];
        visited[next.1][next.0] = true;
        carve_cell(&mut rows, next.0, next.1);
        carve_link(&mut rows, (cx, cy), next);
        stack.push(next);
    }

    let cell_center = |cx: usize, cy: usize| {
        (
            (cx * MAZE_PITCH) as f64 * res + (MAZE_PITCH as f64 / 2.0) * res,
            (cy * MAZE_PITCH) as f64 * res + (MAZE_PITCH as f64 / 2.0) * res,
        )
    };
    let start_cell = (0, rng.gen_range(0..mh));
    let goal_cell = (mw - 1, rng.gen_range(0..mh));
    let (sx, sy) = cell_center(start_cell.0, start_cell.1);
    let goal = cell_center(goal_cell.0, goal_cell.1);
    let start = Pose2D::new(sx, sy, rng.gen_range(-PI..PI));

    let landmarks = vec![Landmark {
        id: "goal-marker".to_string(),
        name: "goal marker".to_string(),
        position: goal,
        radius: 0.3,
    }];
    let map = WorldMap::new(res, rows, landmarks).ok()?;
    let subtasks = vec![reach(0, "stop at the goal marker", goal, cfg.success_radius)];

    Some(Episode {
        id: id.to_string(),
        map,
        start,
        goal,
        instruction: "find your way through the maze to the goal marker".to_string(),
        subtasks,
        success_radius: cfg.success_radius,
    })
}
