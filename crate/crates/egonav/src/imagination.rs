//! Rollout imagination and narration.
//!
//! [`imagine_rollout`] walks a candidate trajectory through the map and
//! records, per pose, what the agent would see there: landmark sightings,
//! collision state, and a corridor-width probe. The rollout is truncated to
//! a configurable length and optionally corrupted by a per-frame landmark
//! dropout whose probability grows linearly with frame index, so foresight
//! fidelity degrades the further ahead the rollout looks.
//!
//! [`narrate`] compresses a frame sequence into a [`NarrationReport`]: a
//! six-field structured answer covering walking direction, the landmark
//! being approached, landmarks encountered, local layout, an intent
//! sentence, and whether a collision is predicted. The scripted narrator
//! fills every field deterministically from the frames alone; remote chat
//! adapters implement the same [`NarrationExpert`] interface.

use crate::error::ExpertError;
use crate::geometry::{trajectory_to_pose_sequence, Pose2D, Trajectory, TRAJECTORY_LEN};
use crate::perception::CameraModel;
use crate::worldsim::{visible_landmarks, WorldMap};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Cap, in meters, on each sideways corridor probe; the width estimate is
/// the sum of the left and right probes, so it saturates at twice this.
pub const CORRIDOR_PROBE_RANGE: f64 = 2.5;

#[derive(Debug, Error, PartialEq)]
pub enum ImaginationError {
    #[error("invalid imagination config: {0}")]
    BadConfig(String),
    #[error("cannot narrate an empty frame sequence")]
    EmptyFrames,
    #[error(transparent)]
    Expert(#[from] ExpertError),
}

/// One landmark visible in an imagined frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSighting {
    pub id: String,
    /// Bearing from the frame's pose, radians, positive = left.
    pub bearing: f64,
    /// Straight-line range from the frame's pose, meters.
    pub range: f64,
}

/// One step of an imagined rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutFrame {
    pub pose: Pose2D,
    /// Landmark sightings surviving fidelity corruption, in the map's
    /// landmark declaration order.
    pub visible: Vec<LandmarkSighting>,
    /// True when the pose itself sits on occupied space. A colliding frame
    /// is always the last frame of its rollout.
    pub collision: bool,
    /// Left probe + right probe, each a perpendicular raycast capped at
    /// [`CORRIDOR_PROBE_RANGE`].
    pub corridor_width_estimate: f64,
}

/// Rollout length and fidelity-corruption settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImaginationConfig {
    /// Number of leading trajectory poses to imagine, in `1..=24`.
    pub irl: usize,
    /// Slope of the per-frame landmark dropout probability: a landmark
    /// visible at frame `i` is dropped with probability
    /// `min(1, fidelity_decay * i)`. Zero keeps the rollout an exact
    /// visibility oracle.
    pub fidelity_decay: f64,
}

impl Default for ImaginationConfig {
    fn default() -> Self {
        Self { irl: 18, fidelity_decay: 0.0 }
    }
}

impl ImaginationConfig {
    pub fn validate(&self) -> Result<(), ImaginationError> {
        if !(1..=TRAJECTORY_LEN).contains(&self.irl) {
            return Err(ImaginationError::BadConfig(format!(
                "irl {} outside 1..={TRAJECTORY_LEN}",
                self.irl
            )));
        }
        if !self.fidelity_decay.is_finite() || self.fidelity_decay < 0.0 {
            return Err(ImaginationError::BadConfig(format!(
                "fidelity_decay {} must be finite and >= 0",
                self.fidelity_decay
            )));
        }
        Ok(())
    }
}

/// Imagines the first `cfg.irl` poses of `traj` applied from `start`,
/// stopping early at the first colliding frame (which is included).
///
/// Visibility and collision are evaluated against the true map; corruption
/// only ever hides landmarks. One uniform draw is consumed per truly
/// visible landmark, frame by frame in order, so the draw stream depends
/// only on `(map, start, traj, camera, seed)`: truncating the rollout
/// leaves earlier frames bit-identical (prefix property), and raising
/// `fidelity_decay` can only turn keeps into drops.
pub fn imagine_rollout(
    map: &WorldMap,
    start: &Pose2D,
    traj: &Trajectory,
    camera: &CameraModel,
    cfg: &ImaginationConfig,
    seed: u64,
) -> Vec<RolloutFrame> {
    cfg.validate().expect("imagination config must be validated by the caller");
    let poses = trajectory_to_pose_sequence(traj, start)
        .expect("validated trajectory composes from a finite pose");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(cfg.irl);
    for (index, pose) in poses.poses().iter().take(cfg.irl).enumerate() {
        let drop_prob = (cfg.fidelity_decay * index as f64).min(1.0);
        let visible = visible_landmarks(map, pose, camera)
            .into_iter()
            .filter_map(|v| {
                let keep = rng.gen::<f64>() >= drop_prob;
                keep.then(|| LandmarkSighting {
                    id: v.landmark.id.clone(),
                    bearing: v.bearing,
                    range: v.range,
                })
            })
            .collect();
        let collision = !map.is_free(pose.x, pose.y);
        let left = map.raycast(
            pose.x,
            pose.y,
            pose.yaw + std::f64::consts::FRAC_PI_2,
            CORRIDOR_PROBE_RANGE,
        );
        let right = map.raycast(
            pose.x,
            pose.y,
            pose.yaw - std::f64::consts::FRAC_PI_2,
            CORRIDOR_PROBE_RANGE,
        );
        frames.push(RolloutFrame {
            pose: *pose,
            visible,
            collision,
            corridor_width_estimate: left + right,
        });
        if collision {
            break;
        }
    }
    frames
}

/// Net walking direction relative to the first frame's viewpoint,
/// quantized to 90-degree sectors with boundaries at 45/135 degrees
/// (rounding half away from zero, so exactly 45 degrees is `Left`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Left,
    Right,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            "backward" => Ok(Direction::Backward),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Local layout class inferred from corridor-width statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Open,
    Corridor,
    Junction,
    DeadEnd,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Open => "open",
            Layout::Corridor => "corridor",
            Layout::Junction => "junction",
            Layout::DeadEnd => "dead-end",
        })
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Layout::Open),
            "corridor" => Ok(Layout::Corridor),
            "junction" => Ok(Layout::Junction),
            "dead-end" => Ok(Layout::DeadEnd),
            other => Err(format!("unknown layout `{other}`")),
        }
    }
}

/// Structured narration of one imagined rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationReport {
    pub direction: Direction,
    /// Landmark whose range shrinks strictly over the last (up to) three
    /// frames; the nearest such, ties to the lexicographically smallest id.
    /// Needs at least two frames of evidence.
    pub approaching: Option<String>,
    /// Landmark ids in order of first appearance across frames.
    pub encountered: Vec<String>,
    pub layout: Layout,
    pub intent: String,
    pub collision_predicted: bool,
}

impl NarrationReport {
    /// Serializes to the flat `key: value` block consumed by remote
    /// navigator adapters. Field order is fixed.
    pub fn to_text(&self) -> String {
        let approaching = self.approaching.as_deref().unwrap_or("none");
        let encountered = if self.encountered.is_empty() {
            "none".to_string()
        } else {
            self.encountered.join(" ")
        };
        format!(
            "direction: {}\napproaching: {approaching}\nencountered: {encountered}\nlayout: {}\nintent: {}\ncollision_predicted: {}\n",
            self.direction,
            self.layout,
            self.intent,
            if self.collision_predicted { "yes" } else { "no" },
        )
    }

    /// Parses the exact block produced by [`NarrationReport::to_text`].
    pub fn from_text(text: &str) -> Result<Self, ExpertError> {
        let parse_err = |message: &str| ExpertError::Parse {
            message: message.to_string(),
            raw: text.to_string(),
        };
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String, ExpertError> {
            let line = lines.next().ok_or_else(|| parse_err(&format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(": "))
                .map(str::to_string)
                .ok_or_else(|| parse_err(&format!("expected `{key}: ...`, got `{line}`")))
        };
        let direction =
            Direction::from_str(&field("direction")?).map_err(|e| parse_err(&e))?;
        let approaching = match field("approaching")?.as_str() {
            "none" => None,
            raw => Some(raw.to_string()),
        };
        let encountered = match field("encountered")?.as_str() {
            "none" => Vec::new(),
            raw => raw.split_whitespace().map(str::to_string).collect(),
        };
        let layout = Layout::from_str(&field("layout")?).map_err(|e| parse_err(&e))?;
        let intent = field("intent")?;
        let collision_predicted = match field("collision_predicted")?.as_str() {
            "yes" => true,
            "no" => false,
            raw => return Err(parse_err(&format!("collision_predicted `{raw}` is not yes/no"))),
        };
        Ok(Self { direction, approaching, encountered, layout, intent, collision_predicted })
    }
}

/// Produces a [`NarrationReport`] from an imagined frame sequence.
pub trait NarrationExpert {
    fn narrate(&self, frames: &[RolloutFrame]) -> Result<NarrationReport, ExpertError>;
}

/// Deterministic narrator; the default and the one used in evaluation.
///
/// Field rules, applied to the frames alone:
/// - `direction`: bearing of the net displacement (last pose minus first
///   pose) in the first frame's heading frame, quantized to 90-degree
///   sectors; zero displacement reads as forward.
/// - `approaching`: over the last `min(3, len)` frames, a landmark visible
///   in every one with strictly decreasing range; nearest wins, ties to the
///   lowest id; `none` with fewer than two frames.
/// - `encountered`: first-appearance order.
/// - `layout`: dead-end if any frame collides; else corridor if the median
///   width estimate is below 3 m; else junction if max minus min width
///   exceeds 2 m; else open.
/// - `intent`: `move {direction} toward {landmark N | open space}`, with
///   `; path blocked ahead` appended when a collision is predicted.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedNarrator;

impl NarrationExpert for ScriptedNarrator {
    fn narrate(&self, frames: &[RolloutFrame]) -> Result<NarrationReport, ExpertError> {
        Ok(scripted_report(frames))
    }
}

/// Validates the frame sequence and delegates to the narrator.
pub fn narrate(
    frames: &[RolloutFrame],
    narrator: &dyn NarrationExpert,
) -> Result<NarrationReport, ImaginationError> {
    if frames.is_empty() {
        return Err(ImaginationError::EmptyFrames);
    }
    Ok(narrator.narrate(frames)?)
}

fn quantize_direction(bearing: f64) -> Direction {
    let sector = (bearing / std::f64::consts::FRAC_PI_2).round() as i32;
    match sector {
        0 => Direction::Forward,
        1 => Direction::Left,
        -1 => Direction::Right,
        _ => Direction::Backward,
    }
}

fn scripted_report(frames: &[RolloutFrame]) -> NarrationReport {
    assert!(!frames.is_empty(), "scripted narrator requires at least one frame");
    let first = &frames[0].pose;
    let last = &frames[frames.len() - 1].pose;
    let direction = if first.distance(last) == 0.0 {
        Direction::Forward
    } else {
        quantize_direction(first.bearing_to(last.x, last.y))
    };

    let window = frames.len().min(3);
    let tail = &frames[frames.len() - window..];
    let mut approaching: Option<(f64, &str)> = None;
    if window >= 2 {
        for sighting in &tail[0].visible {
            let mut prev = sighting.range;
            let mut final_range = None;
            for frame in &tail[1..] {
                match frame.visible.iter().find(|s| s.id == sighting.id) {
                    Some(s) if s.range < prev => {
                        prev = s.range;
                        final_range = Some(s.range);
                    }
                    _ => {
                        final_range = None;
                        break;
                    }
                }
            }
            if let Some(range) = final_range {
                let better = match approaching {
                    None => true,
                    Some((best_range, best_id)) => {
                        range < best_range
                            || (range == best_range && sighting.id.as_str() < best_id)
                    }
                };
                if better {
                    approaching = Some((range, &sighting.id));
                }
            }
        }
    }
    let approaching = approaching.map(|(_, id)| id.to_string());

    let mut encountered: Vec<String> = Vec::new();
    for frame in frames {
        for sighting in &frame.visible {
            if !encountered.contains(&sighting.id) {
                encountered.push(sighting.id.clone());
            }
        }
    }

    let collision_predicted = frames.iter().any(|f| f.collision);
    let mut widths: Vec<f64> =
        frames.iter().map(|f| f.corridor_width_estimate).collect();
    widths.sort_by(|a, b| a.total_cmp(b));
    let median = widths[widths.len() / 2];
    let spread = widths[widths.len() - 1] - widths[0];
    let layout = if collision_predicted {
        Layout::DeadEnd
    } else if median < 3.0 {
        Layout::Corridor
    } else if spread > 2.0 {
        Layout::Junction
    } else {
        Layout::Open
    };

    let target = match &approaching {
        Some(id) => format!("landmark {id}"),
        None => "open space".to_string(),
    };
    let intent = if collision_predicted {
        format!("move {direction} toward {target}; path blocked ahead")
    } else {
        format!("move {direction} toward {target}")
    };

    NarrationReport { direction, approaching, encountered, layout, intent, collision_predicted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Waypoint;
    use crate::worldsim::{execute_trajectory, Landmark, WorldMap};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_map(cells: usize, resolution: f64, landmarks: Vec<Landmark>) -> WorldMap {
        WorldMap::new(resolution, vec![vec![false; cells]; cells], landmarks).unwrap()
    }

    fn walled_map() -> WorldMap {
        let mut rows = vec![vec![false; 40]; 40];
        for row in &mut rows {
            for ix in 21..=23 {
                row[ix] = true;
            }
        }
        WorldMap::new(0.25, rows, Vec::new()).unwrap()
    }

    fn straight(step: f64) -> Trajectory {
        Trajectory::repeated(Waypoint::new(step, 0.0, 0.0).unwrap())
    }

    fn frame(pose: Pose2D, visible: &[(&str, f64, f64)], collision: bool, width: f64) -> RolloutFrame {
        RolloutFrame {
            pose,
            visible: visible
                .iter()
                .map(|&(id, bearing, range)| LandmarkSighting { id: id.to_string(), bearing, range })
                .collect(),
            collision,
            corridor_width_estimate: width,
        }
    }

    fn scripted(frames: &[RolloutFrame]) -> NarrationReport {
        narrate(frames, &ScriptedNarrator).unwrap()
    }

    #[test]
    fn irl_one_yields_single_frame_at_first_pose() {
        let map = open_map(40, 0.25, Vec::new());
        let start = Pose2D::new(5.0, 5.0, 0.0);
        let cfg = ImaginationConfig { irl: 1, ..Default::default() };
        let frames =
            imagine_rollout(&map, &start, &straight(0.3), &CameraModel::default(), &cfg, 7);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].pose, Pose2D::new(5.3, 5.0, 0.0));
        assert!(!frames[0].collision);
    }

    #[test]
    fn decay_zero_is_a_visibility_oracle() {
        let landmarks = vec![
            Landmark { id: "lamp".into(), name: "lamp".into(), position: (8.0, 5.5), radius: 0.2 },
            Landmark { id: "door".into(), name: "door".into(), position: (6.0, 4.0), radius: 0.2 },
            Landmark { id: "bin".into(), name: "bin".into(), position: (3.0, 8.0), radius: 0.2 },
        ];
        let map = open_map(40, 0.25, landmarks);
        let start = Pose2D::new(2.0, 5.0, 0.0);
        let traj = straight(0.25);
        let camera = CameraModel::default();
        let cfg = ImaginationConfig::default();
        let a = imagine_rollout(&map, &start, &traj, &camera, &cfg, 1);
        let b = imagine_rollout(&map, &start, &traj, &camera, &cfg, 999);
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.irl);
        for frame in &a {
            let oracle = visible_landmarks(&map, &frame.pose, &camera);
            assert_eq!(frame.visible.len(), oracle.len());
            for (seen, truth) in frame.visible.iter().zip(&oracle) {
                assert_eq!(seen.id, truth.landmark.id);
                assert_eq!(seen.bearing, truth.bearing);
                assert_eq!(seen.range, truth.range);
            }
        }
        assert_eq!(scripted(&a), scripted(&b));
    }

    #[test]
    fn wall_truncates_rollout_at_colliding_frame() {
        let map = walled_map();
        let start = Pose2D::new(2.0, 5.0, 0.0);
        let traj = straight(0.5);
        let exec = execute_trajectory(&map, &start, &traj).unwrap();
        assert!(exec.truncated);
        let cfg = ImaginationConfig { irl: 24, ..Default::default() };
        let frames = imagine_rollout(&map, &start, &traj, &CameraModel::default(), &cfg, 3);
        assert_eq!(frames.len(), exec.steps_executed + 1);
        assert_eq!(frames.len(), 7);
        let (last, earlier) = frames.split_last().unwrap();
        assert!(last.collision);
        assert!(earlier.iter().all(|f| !f.collision));
    }

    #[test]
    fn truncation_is_a_prefix_of_the_full_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1709_aa41);
        for iter in 0..40 {
            let mut rows = vec![vec![false; 30]; 30];
            for row in &mut rows {
                for cell in row.iter_mut() {
                    *cell = rng.gen_bool(0.05);
                }
            }
            let mut free = Vec::new();
            for (iy, row) in rows.iter().enumerate() {
                for (ix, &occ) in row.iter().enumerate() {
                    if !occ {
                        free.push((ix, iy));
                    }
                }
            }
            let lm_cells: Vec<_> =
                (0..3).map(|_| free[rng.gen_range(0..free.len())]).collect();
            let landmarks = lm_cells
                .iter()
                .enumerate()
                .map(|(id, &(ix, iy))| Landmark {
                    id: format!("m{id}"),
                    name: format!("mark{id}"),
                    position: (ix as f64 * 0.5 + 0.25, iy as f64 * 0.5 + 0.25),
                    radius: 0.1,
                })
                .collect();
            let map = WorldMap::new(0.5, rows, landmarks).unwrap();
            let (sx, sy) = free[rng.gen_range(0..free.len())];
            let start = Pose2D::new(
                sx as f64 * 0.5 + 0.25,
                sy as f64 * 0.5 + 0.25,
                rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI),
            );
            let traj = Trajectory::new(
                (0..TRAJECTORY_LEN)
                    .map(|_| {
                        Waypoint::new(
                            rng.gen_range(0.0..0.4),
                            rng.gen_range(-0.1..0.1),
                            rng.gen_range(-0.2..0.2),
                        )
                        .unwrap()
                    })
                    .collect(),
            )
            .unwrap();
            let decay = [0.0, 0.05, 0.2][iter % 3];
            let seed = rng.gen();
            let camera = CameraModel::scaled(64, 48);
            let full = ImaginationConfig { irl: 24, fidelity_decay: decay };
            let reference = imagine_rollout(&map, &start, &traj, &camera, &full, seed);
            for k in [1, 2, 5, 11, 17, 24] {
                let cfg = ImaginationConfig { irl: k, fidelity_decay: decay };
                let frames = imagine_rollout(&map, &start, &traj, &camera, &cfg, seed);
                let expect = &reference[..k.min(reference.len())];
                assert_eq!(frames, expect, "iter {iter} irl {k}");
            }
        }
    }

    #[test]
    fn encountered_count_trends_down_with_decay() {
        let landmarks = (0..6)
            .map(|id| Landmark {
                id: format!("m{id}"),
                name: format!("mark{id}"),
                position: (6.0 + 2.0 * id as f64, if id % 2 == 0 { 8.5 } else { 11.5 }),
                radius: 0.2,
            })
            .collect();
        let map = open_map(40, 0.5, landmarks);
        let start = Pose2D::new(2.0, 10.0, 0.0);
        let traj = straight(0.5);
        let camera = CameraModel::default();
        let n = 500;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let decay = i as f64 / 5000.0;
            let cfg = ImaginationConfig { irl: 24, fidelity_decay: decay };
            let frames = imagine_rollout(&map, &start, &traj, &camera, &cfg, 1000 + i as u64);
            let mut seen = Vec::new();
            for f in &frames {
                for s in &f.visible {
                    if !seen.contains(&s.id) {
                        seen.push(s.id.clone());
                    }
                }
            }
            xs.push(decay);
            ys.push(seen.len() as f64);
        }
        let rho = spearman(&xs, &ys);
        assert!(rho < 0.0, "rho = {rho}");
        let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        assert!(t < -2.576, "trend not significant: rho = {rho}, t = {t}");
    }

    fn ranks(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                out[idx] = avg;
            }
            i = j + 1;
        }
        out
    }

    fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
        let rx = ranks(xs);
        let ry = ranks(ys);
        let n = xs.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..xs.len() {
            let dx = rx[i] - mx;
            let dy = ry[i] - my;
            cov += dx * dy;
            vx += dx * dx;
            vy += dy * dy;
        }
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn config_validation_rejects_out_of_range() {
        assert!(ImaginationConfig::default().validate().is_ok());
        let bad_irl = ImaginationConfig { irl: 0, ..Default::default() };
        assert!(matches!(bad_irl.validate(), Err(ImaginationError::BadConfig(_))));
        let big_irl = ImaginationConfig { irl: 25, ..Default::default() };
        assert!(big_irl.validate().is_err());
        let neg = ImaginationConfig { fidelity_decay: -0.1, ..Default::default() };
        assert!(neg.validate().is_err());
        let nan = ImaginationConfig { fidelity_decay: f64::NAN, ..Default::default() };
        assert!(nan.validate().is_err());
    }

    #[test]
    fn narrator_reports_forward_approach() {
        let frames = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("post", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("post", 0.0, 4.0)], false, 5.0),
            frame(Pose2D::new(2.0, 0.0, 0.0), &[("post", 0.0, 3.0)], false, 5.0),
        ];
        let report = scripted(&frames);
        assert_eq!(report.direction, Direction::Forward);
        assert_eq!(report.approaching.as_deref(), Some("post"));
        assert_eq!(report.encountered, vec!["post"]);
        assert_eq!(report.layout, Layout::Open);
        assert_eq!(report.intent, "move forward toward landmark post");
        assert!(!report.collision_predicted);
    }

    #[test]
    fn direction_quantization_boundaries() {
        let cases = [
            ((2.0, 0.0), Direction::Forward),
            ((0.0, 2.0), Direction::Left),
            ((0.0, -2.0), Direction::Right),
            ((-2.0, 0.0), Direction::Backward),
            ((1.0, 1.0), Direction::Left),
            ((1.0, -1.0), Direction::Right),
            ((-1.0, 1.0), Direction::Backward),
            ((-1.0, -1.0), Direction::Backward),
        ];
        for ((dx, dy), expected) in cases {
            let frames = vec![
                frame(Pose2D::new(0.0, 0.0, 0.0), &[], false, 5.0),
                frame(Pose2D::new(dx, dy, 0.0), &[], false, 5.0),
            ];
            assert_eq!(scripted(&frames).direction, expected, "displacement ({dx}, {dy})");
        }
        let still = vec![frame(Pose2D::new(3.0, 4.0, 1.0), &[], false, 5.0)];
        assert_eq!(scripted(&still).direction, Direction::Forward);
    }

    #[test]
    fn collision_marks_dead_end_and_blocked_intent() {
        let frames = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[], false, 4.0),
            frame(Pose2D::new(0.5, 0.0, 0.0), &[], true, 0.0),
        ];
        let report = scripted(&frames);
        assert!(report.collision_predicted);
        assert_eq!(report.layout, Layout::DeadEnd);
        assert_eq!(report.intent, "move forward toward open space; path blocked ahead");
        assert!(report.intent.contains("blocked"));
    }

    #[test]
    fn layout_classes_follow_width_statistics() {
        let widths_to_layout = [
            (vec![2.0, 2.5, 2.0], Layout::Corridor),
            (vec![3.2, 5.5, 3.3], Layout::Junction),
            (vec![5.0, 5.0, 5.0], Layout::Open),
            (vec![3.2, 5.0, 3.3], Layout::Open),
        ];
        for (widths, expected) in widths_to_layout {
            let frames: Vec<_> = widths
                .iter()
                .enumerate()
                .map(|(i, &w)| frame(Pose2D::new(i as f64, 0.0, 0.0), &[], false, w))
                .collect();
            assert_eq!(scripted(&frames).layout, expected, "widths {widths:?}");
        }
    }

    #[test]
    fn approaching_requires_strict_decrease_over_tail() {
        let flat = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("bin", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("bin", 0.0, 4.0)], false, 5.0),
            frame(Pose2D::new(2.0, 0.0, 0.0), &[("bin", 0.0, 4.0)], false, 5.0),
        ];
        assert_eq!(scripted(&flat).approaching, None);

        let single = vec![frame(Pose2D::new(0.0, 0.0, 0.0), &[("bin", 0.0, 5.0)], false, 5.0)];
        assert_eq!(scripted(&single).approaching, None);

        let window = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("bin", 0.0, 2.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("bin", 0.0, 9.0)], false, 5.0),
            frame(Pose2D::new(2.0, 0.0, 0.0), &[("bin", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(3.0, 0.0, 0.0), &[("bin", 0.0, 4.0)], false, 5.0),
        ];
        assert_eq!(scripted(&window).approaching.as_deref(), Some("bin"));

        let two = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("bin", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("bin", 0.0, 4.5)], false, 5.0),
        ];
        assert_eq!(scripted(&two).approaching.as_deref(), Some("bin"));
    }

    #[test]
    fn approaching_prefers_nearest_then_lowest_id() {
        let nearest = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("a", 0.0, 4.0), ("b", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("a", 0.0, 3.0), ("b", 0.0, 4.0)], false, 5.0),
            frame(Pose2D::new(2.0, 0.0, 0.0), &[("a", 0.0, 2.0), ("b", 0.0, 3.0)], false, 5.0),
        ];
        assert_eq!(scripted(&nearest).approaching.as_deref(), Some("a"));

        let tied = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("e", 0.0, 4.0), ("c", 0.0, 4.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("e", 0.0, 3.0), ("c", 0.0, 3.0)], false, 5.0),
        ];
        assert_eq!(scripted(&tied).approaching.as_deref(), Some("c"));
    }

    #[test]
    fn encountered_preserves_first_appearance_order() {
        let frames = vec![
            frame(Pose2D::new(0.0, 0.0, 0.0), &[("x3", 0.0, 5.0)], false, 5.0),
            frame(Pose2D::new(1.0, 0.0, 0.0), &[("x1", 0.0, 5.0), ("x3", 0.0, 4.0)], false, 5.0),
            frame(Pose2D::new(2.0, 0.0, 0.0), &[("x2", 0.0, 5.0)], false, 5.0),
        ];
        assert_eq!(scripted(&frames).encountered, vec!["x3", "x1", "x2"]);
    }

    #[test]
    fn report_text_round_trips_and_is_stable() {
        let report = NarrationReport {
            direction: Direction::Left,
            approaching: Some("door".to_string()),
            encountered: vec!["door".to_string(), "bin".to_string()],
            layout: Layout::Corridor,
            intent: "move left toward landmark door".to_string(),
            collision_predicted: false,
        };
        let text = report.to_text();
        assert_eq!(
            text,
            "direction: left\napproaching: door\nencountered: door bin\nlayout: corridor\nintent: move left toward landmark door\ncollision_predicted: no\n"
        );
        assert_eq!(NarrationReport::from_text(&text).unwrap(), report);

        let none_report = NarrationReport {
            direction: Direction::Backward,
            approaching: None,
            encountered: Vec::new(),
            layout: Layout::DeadEnd,
            intent: "move backward toward open space; path blocked ahead".to_string(),
            collision_predicted: true,
        };
        let text = none_report.to_text();
        assert!(text.contains("approaching: none\nencountered: none\n"));
        assert_eq!(NarrationReport::from_text(&text).unwrap(), none_report);
    }

    #[test]
    fn malformed_report_text_is_rejected() {
        let good = NarrationReport {
            direction: Direction::Forward,
            approaching: None,
            encountered: Vec::new(),
            layout: Layout::Open,
            intent: "move forward toward open space".to_string(),
            collision_predicted: false,
        }
        .to_text();
        for bad in [
            good.replace("direction: forward", "direction: sideways"),
            good.replace("collision_predicted: no", "collision_predicted: maybe"),
                        good.lines().skip(1).collect::<Vec<_>>().join("\n"),
            String::new(),
        ] {
            assert!(
                matches!(NarrationReport::from_text(&bad), Err(ExpertError::Parse { .. })),
                "accepted: {bad:?}"
            );
        }
    }

    #[test]
    fn narrate_rejects_empty_frames() {
        assert_eq!(narrate(&[], &ScriptedNarrator), Err(ImaginationError::EmptyFrames));
    }
}
