//! Deterministic 2D continuous world: occupancy grid, landmarks, episode
//! definitions, trajectory execution with collision checking, and
//! landmark visibility.
//!
//! World frame: x grows with grid columns, y with grid rows; cell
//! `(ix, iy)` covers `[ix*res, (ix+1)*res) x [iy*res, (iy+1)*res)`.
//! Anything outside the grid counts as occupied. The agent is a point
//! unless an inflation radius is configured.

mod schema;

pub use schema::{load_episode, serialize_episode, SchemaError};

use crate::geometry::{trajectory_to_pose_sequence, Pose2D, Trajectory};
use crate::perception::CameraModel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid world map: {0}")]
    InvalidMap(String),
    #[error("start pose ({x:.3}, {y:.3}) is in collision")]
    StartInCollision { x: f64, y: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Named point of interest referenced by instructions and subtasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: String,
    pub name: String,
    pub position: (f64, f64),
    pub radius: f64,
}

/// Occupancy grid plus landmarks. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    resolution: f64,
    width: usize,
    height: usize,
    /// Row-major occupancy, true = obstacle.
    cells: Vec<bool>,
    landmarks: Vec<Landmark>,
}

impl WorldMap {
    /// Builds a map from row-major occupancy rows (`rows[iy][ix]`,
    /// iy = 0 at y = 0) and validates every invariant.
    pub fn new(
        resolution: f64,
        rows: Vec<Vec<bool>>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, SimError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(SimError::InvalidMap(format!("resolution {resolution} must be > 0")));
        }
        if rows.is_empty() || rows[0].is_empty() {
            return Err(SimError::InvalidMap("grid is empty".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(SimError::InvalidMap("grid rows have unequal lengths".into()));
        }
        let height = rows.len();
        let cells = rows.into_iter().flatten().collect();
        let map = Self { resolution, width, height, cells, landmarks: Vec::new() };
        for lm in &landmarks {
            if lm.name.is_empty() {
                return Err(SimError::InvalidMap(format!("landmark {} has empty name", lm.id)));
            }
            if !(lm.radius > 0.0) {
                return Err(SimError::InvalidMap(format!("landmark {} radius must be > 0", lm.id)));
            }
            if !map.is_free(lm.position.0, lm.position.1) {
                return Err(SimError::InvalidMap(format!(
                    "landmark {} at ({}, {}) is not on free space",
                    lm.id, lm.position.0, lm.position.1
                )));
            }
        }
        Ok(Self { landmarks, ..map })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn landmark(&self, id: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    pub fn cell_occupied(&self, ix: isize, iy: isize) -> bool {
        if ix < 0 || iy < 0 || ix as usize >= self.width || iy as usize >= self.height {
            return true;
        }
        self.cells[iy as usize * self.width + ix as usize]
    }

    /// True when the world point lies on a free cell inside the grid.
    pub fn is_free(&self, x: f64, y: f64) -> bool {
        if !(x.is_finite() && y.is_finite()) {
            return false;
        }
        let ix = (x / self.resolution).floor() as isize;
        let iy = (y / self.resolution).floor() as isize;
        !self.cell_occupied(ix, iy)
    }

    /// Width and height in meters.
    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.resolution, self.height as f64 * self.resolution)
    }

    /// Cells free at every point of a disk of `radius` around the point.
    /// `radius = 0` reduces to the point test.
    pub fn is_free_inflated(&self, x: f64, y: f64, radius: f64) -> bool {
        if radius <= 0.0 {
            return self.is_free(x, y);
        }
        let r_cells = (radius / self.resolution).ceil() as isize;
        let cx = (x / self.resolution).floor() as isize;
        let cy = (y / self.resolution).floor() as isize;
        for iy in (cy - r_cells)..=(cy + r_cells) {
            for ix in (cx - r_cells)..=(cx + r_cells) {
                if !self.cell_occupied(ix, iy) {
                    continue;
                }
                // Nearest point of the cell to (x, y).
                let (x0, y0) = (ix as f64 * self.resolution, iy as f64 * self.resolution);
                let nx = x.clamp(x0, x0 + self.resolution);
                let ny = y.clamp(y0, y0 + self.resolution);
                if (nx - x).hypot(ny - y) < radius {
                    return false;
                }
            }
        }
        true
    }

    /// Walks the segment from `(x0, y0)` to `(x1, y1)` in steps of at most
    /// half a cell and reports whether every sample (endpoint included) is
    /// free.
    pub fn segment_is_free(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        let len = (x1 - x0).hypot(y1 - y0);
        let n = (len / (self.resolution / 2.0)).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            if !self.is_free(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t) {
                return false;
            }
        }
        true
    }

    /// Distance to the first blocked sample marching from `(x, y)` along
    /// `angle`, in steps of half a cell, capped at `max_range`. Returns
    /// `max_range` when nothing blocks within range.
    pub fn raycast(&self, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
        let step = self.resolution / 2.0;
        let (sin_a, cos_a) = angle.sin_cos();
        let n = (max_range / step).ceil() as usize;
        for k in 1..=n {
            let d = (k as f64 * step).min(max_range);
            if !self.is_free(x + d * cos_a, y + d * sin_a) {
                return ((k - 1) as f64 * step).min(max_range);
            }
        }
        max_range
    }
}

/// Machine-checkable goal predicate for one subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubtaskPredicate {
    /// Agent position within `radius` of `center`.
    ReachRegion { center: (f64, f64), radius: f64 },
    /// Landmark bearing within `max_angle` of the heading and range
    /// within `max_range`.
    FaceLandmark { landmark_id: String, max_angle: f64, max_range: f64 },
}

impl SubtaskPredicate {
    /// Evaluates the predicate at a pose.
    pub fn satisfied(&self, map: &WorldMap, pose: &Pose2D) -> bool {
        match self {
            SubtaskPredicate::ReachRegion { center, radius } => {
                (pose.x - center.0).hypot(pose.y - center.1) <= *radius
            }
            SubtaskPredicate::FaceLandmark { landmark_id, max_angle, max_range } => {
                match map.landmark(landmark_id) {
                    Some(lm) => {
                        let range = (pose.x - lm.position.0).hypot(pose.y - lm.position.1);
                        let bearing = pose.bearing_to(lm.position.0, lm.position.1);
                        bearing.abs() <= *max_angle && range <= *max_range
                    }
                    None => false,
                }
            }
        }
    }

    /// Point the predicate steers toward (region center or landmark
    /// position).
    pub fn target_point(&self, map: &WorldMap) -> Option<(f64, f64)> {
        match self {
            SubtaskPredicate::ReachRegion { center, .. } => Some(*center),
            SubtaskPredicate::FaceLandmark { landmark_id, .. } => {
                map.landmark(landmark_id).map(|l| l.position)
            }
        }
    }
}

/// One ordered step of the decomposed instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: usize,
    pub text: String,
    pub predicate: SubtaskPredicate,
}

pub const DEFAULT_SUCCESS_RADIUS: f64 = 3.0;

/// One navigation task: world, start pose, goal point, instruction, and
/// its ordered subtasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub map: WorldMap,
    pub start: Pose2D,
    pub goal: (f64, f64),
    pub instruction: String,
    pub subtasks: Vec<Subtask>,
    pub success_radius: f64,
}

impl Episode {
    /// Validates all episode invariants, returning the offending field
    /// name on failure.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if !self.map.is_free(self.start.x, self.start.y) {
            return Err(SchemaError::new("start", "start not on free space"));
        }
        if !self.map.is_free(self.goal.0, self.goal.1) {
            return Err(SchemaError::new("goal", "goal not on free space"));
        }
        if self.subtasks.is_empty() {
            return Err(SchemaError::new("subtasks", "at least one subtask is required"));
        }
        if !(self.success_radius > 0.0) {
            return Err(SchemaError::new("success_radius", "must be > 0"));
        }
        for st in &self.subtasks {
            if let SubtaskPredicate::FaceLandmark { landmark_id, .. } = &st.predicate {
                if self.map.landmark(landmark_id).is_none() {
                    return Err(SchemaError::new(
                        "subtasks",
                        format!("subtask {} references unknown landmark {landmark_id}", st.id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of executing one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// Poses actually traversed, starting at the start pose. Consecutive
    /// exact duplicates are collapsed.
    pub path: Vec<Pose2D>,
    /// True when a collision cut execution short.
    pub truncated: bool,
    /// Fully executed waypoints.
    pub steps_executed: usize,
    /// Sum of consecutive Euclidean gaps along `path`.
    pub path_length: f64,
}

impl ExecutionResult {
    pub fn final_pose(&self) -> Pose2D {
        *self.path.last().expect("path is never empty")
    }
}

fn push_pose(path: &mut Vec<Pose2D>, length: &mut f64, pose: Pose2D) {
    let last = *path.last().expect("path starts non-empty");
    if last == pose {
        return;
    }
    *length += last.distance(&pose);
    path.push(pose);
}

/// Interpolates yaw along a segment by shortest angular difference.
fn lerp_yaw(a: f64, b: f64, t: f64) -> f64 {
    let diff = crate::geometry::normalize_angle(b - a);
    crate::geometry::normalize_angle(a + diff * t)
}

/// Executes a trajectory from `start`, integrating waypoint poses and
/// sub-sampling every segment at half-cell spacing for collision tests.
/// On collision, motion stops at the last safe sub-sample and the result
/// is marked truncated.
pub fn execute_trajectory(
    map: &WorldMap,
    start: &Pose2D,
    traj: &Trajectory,
) -> Result<ExecutionResult, SimError> {
    execute_trajectory_inflated(map, start, traj, 0.0)
}

/// [`execute_trajectory`] with a configurable agent inflation radius.
pub fn execute_trajectory_inflated(
    map: &WorldMap,
    start: &Pose2D,
    traj: &Trajectory,
    inflation: f64,
) -> Result<ExecutionResult, SimError> {
    if !map.is_free_inflated(start.x, start.y, inflation) {
        return Err(SimError::StartInCollision { x: start.x, y: start.y });
    }
    let poses = trajectory_to_pose_sequence(traj, start)?;
    let mut path = vec![*start];
    let mut path_length = 0.0;
    let mut prev = *start;
    let step = map.resolution / 2.0;

    for (i, pose) in poses.poses().iter().enumerate() {
        let seg_len = prev.distance(pose);
        let n = (seg_len / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let x = prev.x + (pose.x - prev.x) * t;
            let y = prev.y + (pose.y - prev.y) * t;
            if !map.is_free_inflated(x, y, inflation) {
                // Stop at the previous (safe) sub-sample.
                let ts = (k - 1) as f64 / n as f64;
                let safe = Pose2D::new(
                    prev.x + (pose.x - prev.x) * ts,
                    prev.y + (pose.y - prev.y) * ts,
                    lerp_yaw(prev.yaw, pose.yaw, ts),
                );
                push_pose(&mut path, &mut path_length, safe);
                return Ok(ExecutionResult {
                    path,
                    truncated: true,
                    steps_executed: i,
                    path_length,
                });
            }
        }
        push_pose(&mut path, &mut path_length, *pose);
        prev = *pose;
    }

    Ok(ExecutionResult {
        path,
        truncated: false,
        steps_executed: poses.poses().len(),
        path_length,
    })
}

/// A landmark in view: within the horizontal FOV cone, within range, and
/// with an obstacle-free sight line.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleLandmark<'a> {
    pub landmark: &'a Landmark,
    pub bearing: f64,
    pub range: f64,
}

/// Landmarks visible from `pose` under `camera`, in map declaration
/// order.
pub fn visible_landmarks<'a>(
    map: &'a WorldMap,
    pose: &Pose2D,
    camera: &CameraModel,
) -> Vec<VisibleLandmark<'a>> {
    let half_fov = camera.hfov / 2.0;
    map.landmarks()
        .iter()
        .filter_map(|lm| {
            let range = (lm.position.0 - pose.x).hypot(lm.position.1 - pose.y);
            if range > camera.max_range {
                return None;
            }
            let bearing = pose.bearing_to(lm.position.0, lm.position.1);
            if bearing.abs() > half_fov {
                return None;
            }
            if !map.segment_is_free(pose.x, pose.y, lm.position.0, lm.position.1) {
                return None;
            }
            Some(VisibleLandmark { landmark: lm, bearing, range })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Waypoint, TRAJECTORY_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// All-free square map, `cells` per side at `res` meters per cell.
    pub(crate) fn open_map(cells: usize, res: f64) -> WorldMap {
        WorldMap::new(res, vec![vec![false; cells]; cells], vec![]).unwrap()
    }

    fn map_with_wall_x(cells: usize, res: f64, wall_x: f64) -> WorldMap {
        let wall_col = (wall_x / res).floor() as usize;
        let rows = (0..cells)
            .map(|_| (0..cells).map(|ix| ix == wall_col).collect())
            .collect();
        WorldMap::new(res, rows, vec![]).unwrap()
    }

    #[test]
    fn map_rejects_bad_inputs() {
        assert!(WorldMap::new(0.0, vec![vec![false]], vec![]).is_err());
        assert!(WorldMap::new(0.5, vec![], vec![]).is_err());
        let lm = Landmark { id: "a".into(), name: "x".into(), position: (0.25, 0.25), radius: 0.1 };
        let occupied = WorldMap::new(0.5, vec![vec![true]], vec![lm]);
        assert!(occupied.is_err());
    }

    #[test]
    fn out_of_bounds_is_occupied() {
        let map = open_map(4, 0.5);
        assert!(!map.is_free(-0.1, 0.5));
        assert!(!map.is_free(0.5, 2.1));
        assert!(map.is_free(1.0, 1.0));
    }

    #[test]
    fn straight_run_in_empty_map() {
        let map = open_map(40, 0.25);
        let start = Pose2D::new(1.0, 5.0, 0.0);
        let traj = Trajectory::repeated(Waypoint::new(0.1, 0.0, 0.0).unwrap());
        let result = execute_trajectory(&map, &start, &traj).unwrap();
        assert!(!result.truncated);
        assert_eq!(result.steps_executed, TRAJECTORY_LEN);
        assert!((result.path_length - traj.commanded_length()).abs() < 1e-9);
        assert!((result.final_pose().x - 3.4).abs() < 1e-9);
    }

    #[test]
    fn zero_trajectory_stays_put() {
        let map = open_map(8, 0.5);
        let start = Pose2D::new(1.0, 1.0, 0.7);
        let result = execute_trajectory(&map, &start, &Trajectory::zero()).unwrap();
        assert_eq!(result.path, vec![start]);
        assert_eq!(result.path_length, 0.0);
        assert!(!result.truncated);
    }

    #[test]
    fn start_in_collision_is_rejected() {
        let map = map_with_wall_x(8, 0.5, 2.0);
        let start = Pose2D::new(2.25, 1.0, 0.0);
        let err = execute_trajectory(&map, &start, &Trajectory::zero()).unwrap_err();
        assert!(matches!(err, SimError::StartInCollision { .. }));
    }

    /// Independent dense-sampling oracle: walks the whole commanded
    /// polyline at half-cell spacing and returns the last free point.
    fn dense_stop_oracle(map: &WorldMap, start: &Pose2D, traj: &Trajectory) -> (f64, f64) {
        let poses = trajectory_to_pose_sequence(traj, start).unwrap();
        let step = map.resolution() / 2.0;
        let mut prev = (start.x, start.y);
        let mut last_free = prev;
        for p in poses.poses() {
            let len = (p.x - prev.0).hypot(p.y - prev.1);
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let t = k as f64 / n as f64;
                let q = (prev.0 + (p.x - prev.0) * t, prev.1 + (p.y - prev.1) * t);
                if !map.is_free(q.0, q.1) {
                    return last_free;
                }
                last_free = q;
            }
            prev = (p.x, p.y);
        }
        last_free
    }

    #[test]
    fn wall_truncates_run() {
        let res = 0.25;
        let map = map_with_wall_x(40, res, 3.0);
        let start = Pose2D::new(2.0, 5.0, 0.0);
        // 2.4 m commanded travel toward a wall 1 m ahead.
        let traj = Trajectory::repeated(Waypoint::new(0.1, 0.0, 0.0).unwrap());
        let result = execute_trajectory(&map, &start, &traj).unwrap();
        assert!(result.truncated);
        assert!(result.steps_executed < TRAJECTORY_LEN);
        let advance = result.final_pose().x - start.x;
        assert!(advance >= 0.0 && advance < 1.0, "advance {advance}");
        let want = dense_stop_oracle(&map, &start, &traj);
        assert!((result.final_pose().x - want.0).abs() < 1e-12);
        assert!((result.final_pose().y - want.1).abs() < 1e-12);
    }

    #[test]
    fn execution_is_deterministic() {
        let map = map_with_wall_x(40, 0.25, 4.0);
        let start = Pose2D::new(2.0, 5.0, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = Trajectory::new(
            (0..TRAJECTORY_LEN)
                .map(|_| {
                    Waypoint::new(
                        rng.gen_range(-0.2..0.3),
                        rng.gen_range(-0.2..0.2),
                        rng.gen_range(-0.3..0.3),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let a = execute_trajectory(&map, &start, &traj).unwrap();
        let b = execute_trajectory(&map, &start, &traj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collision_soundness_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let res = 0.25;
            let rows: Vec<Vec<bool>> =
                (0..24).map(|_| (0..24).map(|_| rng.gen_bool(0.2)).collect()).collect();
            let map = match WorldMap::new(res, rows, vec![]) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let start = Pose2D::new(
                rng.gen_range(0.1..5.9),
                rng.gen_range(0.1..5.9),
                rng.gen_range(-PI..PI),
            );
            if !map.is_free(start.x, start.y) {
                continue;
            }
            let traj = Trajectory::new(
                (0..TRAJECTORY_LEN)
                    .map(|_| {
                        Waypoint::new(
                            rng.gen_range(-0.3..0.3),
                            rng.gen_range(-0.3..0.3),
                            rng.gen_range(-0.5..0.5),
                        )
                        .unwrap()
                    })
                    .collect(),
            )
            .unwrap();
            let result = execute_trajectory(&map, &start, &traj).unwrap();
            for p in &result.path {
                assert!(map.is_free(p.x, p.y), "pose ({}, {}) on occupied cell", p.x, p.y);
            }
        }
    }

    #[test]
    fn split_chain_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let map = open_map(80, 0.25);
        for _ in 0..50 {
            let start = Pose2D::new(10.0, 10.0, rng.gen_range(-PI..PI));
            let waypoints: Vec<Waypoint> = (0..TRAJECTORY_LEN)
                .map(|_| {
                    Waypoint::new(
                        rng.gen_range(-0.1..0.15),
                        rng.gen_range(-0.1..0.1),
                        rng.gen_range(-0.2..0.2),
                    )
                    .unwrap()
                })
                .collect();
            let whole = Trajectory::new(waypoints.clone()).unwrap();
            let mut first = waypoints[..12].to_vec();
            first.extend(vec![Waypoint::ZERO; 12]);
            let mut second = waypoints[12..].to_vec();
            second.extend(vec![Waypoint::ZERO; 12]);

            let full = execute_trajectory(&map, &start, &whole).unwrap();
            let a = execute_trajectory(&map, &start, &Trajectory::new(first).unwrap()).unwrap();
            let b =
                execute_trajectory(&map, &a.final_pose(), &Trajectory::new(second).unwrap())
                    .unwrap();
            assert!(!full.truncated && !a.truncated && !b.truncated);
            assert!((full.path_length - (a.path_length + b.path_length)).abs() < 1e-9);
            assert!(full.final_pose().distance(&b.final_pose()) < 1e-9);
        }
    }

    fn camera_with_range(max_range: f64) -> CameraModel {
        CameraModel { max_range, ..CameraModel::default() }
    }

    #[test]
    fn landmark_ahead_is_visible() {
        let lm = Landmark { id: "l1".into(), name: "table".into(), position: (4.0, 2.0), radius: 0.3 };
        let map = WorldMap::new(0.5, vec![vec![false; 12]; 8], vec![lm]).unwrap();
        let seen = visible_landmarks(&map, &Pose2D::new(2.0, 2.0, 0.0), &camera_with_range(10.0));
        assert_eq!(seen.len(), 1);
        assert!(seen[0].bearing.abs() < 1e-12);
        assert!((seen[0].range - 2.0).abs() < 1e-12);
    }

    #[test]
    fn landmark_outside_fov_is_excluded() {
        let bearing = 40.0_f64.to_radians();
        let lm = Landmark {
            id: "l1".into(),
            name: "table".into(),
            position: (2.0 + 2.0 * bearing.cos(), 2.0 + 2.0 * bearing.sin()),
            radius: 0.3,
        };
        let map = WorldMap::new(0.5, vec![vec![false; 12]; 12], vec![lm]).unwrap();
        let seen = visible_landmarks(&map, &Pose2D::new(2.0, 2.0, 0.0), &camera_with_range(10.0));
        assert!(seen.is_empty());
    }

    #[test]
    fn landmark_behind_wall_is_excluded() {
        let lm = Landmark { id: "l1".into(), name: "table".into(), position: (4.25, 2.25), radius: 0.3 };
        let wall_col = 6; // x in [3.0, 3.5)
        let rows: Vec<Vec<bool>> =
            (0..8).map(|_| (0..12).map(|ix| ix == wall_col).collect()).collect();
        let map = WorldMap::new(0.5, rows, vec![lm]).unwrap();
        let pose = Pose2D::new(2.0, 2.25, 0.0);
        let seen = visible_landmarks(&map, &pose, &camera_with_range(10.0));
        assert!(seen.is_empty());

        // Independent dense-sampling ray oracle agrees the sight line is blocked.
        let (x0, y0, x1, y1) = (pose.x, pose.y, 4.25, 2.25);
        let n = 1000;
        let mut blocked = false;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            if !map.is_free(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t) {
                blocked = true;
                break;
            }
        }
        assert!(blocked);
    }

    #[test]
    fn visibility_monotone_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let landmarks: Vec<Landmark> = (0..6)
                .map(|i| Landmark {
                    id: format!("l{i}"),
                    name: "lm".into(),
                    position: (rng.gen_range(0.3..5.7), rng.gen_range(0.3..5.7)),
                    radius: 0.2,
                })
                .collect();
            let map = WorldMap::new(0.5, vec![vec![false; 12]; 12], landmarks).unwrap();
            let pose = Pose2D::new(3.0, 3.0, rng.gen_range(-PI..PI));
            let near: Vec<String> = visible_landmarks(&map, &pose, &camera_with_range(2.0))
                .iter()
                .map(|v| v.landmark.id.clone())
                .collect();
            let far: Vec<String> = visible_landmarks(&map, &pose, &camera_with_range(6.0))
                .iter()
                .map(|v| v.landmark.id.clone())
                .collect();
            for id in &near {
                assert!(far.contains(id));
            }
        }
    }
}
