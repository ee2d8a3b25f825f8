//! Poses, relative waypoints, fixed-length trajectories, and the mean
//! per-step trajectory metric.
//!
//! A [`Trajectory`] is the action-space element: exactly [`TRAJECTORY_LEN`]
//! relative waypoints. Waypoint translations are expressed in the local
//! frame of the preceding pose (egocentric convention), and heading is
//! always renormalized into `(-pi, pi]` after composition.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Number of waypoints per trajectory.
pub const TRAJECTORY_LEN: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("waypoint dyaw {0} exceeds pi in magnitude")]
    YawOutOfRange(f64),
    #[error("trajectory length {actual} != {expected}")]
    BadLength { expected: usize, actual: usize },
}

/// Normalizes an angle into `(-pi, pi]`.
///
/// Angles already in range pass through bit-identically, so repeated
/// composition of zero deltas is exactly idempotent.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Agent/world pose: position in meters, yaw in radians in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D { x: 0.0, y: 0.0, yaw: 0.0 };

    /// Creates a pose, normalizing yaw into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// SE(2) composition: applies `other` in this pose's local frame.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (sin_t, cos_t) = self.yaw.sin_cos();
        Pose2D::new(
            self.x + other.x * cos_t - other.y * sin_t,
            self.y + other.x * sin_t + other.y * cos_t,
            self.yaw + other.yaw,
        )
    }

    /// Euclidean distance between positions, ignoring yaw.
    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing of a world point relative to this pose's heading, in
    /// `(-pi, pi]`.
    pub fn bearing_to(&self, x: f64, y: f64) -> f64 {
        normalize_angle((y - self.y).atan2(x - self.x) - self.yaw)
    }

    /// Pose after rotating in place by `angle` radians (positive = left).
    pub fn rotated(&self, angle: f64) -> Pose2D {
        Pose2D::new(self.x, self.y, self.yaw + angle)
    }
}

/// Relative motion step: translation in the local frame plus a heading
/// change. `|dyaw| <= pi` is enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl Waypoint {
    pub const ZERO: Waypoint = Waypoint { dx: 0.0, dy: 0.0, dyaw: 0.0 };

    pub fn new(dx: f64, dy: f64, dyaw: f64) -> Result<Self, GeometryError> {
        if !(dx.is_finite() && dy.is_finite() && dyaw.is_finite()) {
            return Err(GeometryError::NonFinite("waypoint"));
        }
        if dyaw.abs() > PI {
            return Err(GeometryError::YawOutOfRange(dyaw));
        }
        Ok(Self { dx, dy, dyaw })
    }

    /// Like [`Waypoint::new`] but wraps `dyaw` into `(-pi, pi]` instead of
    /// rejecting it. Used when reshaping raw sampler output, where the
    /// heading delta is unconstrained.
    pub fn wrapped(dx: f64, dy: f64, dyaw: f64) -> Result<Self, GeometryError> {
        if !(dx.is_finite() && dy.is_finite() && dyaw.is_finite()) {
            return Err(GeometryError::NonFinite("waypoint"));
        }
        Ok(Self { dx, dy, dyaw: normalize_angle(dyaw) })
    }
}

/// Composes a relative waypoint onto a base pose.
///
/// The translation `(dx, dy)` is expressed in the base pose's local frame;
/// yaw adds and renormalizes.
pub fn compose_pose(base: &Pose2D, delta: &Waypoint) -> Result<Pose2D, GeometryError> {
    if !base.is_finite() {
        return Err(GeometryError::NonFinite("base pose"));
    }
    if !(delta.dx.is_finite() && delta.dy.is_finite() && delta.dyaw.is_finite()) {
        return Err(GeometryError::NonFinite("waypoint delta"));
    }
    Ok(base.compose(&Pose2D { x: delta.dx, y: delta.dy, yaw: delta.dyaw }))
}

/// Fixed-length sequence of relative waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Waypoint>", into = "Vec<Waypoint>")]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, GeometryError> {
        if waypoints.len() != TRAJECTORY_LEN {
            return Err(GeometryError::BadLength {
                expected: TRAJECTORY_LEN,
                actual: waypoints.len(),
            });
        }
        Ok(Self { waypoints })
    }

    /// Trajectory of all-zero waypoints.
    pub fn zero() -> Self {
        Self { waypoints: vec![Waypoint::ZERO; TRAJECTORY_LEN] }
    }

    /// Builds a trajectory by repeating one waypoint.
    pub fn repeated(w: Waypoint) -> Self {
        Self { waypoints: vec![w; TRAJECTORY_LEN] }
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Total commanded translation, the sum of per-step `(dx, dy)` norms.
    pub fn commanded_length(&self) -> f64 {
        self.waypoints.iter().map(|w| w.dx.hypot(w.dy)).sum()
    }
}

impl TryFrom<Vec<Waypoint>> for Trajectory {
    type Error = GeometryError;
    fn try_from(v: Vec<Waypoint>) -> Result<Self, Self::Error> {
        Trajectory::new(v)
    }
}

impl From<Trajectory> for Vec<Waypoint> {
    fn from(t: Trajectory) -> Self {
        t.waypoints
    }
}

/// Cumulative pose sequence `c_0 .. c_{T-1}` produced by folding a
/// trajectory's waypoints from an origin frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    poses: Vec<Pose2D>,
}

impl PoseSequence {
    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn last(&self) -> Pose2D {
        *self.poses.last().expect("pose sequence is never empty")
    }
}

/// Folds `compose_pose` over the trajectory: `poses[i]` is the cumulative
/// composition of waypoints `0..=i` starting at `origin`.
pub fn trajectory_to_pose_sequence(
    traj: &Trajectory,
    origin: &Pose2D,
) -> Result<PoseSequence, GeometryError> {
    let mut poses = Vec::with_capacity(TRAJECTORY_LEN);
    let mut current = *origin;
    for w in traj.waypoints() {
        current = compose_pose(&current, w)?;
        poses.push(current);
    }
    Ok(PoseSequence { poses })
}

/// Mean per-step Euclidean distance between two trajectories.
///
/// Only the `(dx, dy)` components enter the metric; heading deltas are
/// excluded.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let t = TRAJECTORY_LEN as f64;
    a.waypoints()
        .iter()
        .zip(b.waypoints())
        .map(|(wa, wb)| (wa.dx - wb.dx).hypot(wa.dy - wb.dy))
        .sum::<f64>()
        / t
}
