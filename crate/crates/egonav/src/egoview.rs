//! View correction before trajectory generation: a coarse 90° expert
//! realignment at episode start (macro) and a fine 30° gated correction
//! after every action (micro).

use crate::error::ExpertError;
use crate::geometry::Pose2D;
use crate::perception::{gate, render_walkability_mask, side_preference, CameraModel, DEFAULT_THETA};
use crate::worldsim::{visible_landmarks, Episode, SubtaskPredicate, WorldMap};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Fine correction: rotate in 30° increments while the walkability gate
/// reports a blocked view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroAdjustConfig {
    pub theta: f64,
    /// Turn increment magnitude, radians.
    pub turn_angle: f64,
    pub max_turns: usize,
}

impl Default for MicroAdjustConfig {
    fn default() -> Self {
        Self { theta: DEFAULT_THETA, turn_angle: 30.0_f64.to_radians(), max_turns: 2 }
    }
}

impl MicroAdjustConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(format!("theta {} out of (0, 1)", self.theta));
        }
        if !(self.turn_angle > 0.0 && self.turn_angle < std::f64::consts::PI) {
            return Err(format!("turn_angle {} out of (0, pi)", self.turn_angle));
        }
        if self.max_turns == 0 {
            return Err("max_turns must be >= 1".into());
        }
        Ok(())
    }
}

/// Coarse correction: rotate clockwise in 90° increments until the
/// expert judges the view aligned with the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAdjustConfig {
    /// Turn increment magnitude, radians; applied clockwise (negative yaw).
    pub turn_angle: f64,
    pub max_turns: usize,
}

impl Default for MacroAdjustConfig {
    fn default() -> Self {
        Self { turn_angle: 90.0_f64.to_radians(), max_turns: 3 }
    }
}

impl MacroAdjustConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.turn_angle > 0.0 && self.turn_angle < std::f64::consts::PI) {
            return Err(format!("turn_angle {} out of (0, pi)", self.turn_angle));
        }
        if self.max_turns == 0 {
            return Err("max_turns must be >= 1".into());
        }
        Ok(())
    }
}

/// Result of one correction cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustOutcome {
    /// Signed yaw increments in application order.
    pub rotations_applied: Vec<f64>,
    pub final_pose: Pose2D,
    /// Gate cleared (micro) or expert satisfied (macro).
    pub resolved: bool,
}

/// Verdict of the alignment judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroJudgment {
    Aligned,
    Rotate,
}

/// Judges whether the current view is aligned with the instruction.
/// `landmark_summary` is the text block built by [`landmark_summary`];
/// remote adapters must answer with the single token `ALIGNED` or
/// `ROTATE`.
pub trait MacroExpert {
    fn judge(&self, instruction: &str, landmark_summary: &str) -> Result<MacroJudgment, ExpertError>;
}

/// Text description of the current view for the alignment judge:
///
/// ```text
/// target: <first subtask text>
/// target_visible: yes|no
/// visible_landmarks:
/// - <id> "<name>" bearing_deg <b> range_m <r>
/// ```
///
/// `(none)` replaces the landmark lines when nothing is in view.
pub fn landmark_summary(episode: &Episode, pose: &Pose2D, camera: &CameraModel) -> String {
    let seen = visible_landmarks(&episode.map, pose, camera);
    let first = &episode.subtasks[0];
    let target_visible = match &first.predicate {
        SubtaskPredicate::FaceLandmark { landmark_id, .. } => {
            seen.iter().any(|v| &v.landmark.id == landmark_id)
        }
        SubtaskPredicate::ReachRegion { center, .. } => {
            pose.bearing_to(center.0, center.1).abs() <= camera.hfov / 2.0
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "target: {}", first.text);
    let _ = writeln!(out, "target_visible: {}", if target_visible { "yes" } else { "no" });
    let _ = writeln!(out, "visible_landmarks:");
    if seen.is_empty() {
        let _ = writeln!(out, "(none)");
    }
    for v in &seen {
        let _ = writeln!(
            out,
            "- {} \"{}\" bearing_deg {:.1} range_m {:.2}",
            v.landmark.id,
            v.landmark.name,
            v.bearing.to_degrees(),
            v.range
        );
    }
    out
}

/// Deterministic stand-in for a remote judge: aligned exactly when the
/// summary reports the target in view.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedMacroExpert;

impl MacroExpert for ScriptedMacroExpert {
    fn judge(&self, _instruction: &str, landmark_summary: &str) -> Result<MacroJudgment, ExpertError> {
        for line in landmark_summary.lines() {
            if let Some(value) = line.strip_prefix("target_visible:") {
                return Ok(match value.trim() {
                    "yes" => MacroJudgment::Aligned,
                    _ => MacroJudgment::Rotate,
                });
            }
        }
        Err(ExpertError::Parse {
            message: "summary lacks a target_visible line".into(),
            raw: landmark_summary.into(),
        })
    }
}

/// Gated fine correction. Renders the walkability mask; while the gate
/// reports a blocked view (d = 1), rotates by `turn_angle` in the
/// direction chosen by side preference on the FIRST triggering mask
/// (u ≥ 0 → counter-clockwise) and re-renders. Stops when the gate
/// clears or after `max_turns` rotations.
pub fn micro_adjust(
    map: &WorldMap,
    pose: &Pose2D,
    camera: &CameraModel,
    cfg: &MicroAdjustConfig,
) -> AdjustOutcome {
    let mut current = *pose;
    let mut rotations = Vec::new();
    let mask = render_walkability_mask(map, &current, camera);
    let mut decision = gate(&mask, cfg.theta).expect("config theta is validated");
    if decision.d == 0 {
        return AdjustOutcome { rotations_applied: rotations, final_pose: current, resolved: true };
    }
    let direction = if side_preference(&mask) >= 0 { 1.0 } else { -1.0 };
    while rotations.len() < cfg.max_turns && decision.d == 1 {
        let turn = direction * cfg.turn_angle;
        current = current.rotated(turn);
        rotations.push(turn);
        let mask = render_walkability_mask(map, &current, camera);
        decision = gate(&mask, cfg.theta).expect("config theta is validated");
    }
    AdjustOutcome { rotations_applied: rotations, final_pose: current, resolved: decision.d == 0 }
}

/// Coarse expert-driven correction at episode start. Queries the expert
/// on the current view summary; every `rotate` verdict applies one
/// clockwise turn and re-queries, up to `max_turns` rotations.
pub fn macro_adjust(
    episode: &Episode,
    pose: &Pose2D,
    camera: &CameraModel,
    cfg: &MacroAdjustConfig,
    expert: &dyn MacroExpert,
) -> Result<AdjustOutcome, ExpertError> {
    let mut current = *pose;
    let mut rotations = Vec::new();
    loop {
        let summary = landmark_summary(episode, &current, camera);
        match expert.judge(&episode.instruction, &summary)? {
            MacroJudgment::Aligned => {
                return Ok(AdjustOutcome {
                    rotations_applied: rotations,
                    final_pose: current,
                    resolved: true,
                })
            }
            MacroJudgment::Rotate => {
                if rotations.len() == cfg.max_turns {
                    return Ok(AdjustOutcome {
                        rotations_applied: rotations,
                        final_pose: current,
                        resolved: false,
                    });
                }
                current = current.rotated(-cfg.turn_angle);
                rotations.push(-cfg.turn_angle);
            }
        }
    }
}
