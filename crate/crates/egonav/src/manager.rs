//! The per-step navigation loop: viewpoint correction, candidate
//! generation, imagined narration, trajectory selection, execution, and
//! subtask bookkeeping.
//!
//! [`run_episode`] drives one episode to completion and returns an
//! [`EpisodeRecord`] no matter what happened: component failures abort the
//! episode with the error attached rather than propagating, so a batch
//! runner never stops mid-suite. With fully scripted components and a
//! fixed seed the record is byte-for-byte reproducible.
//!
//! Subtask progress is strictly ordered: [`assess_progress`] advances the
//! pointer past every consecutively satisfied subtask and never skips an
//! unsatisfied one, so an agent standing in the region of subtask 2 gains
//! nothing until subtask 1 is done.

use crate::egoview::{
    macro_adjust, micro_adjust, MacroAdjustConfig, MacroExpert, MicroAdjustConfig,
};
use crate::error::ExpertError;
use crate::geometry::{normalize_angle, Pose2D, Trajectory};
use crate::imagination::{
    imagine_rollout, narrate, Direction, ImaginationConfig, Layout, NarrationExpert,
    NarrationReport,
};
use crate::perception::{render_walkability_mask, CameraModel};
use crate::seeding::{derive_seed, hash_label};
use crate::trajgen::{encode_context, CandidateSet, Observation, TrajectorySampler};
use crate::worldsim::{
    execute_trajectory, visible_landmarks, Episode, Subtask, SubtaskPredicate, WorldMap,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use thiserror::Error;

const SAMPLE_TAG: u64 = 1;
const IMAGINE_TAG: u64 = 2;

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("no candidate reports to select from")]
    NoCandidates,
    #[error("navigator returned an invalid selection: {0}")]
    BadSelection(String),
    #[error(transparent)]
    Expert(#[from] ExpertError),
}

/// Cursor over an episode's ordered subtasks.
///
/// `index` is the first incomplete subtask; `completed[i]` flags are set
/// strictly left to right and never cleared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskPointer {
    index: usize,
    completed: Vec<bool>,
}

impl SubtaskPointer {
    pub fn new(subtask_count: usize) -> Self {
        Self { index: 0, completed: vec![false; subtask_count] }
    }

    /// First incomplete subtask index; equals the subtask count when all
    /// are done.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn completed(&self) -> &[bool] {
        &self.completed
    }

    pub fn is_complete(&self) -> bool {
        self.index == self.completed.len()
    }

    /// Copy with the next `count` subtasks marked complete in order,
    /// saturating at the subtask count.
    pub fn advanced(&self, count: usize) -> SubtaskPointer {
        let mut next = self.clone();
        let end = (next.index + count).min(next.completed.len());
        while next.index < end {
            next.completed[next.index] = true;
            next.index += 1;
        }
        next
    }
}

/// Outcome of one trajectory selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub candidate_reports: Vec<NarrationReport>,
    pub scores: Vec<f64>,
    pub chosen_id: usize,
    pub rationale: String,
}

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppedReason {
    /// Every subtask predicate was satisfied in order.
    Completed,
    /// The step budget ran out.
    MaxSteps,
    /// Too many consecutive steps moved less than the stuck threshold.
    Stuck,
    /// A component failed; the error is attached to the record.
    Aborted,
}

/// One pipeline step as recorded in an [`EpisodeRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// Pose after viewpoint corrections, from which candidates were
    /// sampled.
    pub pose: Pose2D,
    pub macro_rotations: Vec<f64>,
    pub micro_rotations: Vec<f64>,
    pub subtask_index: usize,
    pub selection: SelectionRecord,
    pub action: Trajectory,
    pub executed_length: f64,
    pub truncated: bool,
    /// Subtasks newly completed by this step.
    pub advanced: usize,
}

/// Full log of one episode run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub steps: Vec<StepLog>,
    pub final_pose: Pose2D,
    /// Every pose traversed, starting at the episode start.
    pub path: Vec<Pose2D>,
    pub path_length: f64,
    pub stopped_reason: StoppedReason,
    pub subtasks_completed: usize,
    pub error: Option<String>,
}

/// Chooses among candidate narration reports for the active subtask.
pub trait Navigator: Sync {
    fn select(
        &self,
        map: &WorldMap,
        pose: &Pose2D,
        subtask: &Subtask,
        reports: &[NarrationReport],
    ) -> Result<SelectionRecord, ExpertError>;
}

fn sector_center(direction: Direction) -> f64 {
    match direction {
        Direction::Forward => 0.0,
        Direction::Left => FRAC_PI_2,
        Direction::Right => -FRAC_PI_2,
        Direction::Backward => PI,
    }
}

/// Deterministic rule-based navigator; the default and the one used in
/// evaluation.
///
/// Per-report score: +2 when the report approaches the subtask's landmark
/// (for region subtasks: when the walking-direction sector center lies
/// within 45 degrees of the region bearing); +1 per subtask-relevant
/// encountered landmark (the subtask's own landmark, or any landmark
/// inside the target region); −3 when a collision is predicted. Highest
/// score wins, ties to the lowest candidate id.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedNavigator;

impl ScriptedNavigator {
    fn score(
        &self,
        map: &WorldMap,
        pose: &Pose2D,
        subtask: &Subtask,
        report: &NarrationReport,
    ) -> f64 {
        let mut score = 0.0;
        match &subtask.predicate {
            SubtaskPredicate::FaceLandmark { landmark_id, .. } => {
                if report.approaching.as_ref() == Some(landmark_id) {
                    score += 2.0;
                }
                if report.encountered.contains(landmark_id) {
                    score += 1.0;
                }
            }
            SubtaskPredicate::ReachRegion { center, radius } => {
                let bearing = pose.bearing_to(center.0, center.1);
                let off = normalize_angle(sector_center(report.direction) - bearing).abs();
                if off <= FRAC_PI_4 {
                    score += 2.0;
                }
                for id in &report.encountered {
                    let relevant = map.landmark(id).is_some_and(|lm| {
                        (lm.position.0 - center.0).hypot(lm.position.1 - center.1) <= *radius
                    });
                    if relevant {
                        score += 1.0;
                    }
                }
            }
        }
        if report.collision_predicted {
            score -= 3.0;
        }
        score
    }
}

impl Navigator for ScriptedNavigator {
    fn select(
        &self,
        map: &WorldMap,
        pose: &Pose2D,
        subtask: &Subtask,
        reports: &[NarrationReport],
    ) -> Result<SelectionRecord, ExpertError> {
        let scores: Vec<f64> =
            reports.iter().map(|r| self.score(map, pose, subtask, r)).collect();
        let chosen_id = scores
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.total_cmp(b).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("reports are non-empty");
        Ok(SelectionRecord {
            candidate_reports: reports.to_vec(),
            scores: scores.clone(),
            chosen_id,
            rationale: format!("scores {scores:?}; chose candidate {chosen_id}"),
        })
    }
}

/// Runs the navigator and validates its selection against the report
/// list.
pub fn select_trajectory(
    map: &WorldMap,
    pose: &Pose2D,
    subtask: &Subtask,
    reports: &[NarrationReport],
    navigator: &dyn Navigator,
) -> Result<SelectionRecord, ManagerError> {
    if reports.is_empty() {
        return Err(ManagerError::NoCandidates);
    }
    let record = navigator.select(map, pose, subtask, reports)?;
    if record.chosen_id >= reports.len() {
        return Err(ManagerError::BadSelection(format!(
            "chosen_id {} out of range for {} candidates",
            record.chosen_id,
            reports.len()
        )));
    }
    if record.scores.len() != reports.len() {
        return Err(ManagerError::BadSelection(format!(
            "{} scores for {} candidates",
            record.scores.len(),
            reports.len()
        )));
    }
    if record.scores.iter().any(|s| !s.is_finite()) {
        return Err(ManagerError::BadSelection("non-finite score".into()));
    }
    Ok(record)
}

/// Advances the subtask pointer past every consecutively satisfied
/// subtask at `after`, returning the new pointer and how many subtasks
/// were completed. Out-of-order satisfaction is ignored.
pub fn assess_progress(
    after: &Pose2D,
    episode: &Episode,
    ptr: &SubtaskPointer,
) -> (SubtaskPointer, usize) {
    let mut next = ptr.clone();
    let mut advanced = 0;
    while next.index < episode.subtasks.len()
        && episode.subtasks[next.index].predicate.satisfied(&episode.map, after)
    {
        next.completed[next.index] = true;
        next.index += 1;
        advanced += 1;
    }
    (next, advanced)
}

/// Progress monitor: decides how many of the remaining ordered subtasks
/// one executed step completed (zero, one, or several).
///
/// Implementations must preserve strict ordering; building the returned
/// pointer through [`SubtaskPointer::advanced`] guarantees it.
pub trait ExecutionExpert: Sync {
    fn assess(
        &self,
        episode: &Episode,
        before: &Pose2D,
        after: &Pose2D,
        ptr: &SubtaskPointer,
    ) -> Result<(SubtaskPointer, usize), ExpertError>;
}

/// Default progress monitor: evaluates the subtask predicates directly at
/// the post-step pose via [`assess_progress`]. Infallible and
/// deterministic; the one used in evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredicateExecutionExpert;

impl ExecutionExpert for PredicateExecutionExpert {
    fn assess(
        &self,
        episode: &Episode,
        _before: &Pose2D,
        after: &Pose2D,
        ptr: &SubtaskPointer,
    ) -> Result<(SubtaskPointer, usize), ExpertError> {
        Ok(assess_progress(after, episode, ptr))
    }
}

/// Pipeline-stage configuration shared by every episode in a run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub camera: CameraModel,
    pub micro: MicroAdjustConfig,
    pub macro_cfg: MacroAdjustConfig,
    /// `None` disables imagination entirely: every candidate gets the same
    /// placeholder report, so selection degenerates to candidate 0.
    pub imagination: Option<ImaginationConfig>,
    /// Trajectories sampled per step before diversity selection.
    pub batch_size: usize,
    /// Candidates retained by farthest-first selection.
    pub ctn: usize,
    /// Runs the coarse 90-degree realignment at step 0.
    pub enable_macro: bool,
    /// Runs the fine 30-degree realignment before every step.
    pub enable_micro: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            micro: MicroAdjustConfig::default(),
            macro_cfg: MacroAdjustConfig::default(),
            imagination: Some(ImaginationConfig::default()),
            batch_size: 16,
            ctn: 4,
            enable_macro: true,
            enable_micro: true,
        }
    }
}

/// Everything `run_episode` needs besides the episode itself.
pub struct ComponentBundle {
    pub macro_expert: Box<dyn MacroExpert + Send + Sync>,
    pub narrator: Box<dyn NarrationExpert + Send + Sync>,
    pub navigator: Box<dyn Navigator + Send + Sync>,
    pub execution: Box<dyn ExecutionExpert + Send + Sync>,
    pub sampler: Box<dyn TrajectorySampler + Send + Sync>,
    pub config: PipelineConfig,
}

/// Step budget and stall detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub max_steps: usize,
    /// Consecutive low-movement steps that count as stuck.
    pub stuck_steps: usize,
    /// Executed length below which a step counts as no movement, meters.
    pub stuck_distance: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self { max_steps: 24, stuck_steps: 3, stuck_distance: 0.05 }
    }
}

fn placeholder_report() -> NarrationReport {
    NarrationReport {
        direction: Direction::Forward,
        approaching: None,
        encountered: Vec::new(),
        layout: Layout::Open,
        intent: "no rollout imagined".to_string(),
        collision_predicted: false,
    }
}

/// Runs one episode to completion.
///
/// The loop per step: macro adjust (step 0 only) → micro adjust → context
/// encoding against the active subtask → sample a batch of candidate
/// trajectories → farthest-first diversity selection → imagined rollout
/// and narration per candidate (in parallel) → navigator selection →
/// execution → subtask progress assessment through the bundle's execution
/// expert. Stops on completion, step budget, stall, or component failure.
///
/// The start pose is checked against the predicates directly before the
/// loop, so an episode that begins inside its goal completes without any
/// expert round-trips.
pub fn run_episode(
    episode: &Episode,
    bundle: &ComponentBundle,
    limits: &RunLimits,
    seed: u64,
) -> EpisodeRecord {
    let cfg = &bundle.config;
    let map = &episode.map;
    let ep_hash = hash_label(&episode.id);
    let mut pose = episode.start;
    let mut path = vec![pose];
    let mut path_length = 0.0;
    let mut steps: Vec<StepLog> = Vec::new();
    let mut error = None;
    let mut reason = None;
    let mut stuck_run = 0;

    let (mut ptr, _) = assess_progress(&pose, episode, &SubtaskPointer::new(episode.subtasks.len()));
    if ptr.is_complete() {
        reason = Some(StoppedReason::Completed);
    }

    let mut step = 0;
    while reason.is_none() && step < limits.max_steps {
        let mut macro_rotations = Vec::new();
        if step == 0 && cfg.enable_macro {
            match macro_adjust(episode, &pose, &cfg.camera, &cfg.macro_cfg, bundle.macro_expert.as_ref())
            {
                Ok(outcome) => {
                    macro_rotations = outcome.rotations_applied;
                    pose = outcome.final_pose;
                }
                Err(e) => {
                    error = Some(format!("macro adjust failed: {e}"));
                    reason = Some(StoppedReason::Aborted);
                    break;
                }
            }
        }
        let mut micro_rotations = Vec::new();
        if cfg.enable_micro {
            let outcome = micro_adjust(map, &pose, &cfg.camera, &cfg.micro);
            micro_rotations = outcome.rotations_applied;
            pose = outcome.final_pose;
        }

        let subtask = &episode.subtasks[ptr.index()];
        let mask = render_walkability_mask(map, &pose, &cfg.camera);
        let (goal_bearing, goal_range) = match subtask.predicate.target_point(map) {
            Some((tx, ty)) => (pose.bearing_to(tx, ty), (pose.x - tx).hypot(pose.y - ty)),
            None => (0.0, 0.0),
        };
        let nearest_landmark = visible_landmarks(map, &pose, &cfg.camera)
            .iter()
            .min_by(|a, b| a.range.total_cmp(&b.range))
            .map(|v| (v.bearing, v.range));
        let context = encode_context(&Observation {
            mask: &mask,
            goal_bearing,
            goal_range,
            nearest_landmark,
        });

        let mut sampled = Vec::with_capacity(cfg.batch_size);
        let mut sample_failure = None;
        for i in 0..cfg.batch_size {
            let sample_seed = derive_seed(seed, &[ep_hash, step as u64, SAMPLE_TAG, i as u64]);
            match bundle.sampler.sample(&context, sample_seed) {
                Ok(traj) => sampled.push(traj),
                Err(e) => {
                    sample_failure = Some(format!("sampler failed: {e}"));
                    break;
                }
            }
        }
        if let Some(msg) = sample_failure {
            error = Some(msg);
            reason = Some(StoppedReason::Aborted);
            break;
        }
        let candidates = CandidateSet::build(sampled, cfg.ctn, 0);
        let selected: Vec<&Trajectory> = candidates.selected().collect();

        let reports: Result<Vec<NarrationReport>, _> = match &cfg.imagination {
            Some(imag) => selected
                .par_iter()
                .enumerate()
                .map(|(i, traj)| {
                    let imagine_seed =
                        derive_seed(seed, &[ep_hash, step as u64, IMAGINE_TAG, i as u64]);
                    let frames = imagine_rollout(map, &pose, traj, &cfg.camera, imag, imagine_seed);
                    narrate(&frames, bundle.narrator.as_ref())
                })
                .collect(),
            None => Ok(vec![placeholder_report(); selected.len()]),
        };
        let reports = match reports {
            Ok(r) => r,
            Err(e) => {
                error = Some(format!("narration failed: {e}"));
                reason = Some(StoppedReason::Aborted);
                break;
            }
        };

        let selection =
            match select_trajectory(map, &pose, subtask, &reports, bundle.navigator.as_ref()) {
                Ok(s) => s,
                Err(e) => {
                    error = Some(format!("selection failed: {e}"));
                    reason = Some(StoppedReason::Aborted);
                    break;
                }
            };
        let action = selected[selection.chosen_id].clone();

        let exec = match execute_trajectory(map, &pose, &action) {
            Ok(e) => e,
            Err(e) => {
                error = Some(format!("execution failed: {e}"));
                reason = Some(StoppedReason::Aborted);
                break;
            }
        };
        let step_pose = *exec.path.first().expect("execution path is never empty");
        path.extend_from_slice(&exec.path[1..]);
        path_length += exec.path_length;
        pose = exec.final_pose();

        let (next_ptr, advanced) =
            match bundle.execution.assess(episode, &step_pose, &pose, &ptr) {
                Ok(r) => r,
                Err(e) => {
                    error = Some(format!("progress assessment failed: {e}"));
                    reason = Some(StoppedReason::Aborted);
                    break;
                }
            };
        ptr = next_ptr;
        steps.push(StepLog {
            pose: step_pose,
            macro_rotations,
            micro_rotations,
            subtask_index: subtask.id,
            selection,
            action,
            executed_length: exec.path_length,
            truncated: exec.truncated,
            advanced,
        });

        if ptr.is_complete() {
            reason = Some(StoppedReason::Completed);
        } else if exec.path_length < limits.stuck_distance {
            stuck_run += 1;
            if stuck_run >= limits.stuck_steps {
                reason = Some(StoppedReason::Stuck);
            }
        } else {
            stuck_run = 0;
        }
        step += 1;
    }

    EpisodeRecord {
        episode_id: episode.id.clone(),
        steps,
        final_pose: pose,
        path,
        path_length,
        stopped_reason: reason.unwrap_or(StoppedReason::MaxSteps),
        subtasks_completed: ptr.completed().iter().filter(|&&c| c).count(),
        error,
    }
}
