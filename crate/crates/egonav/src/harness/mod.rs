//! Batch evaluation: suite running, navigation metrics, ablation sweeps,
//! and line-delimited result records.
//!
//! Episodes run in parallel on the rayon pool, but every episode's
//! randomness derives from the suite seed and the episode id alone, so
//! worker count never changes results. Records are sorted by episode id
//! before aggregation.

pub mod generators;
pub mod pipeline;

pub use generators::{generate_world_suite, standard_suite, GeneratorConfig, WorldFamily};
pub use pipeline::{train_planning_sampler, PlanningSampler, SamplerTrainingSpec};

use crate::egoview::ScriptedMacroExpert;
use crate::geometry::{Pose2D, TRAJECTORY_LEN};
use crate::imagination::ScriptedNarrator;
use crate::manager::{
    run_episode, ComponentBundle, EpisodeRecord, PipelineConfig, PredicateExecutionExpert,
    RunLimits, ScriptedNavigator, StoppedReason,
};
use crate::trajgen::{TrajectorySampler, TrajgenError};
use crate::worldsim::{Episode, WorldMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("world generation failed after {attempts} attempts: {message}")]
    Generator { attempts: usize, message: String },
    #[error(transparent)]
    Trajgen(#[from] TrajgenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Aggregate navigation metrics over one suite run.
///
/// `tl` and `ne` are means in meters; `osr`, `sr`, and `spl` are
/// percentages. Always `sr <= osr` and `spl <= sr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Mean executed path length (TL).
    pub tl: f64,
    /// Mean final-pose-to-goal distance (NE).
    pub ne: f64,
    /// Oracle success rate: % of episodes whose path ever enters the
    /// success radius (OSR).
    pub osr: f64,
    /// Success rate: % of episodes whose final pose is inside the radius
    /// with a completed stop (SR).
    pub sr: f64,
    /// Success weighted by path length (SPL).
    pub spl: f64,
    pub n_episodes: usize,
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: usize,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost.total_cmp(&other.cost).then(self.cell.cmp(&other.cell))
    }
}

/// Shortest-path length in meters between two points over the free cells
/// of the occupancy grid: 8-connected, diagonals cost √2 × resolution and
/// require both adjacent orthogonal cells free (no corner cutting).
///
/// `None` when either endpoint lies outside the grid or on an occupied
/// cell, or when no route exists. Both points in one cell give
/// `Some(0.0)`.
pub fn grid_shortest_path(map: &WorldMap, from: (f64, f64), to: (f64, f64)) -> Option<f64> {
    let res = map.resolution();
    let (w, h) = (map.width(), map.height());
    let locate = |p: (f64, f64)| -> Option<(usize, usize)> {
        let fx = (p.0 / res).floor();
        let fy = (p.1 / res).floor();
        if fx < 0.0 || fy < 0.0 || fx >= w as f64 || fy >= h as f64 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if map.cell_occupied(ix as isize, iy as isize) {
            return None;
        }
        Some((ix, iy))
    };
    let start = locate(from)?;
    let goal = locate(to)?;
    if start == goal {
        return Some(0.0);
    }

    let index = |(ix, iy): (usize, usize)| iy * w + ix;
    let free = |ix: isize, iy: isize| {
        ix >= 0 && iy >= 0 && ix < w as isize && iy < h as isize && !map.cell_occupied(ix, iy)
    };
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[index(start)] = 0.0;
    heap.push(Reverse(HeapEntry { cost: 0.0, cell: index(start) }));
    let goal_idx = index(goal);

    while let Some(Reverse(HeapEntry { cost, cell })) = heap.pop() {
        if cell == goal_idx {
            return Some(cost);
        }
        if cost > dist[cell] {
            continue;
        }
        let (ix, iy) = ((cell % w) as isize, (cell / w) as isize);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (ix + dx as isize, iy + dy as isize);
                if !free(nx, ny) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(free(ix + dx as isize, iy) && free(ix, iy + dy as isize)) {
                    continue;
                }
                let step = if diagonal { res * std::f64::consts::SQRT_2 } else { res };
                let next = cost + step;
                let ni = ny as usize * w + nx as usize;
                if next < dist[ni] {
                    dist[ni] = next;
                    heap.push(Reverse(HeapEntry { cost: next, cell: ni }));
                }
            }
        }
    }
    None
}

/// One episode result enriched with everything metric computation needs,
/// so a records file is self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub record: EpisodeRecord,
    pub goal: (f64, f64),
    pub success_radius: f64,
    /// Grid shortest-path length start→goal, meters; `None` when the grid
    /// admits no route.
    pub shortest_path_m: Option<f64>,
}

/// Pairs each record with its episode by id and attaches the metric
/// inputs. Requires a bijection: equal lengths, unique ids on both sides,
/// every record id present among the episodes.
pub fn record_lines(
    records: &[EpisodeRecord],
    episodes: &[Episode],
) -> Result<Vec<RecordLine>, HarnessError> {
    if records.len() != episodes.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "{} records but {} episodes",
            records.len(),
            episodes.len()
        )));
    }
    let mut by_id: HashMap<&str, &Episode> = HashMap::new();
    for ep in episodes {
        if by_id.insert(ep.id.as_str(), ep).is_some() {
            return Err(HarnessError::InvalidArgument(format!("duplicate episode id {:?}", ep.id)));
        }
    }
    let mut seen: HashSet<&str> = HashSet::new();
    records
        .iter()
        .map(|record| {
            if !seen.insert(record.episode_id.as_str()) {
                return Err(HarnessError::InvalidArgument(format!(
                    "duplicate record id {:?}",
                    record.episode_id
                )));
            }
            let ep = by_id.get(record.episode_id.as_str()).ok_or_else(|| {
                HarnessError::InvalidArgument(format!(
                    "record id {:?} has no matching episode",
                    record.episode_id
                ))
            })?;
            Ok(RecordLine {
                record: record.clone(),
                goal: ep.goal,
                success_radius: ep.success_radius,
                shortest_path_m: grid_shortest_path(&ep.map, (ep.start.x, ep.start.y), ep.goal),
            })
        })
        .collect()
}

/// Aggregates metrics from self-contained record lines.
///
/// Per episode: success S = final pose within the radius AND a completed
/// stop. The SPL term is S·ℓ/max(p, ℓ) with ℓ the grid shortest path and
/// p the executed length; a degenerate start-on-goal episode (ℓ = 0)
/// contributes S, and a successful episode without any grid route
/// contributes 0.
pub fn metrics_from_lines(lines: &[RecordLine]) -> Result<MetricsSummary, HarnessError> {
    if lines.is_empty() {
        return Err(HarnessError::InvalidArgument("no records to aggregate".into()));
    }
    let n = lines.len() as f64;
    let (mut tl, mut ne, mut spl) = (0.0, 0.0, 0.0);
    let (mut osr, mut sr) = (0usize, 0usize);
    for line in lines {
        let r = &line.record;
        let (gx, gy) = line.goal;
        let within = |p: &Pose2D| (p.x - gx).hypot(p.y - gy) <= line.success_radius;
        tl += r.path_length;
        ne += (r.final_pose.x - gx).hypot(r.final_pose.y - gy);
        if r.path.iter().any(within) {
            osr += 1;
        }
        if within(&r.final_pose) && r.stopped_reason == StoppedReason::Completed {
            sr += 1;
            spl += match line.shortest_path_m {
                Some(l) if l > 0.0 => l / r.path_length.max(l),
                Some(_) => 1.0,
                None => 0.0,
            };
        }
    }
    Ok(MetricsSummary {
        tl: tl / n,
        ne: ne / n,
        osr: 100.0 * osr as f64 / n,
        sr: 100.0 * sr as f64 / n,
        spl: 100.0 * spl / n,
        n_episodes: lines.len(),
    })
}

/// TL/NE/OSR/SR/SPL over aligned records and episodes.
pub fn compute_metrics(
    records: &[EpisodeRecord],
    episodes: &[Episode],
) -> Result<MetricsSummary, HarnessError> {
    metrics_from_lines(&record_lines(records, episodes)?)
}

/// Fully scripted component bundle around the given sampler: the default
/// offline pipeline.
pub fn scripted_components(
    sampler: Box<dyn TrajectorySampler + Send + Sync>,
    config: PipelineConfig,
) -> ComponentBundle {
    ComponentBundle {
        macro_expert: Box::new(ScriptedMacroExpert),
        narrator: Box::new(ScriptedNarrator),
        navigator: Box::new(ScriptedNavigator),
        execution: Box::new(PredicateExecutionExpert),
        sampler,
        config,
    }
}

/// Records plus their aggregate metrics for one suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsSummary,
}

/// Runs every episode (in parallel) and aggregates metrics. Records come
/// back sorted by episode id.
pub fn run_suite(
    episodes: &[Episode],
    bundle: &ComponentBundle,
    limits: &RunLimits,
    seed: u64,
) -> Result<SuiteResult, HarnessError> {
    let mut records: Vec<EpisodeRecord> =
        episodes.par_iter().map(|ep| run_episode(ep, bundle, limits, seed)).collect();
    records.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let summary = compute_metrics(&records, episodes)?;
    Ok(SuiteResult { records, summary })
}

/// Which pipeline knob an ablation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationParam {
    Ctn,
    Irl,
    Egoview,
}

impl fmt::Display for AblationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationParam::Ctn => "ctn",
            AblationParam::Irl => "irl",
            AblationParam::Egoview => "egoview",
        })
    }
}

impl FromStr for AblationParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctn" => Ok(AblationParam::Ctn),
            "irl" => Ok(AblationParam::Irl),
            "egoview" => Ok(AblationParam::Egoview),
            other => Err(HarnessError::InvalidArgument(format!(
                "unknown ablation parameter {other:?} (expected ctn, irl, or egoview)"
            ))),
        }
    }
}

/// View-correction configuration rows: `mae-only` keeps only the coarse
/// 90° stage, `mac-only` keeps only the fine 30° stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EgoviewMode {
    None,
    MacOnly,
    MaeOnly,
    Full,
}

impl fmt::Display for EgoviewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EgoviewMode::None => "none",
            EgoviewMode::MacOnly => "mac-only",
            EgoviewMode::MaeOnly => "mae-only",
            EgoviewMode::Full => "full",
        })
    }
}

impl FromStr for EgoviewMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EgoviewMode::None),
            "mac-only" => Ok(EgoviewMode::MacOnly),
            "mae-only" => Ok(EgoviewMode::MaeOnly),
            "full" => Ok(EgoviewMode::Full),
            other => Err(HarnessError::InvalidArgument(format!(
                "unknown egoview mode {other:?} (expected none, mac-only, mae-only, or full)"
            ))),
        }
    }
}

/// One ablation sweep: a parameter, its values (as written on the CLI),
/// and the suite seeds to average over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub parameter: AblationParam,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
}

/// Applies one ablation value to a base pipeline configuration.
///
/// `irl 0` disables imagination entirely; other IRL values keep the base
/// fidelity decay.
pub fn apply_ablation_value(
    base: &PipelineConfig,
    parameter: AblationParam,
    value: &str,
) -> Result<PipelineConfig, HarnessError> {
    let mut cfg = base.clone();
    match parameter {
        AblationParam::Ctn => {
            let v: usize = value.parse().map_err(|_| {
                HarnessError::InvalidArgument(format!("ctn value {value:?} is not a count"))
            })?;
            if v == 0 || v > cfg.batch_size {
                return Err(HarnessError::InvalidArgument(format!(
                    "ctn {v} out of 1..={}",
                    cfg.batch_size
                )));
            }
            cfg.ctn = v;
        }
        AblationParam::Irl => {
            let v: usize = value.parse().map_err(|_| {
                HarnessError::InvalidArgument(format!("irl value {value:?} is not a count"))
            })?;
            if v > TRAJECTORY_LEN {
                return Err(HarnessError::InvalidArgument(format!(
                    "irl {v} out of 0..={TRAJECTORY_LEN}"
                )));
            }
            cfg.imagination = if v == 0 {
                None
            } else {
                let mut imag = cfg.imagination.unwrap_or_default();
                imag.irl = v;
                Some(imag)
            };
        }
        AblationParam::Egoview => {
            let mode: EgoviewMode = value.parse()?;
            let (enable_macro, enable_micro) = match mode {
                EgoviewMode::None => (false, false),
                EgoviewMode::MacOnly => (false, true),
                EgoviewMode::MaeOnly => (true, false),
                EgoviewMode::Full => (true, true),
            };
            cfg.enable_macro = enable_macro;
            cfg.enable_micro = enable_micro;
        }
    }
    Ok(cfg)
}

/// Metrics for one (value, seed) cell of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: String,
    pub seed: u64,
    pub summary: MetricsSummary,
}

/// Runs the sweep: every value × seed over the same episode set.
/// Per-episode failures stay inside the records; only misconfiguration
/// aborts the sweep.
pub fn run_ablation(
    spec: &AblationSpec,
    episodes: &[Episode],
    base: &PipelineConfig,
    limits: &RunLimits,
    make_bundle: &(dyn Fn(PipelineConfig) -> ComponentBundle + Sync),
) -> Result<Vec<AblationRow>, HarnessError> {
    if spec.values.is_empty() {
        return Err(HarnessError::InvalidArgument("ablation values must be non-empty".into()));
    }
    if spec.seeds.is_empty() {
        return Err(HarnessError::InvalidArgument("ablation seeds must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(spec.values.len() * spec.seeds.len());
    for value in &spec.values {
        let cfg = apply_ablation_value(base, spec.parameter, value)?;
        for &seed in &spec.seeds {
            let bundle = make_bundle(cfg.clone());
            let result = run_suite(episodes, &bundle, limits, seed)?;
            rows.push(AblationRow { value: value.clone(), seed, summary: result.summary });
        }
    }
    Ok(rows)
}

/// Mean SR per ablation value in first-appearance order, as (x, y) plot
/// points. Numeric values plot at their own x; non-numeric values at
/// their list index.
pub fn ablation_plot_points(rows: &[AblationRow]) -> Vec<(f64, f64)> {
    let mut order: Vec<&str> = Vec::new();
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for row in rows {
        let entry = sums.entry(row.value.as_str()).or_insert_with(|| {
            order.push(row.value.as_str());
            (0.0, 0)
        });
        entry.0 += row.summary.sr;
        entry.1 += 1;
    }
    order
        .iter()
        .enumerate()
        .map(|(i, value)| {
            let (sum, count) = sums[value];
            let x = value.parse::<f64>().unwrap_or(i as f64);
            (x, sum / count as f64)
        })
        .collect()
}

/// Writes (x, y) pairs as a two-column text file, one pair per line.
pub fn write_plot_data(path: &Path, points: &[(f64, f64)]) -> Result<(), HarnessError> {
    let mut out = String::new();
    for (x, y) in points {
        let _ = writeln!(out, "{x} {y}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Serializes record lines as line-delimited JSON.
pub fn render_record_lines(lines: &[RecordLine]) -> String {
    let mut out = String::new();
    for line in lines {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(line).expect("record lines are serializable")
        );
    }
    out
}

/// Parses line-delimited JSON record lines; blank lines are skipped.
pub fn parse_record_lines(text: &str) -> Result<Vec<RecordLine>, HarnessError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                HarnessError::InvalidArgument(format!("bad record on line {}: {e}", i + 1))
            })
        })
        .collect()
}
