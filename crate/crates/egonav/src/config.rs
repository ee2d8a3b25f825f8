//! Plain-text `key = value` configuration for the evaluation pipeline.
//!
//! A config file is line-oriented: blank lines and lines starting with
//! `#` are ignored, every other line must be `key = value` for a known
//! key. Unknown and duplicate keys are errors so that typos cannot
//! silently fall back to defaults. Every tunable default of the runtime
//! pipeline is covered; a missing key keeps its default.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::egoview::{MacroAdjustConfig, MicroAdjustConfig};
use crate::imagination::ImaginationConfig;
use crate::manager::{PipelineConfig, RunLimits};
use crate::perception::CameraModel;
use crate::trajgen::NoiseSchedule;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Every pipeline knob, flattened to scalars so it can round-trip a
/// plain-text file.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Walkable-fraction gate threshold of the fine view corrector.
    pub theta: f64,
    /// Fine correction turn increment, degrees.
    pub micro_turn_deg: f64,
    pub micro_max_turns: usize,
    /// Coarse correction turn increment, degrees.
    pub macro_turn_deg: f64,
    pub macro_max_turns: usize,
    /// Candidates kept by farthest-first selection.
    pub ctn: usize,
    /// Trajectories sampled per step before selection.
    pub batch_size: usize,
    /// Rollout length of the imagination stage; 0 disables it.
    pub irl: usize,
    pub fidelity_decay: f64,
    pub max_steps: usize,
    pub stuck_steps: usize,
    pub stuck_distance: f64,
    pub success_radius: f64,
    pub schedule_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub camera_width: usize,
    pub camera_height: usize,
    /// First image row that sees the ground; defaults to height / 2.
    pub horizon_row: Option<usize>,
    pub hfov_deg: f64,
    pub max_range: f64,
    pub near_distance: f64,
    /// Collision inflation radius, meters; the agent is a point by
    /// default.
    pub inflation_radius: f64,
    /// Physical rig constants, recorded for provenance; a flat 2D world
    /// gives them no effect.
    pub agent_height_m: f64,
    pub camera_tilt_deg: f64,
    /// Denoiser weights to load instead of an analytically seeded one.
    pub denoiser_checkpoint: Option<PathBuf>,
    /// Remote expert endpoint; scripted experts are used when unset.
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let micro = MicroAdjustConfig::default();
        let macro_cfg = MacroAdjustConfig::default();
        let imagination = ImaginationConfig::default();
        let limits = RunLimits::default();
        let camera = CameraModel::default();
        Self {
            theta: micro.theta,
            micro_turn_deg: micro.turn_angle.to_degrees(),
            micro_max_turns: micro.max_turns,
            macro_turn_deg: macro_cfg.turn_angle.to_degrees(),
            macro_max_turns: macro_cfg.max_turns,
            ctn: PipelineConfig::default().ctn,
            batch_size: PipelineConfig::default().batch_size,
            irl: imagination.irl,
            fidelity_decay: imagination.fidelity_decay,
            max_steps: limits.max_steps,
            stuck_steps: limits.stuck_steps,
            stuck_distance: limits.stuck_distance,
            success_radius: crate::worldsim::DEFAULT_SUCCESS_RADIUS,
            schedule_steps: 50,
            beta_start: 0.02,
            beta_end: 0.2,
            camera_width: 96,
            camera_height: 72,
            horizon_row: None,
            hfov_deg: camera.hfov.to_degrees(),
            max_range: camera.max_range,
            near_distance: camera.near_distance,
            inflation_radius: 0.0,
            agent_height_m: 1.25,
            camera_tilt_deg: 15.0,
            denoiser_checkpoint: None,
            endpoint: None,
            model: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl EvalConfig {
    /// Parses config text; keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Malformed { line, text: raw.to_string() });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            match key {
                "theta" => cfg.theta = parse_num(line, key, value)?,
                "micro_turn_deg" => cfg.micro_turn_deg = parse_num(line, key, value)?,
                "micro_max_turns" => cfg.micro_max_turns = parse_num(line, key, value)?,
                "macro_turn_deg" => cfg.macro_turn_deg = parse_num(line, key, value)?,
                "macro_max_turns" => cfg.macro_max_turns = parse_num(line, key, value)?,
                "ctn" => cfg.ctn = parse_num(line, key, value)?,
                "batch_size" => cfg.batch_size = parse_num(line, key, value)?,
                "irl" => cfg.irl = parse_num(line, key, value)?,
                "fidelity_decay" => cfg.fidelity_decay = parse_num(line, key, value)?,
                "max_steps" => cfg.max_steps = parse_num(line, key, value)?,
                "stuck_steps" => cfg.stuck_steps = parse_num(line, key, value)?,
                "stuck_distance" => cfg.stuck_distance = parse_num(line, key, value)?,
                "success_radius" => cfg.success_radius = parse_num(line, key, value)?,
                "schedule_steps" => cfg.schedule_steps = parse_num(line, key, value)?,
                "beta_start" => cfg.beta_start = parse_num(line, key, value)?,
                "beta_end" => cfg.beta_end = parse_num(line, key, value)?,
                "camera_width" => cfg.camera_width = parse_num(line, key, value)?,
                "camera_height" => cfg.camera_height = parse_num(line, key, value)?,
                "horizon_row" => cfg.horizon_row = Some(parse_num(line, key, value)?),
                "hfov_deg" => cfg.hfov_deg = parse_num(line, key, value)?,
                "max_range" => cfg.max_range = parse_num(line, key, value)?,
                "near_distance" => cfg.near_distance = parse_num(line, key, value)?,
                "inflation_radius" => cfg.inflation_radius = parse_num(line, key, value)?,
                "agent_height_m" => cfg.agent_height_m = parse_num(line, key, value)?,
                "camera_tilt_deg" => cfg.camera_tilt_deg = parse_num(line, key, value)?,
                "denoiser_checkpoint" => cfg.denoiser_checkpoint = Some(PathBuf::from(value)),
                "endpoint" => cfg.endpoint = Some(value.to_string()),
                "model" => cfg.model = Some(value.to_string()),
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.camera().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.micro_config().validate().map_err(ConfigError::Invalid)?;
        self.macro_config().validate().map_err(ConfigError::Invalid)?;
        if let Some(imagination) = self.imagination_config() {
            imagination.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.ctn == 0 || self.ctn > self.batch_size {
            return Err(ConfigError::Invalid(format!(
                "ctn {} must lie in 1..=batch_size ({})",
                self.ctn, self.batch_size
            )));
        }
        if self.max_steps == 0 || self.stuck_steps == 0 {
            return Err(ConfigError::Invalid("step limits must be positive".into()));
        }
        if !(self.stuck_distance > 0.0 && self.success_radius > 0.0) {
            return Err(ConfigError::Invalid("distances must be positive".into()));
        }
        if self.schedule_steps == 0
            || !(self.beta_start > 0.0 && self.beta_start <= self.beta_end && self.beta_end < 1.0)
        {
            return Err(ConfigError::Invalid(format!(
                "schedule needs steps >= 1 and 0 < beta_start <= beta_end < 1, got {} in [{}, {}]",
                self.schedule_steps, self.beta_start, self.beta_end
            )));
        }
        if self.inflation_radius < 0.0 {
            return Err(ConfigError::Invalid("inflation_radius must be >= 0".into()));
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        let mut camera = CameraModel::scaled(self.camera_width, self.camera_height);
        camera.hfov = self.hfov_deg.to_radians();
        camera.max_range = self.max_range;
        camera.near_distance = self.near_distance;
        if let Some(row) = self.horizon_row {
            camera.horizon_row = row;
        }
        camera
    }

    fn micro_config(&self) -> MicroAdjustConfig {
        MicroAdjustConfig {
            theta: self.theta,
            turn_angle: self.micro_turn_deg.to_radians(),
            max_turns: self.micro_max_turns,
        }
    }

    fn macro_config(&self) -> MacroAdjustConfig {
        MacroAdjustConfig {
            turn_angle: self.macro_turn_deg.to_radians(),
            max_turns: self.macro_max_turns,
        }
    }

    fn imagination_config(&self) -> Option<ImaginationConfig> {
        (self.irl > 0)
            .then(|| ImaginationConfig { irl: self.irl, fidelity_decay: self.fidelity_decay })
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            camera: self.camera(),
            micro: self.micro_config(),
            macro_cfg: self.macro_config(),
            imagination: self.imagination_config(),
            batch_size: self.batch_size,
            ctn: self.ctn,
            enable_macro: true,
            enable_micro: true,
        }
    }

    pub fn run_limits(&self) -> RunLimits {
        RunLimits {
            max_steps: self.max_steps,
            stuck_steps: self.stuck_steps,
            stuck_distance: self.stuck_distance,
        }
    }

    pub fn noise_schedule(&self) -> NoiseSchedule {
        NoiseSchedule::linear(self.schedule_steps, self.beta_start, self.beta_end)
    }
}
