//! Trajectory generation: observation context encoding, denoising
//! diffusion sampling over flattened 24-waypoint trajectories, and
//! farthest-first candidate filtering.

use crate::geometry::{trajectory_distance, Trajectory, Waypoint, TRAJECTORY_LEN};
use crate::perception::WalkabilityMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// Flattened trajectory dimension: 24 waypoints × (dx, dy, dyaw).
pub const SAMPLE_DIM: usize = TRAJECTORY_LEN * 3;
pub const CONTEXT_DIM: usize = 64;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_CTN: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum TrajgenError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("diffusion diverged to a non-finite value at step {step}")]
    NumericalDivergence { step: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Conditioning vector for the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    values: Vec<f64>,
}

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self, TrajgenError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TrajgenError::BadInput("context contains non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// What the agent can see and knows about its goal at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<'a> {
    pub mask: &'a WalkabilityMask,
    /// Bearing to the active target, radians in agent frame.
    pub goal_bearing: f64,
    pub goal_range: f64,
    /// Bearing and range of the nearest visible landmark, if any.
    pub nearest_landmark: Option<(f64, f64)>,
}

const FEATURE_DIM: usize = 10;
const RANGE_CAP: f64 = 10.0;
const PROJECTION_SEED: u64 = 0x9a0c_01d5_7e11_2af3;

/// Walkable fraction of a column band of the mask.
fn band_fraction(mask: &WalkabilityMask, from_col: usize, to_col: usize) -> f64 {
    if from_col >= to_col {
        return 0.0;
    }
    let mut count = 0usize;
    for row in 0..mask.height() {
        for col in from_col..to_col {
            count += mask.get(col, row) as usize;
        }
    }
    count as f64 / ((to_col - from_col) * mask.height()) as f64
}

fn hand_features(obs: &Observation) -> [f64; FEATURE_DIM] {
    let w = mask_width(obs);
    let third = w / 3;
    let (lm_present, lm_bearing, lm_range) = match obs.nearest_landmark {
        Some((b, r)) => (1.0, b, r),
        None => (0.0, 0.0, 0.0),
    };
    [
        band_fraction(obs.mask, 0, third),
        band_fraction(obs.mask, third, w - third),
        band_fraction(obs.mask, w - third, w),
        obs.mask.occupancy(),
        obs.goal_bearing.sin(),
        obs.goal_bearing.cos(),
        (obs.goal_range.min(RANGE_CAP)) / RANGE_CAP,
        lm_present,
        lm_bearing.sin(),
        (lm_range.min(RANGE_CAP)) / RANGE_CAP,
    ]
}

fn mask_width(obs: &Observation) -> usize {
    obs.mask.width()
}

fn projection_matrix() -> &'static Vec<f64> {
    static MATRIX: OnceLock<Vec<f64>> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        (0..CONTEXT_DIM * FEATURE_DIM)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                g / (FEATURE_DIM as f64).sqrt()
            })
            .collect()
    })
}

/// Deterministic 64-dim embedding of an observation: ten hand-crafted
/// features (walkability thirds, overall occupancy, goal direction and
/// range, nearest-landmark cues) pushed through a fixed random
/// projection.
pub fn encode_context(obs: &Observation) -> ContextVector {
    let features = hand_features(obs);
    let proj = projection_matrix();
    let values = (0..CONTEXT_DIM)
        .map(|i| {
            features
                .iter()
                .enumerate()
                .map(|(j, f)| proj[i * FEATURE_DIM + j] * f)
                .sum()
        })
        .collect();
    ContextVector { values }
}

/// Per-step ancestral-sampling coefficients, indexed by `t − 1` for
/// timesteps `t = 1..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Cumulative products ᾱ_t of (1 − β_t), used for training-time
    /// forward noising.
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Standard schedule from a linear β ramp:
    /// α_t = 1/√(1−β_t), γ_t = β_t/√(1−ᾱ_t),
    /// σ_t = √(β_t·(1−ᾱ_{t−1})/(1−ᾱ_t)), which makes σ_1 = 0 so the
    /// final denoising step injects no noise.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(steps >= 1, "schedule needs at least one step");
        assert!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end);
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for beta in &betas {
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        let alpha = betas.iter().map(|b| 1.0 / (1.0 - b).sqrt()).collect();
        let gamma = betas
            .iter()
            .zip(&alpha_bar)
            .map(|(b, ab)| b / (1.0 - ab).sqrt())
            .collect();
        let sigma = (0..steps)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                ((1.0 - prev) / (1.0 - alpha_bar[i]) * betas[i]).sqrt()
            })
            .collect();
        Self { steps, alpha, gamma, sigma, alpha_bar }
    }

    pub fn validate(&self) -> Result<(), TrajgenError> {
        if self.steps == 0 {
            return Err(TrajgenError::BadInput("schedule has zero steps".into()));
        }
        for (name, seq) in [
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("sigma", &self.sigma),
            ("alpha_bar", &self.alpha_bar),
        ] {
            if seq.len() != self.steps {
                return Err(TrajgenError::BadInput(format!(
                    "{name} length {} != steps {}",
                    seq.len(),
                    self.steps
                )));
            }
            if seq.iter().any(|v| !v.is_finite()) {
                return Err(TrajgenError::BadInput(format!("{name} has non-finite entries")));
            }
        }
        if self.alpha.iter().any(|v| *v <= 0.0) || self.gamma.iter().any(|v| *v <= 0.0) {
            return Err(TrajgenError::BadInput("alpha and gamma must be positive".into()));
        }
        if self.sigma.iter().any(|v| *v < 0.0) {
            return Err(TrajgenError::BadInput("sigma must be nonnegative".into()));
        }
        if self.sigma[0] != 0.0 {
            return Err(TrajgenError::BadInput("sigma at the final step must be 0".into()));
        }
        Ok(())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(50, 1e-3, 0.2)
    }
}

/// Small feed-forward noise predictor ε̂(context, sample, t) with tanh
/// hidden layers and a linear output of the sample dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    ctx_dim: usize,
    sample_dim: usize,
    t_embed_dim: usize,
    /// Layer widths from input to output.
    layer_dims: Vec<usize>,
    /// Per layer: row-major [out × in] weights.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Denoiser {
    pub fn new(
        ctx_dim: usize,
        sample_dim: usize,
        t_embed_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Self {
        assert!(t_embed_dim % 2 == 0, "timestep embedding dimension must be even");
        let mut layer_dims = vec![ctx_dim + sample_dim + t_embed_dim];
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(sample_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let (n_in, n_out) = (layer_dims[l], layer_dims[l + 1]);
            let scale = (1.0 / n_in as f64).sqrt();
            weights.push(
                (0..n_in * n_out)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                    .collect(),
            );
            biases.push(vec![0.0; n_out]);
        }
        Self { ctx_dim, sample_dim, t_embed_dim, layer_dims, weights, biases }
    }

    pub fn ctx_dim(&self) -> usize {
        self.ctx_dim
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    fn t_embedding(&self, t: usize) -> Vec<f64> {
        let half = self.t_embed_dim / 2;
        let mut out = Vec::with_capacity(self.t_embed_dim);
        for i in 0..half {
            let freq = (10_000.0_f64).powf(-(i as f64) / half as f64);
            out.push((t as f64 * freq).sin());
            out.push((t as f64 * freq).cos());
        }
        out
    }

    fn input_vector(&self, context: &[f64], sample: &[f64], t: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layer_dims[0]);
        x.extend_from_slice(context);
        x.extend_from_slice(sample);
        x.extend(self.t_embedding(t));
        x
    }

    /// Predicted noise for one (context, noisy sample, timestep) triple.
    pub fn forward(&self, context: &[f64], sample: &[f64], t: usize) -> Vec<f64> {
        assert_eq!(context.len(), self.ctx_dim, "context dimension mismatch");
        assert_eq!(sample.len(), self.sample_dim, "sample dimension mismatch");
        let mut x = self.input_vector(context, sample, t);
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.layer_dims[l];
            let n_out = self.layer_dims[l + 1];
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(&x) {
                    acc += wi * xi;
                }
                z[o] = acc;
            }
            if l != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            x = z;
        }
        x
    }

    /// Forward pass keeping post-activation values per layer for
    /// backpropagation. Returns (activations including input, output).
    fn forward_cached(&self, input: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts = vec![input];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.layer_dims[l];
            let n_out = self.layer_dims[l + 1];
            let x = acts.last().unwrap();
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                z[o] = acc;
            }
            if l != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        (acts, out)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat parameter indexing (weights then biases, layer by layer) for
    /// finite-difference checks.
    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for l in 0..self.weights.len() {
            if i < self.weights[l].len() {
                return self.weights[l][i];
            }
            i -= self.weights[l].len();
            if i < self.biases[l].len() {
                return self.biases[l][i];
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for l in 0..self.weights.len() {
            if i < self.weights[l].len() {
                self.weights[l][i] = value;
                return;
            }
            i -= self.weights[l].len();
            if i < self.biases[l].len() {
                self.biases[l][i] = value;
                return;
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index {index} out of range");
    }
}

/// One pre-noised training example: `noisy = √ᾱ_t·x₀ + √(1−ᾱ_t)·noise`.
#[derive(Debug, Clone)]
pub struct NoisedExample {
    pub context: Vec<f64>,
    pub noisy: Vec<f64>,
    pub t: usize,
    pub noise: Vec<f64>,
}

pub fn make_noised_example(
    context: &[f64],
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> NoisedExample {
    let ab = schedule.alpha_bar[t - 1];
    let noise: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noisy = x0
        .iter()
        .zip(&noise)
        .map(|(x, n)| ab.sqrt() * x + (1.0 - ab).sqrt() * n)
        .collect();
    NoisedExample { context: context.to_vec(), noisy, t, noise }
}

/// Per-parameter gradients with the same layout as the denoiser.
#[derive(Debug, Clone)]
pub struct DenoiserGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Denoiser {
    /// Mean squared error between predicted and injected noise over the
    /// batch (mean over examples and dimensions).
    pub fn batch_loss(&self, batch: &[NoisedExample]) -> f64 {
        assert!(!batch.is_empty());
        let mut total = 0.0;
        for ex in batch {
            let pred = self.forward(&ex.context, &ex.noisy, ex.t);
            total += pred
                .iter()
                .zip(&ex.noise)
                .map(|(p, n)| (p - n) * (p - n))
                .sum::<f64>();
        }
        total / (batch.len() * self.sample_dim) as f64
    }

    /// Loss and analytic gradients over a batch via backpropagation.
    pub fn batch_gradients(&self, batch: &[NoisedExample]) -> (f64, DenoiserGradients) {
        assert!(!batch.is_empty());
        let mut grads = DenoiserGradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let mut total = 0.0;
        let norm = 1.0 / (batch.len() * self.sample_dim) as f64;
        let last = self.weights.len() - 1;
        for ex in batch {
            let input = self.input_vector(&ex.context, &ex.noisy, ex.t);
            let (acts, out) = self.forward_cached(input);
            let mut delta: Vec<f64> = out
                .iter()
                .zip(&ex.noise)
                .map(|(p, n)| {
                    total += (p - n) * (p - n);
                    2.0 * (p - n) * norm
                })
                .collect();
            for l in (0..=last).rev() {
                let n_in = self.layer_dims[l];
                let n_out = self.layer_dims[l + 1];
                let x = &acts[l];
                for o in 0..n_out {
                    grads.biases[l][o] += delta[o];
                    let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                    for (gi, xi) in row.iter_mut().zip(x) {
                        *gi += delta[o] * xi;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                        for (pi, wi) in prev.iter_mut().zip(row) {
                            *pi += delta[o] * wi;
                        }
                    }
                    // acts[l] holds tanh outputs of layer l (l ≥ 1).
                    for (pi, ai) in prev.iter_mut().zip(x) {
                        *pi *= 1.0 - ai * ai;
                    }
                    delta = prev;
                }
            }
        }
        (total * norm, grads)
    }
}

/// Draws P_T ~ N(0, I) over the flat trajectory vector and iterates
/// `P_{t−1} = α_t·(P_t − γ_t·ε̂(context, P_t, t)) + σ_t·ε` down to P₀,
/// with no noise injected at the final step, then reshapes to 24
/// waypoints. The RNG is seeded per call, so samples are independent of
/// any other sampling activity.
pub fn ddpm_sample(
    denoiser: &Denoiser,
    context: &ContextVector,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Trajectory, TrajgenError> {
    if denoiser.sample_dim() != SAMPLE_DIM {
        return Err(TrajgenError::BadInput(format!(
            "denoiser sample dimension {} is not {SAMPLE_DIM}",
            denoiser.sample_dim()
        )));
    }
    if context.len() != denoiser.ctx_dim() {
        return Err(TrajgenError::BadInput(format!(
            "context dimension {} does not match denoiser {}",
            context.len(),
            denoiser.ctx_dim()
        )));
    }
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<f64> = (0..SAMPLE_DIM).map(|_| rng.sample(StandardNormal)).collect();
    for t in (1..=schedule.steps).rev() {
        let i = t - 1;
        let eps = denoiser.forward(context.values(), &p, t);
        for (pj, ej) in p.iter_mut().zip(&eps) {
            *pj = schedule.alpha[i] * (*pj - schedule.gamma[i] * ej);
        }
        if schedule.sigma[i] > 0.0 {
            for pj in p.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *pj += schedule.sigma[i] * n;
            }
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(TrajgenError::NumericalDivergence { step: t });
        }
    }
    trajectory_from_flat(&p)
}

/// Reshapes 72 flat values into 24 (dx, dy, dyaw) waypoints, wrapping
/// yaw increments into (−π, π].
pub fn trajectory_from_flat(flat: &[f64]) -> Result<Trajectory, TrajgenError> {
    if flat.len() != SAMPLE_DIM {
        return Err(TrajgenError::BadInput(format!(
            "expected {SAMPLE_DIM} values, got {}",
            flat.len()
        )));
    }
    let waypoints = flat
        .chunks(3)
        .map(|c| Waypoint::wrapped(c[0], c[1], c[2]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory::new(waypoints)?)
}

pub fn flatten_trajectory(traj: &Trajectory) -> Vec<f64> {
    traj.waypoints()
        .iter()
        .flat_map(|w| [w.dx, w.dy, w.dyaw])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub t_embed_dim: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            t_embed_dim: 16,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub denoiser: Denoiser,
    /// Mean batch loss over the last (up to) 100 optimization steps —
    /// a smoothed estimate of where training settled.
    pub final_loss: f64,
    /// Per-step batch losses.
    pub losses: Vec<f64>,
}

struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: usize,
}

impl AdamState {
    fn new(denoiser: &Denoiser) -> Self {
        Self {
            m_w: denoiser.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: denoiser.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: denoiser.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: denoiser.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, denoiser: &mut Denoiser, grads: &DenoiserGradients, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        for l in 0..denoiser.weights.len() {
            for i in 0..denoiser.weights[l].len() {
                let g = grads.weights[l][i];
                self.m_w[l][i] = B1 * self.m_w[l][i] + (1.0 - B1) * g;
                self.v_w[l][i] = B2 * self.v_w[l][i] + (1.0 - B2) * g * g;
                denoiser.weights[l][i] -=
                    lr * (self.m_w[l][i] / bc1) / ((self.v_w[l][i] / bc2).sqrt() + EPS);
            }
            for i in 0..denoiser.biases[l].len() {
                let g = grads.biases[l][i];
                self.m_b[l][i] = B1 * self.m_b[l][i] + (1.0 - B1) * g;
                self.v_b[l][i] = B2 * self.v_b[l][i] + (1.0 - B2) * g * g;
                denoiser.biases[l][i] -=
                    lr * (self.m_b[l][i] / bc1) / ((self.v_b[l][i] / bc2).sqrt() + EPS);
            }
        }
    }
}

/// Trains a noise predictor on (context, trajectory) pairs by MSE to the
/// injected noise at uniformly random timesteps, with Adam and cosine
/// learning-rate decay (to a 5 % floor) over a deterministic minibatch
/// stream.
pub fn train_toy_denoiser(
    dataset: &[(ContextVector, Trajectory)],
    schedule: &NoiseSchedule,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome, TrajgenError> {
    if dataset.is_empty() {
        return Err(TrajgenError::EmptyDataset);
    }
    if dataset.len() < 100 {
        log::warn!("training dataset has only {} examples (< 100)", dataset.len());
    }
    schedule.validate()?;
    let ctx_dim = dataset[0].0.len();
    if dataset.iter().any(|(c, _)| c.len() != ctx_dim) {
        return Err(TrajgenError::BadInput("inconsistent context dimensions".into()));
    }
    let flats: Vec<Vec<f64>> = dataset.iter().map(|(_, t)| flatten_trajectory(t)).collect();
    let mut denoiser = Denoiser::new(ctx_dim, SAMPLE_DIM, cfg.t_embed_dim, &cfg.hidden, cfg.seed);
    let mut adam = AdamState::new(&denoiser);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a31_9b2c_44f0_d1e5);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<NoisedExample> = (0..cfg.batch_size)
            .map(|_| {
                let idx = rng.gen_range(0..dataset.len());
                let t = rng.gen_range(1..=schedule.steps);
                make_noised_example(dataset[idx].0.values(), &flats[idx], t, schedule, &mut rng)
            })
            .collect();
        let (loss, grads) = denoiser.batch_gradients(&batch);
        let progress = step as f64 / cfg.steps as f64;
        let lr = cfg.learning_rate
            * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        adam.apply(&mut denoiser, &grads, lr);
        losses.push(loss);
    }
    let window = losses.len().min(100);
    let final_loss = losses[losses.len() - window..].iter().sum::<f64>() / window as f64;
    Ok(TrainingOutcome { denoiser, final_loss, losses })
}

/// Pairwise trajectory distances: symmetric, zero diagonal.
pub fn build_distance_matrix(trajectories: &[Trajectory]) -> Vec<Vec<f64>> {
    let n = trajectories.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = trajectory_distance(&trajectories[i], &trajectories[j]);
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    d
}

/// Greedy farthest-first subset selection: start from `seed_index`, then
/// repeatedly add the trajectory maximizing its minimum distance to the
/// already-selected set (ties to the lowest index), until `ctn` are
/// chosen. Returns indices in insertion order. `ctn > n` is clamped to
/// `n` with a warning.
pub fn farthest_first_select(d: &[Vec<f64>], ctn: usize, seed_index: usize) -> Vec<usize> {
    let n = d.len();
    assert!(n >= 1, "distance matrix is empty");
    assert!(d.iter().all(|row| row.len() == n), "distance matrix is not square");
    assert!(seed_index < n, "seed index {seed_index} out of range for {n} trajectories");
    assert!(ctn >= 1, "ctn must be >= 1");
    let ctn = if ctn > n {
        log::warn!("requested {ctn} candidates from {n} trajectories; clamping to {n}");
        n
    } else {
        ctn
    };
    let mut selected = Vec::with_capacity(ctn);
    let mut in_set = vec![false; n];
    selected.push(seed_index);
    in_set[seed_index] = true;
    let mut min_dist: Vec<f64> = d[seed_index].clone();
    while selected.len() < ctn {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if in_set[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if min_dist[i] > min_dist[b] => best = Some(i),
                _ => {}
            }
        }
        let pick = best.expect("ctn <= n leaves at least one unselected");
        selected.push(pick);
        in_set[pick] = true;
        for i in 0..n {
            if d[pick][i] < min_dist[i] {
                min_dist[i] = d[pick][i];
            }
        }
    }
    selected
}

/// A sampled batch with its diversity-filtered subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub trajectories: Vec<Trajectory>,
    pub selected_ids: Vec<usize>,
    pub distance_matrix: Vec<Vec<f64>>,
}

impl CandidateSet {
    pub fn build(trajectories: Vec<Trajectory>, ctn: usize, seed_index: usize) -> Self {
        let distance_matrix = build_distance_matrix(&trajectories);
        let selected_ids = farthest_first_select(&distance_matrix, ctn, seed_index);
        Self { trajectories, selected_ids, distance_matrix }
    }

    pub fn selected(&self) -> impl Iterator<Item = &Trajectory> {
        self.selected_ids.iter().map(|i| &self.trajectories[*i])
    }
}

/// Source of candidate trajectories for one planning step.
pub trait TrajectorySampler: Sync {
    fn sample(&self, context: &ContextVector, seed: u64) -> Result<Trajectory, TrajgenError>;
}

/// Samples from the trained diffusion denoiser.
#[derive(Debug, Clone)]
pub struct DiffusionSampler {
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
}

impl TrajectorySampler for DiffusionSampler {
    fn sample(&self, context: &ContextVector, seed: u64) -> Result<Trajectory, TrajgenError> {
        ddpm_sample(&self.denoiser, context, &self.schedule, seed)
    }
}

/// Scripted sampler producing constant-curvature arcs whose headings fan
/// out with the seed; context is ignored. For tests of downstream
/// components.
#[derive(Debug, Clone, Copy)]
pub struct ArcSampler {
    pub step: f64,
    pub fan_count: u64,
    pub max_heading: f64,
}

impl Default for ArcSampler {
    fn default() -> Self {
        Self { step: 0.15, fan_count: 16, max_heading: std::f64::consts::FRAC_PI_2 }
    }
}

impl TrajectorySampler for ArcSampler {
    fn sample(&self, _context: &ContextVector, seed: u64) -> Result<Trajectory, TrajgenError> {
        let k = (seed % self.fan_count) as f64;
        let frac = if self.fan_count > 1 { k / (self.fan_count - 1) as f64 } else { 0.5 };
        let heading = -self.max_heading + 2.0 * self.max_heading * frac;
        let dyaw = heading / TRAJECTORY_LEN as f64;
        let w = Waypoint::new(self.step, 0.0, dyaw)?;
        Ok(Trajectory::repeated(w))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"EGND";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a denoiser as the versioned flat-f64 checkpoint format:
/// magic `EGND`, version, ctx/sample/t-embed dims, layer widths, then
/// all weights and biases layer by layer as little-endian f64.
pub fn save_denoiser(denoiser: &Denoiser, path: &std::path::Path) -> Result<(), std::io::Error> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(denoiser.ctx_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(denoiser.sample_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(denoiser.t_embed_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(denoiser.layer_dims.len() as u32).to_le_bytes());
    for dim in &denoiser.layer_dims {
        bytes.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for l in 0..denoiser.weights.len() {
        for v in denoiser.weights[l].iter().chain(&denoiser.biases[l]) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)
}

fn take_bytes<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8], TrajgenError> {
    if *cursor + n > bytes.len() {
        return Err(TrajgenError::Checkpoint("file truncated".into()));
    }
    let s = &bytes[*cursor..*cursor + n];
    *cursor += n;
    Ok(s)
}

fn take_u32(bytes: &[u8], cursor: &mut usize) -> Result<u32, TrajgenError> {
    Ok(u32::from_le_bytes(take_bytes(bytes, cursor, 4)?.try_into().unwrap()))
}

fn take_f64(bytes: &[u8], cursor: &mut usize) -> Result<f64, TrajgenError> {
    Ok(f64::from_le_bytes(take_bytes(bytes, cursor, 8)?.try_into().unwrap()))
}

pub fn load_denoiser(path: &std::path::Path) -> Result<Denoiser, TrajgenError> {
    let bytes = std::fs::read(path)
        .map_err(|e| TrajgenError::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut cursor = 0usize;
    if take_bytes(&bytes, &mut cursor, 4)? != CHECKPOINT_MAGIC {
        return Err(TrajgenError::Checkpoint("bad magic".into()));
    }
    let version = take_u32(&bytes, &mut cursor)?;
    if version != CHECKPOINT_VERSION {
        return Err(TrajgenError::Checkpoint(format!("unsupported version {version}")));
    }
    let ctx_dim = take_u32(&bytes, &mut cursor)? as usize;
    let sample_dim = take_u32(&bytes, &mut cursor)? as usize;
    let t_embed_dim = take_u32(&bytes, &mut cursor)? as usize;
    let n_dims = take_u32(&bytes, &mut cursor)? as usize;
    let mut layer_dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        layer_dims.push(take_u32(&bytes, &mut cursor)? as usize);
    }
    if n_dims < 2
        || layer_dims[0] != ctx_dim + sample_dim + t_embed_dim
        || layer_dims[n_dims - 1] != sample_dim
    {
        return Err(TrajgenError::Checkpoint("inconsistent layer dimensions".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..n_dims - 1 {
        let (n_in, n_out) = (layer_dims[l], layer_dims[l + 1]);
        let mut w = Vec::with_capacity(n_in * n_out);
        for _ in 0..n_in * n_out {
            w.push(take_f64(&bytes, &mut cursor)?);
        }
        let mut b = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            b.push(take_f64(&bytes, &mut cursor)?);
        }
        weights.push(w);
        biases.push(b);
    }
    if cursor != bytes.len() {
        return Err(TrajgenError::Checkpoint("trailing bytes".into()));
    }
    Ok(Denoiser { ctx_dim, sample_dim, t_embed_dim, layer_dims, weights, biases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize_angle;

    fn obs_mask(width: usize, height: usize, frac: f64) -> WalkabilityMask {
        let n = width * height;
        let bits = (0..n).map(|i| (i as f64) < frac * n as f64).collect();
        WalkabilityMask::new(width, height, bits).unwrap()
    }

    #[test]
    fn context_is_deterministic_and_fixed_size() {
        let mask_a = obs_mask(30, 20, 0.4);
        let obs = Observation {
            mask: &mask_a,
            goal_bearing: 0.3,
            goal_range: 4.0,
            nearest_landmark: Some((0.1, 2.0)),
        };
        let a = encode_context(&obs);
        let b = encode_context(&obs);
        assert_eq!(a, b);
        assert_eq!(a.len(), CONTEXT_DIM);
        assert!(a.values().iter().all(|v| v.is_finite()));

        // A different mask resolution with the same walkable fractions
        // still encodes to 64 values.
        let mask_b = obs_mask(60, 40, 0.4);
        let obs_b = Observation { mask: &mask_b, ..obs };
        assert_eq!(encode_context(&obs_b).len(), CONTEXT_DIM);
    }

    #[test]
    fn context_ignores_anything_outside_the_observation() {
        let mask = obs_mask(30, 20, 0.5);
        let base = Observation {
            mask: &mask,
            goal_bearing: -0.4,
            goal_range: 2.5,
            nearest_landmark: None,
        };
        // Same observable fields built twice from scratch.
        let again = Observation {
            mask: &mask,
            goal_bearing: -0.4,
            goal_range: 2.5,
            nearest_landmark: None,
        };
        assert_eq!(encode_context(&base), encode_context(&again));

        // The landmark cue changes the encoding when present.
        let with_lm = Observation { nearest_landmark: Some((0.0, 1.0)), ..base };
        assert_ne!(encode_context(&base), encode_context(&with_lm));
    }

    #[test]
    fn default_schedule_is_valid() {
        let s = NoiseSchedule::default();
        s.validate().unwrap();
        assert_eq!(s.steps, 50);
        assert_eq!(s.sigma[0], 0.0);
        assert!(s.sigma[1] > 0.0);
        assert!(s.alpha.iter().all(|a| *a > 1.0));
        assert!(s.gamma.iter().all(|g| *g > 0.0));
        // ᾱ decreases monotonically.
        for i in 1..s.steps {
            assert!(s.alpha_bar[i] < s.alpha_bar[i - 1]);
        }

        let mut bad = NoiseSchedule::default();
        bad.sigma[0] = 0.1;
        assert!(bad.validate().is_err());
        let mut bad = NoiseSchedule::default();
        bad.alpha.pop();
        assert!(bad.validate().is_err());
    }

    fn zeroed_denoiser() -> Denoiser {
        let mut d = Denoiser::new(CONTEXT_DIM, SAMPLE_DIM, 16, &[8], 1);
        for i in 0..d.param_count() {
            d.set_param(i, 0.0);
        }
        d
    }

    #[test]
    fn zero_denoiser_zero_noise_collapses_to_alpha_product() {
        let denoiser = zeroed_denoiser();
        let mut schedule = NoiseSchedule::default();
        for s in &mut schedule.sigma {
            *s = 0.0;
        }
        let ctx = ContextVector::new(vec![0.0; CONTEXT_DIM]).unwrap();
        let seed = 99u64;
        let traj = ddpm_sample(&denoiser, &ctx, &schedule, seed).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_t: Vec<f64> = (0..SAMPLE_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let product: f64 = schedule.alpha.iter().product();
        let flat = flatten_trajectory(&traj);
        for (i, (got, pt)) in flat.iter().zip(&p_t).enumerate() {
            let expect = if i % 3 == 2 { normalize_angle(product * pt) } else { product * pt };
            assert!(
                (got - expect).abs() < 1e-12,
                "dim {i}: got {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn sampling_is_seed_deterministic_and_call_isolated() {
        let denoiser = Denoiser::new(CONTEXT_DIM, SAMPLE_DIM, 16, &[16], 5);
        let schedule = NoiseSchedule::default();
        let ctx = ContextVector::new(vec![0.1; CONTEXT_DIM]).unwrap();
        let a = ddpm_sample(&denoiser, &ctx, &schedule, 42).unwrap();
        let _interleaved = ddpm_sample(&denoiser, &ctx, &schedule, 7).unwrap();
        let b = ddpm_sample(&denoiser, &ctx, &schedule, 42).unwrap();
        assert_eq!(a, b);
        let c = ddpm_sample(&denoiser, &ctx, &schedule, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn diverging_denoiser_names_the_step() {
        let mut d = Denoiser::new(CONTEXT_DIM, SAMPLE_DIM, 16, &[8], 1);
        for i in 0..d.param_count() {
            d.set_param(i, f64::INFINITY);
        }
        let schedule = NoiseSchedule::default();
        // inf weights against zero context make the first prediction NaN.
        let ctx = ContextVector::new(vec![0.0; CONTEXT_DIM]).unwrap();
        match ddpm_sample(&d, &ctx, &schedule, 3) {
            Err(TrajgenError::NumericalDivergence { step }) => assert_eq!(step, schedule.steps),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn flat_round_trip_wraps_yaw() {
        let mut flat = vec![0.0; SAMPLE_DIM];
        flat[2] = 5.0;
        flat[3] = 0.25;
        let traj = trajectory_from_flat(&flat).unwrap();
        let wp = traj.waypoints();
        assert!((wp[0].dyaw - (5.0 - std::f64::consts::TAU)).abs() < 1e-12);
        assert_eq!(wp[1].dx, 0.25);
        assert!(trajectory_from_flat(&[0.0; 10]).is_err());

        let back = flatten_trajectory(&traj);
        assert_eq!(back.len(), SAMPLE_DIM);
        assert_eq!(back[3], 0.25);
    }

    fn straight(step: f64) -> Trajectory {
        Trajectory::repeated(Waypoint::new(step, 0.0, 0.0).unwrap())
    }

    #[test]
    fn distance_matrix_matches_brute_force() {
        let one = build_distance_matrix(&[straight(0.5)]);
        assert_eq!(one, vec![vec![0.0]]);

        let dup = build_distance_matrix(&[straight(0.5), straight(0.5)]);
        assert_eq!(dup, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let trajs: Vec<Trajectory> = (0..5)
            .map(|_| {
                Trajectory::new(
                    (0..TRAJECTORY_LEN)
                        .map(|_| {
                            Waypoint::new(
                                rng.gen_range(-0.3..0.3),
                                rng.gen_range(-0.3..0.3),
                                rng.gen_range(-0.4..0.4),
                            )
                            .unwrap()
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let d = build_distance_matrix(&trajs);
        for i in 0..5 {
            assert_eq!(d[i][i], 0.0);
            for j in 0..5 {
                let brute = trajectory_distance(&trajs[i], &trajs[j]);
                assert!((d[i][j] - brute).abs() < 1e-12);
                assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    fn position_matrix(positions: &[f64]) -> Vec<Vec<f64>> {
        positions
            .iter()
            .map(|a| positions.iter().map(|b| (a - b).abs()).collect())
            .collect()
    }

    #[test]
    fn farthest_first_hand_examples() {
        let d = position_matrix(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(farthest_first_select(&d, 3, 0), vec![0, 3, 2]);
        assert_eq!(farthest_first_select(&d, 1, 2), vec![2]);

        let equal = vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        assert_eq!(farthest_first_select(&equal, 2, 0), vec![0, 1]);

        // ctn beyond n clamps to n.
        assert_eq!(farthest_first_select(&equal, 9, 0).len(), 3);
    }

    /// Independent naive greedy: recomputes min-distances from scratch
    /// at every pick.
    fn naive_farthest_first(d: &[Vec<f64>], ctn: usize, seed_index: usize) -> Vec<usize> {
        let n = d.len();
        let ctn = ctn.min(n);
        let mut selected = vec![seed_index];
        while selected.len() < ctn {
            let mut best_i = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for i in 0..n {
                if selected.contains(&i) {
                    continue;
                }
                let min_d = selected.iter().map(|j| d[*j][i]).fold(f64::INFINITY, f64::min);
                if min_d > best_v {
                    best_v = min_d;
                    best_i = i;
                }
            }
            selected.push(best_i);
        }
        selected
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(0.0..10.0);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        d
    }

    #[test]
    fn farthest_first_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..60 {
            let n = rng.gen_range(2..=64usize);
            let d = random_symmetric(&mut rng, n);
            let ctn = rng.gen_range(1..=n);
            let seed_index = rng.gen_range(0..n);
            assert_eq!(
                farthest_first_select(&d, ctn, seed_index),
                naive_farthest_first(&d, ctn, seed_index)
            );
        }
    }

    fn min_pairwise(d: &[Vec<f64>], set: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for (a, i) in set.iter().enumerate() {
            for j in &set[a + 1..] {
                best = best.min(d[*i][*j]);
            }
        }
        best
    }

    #[test]
    fn last_pick_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..50 {
            let n = rng.gen_range(3..20usize);
            let d = random_symmetric(&mut rng, n);
            let ctn = rng.gen_range(2..=n);
            let selected = farthest_first_select(&d, ctn, 0);
            let spread = min_pairwise(&d, &selected);
            let head = &selected[..ctn - 1];
            for swap in 0..n {
                if selected.contains(&swap) {
                    continue;
                }
                let mut alt = head.to_vec();
                alt.push(swap);
                assert!(
                    min_pairwise(&d, &alt) <= spread + 1e-12,
                    "swapping last pick for {swap} improved the spread"
                );
            }
        }
    }

    #[test]
    fn selection_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..40 {
            let n = rng.gen_range(2..16usize);
            let d = random_symmetric(&mut rng, n);
            // Random permutation.
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let mut pd = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    pd[perm[i]][perm[j]] = d[i][j];
                }
            }
            let ctn = rng.gen_range(1..=n);
            let seed_index = rng.gen_range(0..n);
            let base = farthest_first_select(&d, ctn, seed_index);
            let permuted = farthest_first_select(&pd, ctn, perm[seed_index]);
            let mapped: Vec<usize> = base.iter().map(|i| perm[*i]).collect();
            assert_eq!(permuted, mapped);
        }
    }

    #[test]
    fn candidate_set_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let sampler = ArcSampler::default();
        let ctx = ContextVector::new(vec![]).unwrap();
        let trajs: Vec<Trajectory> =
            (0..10).map(|i| sampler.sample(&ctx, rng.gen_range(0..16) + i).unwrap()).collect();
        let set = CandidateSet::build(trajs, DEFAULT_CTN, 0);
        assert_eq!(set.selected_ids.len(), DEFAULT_CTN.min(set.trajectories.len()));
        let mut sorted = set.selected_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), set.selected_ids.len());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let schedule = NoiseSchedule::linear(10, 1e-3, 0.2);
        let mut denoiser = Denoiser::new(4, 6, 4, &[8, 8], 9);
        let batch: Vec<NoisedExample> = (0..3)
            .map(|_| {
                let ctx: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let t = rng.gen_range(1..=schedule.steps);
                make_noised_example(&ctx, &x0, t, &schedule, &mut rng)
            })
            .collect();
        let (_, grads) = denoiser.batch_gradients(&batch);
        let flat_grads: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect();
        let h = 1e-5;
        for i in 0..denoiser.param_count() {
            let orig = denoiser.get_param(i);
            denoiser.set_param(i, orig + h);
            let up = denoiser.batch_loss(&batch);
            denoiser.set_param(i, orig - h);
            let down = denoiser.batch_loss(&batch);
            denoiser.set_param(i, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = flat_grads[i];
            let rel = (analytic - numeric).abs() / f64::max(1e-6, analytic.abs() + numeric.abs());
            assert!(
                rel < 1e-4,
                "param {i}: analytic {analytic}, numeric {numeric}, rel {rel}"
            );
        }
    }

    #[test]
    fn memorizes_a_single_trajectory() {
        let traj = Trajectory::repeated(Waypoint::new(0.8, 0.1, 0.02).unwrap());
        let ctx = ContextVector::new(vec![0.0; 8]).unwrap();
        let dataset: Vec<(ContextVector, Trajectory)> =
            (0..100).map(|_| (ctx.clone(), traj.clone())).collect();
        let schedule = NoiseSchedule::linear(50, 0.15, 0.2);
        let cfg = TrainingConfig {
            steps: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden: vec![128, 128],
            t_embed_dim: 16,
            seed: 3,
        };
        let out = train_toy_denoiser(&dataset, &schedule, &cfg).unwrap();
        assert!(out.final_loss < 0.05, "final loss {}", out.final_loss);

        // 100-step moving-average trend: each window at most 10% above
        // the previous (minibatch jitter allowance), halved overall.
        let windows: Vec<f64> = out
            .losses
            .chunks(100)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for pair in windows.windows(2) {
            assert!(pair[1] <= pair[0] * 1.10 + 1e-9, "windows {pair:?}");
        }
        assert!(windows.last().unwrap() < &(windows[0] * 0.5));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let schedule = NoiseSchedule::default();
        let err = train_toy_denoiser(&[], &schedule, &TrainingConfig::default()).unwrap_err();
        assert_eq!(err, TrajgenError::EmptyDataset);
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("denoiser.bin");
        let denoiser = Denoiser::new(12, SAMPLE_DIM, 8, &[10, 6], 77);
        save_denoiser(&denoiser, &path).unwrap();
        let loaded = load_denoiser(&path).unwrap();
        assert_eq!(loaded, denoiser);

        let ctx: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let sample = vec![0.3; SAMPLE_DIM];
        assert_eq!(loaded.forward(&ctx, &sample, 5), denoiser.forward(&ctx, &sample, 5));

        // Corruption is rejected.
        let good = std::fs::read(&path).unwrap();
        std::fs::write(&path, &good[..good.len() - 4]).unwrap();
        assert!(load_denoiser(&path).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(load_denoiser(&path).is_err());
        let mut bad_magic = good;
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(load_denoiser(&path).is_err());
    }

    #[test]
    fn arc_sampler_fans_headings() {
        let sampler = ArcSampler::default();
        let ctx = ContextVector::new(vec![]).unwrap();
        let left = sampler.sample(&ctx, 15).unwrap();
        let right = sampler.sample(&ctx, 0).unwrap();
        let mid = sampler.sample(&ctx, 8).unwrap();
        let total = |t: &Trajectory| t.waypoints().iter().map(|w| w.dyaw).sum::<f64>();
        assert!((total(&left) - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((total(&right) + std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!(total(&mid).abs() < 0.2);
        assert_eq!(sampler.sample(&ctx, 15).unwrap(), left);
    }
}
