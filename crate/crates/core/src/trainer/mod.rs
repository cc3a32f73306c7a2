//! Jacobi-scaled residual losses, Adam with exponential learning-rate decay
//! and global-norm clipping, domain switching and batching.

mod sampling;
mod system;

use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::discretization::{Approach, BiasMode, DiscretizationError, ProblemSpec, Side};
use crate::geometry::GeometryError;
use crate::model::SurrogatePair;

pub use sampling::{project_to_interface, sample_collocation, Collocation, PointKind, SamplingMode, INTERFACE_TOLERANCE};
pub use system::{multires_residual, pair_outputs, ResidualSystem, Row, Slot, SystemOptions};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize, loss: f64, last_good: Box<SurrogatePair> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TrainApproach {
    #[default]
    Regression,
    NeuralExtrapolation,
    PinnBaseline,
}

impl TrainApproach {
    pub fn assembly(self) -> Approach {
        match self {
            TrainApproach::NeuralExtrapolation => Approach::NeuralExtrapolation,
            _ => Approach::Regression,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainApproach::Regression => "regression",
            TrainApproach::NeuralExtrapolation => "neural",
            TrainApproach::PinnBaseline => "pinn",
        }
    }
}

impl FromStr for TrainApproach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(TrainApproach::Regression),
            "neural" => Ok(TrainApproach::NeuralExtrapolation),
            "pinn" => Ok(TrainApproach::PinnBaseline),
            other => Err(format!("unknown approach {other:?} (regression, neural, pinn)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Switching {
    #[default]
    Off,
    /// `region = epoch mod τ`
    WholeFast,
    /// `region = τ/2 − epoch mod τ`
    FastWholeSlow,
}

impl Switching {
    pub fn name(self) -> &'static str {
        match self {
            Switching::Off => "off",
            Switching::WholeFast => "whole-fast",
            Switching::FastWholeSlow => "fast-whole-slow",
        }
    }
}

impl FromStr for Switching {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Switching::Off),
            "whole-fast" => Ok(Switching::WholeFast),
            "fast-whole-slow" => Ok(Switching::FastWholeSlow),
            other => Err(format!("unknown switching mode {other:?} (off, whole-fast, fast-whole-slow)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Points per optimizer step; 0 means all points.
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_scale: f64,
    pub clip_norm: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub switching: Switching,
    pub tau: usize,
    pub approach: TrainApproach,
    pub bias: BiasMode,
    pub multires_levels: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_size: 0,
            lr0: 1e-2,
            decay_rate: 0.975,
            decay_scale: 100.0,
            clip_norm: 1.0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            switching: Switching::Off,
            tau: 1,
            approach: TrainApproach::Regression,
            bias: BiasMode::Slow,
            multires_levels: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return bad(format!("decay_rate must lie in (0, 1), got {}", self.decay_rate));
        }
        if self.switching != Switching::Off && self.tau < 1 {
            return bad("tau must be at least 1 when switching is enabled".into());
        }
        if !(self.lr0 > 0.0 && self.decay_scale > 0.0 && self.clip_norm > 0.0 && self.adam_eps > 0.0) {
            return bad("lr0, decay_scale, clip_norm and adam_eps must be positive".into());
        }
        if self.multires_levels == 0 {
            return bad("multires_levels must be at least 1".into());
        }
        Ok(())
    }

    pub fn system_options(&self) -> SystemOptions {
        SystemOptions { approach: self.approach, bias: self.bias, multires_levels: self.multires_levels }
    }
}

/// `r0 α^{k/T}`.
pub fn lr_at(cfg: &TrainConfig, k: usize) -> f64 {
    cfg.lr0 * cfg.decay_rate.powf(k as f64 / cfg.decay_scale)
}

/// Rescales all gradients jointly so their global norm is at most `max`.
/// Norms within rounding of `max` are left alone, which makes clipping
/// idempotent.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max * (1.0 + 8.0 * f64::EPSILON) {
        let s = max / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64, betas: (f64, f64), eps: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(state.m.len(), params.len());
    state.step += 1;
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

/// Region index: `> 0` fast network only, `0` both, `< 0` slow network only.
pub fn region_schedule(cfg: &TrainConfig, epoch: usize) -> i64 {
    let tau = cfg.tau.max(1) as i64;
    let e = epoch as i64;
    match cfg.switching {
        Switching::Off => 0,
        Switching::WholeFast => e % tau,
        Switching::FastWholeSlow => tau / 2 - e % tau,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub adam: [AdamState; 2],
    pub rng: ChaCha8Rng,
    pub current_region: i64,
}

impl TrainState {
    pub fn new(pair: &SurrogatePair, seed: u64) -> Self {
        Self {
            step: 0,
            adam: [AdamState::new(pair.net_minus.num_params()), AdamState::new(pair.net_plus.num_params())],
            rng: ChaCha8Rng::seed_from_u64(seed),
            current_region: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub region: i64,
    pub wall_seconds: f64,
}

pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,lr,region,wall_seconds\n");
    for r in history {
        s.push_str(&format!("{},{:e},{:e},{},{:.6}\n", r.epoch, r.loss, r.lr, r.region, r.wall_seconds));
    }
    s
}

/// The side with the larger mean diffusion coefficient over the points.
pub fn fast_side(spec: &ProblemSpec, points: &[Collocation]) -> Side {
    let n = points.len().max(1) as f64;
    let mean = |s: Side| points.iter().map(|c| spec.mu(s, c.x)).sum::<f64>() / n;
    if mean(Side::Plus) > mean(Side::Minus) {
        Side::Plus
    } else {
        Side::Minus
    }
}

/// Networks trained in a region; indexed by [`Side::index`].
pub fn active_networks(region: i64, fast: Side) -> [bool; 2] {
    let only = |s: Side| {
        let mut a = [false; 2];
        a[s.index()] = true;
        a
    };
    match region.signum() {
        0 => [true, true],
        1 => only(fast),
        _ => only(fast.opposite()),
    }
}

/// Loss and gradients over all points of the system.
pub fn loss_and_grads(system: &ResidualSystem, pair: &SurrogatePair) -> (f64, [Vec<f64>; 2]) {
    let all: Vec<usize> = (0..system.num_points()).collect();
    system.loss_and_grads(pair, &all, [true, true])
}

/// PINN loss `L_bulk + L_boundary + L_interface` over the points.
pub fn pinn_baseline_loss(spec: &ProblemSpec, pair: &SurrogatePair, points: &[Collocation]) -> Result<f64, TrainError> {
    let opts = SystemOptions { approach: TrainApproach::PinnBaseline, ..SystemOptions::default() };
    let system = ResidualSystem::build(spec, points, &opts)?;
    let all: Vec<usize> = (0..system.num_points()).collect();
    Ok(system.loss(pair, &all))
}

pub struct TrainOutcome {
    pub pair: SurrogatePair,
    pub state: TrainState,
    pub history: Vec<EpochRecord>,
}

pub fn train(
    spec: &ProblemSpec,
    pair: SurrogatePair,
    cfg: &TrainConfig,
    points: &[Collocation],
) -> Result<TrainOutcome, TrainError> {
    train_with_observer(spec, pair, cfg, points, |_, _| {})
}

/// Training loop; `observer` sees every epoch record with the parameters
/// after that epoch.
pub fn train_with_observer(
    spec: &ProblemSpec,
    pair: SurrogatePair,
    cfg: &TrainConfig,
    points: &[Collocation],
    mut observer: impl FnMut(&EpochRecord, &SurrogatePair),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(TrainError::InvalidConfig("no collocation points".into()));
    }
    let system = ResidualSystem::build(spec, points, &cfg.system_options())?;
    log::info!("{} points, {} rows, {} evaluation slots", system.num_points(), system.rows.len(), system.slots.len());
    let fast = fast_side(spec, points);
    let mut state = TrainState::new(&pair, cfg.seed);
    let mut pair = pair;
    let mut history = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..system.num_points()).collect();
    for epoch in 0..cfg.epochs {
        let region = region_schedule(cfg, epoch);
        state.current_region = region;
        let active = active_networks(region, fast);
        order.shuffle(&mut state.rng);
        let selected: Vec<usize> = if active == [true, true] {
            order.clone()
        } else {
            order.iter().copied().filter(|&p| active[system.point_side[p].index()]).collect()
        };
        let batch = if cfg.batch_size == 0 { selected.len().max(1) } else { cfg.batch_size };
        let total = selected.len();
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in selected.chunks(batch) {
            let (loss, mut grads) = system.loss_and_grads(&pair, chunk, active);
            // mean over the batch's share of the selected points
            let factor = total as f64 / chunk.len() as f64;
            let loss = loss * factor;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, step: state.step, loss, last_good: Box::new(pair) });
            }
            let [gm, gp] = &mut grads;
            for g in [&mut *gm, &mut *gp] {
                g.iter_mut().for_each(|v| *v *= factor);
            }
            let mut views: Vec<&mut [f64]> = Vec::new();
            if active[0] {
                views.push(gm);
            }
            if active[1] {
                views.push(gp);
            }
            clip_global_norm(&mut views, cfg.clip_norm);
            let lr = lr_at(cfg, state.step);
            for side in Side::BOTH {
                if active[side.index()] {
                    let g = if side == Side::Minus { &*gm } else { &*gp };
                    adam_step(&mut state.adam[side.index()], &mut pair.net_mut(side).params, g, lr, cfg.adam_betas, cfg.adam_eps);
                }
            }
            state.step += 1;
            epoch_loss += loss;
            batches += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            lr: lr_at(cfg, state.step),
            region,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if epoch % 500 == 0 || epoch + 1 == cfg.epochs {
            log::debug!("epoch {epoch} loss {:e} lr {:e} region {region}", record.loss, record.lr);
        }
        observer(&record, &pair);
        history.push(record);
    }
    Ok(TrainOutcome { pair, state, history })
}
