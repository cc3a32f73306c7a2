//! Run configuration, output directories and the `solve`, `convergence`
//! and `eval` commands.
//!
//! A configuration is flat `key = value` text, one entry per line, `#`
//! starting a comment. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `problem` | `bulk`, `sphere`, `star` or `lpbe` |
//! | `sampling` | `grid` or `cloud` |
//! | `resolution` | grid points per axis |
//! | `cloud` | `n_plus,n_minus,n_boundary,n_interface` |
//! | `voxel` | cell side for point clouds |
//! | `epochs`, `batch_size` | training length, points per step (0 = all) |
//! | `lr0`, `decay_rate`, `decay_scale`, `clip_norm` | optimizer schedule |
//! | `adam_beta1`, `adam_beta2`, `adam_eps` | Adam constants |
//! | `approach` | `regression`, `neural` or `pinn` |
//! | `bias` | `slow` or `fast` |
//! | `switching`, `tau` | `off`, `whole-fast`, `fast-whole-slow`; interval |
//! | `multires_levels` | cell refinements per point |
//! | `init` | `fan-in` (default) or `unit` weight scaling |
//! | `levelset_file` | raw sampled level set replacing the analytic one |
//! | `eval_resolution` | evaluation lattice points per axis |
//! | `checkpoint_every` | epochs between checkpoints (0 = end only) |
//! | `seed` | RNG seed for initialisation, sampling and shuffling |
//! | `output_dir` | run directory |

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::discretization::ProblemSpec;
use crate::geometry::{GeometryError, InterpMode, LevelSetField, SampledGrid};
use crate::model::checkpoint::{load_pair, save_pair, CheckpointError};
use crate::model::{InitScale, Mlp, ModelError, SurrogatePair};
use crate::problems::{
    builtin_problem, builtin_with_level_set, convergence_table, convergence_table_csv, evaluate_errors, Builtin,
    ErrorReport, ProblemError,
};
use crate::trainer::{
    metrics_csv, sample_collocation, train_with_observer, SamplingMode, Switching, TrainConfig,
    TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Io(_) | GeometryError::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::UnknownProblem(_) | ProblemError::BadResolution(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingKind {
    Grid,
    Cloud,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub sampling: SamplingKind,
    pub resolution: usize,
    pub cloud: [usize; 4],
    pub voxel: f64,
    pub train: TrainConfig,
    pub init: InitScale,
    pub levelset_file: Option<PathBuf>,
    pub eval_resolution: usize,
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults of the named benchmark.
    pub fn for_problem(name: &str) -> Result<Self, CliError> {
        let which: Builtin = name.parse()?;
        let mut cfg = RunConfig {
            problem: name.to_string(),
            sampling: SamplingKind::Grid,
            resolution: 16,
            cloud: [2000, 100, 1000, 200],
            voxel: 0.00244,
            train: TrainConfig::default(),
            init: InitScale::FanIn,
            levelset_file: None,
            eval_resolution: 128,
            checkpoint_every: 0,
            output_dir: PathBuf::from(format!("runs/{name}")),
        };
        match which {
            Builtin::Star => {
                cfg.train.switching = Switching::WholeFast;
                cfg.train.tau = 3;
            }
            Builtin::Lpbe => {
                cfg.sampling = SamplingKind::Cloud;
                cfg.train.epochs = 50_000;
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        match self.sampling {
            SamplingKind::Grid => SamplingMode::UniformGrid(self.resolution),
            SamplingKind::Cloud => SamplingMode::PointCloud {
                n_plus: self.cloud[0],
                n_minus: self.cloud[1],
                n_boundary: self.cloud[2],
                n_interface: self.cloud[3],
                voxel: self.voxel,
            },
        }
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("problem", self.problem.clone());
        put("sampling", if self.sampling == SamplingKind::Grid { "grid" } else { "cloud" }.into());
        put("resolution", self.resolution.to_string());
        put("cloud", self.cloud.map(|c| c.to_string()).join(","));
        put("voxel", format!("{:?}", self.voxel));
        put("epochs", t.epochs.to_string());
        put("batch_size", t.batch_size.to_string());
        put("lr0", format!("{:?}", t.lr0));
        put("decay_rate", format!("{:?}", t.decay_rate));
        put("decay_scale", format!("{:?}", t.decay_scale));
        put("clip_norm", format!("{:?}", t.clip_norm));
        put("adam_beta1", format!("{:?}", t.adam_betas.0));
        put("adam_beta2", format!("{:?}", t.adam_betas.1));
        put("adam_eps", format!("{:?}", t.adam_eps));
        put("approach", t.approach.name().into());
        put("bias", t.bias.name().into());
        put("switching", t.switching.name().into());
        put("tau", t.tau.to_string());
        put("multires_levels", t.multires_levels.to_string());
        put("init", if self.init == InitScale::Unit { "unit" } else { "fan-in" }.into());
        if let Some(p) = &self.levelset_file {
            put("levelset_file", p.display().to_string());
        }
        put("eval_resolution", self.eval_resolution.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("seed", t.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        s
    }

    /// Parses configuration text; the problem entry selects the defaults
    /// that the remaining entries override.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let problem = entries
            .iter()
            .find(|(k, _)| k == "problem")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| CliError::Usage("config has no problem entry".into()))?;
        let mut cfg = RunConfig::for_problem(&problem)?;
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
            v.parse().map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
        }
        let t = &mut self.train;
        match key {
            "problem" => {
                value.parse::<Builtin>()?;
                self.problem = value.to_string();
            }
            "sampling" => {
                self.sampling = match value {
                    "grid" => SamplingKind::Grid,
                    "cloud" => SamplingKind::Cloud,
                    _ => return Err(CliError::Usage(format!("sampling must be grid or cloud, got {value:?}"))),
                }
            }
            "resolution" => self.resolution = num(key, value)?,
            "cloud" => {
                let parts: Vec<usize> = value.split(',').map(|p| num(key, p.trim())).collect::<Result<_, _>>()?;
                self.cloud = parts
                    .try_into()
                    .map_err(|_| CliError::Usage("cloud needs four counts n_plus,n_minus,n_boundary,n_interface".into()))?;
            }
            "voxel" => self.voxel = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "lr0" => t.lr0 = num(key, value)?,
            "decay_rate" => t.decay_rate = num(key, value)?,
            "decay_scale" => t.decay_scale = num(key, value)?,
            "clip_norm" => t.clip_norm = num(key, value)?,
            "adam_beta1" => t.adam_betas.0 = num(key, value)?,
            "adam_beta2" => t.adam_betas.1 = num(key, value)?,
            "adam_eps" => t.adam_eps = num(key, value)?,
            "approach" => t.approach = value.parse().map_err(CliError::Usage)?,
            "bias" => t.bias = value.parse().map_err(CliError::Usage)?,
            "switching" => t.switching = value.parse().map_err(CliError::Usage)?,
            "tau" => t.tau = num(key, value)?,
            "multires_levels" => t.multires_levels = num(key, value)?,
            "init" => {
                self.init = match value {
                    "unit" => InitScale::Unit,
                    "fan-in" => InitScale::FanIn,
                    _ => return Err(CliError::Usage(format!("init must be unit or fan-in, got {value:?}"))),
                }
            }
            "levelset_file" => self.levelset_file = Some(PathBuf::from(value)),
            "eval_resolution" => self.eval_resolution = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if self.sampling == SamplingKind::Grid && self.resolution < 3 {
            return Err(CliError::Usage(format!("resolution must be at least 3, got {}", self.resolution)));
        }
        if self.sampling == SamplingKind::Cloud && !(self.voxel > 0.0) {
            return Err(CliError::Usage("voxel must be positive".into()));
        }
        if self.eval_resolution < 2 {
            return Err(CliError::Usage("eval_resolution must be at least 2".into()));
        }
        Ok(())
    }
}

/// The configured problem, with the sampled level set when one is given.
pub fn load_problem(cfg: &RunConfig) -> Result<ProblemSpec, CliError> {
    match &cfg.levelset_file {
        None => Ok(builtin_problem(&cfg.problem)?),
        Some(path) => {
            let grid = SampledGrid::read_raw(path)?;
            Ok(builtin_with_level_set(&cfg.problem, LevelSetField::sampled(grid, InterpMode::Trilinear))?)
        }
    }
}

/// Freshly initialised networks with the problem's architectures; Ω− uses
/// `seed`, Ω+ `seed + 1`.
pub fn initial_pair(problem: &str, init: InitScale, seed: u64) -> Result<SurrogatePair, CliError> {
    let which: Builtin = problem.parse()?;
    let [(sm, am), (sp, ap)] = which.architectures();
    Ok(SurrogatePair {
        net_minus: Mlp::init_with(&sm, am, seed, 1.0, init)?,
        net_plus: Mlp::init_with(&sp, ap, seed.wrapping_add(1), 1.0, init)?,
    })
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub report: ErrorReport,
    pub final_loss: f64,
    pub pair: SurrogatePair,
}

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const DIVERGED_FILE: &str = "diverged.bin";

fn append_report_csv(path: &Path, resolution: usize, r: &ErrorReport) -> Result<(), CliError> {
    let mut text = if path.exists() {
        fs::read_to_string(path)?
    } else {
        "resolution,rmse,linf,rel_l2,eval_resolution,wall_seconds\n".to_string()
    };
    let _ = writeln!(text, "{resolution},{:e},{:e},{:e},{},{:.3}", r.rmse, r.linf, r.rel_l2, r.eval_resolution, r.wall_seconds);
    fs::write(path, text)?;
    Ok(())
}

/// Trains, evaluates and writes the run directory.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveOutput, CliError> {
    cfg.validate()?;
    let spec = load_problem(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let points = sample_collocation(&spec, cfg.sampling_mode(), cfg.train.seed)?;
    let pair = initial_pair(&cfg.problem, cfg.init, cfg.train.seed)?;
    log::info!("{}: {} collocation points, {} parameters", cfg.problem, points.len(), pair.num_params());
    let mut io_error = None;
    let every = cfg.checkpoint_every;
    let result = train_with_observer(&spec, pair, &cfg.train, &points, |rec, p| {
        if every > 0 && (rec.epoch + 1) % every == 0 && io_error.is_none() {
            if let Err(e) = save_pair(p, &out.join(CHECKPOINT_FILE)) {
                io_error = Some(e);
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::NonFinite { epoch, step, loss, last_good }) => {
            save_pair(&last_good, &out.join(DIVERGED_FILE))?;
            return Err(CliError::Numeric(format!(
                "loss became {loss} at epoch {epoch} (step {step}); parameters before the step saved to {}",
                out.join(DIVERGED_FILE).display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    fs::write(out.join(METRICS_FILE), metrics_csv(&outcome.history))?;
    save_pair(&outcome.pair, &out.join(CHECKPOINT_FILE))?;
    let report = evaluate_errors(&spec, &outcome.pair, cfg.eval_resolution)?;
    fs::write(out.join(REPORT_JSON), serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?)?;
    append_report_csv(&out.join(REPORT_CSV), cfg.resolution, &report)?;
    let final_loss = outcome.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    Ok(SolveOutput { report, final_loss, pair: outcome.pair })
}

/// Runs `cmd_solve` per resolution into `output_dir/N<res>` and writes
/// `convergence.csv`.
pub fn cmd_convergence(cfg: &RunConfig, levels: &[usize]) -> Result<String, CliError> {
    if levels.len() < 2 {
        return Err(CliError::Usage("convergence needs at least two resolutions".into()));
    }
    let mut runs = Vec::new();
    for &n in levels {
        let mut c = cfg.clone();
        c.resolution = n;
        c.output_dir = cfg.output_dir.join(format!("N{n}"));
        let out = cmd_solve(&c)?;
        log::info!("N = {n}: rmse {:e}", out.report.rmse);
        runs.push((n, out.report));
    }
    let rows = convergence_table(&runs)?;
    let csv = convergence_table_csv(&rows);
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("convergence.csv"), &csv)?;
    Ok(csv)
}

/// Evaluates a checkpoint on the named problem.
pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig) -> Result<ErrorReport, CliError> {
    let pair = load_pair(checkpoint)?;
    let spec = load_problem(cfg)?;
    Ok(evaluate_errors(&spec, &pair, cfg.eval_resolution)?)
}

pub fn parse_levels(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::Usage(format!("invalid resolution {p:?} in levels"))))
        .collect()
}
