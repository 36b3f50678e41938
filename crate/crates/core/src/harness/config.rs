//! Run configuration: command-line options, the flat config file that
//! mirrors them, and the resolved [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{DistillConfig, DistillEvaluator, Evaluator, SyntheticEvaluator, SyntheticTaskProfile, ToyDistillationSetup};
use crate::search::{BaselineKind, EsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Constrain,
    Synthesize,
    Sample,
    Es,
    Baseline,
    Eval,
    Export,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Constrain => "constrain",
            Mode::Synthesize => "synthesize",
            Mode::Sample => "sample",
            Mode::Es => "es",
            Mode::Baseline => "baseline",
            Mode::Eval => "eval",
            Mode::Export => "export",
        }
    }

    fn needs_seed(self) -> bool {
        !matches!(self, Mode::Constrain | Mode::Export)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every flag of the run subcommands. All fields are optional so that flags
/// can be layered over a config file with the same (kebab-case) keys.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// Number of tasks N.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Channels per masked layer (synthesis and distillation).
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ES iterations, or number of samples for `sample`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// ES direction count k.
    #[arg(long)]
    pub directions: Option<usize>,
    /// ES step size.
    #[arg(long)]
    pub lr: Option<f64>,
    /// ES perturbation scale.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Weight decay on the diagonal of the spec.
    #[arg(long)]
    pub wd: Option<f64>,
    /// Scale ES updates by the reward standard deviation.
    #[arg(long, value_name = "BOOL")]
    pub reward_normalize: Option<bool>,
    /// synthetic, distill or distill-long.
    #[arg(long)]
    pub evaluator: Option<String>,
    /// Seed of the evaluator's task profile or networks; defaults to --seed.
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Distillation steps of the short proxy.
    #[arg(long)]
    pub train_steps: Option<usize>,
    /// Step multiplier of distill-long.
    #[arg(long)]
    pub long_factor: Option<usize>,
    /// Restrict distillation updates to exclusively owned channels.
    #[arg(long, value_name = "BOOL")]
    pub owned_only: Option<bool>,
    #[arg(long)]
    pub usage_min: Option<f64>,
    #[arg(long)]
    pub usage_max: Option<f64>,
    /// Comma-separated baselines for `baseline`.
    #[arg(long, value_delimiter = ',')]
    pub baselines: Option<Vec<String>>,
    /// Input spec file for constrain, synthesize and eval.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output file (record file, or text output for constrain/synthesize).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill `wall_millis` in records. Off by default so reruns are byte-identical.
    #[arg(long, value_name = "BOOL")]
    pub timing: Option<bool>,
    /// Flat key-value config file; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! layer {
    ($top:ident, $base:ident; $($field:ident),*) => {
        Options { $($field: $top.$field.or($base.$field),)* config: None }
    };
}

impl Options {
    /// Reads a config file with the same keys as the flags.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    /// Values set here win over `base`.
    pub fn over(self, base: Options) -> Options {
        layer!(self, base; tasks, channels, seed, steps, directions, lr, nu, wd, reward_normalize,
            evaluator, eval_seed, train_steps, long_factor, owned_only, usage_min, usage_max,
            baselines, spec, out, timing)
    }

    /// Applies the config file named by `--config`, if any.
    pub fn resolve_file(self) -> Result<Options> {
        match &self.config {
            Some(path) => {
                let base = Options::from_file(path)?;
                Ok(self.over(base))
            }
            None => Ok(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorKind {
    Synthetic,
    Distill,
    DistillLong,
}

impl EvaluatorKind {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "synthetic" => Ok(EvaluatorKind::Synthetic),
            "distill" => Ok(EvaluatorKind::Distill),
            "distill-long" => Ok(EvaluatorKind::DistillLong),
            other => Err(Error::Config(format!(
                "unknown evaluator `{other}` (expected synthetic, distill or distill-long)"
            ))),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            EvaluatorKind::Synthetic => "synthetic",
            EvaluatorKind::Distill => DistillEvaluator::ID,
            EvaluatorKind::DistillLong => DistillEvaluator::LONG_ID,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorChoice {
    pub kind: EvaluatorKind,
    pub seed: u64,
    pub train_steps: Option<usize>,
    pub long_factor: usize,
    pub owned_only: bool,
}

impl EvaluatorChoice {
    pub fn build(&self, n_tasks: usize, n_channels: usize) -> Result<Box<dyn Evaluator>> {
        Ok(match self.kind {
            EvaluatorKind::Synthetic => Box::new(SyntheticEvaluator::new(SyntheticTaskProfile::random(n_tasks, self.seed)?)),
            EvaluatorKind::Distill | EvaluatorKind::DistillLong => {
                let mut cfg = DistillConfig::new(n_tasks, self.seed);
                cfg.n_channels = n_channels;
                cfg.trainable_only_owned = self.owned_only;
                if let Some(steps) = self.train_steps {
                    cfg.train_steps = steps;
                }
                let setup = ToyDistillationSetup::new(cfg)?;
                if self.kind == EvaluatorKind::Distill {
                    Box::new(DistillEvaluator::short(setup))
                } else {
                    Box::new(DistillEvaluator::long(setup, self.long_factor))
                }
            }
        })
    }
}

/// Fully resolved configuration of one CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// `None` when the task count comes from the input spec.
    pub n_tasks: Option<usize>,
    pub n_channels: usize,
    pub evaluator: EvaluatorChoice,
    pub es: EsConfig,
    pub n_samples: usize,
    pub usage_range: Option<(f64, f64)>,
    pub baselines: Vec<BaselineKind>,
    pub seed: u64,
    pub spec: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub timing: bool,
    pub inputs: Vec<PathBuf>,
}

pub const DEFAULT_CHANNELS: usize = 64;
pub const DEFAULT_ES_STEPS: usize = 30;
pub const DEFAULT_SAMPLES: usize = 1000;

impl RunConfig {
    /// Validates `opts` (already layered over any config file) for `mode`.
    pub fn resolve(mode: Mode, opts: Options, inputs: Vec<PathBuf>) -> Result<Self> {
        let seed = match (opts.seed, mode.needs_seed()) {
            (Some(s), _) => s,
            (None, false) => 0,
            (None, true) => return Err(Error::Config(format!("`{mode}` requires --seed"))),
        };
        if matches!(mode, Mode::Sample | Mode::Es | Mode::Baseline) && opts.tasks.is_none() {
            return Err(Error::Config(format!("`{mode}` requires --tasks")));
        }
        if opts.tasks == Some(0) {
            return Err(Error::NoTasks);
        }
        if matches!(mode, Mode::Constrain | Mode::Synthesize | Mode::Eval) && opts.spec.is_none() {
            return Err(Error::Config(format!("`{mode}` requires --spec")));
        }
        if matches!(mode, Mode::Sample | Mode::Es | Mode::Export) && opts.out.is_none() {
            return Err(Error::Config(format!("`{mode}` requires --out")));
        }
        let n_channels = opts.channels.unwrap_or(DEFAULT_CHANNELS);
        if n_channels == 0 {
            return Err(Error::Config("--channels must be positive".into()));
        }

        let kind = EvaluatorKind::parse(opts.evaluator.as_deref().unwrap_or("synthetic"))?;
        let evaluator = EvaluatorChoice {
            kind,
            seed: opts.eval_seed.unwrap_or(seed),
            train_steps: opts.train_steps,
            long_factor: opts.long_factor.unwrap_or(DistillEvaluator::DEFAULT_LONG_FACTOR),
            owned_only: opts.owned_only.unwrap_or(false),
        };
        if evaluator.long_factor == 0 {
            return Err(Error::Config("--long-factor must be positive".into()));
        }

        let defaults = EsConfig::default();
        let es = EsConfig {
            n_directions: opts.directions.unwrap_or(defaults.n_directions),
            step_size: opts.lr.unwrap_or(defaults.step_size),
            perturb_std: opts.nu.unwrap_or(defaults.perturb_std),
            diag_weight_decay: opts.wd.unwrap_or(defaults.diag_weight_decay),
            reward_normalize: opts.reward_normalize.unwrap_or(defaults.reward_normalize),
            n_steps: opts.steps.unwrap_or(DEFAULT_ES_STEPS),
            seed,
        };
        if mode == Mode::Es {
            es.validate()?;
        }

        let usage_range = match (opts.usage_min, opts.usage_max) {
            (None, None) => None,
            (lo, hi) => {
                let (lo, hi) = (lo.unwrap_or(0.0), hi.unwrap_or(1.0));
                if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                    return Err(Error::Config(format!("usage range [{lo}, {hi}] must satisfy 0 <= min <= max <= 1")));
                }
                Some((lo, hi))
            }
        };

        let baselines = match &opts.baselines {
            Some(names) => names.iter().map(|n| BaselineKind::parse(n.trim())).collect::<Result<Vec<_>>>()?,
            None => BaselineKind::ALL.to_vec(),
        };
        if mode == Mode::Export && inputs.is_empty() {
            return Err(Error::Config("`export` needs at least one record file".into()));
        }

        Ok(RunConfig {
            mode,
            n_tasks: opts.tasks,
            n_channels,
            evaluator,
            es,
            n_samples: opts.steps.unwrap_or(DEFAULT_SAMPLES),
            usage_range,
            baselines,
            seed,
            spec: opts.spec,
            out: opts.out,
            timing: opts.timing.unwrap_or(false),
            inputs,
        })
    }
}
