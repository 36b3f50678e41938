//! Black-box search over sharing specs: uniform random sampling, evolution
//! strategies with mirrored perturbations, and fixed baselines.
//!
//! The search space is the `N(N+1)/2` independent entries of a
//! [`SharingSpec`]. Every proposal is clamped to `[0, 1]` and passed through
//! [`constrain`] before it is scored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, Evaluator};
use crate::partition::{avg_usage, constrain, n_free, FeasibleSpec, SharingSpec};

/// Evolution-strategies settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Directions sampled per step; each is evaluated at `+ν` and `-ν`.
    pub n_directions: usize,
    pub step_size: f64,
    pub perturb_std: f64,
    /// L2 penalty on the diagonal (per-task usage) only.
    pub diag_weight_decay: f64,
    /// Divide the gradient estimate by the standard deviation of the rewards.
    pub reward_normalize: bool,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            n_directions: 16,
            step_size: 0.1,
            perturb_std: 0.05,
            diag_weight_decay: 1e-3,
            reward_normalize: true,
            n_steps: 0,
            seed: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_directions == 0 {
            return Err(Error::Config("ES needs at least one direction".into()));
        }
        if !(self.step_size > 0.0) || !(self.perturb_std > 0.0) {
            return Err(Error::Config("step size and perturbation scale must be positive".into()));
        }
        if !(self.diag_weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    /// Evaluations performed by a full run: one initial center plus
    /// `2k + 1` per step.
    pub fn total_evaluations(&self) -> usize {
        1 + self.n_steps * (2 * self.n_directions + 1)
    }
}

/// Random-sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    /// Restrict the average usage of each sample to `[lo, hi]`.
    pub usage_range: Option<(f64, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchConfig {
    Random(SamplerConfig),
    Es(EsConfig),
}

impl SearchConfig {
    pub fn seed(&self) -> u64 {
        match self {
            SearchConfig::Random(c) => c.seed,
            SearchConfig::Es(c) => c.seed,
        }
    }
}

/// Why a spec was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sample,
    Center,
    Plus,
    Minus,
    Baseline,
    Single,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Sample => "sample",
            Role::Center => "center",
            Role::Plus => "plus",
            Role::Minus => "minus",
            Role::Baseline => "baseline",
            Role::Single => "single",
        }
    }
}

/// One evaluation in a search history.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Position in the history; strictly increasing.
    pub index: usize,
    /// ES iteration (or sample number) that produced the evaluation.
    pub step: usize,
    pub role: Role,
    pub direction: Option<usize>,
    pub raw: SharingSpec,
    pub feasible: FeasibleSpec,
    pub report: EvalReport,
    pub avg_usage: f64,
}

/// Seeded optimizer state plus its append-only evaluation history.
#[derive(Debug, Clone)]
pub struct SearchRun {
    pub config: SearchConfig,
    n_tasks: usize,
    center: Option<SharingSpec>,
    step: usize,
    history: Vec<EvalRecord>,
    rng: ChaCha8Rng,
}

/// Uniform sample of the independent entries, optionally with the average
/// usage restricted to `usage_range`.
///
/// Restricted samples redraw the diagonal until the mean lands in range; after
/// 10 000 failed attempts the last diagonal is rescaled affinely into range.
pub fn sample_random_with<R: Rng + ?Sized>(n_tasks: usize, usage_range: Option<(f64, f64)>, rng: &mut R) -> Result<SharingSpec> {
    if n_tasks == 0 {
        return Err(Error::NoTasks);
    }
    if let Some((lo, hi)) = usage_range {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!("usage range [{lo}, {hi}] is not a subrange of [0, 1]")));
        }
    }
    let mut free: Vec<f64> = (0..n_free(n_tasks)).map(|_| rng.random::<f64>()).collect();
    if let Some((lo, hi)) = usage_range {
        let diag_slots: Vec<usize> = diagonal_slots(n_tasks);
        let mean = |free: &[f64]| diag_slots.iter().map(|&k| free[k]).sum::<f64>() / n_tasks as f64;
        let mut attempts = 1;
        while !(lo..=hi).contains(&mean(&free)) && attempts < 10_000 {
            for &k in &diag_slots {
                free[k] = rng.random::<f64>();
            }
            attempts += 1;
        }
        let m = mean(&free);
        if m < lo {
            // pull every entry toward 1 so the mean becomes lo
            let ratio = (1.0 - lo) / (1.0 - m);
            for &k in &diag_slots {
                free[k] = 1.0 - (1.0 - free[k]) * ratio;
            }
        } else if m > hi {
            let ratio = hi / m;
            for &k in &diag_slots {
                free[k] *= ratio;
            }
        }
    }
    SharingSpec::from_free(n_tasks, &free)
}

/// [`sample_random_with`] on a fresh generator seeded with `seed`.
pub fn sample_random(n_tasks: usize, usage_range: Option<(f64, f64)>, seed: u64) -> Result<SharingSpec> {
    sample_random_with(n_tasks, usage_range, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Positions of the diagonal within the free-coordinate vector.
fn diagonal_slots(n_tasks: usize) -> Vec<usize> {
    let mut slots = Vec::with_capacity(n_tasks);
    let mut k = 0;
    for i in 0..n_tasks {
        slots.push(k);
        k += n_tasks - i;
    }
    slots
}

fn evaluate_all<E: Evaluator + ?Sized>(evaluator: &E, raws: Vec<SharingSpec>) -> Result<Vec<(SharingSpec, FeasibleSpec, EvalReport)>> {
    raws.into_par_iter()
        .map(|raw| {
            let feasible = constrain(&raw);
            let report = evaluator.evaluate(&feasible)?;
            if report.per_task_scores.len() != raw.n_tasks() {
                return Err(Error::Evaluator(format!(
                    "{} returned {} task scores for {} tasks",
                    evaluator.id(),
                    report.per_task_scores.len(),
                    raw.n_tasks()
                )));
            }
            if !report.aggregate.is_finite() {
                return Err(Error::Evaluator(format!("{} returned a non-finite score", evaluator.id())));
            }
            Ok((raw, feasible, report))
        })
        .collect()
}

impl SearchRun {
    /// Random-sampling run with an empty history.
    pub fn new_random(n_tasks: usize, config: SamplerConfig) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        Ok(SearchRun {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config: SearchConfig::Random(config),
            n_tasks,
            center: None,
            step: 0,
            history: Vec::new(),
        })
    }

    /// ES run from a uniform random start; the start is evaluated and
    /// recorded as step 0.
    pub fn new_es<E: Evaluator + ?Sized>(n_tasks: usize, config: EsConfig, evaluator: &E) -> Result<Self> {
        let start = {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            sample_random_with(n_tasks, None, &mut rng)?
        };
        Self::new_es_from(start, config, evaluator)
    }

    /// ES run from a given starting spec.
    pub fn new_es_from<E: Evaluator + ?Sized>(start: SharingSpec, config: EsConfig, evaluator: &E) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        // keep the generator in the same state as after drawing a random start
        sample_random_with(start.n_tasks(), None, &mut rng)?;
        let mut run = SearchRun {
            n_tasks: start.n_tasks(),
            config: SearchConfig::Es(config),
            center: None,
            step: 0,
            history: Vec::new(),
            rng,
        };
        let evaluated = evaluate_all(evaluator, vec![start.clone()])?;
        run.push(evaluated, |_| (Role::Center, None));
        run.center = Some(start);
        Ok(run)
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn history(&self) -> &[EvalRecord] {
        &self.history
    }

    /// Current ES center, in raw coordinates.
    pub fn center(&self) -> Option<&SharingSpec> {
        self.center.as_ref()
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Record with the highest aggregate score.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.history
            .iter()
            .fold(None, |best: Option<&EvalRecord>, r| match best {
                Some(b) if b.report.aggregate >= r.report.aggregate => Some(b),
                _ => Some(r),
            })
    }

    fn push(&mut self, evaluated: Vec<(SharingSpec, FeasibleSpec, EvalReport)>, role: impl Fn(usize) -> (Role, Option<usize>)) {
        for (k, (raw, feasible, report)) in evaluated.into_iter().enumerate() {
            let (role, direction) = role(k);
            self.history.push(EvalRecord {
                index: self.history.len(),
                step: self.step,
                role,
                direction,
                avg_usage: avg_usage(&feasible),
                raw,
                feasible,
                report,
            });
        }
    }

    /// Draws and evaluates one more random sample.
    pub fn sample_step<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<()> {
        let SearchConfig::Random(cfg) = &self.config else {
            return Err(Error::Config("sample_step on an ES run".into()));
        };
        let mut rng = self.rng.clone();
        let raw = sample_random_with(self.n_tasks, cfg.usage_range, &mut rng)?;
        let evaluated = evaluate_all(evaluator, vec![raw])?;
        self.rng = rng;
        self.step += 1;
        self.push(evaluated, |_| (Role::Sample, None));
        Ok(())
    }

    /// One ES iteration: `2k` mirrored perturbation evaluations, a gradient
    /// step with diagonal weight decay, and an evaluation of the new center.
    /// On evaluator failure the run is left untouched.
    pub fn es_step<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<()> {
        let SearchConfig::Es(cfg) = &self.config else {
            return Err(Error::Config("es_step on a random-sampling run".into()));
        };
        let center = self.center.as_ref().expect("ES runs always have a center");
        let n = self.n_tasks;
        let dim = n_free(n);
        let k = cfg.n_directions;
        let base = center.free_coords();

        let mut rng = self.rng.clone();
        let directions: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut candidates = Vec::with_capacity(2 * k);
        for dir in &directions {
            for sign in [1.0, -1.0] {
                let coords: Vec<f64> = base.iter().zip(dir).map(|(p, d)| p + sign * cfg.perturb_std * d).collect();
                candidates.push(SharingSpec::from_free(n, &coords)?);
            }
        }
        let evaluated = evaluate_all(evaluator, candidates)?;

        let rewards: Vec<f64> = evaluated.iter().map(|(_, _, r)| r.aggregate).collect();
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rewards.len() as f64).sqrt();
        let scale = if cfg.reward_normalize && std >= 1e-12 {
            1.0 / (k as f64 * std)
        } else {
            1.0 / k as f64
        };
        let mut grad = vec![0.0; dim];
        for (l, dir) in directions.iter().enumerate() {
            let diff = rewards[2 * l] - rewards[2 * l + 1];
            for (g, d) in grad.iter_mut().zip(dir) {
                *g += diff * d;
            }
        }
        let mut next: Vec<f64> = base
            .iter()
            .zip(&grad)
            .map(|(p, g)| (p + cfg.step_size * scale * g).clamp(0.0, 1.0))
            .collect();
        let shrink = cfg.step_size * 2.0 * cfg.diag_weight_decay;
        for slot in diagonal_slots(n) {
            next[slot] -= shrink * next[slot];
        }
        let next_center = SharingSpec::from_free(n, &next)?;
        let center_eval = evaluate_all(evaluator, vec![next_center.clone()])?;

        self.rng = rng;
        self.step += 1;
        self.push(evaluated, |k| (if k % 2 == 0 { Role::Plus } else { Role::Minus }, Some(k / 2)));
        self.push(center_eval, |_| (Role::Center, None));
        self.center = Some(next_center);
        Ok(())
    }

    /// Advances by one step of whichever strategy this run uses.
    pub fn advance<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<()> {
        match self.config {
            SearchConfig::Random(_) => self.sample_step(evaluator),
            SearchConfig::Es(_) => self.es_step(evaluator),
        }
    }

    fn target_steps(&self) -> usize {
        match &self.config {
            SearchConfig::Random(c) => c.n_samples,
            SearchConfig::Es(c) => c.n_steps,
        }
    }
}

/// Runs a full search, handing each batch of new records to `sink` as soon
/// as it is appended. A failing step or sink stops the run; records already
/// passed to the sink stay valid.
pub fn run_search_streaming<E, F>(n_tasks: usize, config: SearchConfig, evaluator: &E, mut sink: F) -> Result<SearchRun>
where
    E: Evaluator + ?Sized,
    F: FnMut(&[EvalRecord]) -> Result<()>,
{
    let mut run = match config {
        SearchConfig::Random(c) => SearchRun::new_random(n_tasks, c)?,
        SearchConfig::Es(c) => SearchRun::new_es(n_tasks, c, evaluator)?,
    };
    sink(run.history())?;
    let mut flushed = run.history.len();
    for _ in 0..run.target_steps() {
        run.advance(evaluator)?;
        sink(&run.history[flushed..])?;
        flushed = run.history.len();
    }
    Ok(run)
}

pub fn run_search<E: Evaluator + ?Sized>(n_tasks: usize, config: SearchConfig, evaluator: &E) -> Result<SearchRun> {
    run_search_streaming(n_tasks, config, evaluator, |_| Ok(()))
}

/// Fixed partitioning strategies used as reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Channels split evenly, nothing shared.
    Independent,
    /// Half the channels shared by all tasks, the rest split evenly.
    ShareHalf,
    /// Every channel shared by every task.
    ShareAll,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Independent, BaselineKind::ShareHalf, BaselineKind::ShareAll];

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Independent => "independent",
            BaselineKind::ShareHalf => "share half",
            BaselineKind::ShareAll => "share all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.replace(['-', ' '], "_").as_str() {
            "independent" => Ok(BaselineKind::Independent),
            "share_half" => Ok(BaselineKind::ShareHalf),
            "share_all" => Ok(BaselineKind::ShareAll),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// The baseline's sharing matrix, stated directly in feasible coordinates.
pub fn baseline_spec(kind: BaselineKind, n_tasks: usize) -> Result<SharingSpec> {
    let n = n_tasks as f64;
    match kind {
        BaselineKind::Independent => SharingSpec::uniform(n_tasks, 1.0 / n, 0.0),
        BaselineKind::ShareHalf => SharingSpec::uniform(n_tasks, 0.5 + 0.5 / n, 0.5),
        BaselineKind::ShareAll => SharingSpec::uniform(n_tasks, 1.0, 1.0),
    }
}

/// [`baseline_spec`] checked against the feasibility bands.
pub fn baseline_feasible(kind: BaselineKind, n_tasks: usize) -> Result<FeasibleSpec> {
    FeasibleSpec::new(baseline_spec(kind, n_tasks)?)
}
