//! Feature-distillation proxy.
//!
//! Each task has a fixed random teacher network. A shared, masked student is
//! trained for a short while to reproduce every teacher's output on its own
//! channel partition; how well it manages is the task's score. Tasks are
//! drawn by a temperature-controlled curriculum that favours lagging tasks,
//! and each task keeps its own momentum buffers so a step on one task never
//! disturbs parameters only another task uses.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::network::{mse, mse_with_grad, Dense, Mlp};
use super::{EvalReport, Evaluator};
use crate::error::{Error, Result};
use crate::partition::{task_masks, ChannelMask, FeasibleSpec, TaskMaskPair};
use crate::synthesis::synthesize;

/// Selection probabilities `∝ exp((1 - score_i) / τ)`.
pub fn curriculum_probabilities(running_scores: &[f64], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = running_scores.iter().map(|s| (1.0 - s) / temperature).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws the next task, favouring those with low running scores.
pub fn curriculum_sample<R: Rng + ?Sized>(running_scores: &[f64], temperature: f64, rng: &mut R) -> usize {
    assert!(temperature > 0.0, "curriculum temperature must be positive");
    let probs = curriculum_probabilities(running_scores, temperature);
    WeightedIndex::new(&probs).expect("softmax weights are positive").sample(rng)
}

/// Hyperparameters and fixed networks of the distillation proxy.
///
/// Teachers and the student initialization are generated once from `seed`
/// and never modified; every evaluation trains a fresh copy of the student.
#[derive(Debug, Clone)]
pub struct ToyDistillationSetup {
    pub n_tasks: usize,
    pub n_channels: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub n_layers: usize,
    pub curriculum_temperature: f64,
    pub train_steps: usize,
    pub batch_size: usize,
    pub eval_batch: usize,
    pub learn_rate: f64,
    pub momentum_coef: f64,
    pub lr_drop_at: f64,
    pub lr_drop_factor: f64,
    /// Restrict updates to channels a task owns exclusively.
    pub trainable_only_owned: bool,
    pub seed: u64,
    teachers: Vec<Mlp>,
    student_init: Mlp,
}

/// Knobs for [`ToyDistillationSetup::new`].
#[derive(Debug, Clone)]
pub struct DistillConfig {
    pub n_tasks: usize,
    pub n_channels: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub n_layers: usize,
    pub teacher_hidden: usize,
    pub curriculum_temperature: f64,
    pub train_steps: usize,
    pub batch_size: usize,
    pub eval_batch: usize,
    pub learn_rate: f64,
    pub momentum_coef: f64,
    /// The learning rate is multiplied by `lr_drop_factor` once this fraction
    /// of a run's step budget has elapsed.
    pub lr_drop_at: f64,
    pub lr_drop_factor: f64,
    pub trainable_only_owned: bool,
    /// Give every task the same teacher.
    pub identical_teachers: bool,
    pub seed: u64,
}

impl DistillConfig {
    pub fn new(n_tasks: usize, seed: u64) -> Self {
        DistillConfig {
            n_tasks,
            n_channels: 64,
            input_dim: 16,
            output_dim: 16,
            n_layers: 4,
            teacher_hidden: 64,
            curriculum_temperature: 0.2,
            train_steps: 400,
            batch_size: 16,
            eval_batch: 256,
            learn_rate: 0.2,
            momentum_coef: 0.5,
            lr_drop_at: 0.75,
            lr_drop_factor: 0.1,
            trainable_only_owned: false,
            identical_teachers: false,
            seed,
        }
    }
}

const TEACHER_STREAM: u64 = 0x7465_6163;
const STUDENT_STREAM: u64 = 0x7374_7564;
const TRAIN_STREAM: u64 = 0x7472_6169;
const HELD_OUT_STREAM: u64 = 0x6865_6c64;

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

fn gaussian_batch<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> Vec<f64> {
    (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect()
}

impl ToyDistillationSetup {
    pub fn new(cfg: DistillConfig) -> Result<Self> {
        if cfg.n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        if cfg.n_layers < 2 || !cfg.n_layers.is_multiple_of(2) {
            return Err(Error::Config(format!("n_layers must be even and >= 2, got {}", cfg.n_layers)));
        }
        if cfg.n_channels == 0 || cfg.input_dim == 0 || cfg.output_dim == 0 || cfg.teacher_hidden == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if cfg.batch_size == 0 || cfg.eval_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(cfg.curriculum_temperature > 0.0) || !(cfg.learn_rate > 0.0) || !(0.0..1.0).contains(&cfg.momentum_coef) {
            return Err(Error::Config("temperature and learning rate must be positive, momentum in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&cfg.lr_drop_at) || !(cfg.lr_drop_factor > 0.0) {
            return Err(Error::Config("lr drop point must lie in [0, 1] and the drop factor be positive".into()));
        }

        let mut rng = stream(cfg.seed, TEACHER_STREAM);
        let probe = gaussian_batch(&mut rng, 256, cfg.input_dim);
        let mut teachers: Vec<Mlp> = Vec::with_capacity(cfg.n_tasks);
        for t in 0..cfg.n_tasks {
            if cfg.identical_teachers && t > 0 {
                teachers.push(teachers[0].clone());
                continue;
            }
            let mut teacher = Mlp::random(&[cfg.input_dim, cfg.teacher_hidden, cfg.output_dim], &mut rng);
            // unit RMS output on the probe batch keeps losses comparable across tasks
            let out = teacher.forward(&probe)?;
            let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64).sqrt();
            if rms > 0.0 {
                let last = teacher.layers.last_mut().expect("two layers");
                last.weight.iter_mut().for_each(|w| *w /= rms);
                last.bias.iter_mut().for_each(|b| *b /= rms);
            }
            teachers.push(teacher);
        }

        let mut dims = vec![cfg.input_dim];
        dims.extend(std::iter::repeat_n(cfg.n_channels, cfg.n_layers - 1));
        dims.push(cfg.output_dim);
        let student_init = Mlp::random(&dims, &mut stream(cfg.seed, STUDENT_STREAM));

        Ok(ToyDistillationSetup {
            n_tasks: cfg.n_tasks,
            n_channels: cfg.n_channels,
            input_dim: cfg.input_dim,
            output_dim: cfg.output_dim,
            n_layers: cfg.n_layers,
            curriculum_temperature: cfg.curriculum_temperature,
            train_steps: cfg.train_steps,
            batch_size: cfg.batch_size,
            eval_batch: cfg.eval_batch,
            learn_rate: cfg.learn_rate,
            momentum_coef: cfg.momentum_coef,
            lr_drop_at: cfg.lr_drop_at,
            lr_drop_factor: cfg.lr_drop_factor,
            trainable_only_owned: cfg.trainable_only_owned,
            seed: cfg.seed,
            teachers,
            student_init,
        })
    }

    pub fn teachers(&self) -> &[Mlp] {
        &self.teachers
    }

    pub fn student_init(&self) -> &Mlp {
        &self.student_init
    }

    /// Fixed evaluation inputs shared by every task and every spec.
    pub fn held_out_inputs(&self) -> Vec<f64> {
        gaussian_batch(&mut stream(self.seed, HELD_OUT_STREAM), self.eval_batch, self.input_dim)
    }

    /// Starts an open-ended training run on `mask` at the base learning rate.
    pub fn start(&self, mask: &ChannelMask) -> Result<DistillRun<'_>> {
        DistillRun::new(self, mask, None)
    }

    /// Starts a run of `budget` steps whose learning rate drops on schedule.
    pub fn start_with_budget(&self, mask: &ChannelMask, budget: usize) -> Result<DistillRun<'_>> {
        DistillRun::new(self, mask, Some(budget))
    }
}

/// Mutable training state of one evaluation: the student, one set of
/// momentum buffers per task and a running loss per task.
#[derive(Debug, Clone)]
pub struct DistillRun<'a> {
    setup: &'a ToyDistillationSetup,
    student: Mlp,
    momentum: Vec<Vec<Dense>>,
    running_loss: Vec<Option<f64>>,
    masks: Vec<TaskMaskPair>,
    rng: ChaCha8Rng,
    steps: usize,
    budget: Option<usize>,
}

impl<'a> DistillRun<'a> {
    fn new(setup: &'a ToyDistillationSetup, mask: &ChannelMask, budget: Option<usize>) -> Result<Self> {
        if mask.n_tasks() != setup.n_tasks {
            return Err(Error::TaskMismatch {
                left: mask.n_tasks(),
                right: setup.n_tasks,
            });
        }
        if mask.n_channels() != setup.n_channels {
            return Err(Error::Dimension(format!(
                "mask has {} channels, setup expects {}",
                mask.n_channels(),
                setup.n_channels
            )));
        }
        let masks = (0..setup.n_tasks)
            .map(|t| task_masks(mask, t, setup.trainable_only_owned))
            .collect::<Result<Vec<_>>>()?;
        let zeros: Vec<Dense> = setup.student_init.layers.iter().map(Dense::zeros_like).collect();
        Ok(DistillRun {
            setup,
            student: setup.student_init.clone(),
            momentum: vec![zeros; setup.n_tasks],
            running_loss: vec![None; setup.n_tasks],
            masks,
            rng: stream(setup.seed, TRAIN_STREAM),
            steps: 0,
            budget,
        })
    }

    pub fn student(&self) -> &Mlp {
        &self.student
    }

    pub fn momentum(&self, task: usize) -> &[Dense] {
        &self.momentum[task]
    }

    pub fn masks(&self, task: usize) -> &TaskMaskPair {
        &self.masks[task]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Learning rate used by the next step.
    pub fn learn_rate(&self) -> f64 {
        match self.budget {
            Some(b) if self.steps as f64 >= self.setup.lr_drop_at * b as f64 => {
                self.setup.learn_rate * self.setup.lr_drop_factor
            }
            _ => self.setup.learn_rate,
        }
    }

    /// `1 / (1 + running loss)`, zero for tasks not yet trained.
    pub fn running_scores(&self) -> Vec<f64> {
        self.running_loss
            .iter()
            .map(|l| l.map_or(0.0, |l| 1.0 / (1.0 + l)))
            .collect()
    }

    /// One SGD-with-momentum step on a curriculum-sampled task.
    pub fn step(&mut self) -> Result<(usize, f64)> {
        let scores = self.running_scores();
        let task = curriculum_sample(&scores, self.setup.curriculum_temperature, &mut self.rng);
        let loss = self.step_on(task)?;
        Ok((task, loss))
    }

    /// One SGD-with-momentum step on `task`, touching only its buffers.
    pub fn step_on(&mut self, task: usize) -> Result<f64> {
        if task >= self.setup.n_tasks {
            return Err(Error::TaskIndex {
                index: task,
                n_tasks: self.setup.n_tasks,
            });
        }
        let x = gaussian_batch(&mut self.rng, self.setup.batch_size, self.setup.input_dim);
        let target = self.setup.teachers[task].forward(&x)?;
        let masks = &self.masks[task];
        let trace = self.student.masked_forward(&x, masks.forward())?;
        let (loss, grad_out) = mse_with_grad(&trace.output, &target);
        let grads = self.student.masked_backward(&trace, &grad_out, masks)?;

        let mu = self.setup.momentum_coef;
        let lr = self.learn_rate();
        for ((layer, buf), g) in self.student.layers.iter_mut().zip(&mut self.momentum[task]).zip(&grads) {
            for ((p, v), gv) in layer.weight.iter_mut().zip(&mut buf.weight).zip(&g.weight) {
                *v = mu * *v + gv;
                *p -= lr * *v;
            }
            for ((p, v), gv) in layer.bias.iter_mut().zip(&mut buf.bias).zip(&g.bias) {
                *v = mu * *v + gv;
                *p -= lr * *v;
            }
        }
        self.running_loss[task] = Some(match self.running_loss[task] {
            None => loss,
            Some(prev) => 0.9 * prev + 0.1 * loss,
        });
        self.steps += 1;
        Ok(loss)
    }

    /// Per-task MSE of the masked student on the held-out batch.
    pub fn held_out_mse(&self) -> Result<Vec<f64>> {
        let x = self.setup.held_out_inputs();
        (0..self.setup.n_tasks)
            .map(|t| {
                let target = self.setup.teachers[t].forward(&x)?;
                let out = self.student.masked_forward(&x, self.masks[t].forward())?.output;
                Ok(mse(&out, &target))
            })
            .collect()
    }
}

/// Trains on the synthesized mask of `spec` for `steps` iterations and scores
/// each task by `1 / (1 + held-out MSE)`.
fn train_and_score(spec: &FeasibleSpec, setup: &ToyDistillationSetup, steps: usize, id: &str) -> Result<EvalReport> {
    if spec.n_tasks() != setup.n_tasks {
        return Err(Error::TaskMismatch {
            left: spec.n_tasks(),
            right: setup.n_tasks,
        });
    }
    let synthesis = synthesize(spec, setup.n_channels)?;
    let mut run = setup.start_with_budget(&synthesis.mask, steps)?;
    for _ in 0..steps {
        run.step()?;
    }
    let scores = run.held_out_mse()?.into_iter().map(|m| 1.0 / (1.0 + m)).collect();
    Ok(EvalReport::new(scores, spec.avg_usage(), id, Some(synthesis.median_error)))
}

/// Short distillation: `setup.train_steps` iterations.
pub fn distill_score(spec: &FeasibleSpec, setup: &ToyDistillationSetup) -> Result<EvalReport> {
    train_and_score(spec, setup, setup.train_steps, DistillEvaluator::ID)
}

/// Long reference training: `factor` times as many iterations, same objective.
pub fn full_train_score(spec: &FeasibleSpec, setup: &ToyDistillationSetup, factor: usize) -> Result<EvalReport> {
    train_and_score(spec, setup, setup.train_steps * factor, DistillEvaluator::LONG_ID)
}

/// Evaluator wrapper around [`distill_score`] / [`full_train_score`].
#[derive(Debug, Clone)]
pub struct DistillEvaluator {
    pub setup: ToyDistillationSetup,
    /// Multiplier on `train_steps`; 1 is the short proxy.
    pub factor: usize,
}

impl DistillEvaluator {
    pub const ID: &'static str = "distill";
    pub const LONG_ID: &'static str = "distill-long";
    pub const DEFAULT_LONG_FACTOR: usize = 50;

    pub fn short(setup: ToyDistillationSetup) -> Self {
        DistillEvaluator { setup, factor: 1 }
    }

    pub fn long(setup: ToyDistillationSetup, factor: usize) -> Self {
        DistillEvaluator { setup, factor }
    }
}

impl Evaluator for DistillEvaluator {
    fn id(&self) -> &str {
        if self.factor == 1 {
            Self::ID
        } else {
            Self::LONG_ID
        }
    }

    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport> {
        if self.factor == 1 {
            distill_score(spec, &self.setup)
        } else {
            full_train_score(spec, &self.setup, self.factor)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{constrain, SharingSpec};

    #[test]
    fn equal_scores_give_uniform_curriculum() {
        let p = curriculum_probabilities(&[0.4; 5], 0.3);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn lagging_task_dominates_at_low_temperature() {
        let p = curriculum_probabilities(&[0.9, 0.1], 0.1);
        let expected = 9f64.exp() / (1f64.exp() + 9f64.exp());
        assert!((p[1] - expected).abs() < 1e-12);
        assert!((p[1] - 0.99966).abs() < 1e-5);
    }

    #[test]
    fn high_temperature_is_nearly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores = [0.1, 0.5, 0.9, 0.3];
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[curriculum_sample(&scores, 1e6, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn zero_steps_is_deterministic() {
        let mut cfg = DistillConfig::new(2, 11);
        cfg.train_steps = 0;
        cfg.n_channels = 16;
        let setup = ToyDistillationSetup::new(cfg).unwrap();
        let spec = constrain(&SharingSpec::uniform(2, 0.6, 0.5).unwrap());
        let a = distill_score(&spec, &setup).unwrap();
        let b = distill_score(&spec, &setup).unwrap();
        assert_eq!(a, b);
        assert!(a.synthesis_median_error.is_some());
    }

    #[test]
    fn factor_one_matches_short_score() {
        let mut cfg = DistillConfig::new(2, 4);
        cfg.train_steps = 20;
        cfg.n_channels = 16;
        let setup = ToyDistillationSetup::new(cfg).unwrap();
        let spec = constrain(&SharingSpec::uniform(2, 0.7, 0.3).unwrap());
        let short = distill_score(&spec, &setup).unwrap();
        let long = full_train_score(&spec, &setup, 1).unwrap();
        assert_eq!(short.per_task_scores, long.per_task_scores);
    }

    #[test]
    fn setup_validation() {
        let mut cfg = DistillConfig::new(2, 0);
        cfg.n_layers = 3;
        assert!(ToyDistillationSetup::new(cfg).is_err());
        let mut cfg = DistillConfig::new(2, 0);
        cfg.curriculum_temperature = 0.0;
        assert!(ToyDistillationSetup::new(cfg).is_err());
    }

    #[test]
    fn momentum_buffers_are_per_task() {
        let mut cfg = DistillConfig::new(2, 8);
        cfg.n_channels = 8;
        let setup = ToyDistillationSetup::new(cfg).unwrap();
        let mask = ChannelMask::new(8, 2, vec![1; 16]).unwrap();
        let mut run = setup.start(&mask).unwrap();
        for _ in 0..5 {
            run.step_on(0).unwrap();
        }
        assert!(run.momentum(1).iter().all(|l| l.weight.iter().chain(&l.bias).all(|&v| v == 0.0)));
        assert!(run.momentum(0).iter().any(|l| l.weight.iter().any(|&v| v != 0.0)));
    }
}
