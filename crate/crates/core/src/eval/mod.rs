//! Evaluators that score a [`FeasibleSpec`].
//!
//! Two families are provided: a closed-form synthetic objective for fast
//! oracle testing, and a toy feature-distillation proxy that trains masked
//! student layers against fixed per-task teachers.

pub mod distill;
pub mod network;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::partition::FeasibleSpec;

pub use distill::{
    curriculum_probabilities, curriculum_sample, distill_score, full_train_score, DistillConfig, DistillEvaluator,
    DistillRun, ToyDistillationSetup,
};
pub use network::{Dense, Mlp};
pub use synthetic::{synthetic_score, SyntheticEvaluator, SyntheticTaskProfile};

/// Scores for one evaluated spec. Higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task_scores: Vec<f64>,
    pub aggregate: f64,
    pub avg_usage: f64,
    pub evaluator_id: String,
    /// Only set by evaluators that synthesize a mask.
    pub synthesis_median_error: Option<f64>,
}

impl EvalReport {
    /// Builds a report whose aggregate is the mean of `per_task_scores`.
    pub fn new(
        per_task_scores: Vec<f64>,
        avg_usage: f64,
        evaluator_id: impl Into<String>,
        synthesis_median_error: Option<f64>,
    ) -> Self {
        let aggregate = per_task_scores.iter().sum::<f64>() / per_task_scores.len().max(1) as f64;
        EvalReport {
            per_task_scores,
            aggregate,
            avg_usage,
            evaluator_id: evaluator_id.into(),
            synthesis_median_error,
        }
    }
}

/// Uniform contract for everything that can score a spec.
///
/// Implementations must be deterministic: the same spec always yields the
/// same report. They are shared across threads during ES steps.
pub trait Evaluator: Send + Sync {
    fn id(&self) -> &str;
    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport> {
        (**self).evaluate(spec)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport> {
        (**self).evaluate(spec)
    }
}

/// Wraps a closure returning a single scalar score. Every task receives the
/// same score so the aggregate equals it.
pub struct FnEvaluator<F> {
    id: String,
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&FeasibleSpec) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnEvaluator { id: id.into(), f }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&FeasibleSpec) -> f64 + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport> {
        let score = (self.f)(spec);
        Ok(EvalReport {
            per_task_scores: vec![score; spec.n_tasks()],
            aggregate: score,
            avg_usage: spec.avg_usage(),
            evaluator_id: self.id.clone(),
            synthesis_median_error: None,
        })
    }
}
