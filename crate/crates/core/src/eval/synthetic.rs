//! Closed-form stand-in for distillation: each task gains from its own usage
//! with diminishing returns and pays (or, for negative coefficients, gains)
//! linearly for every channel it shares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EvalReport, Evaluator};
use crate::error::{Error, Result};
use crate::partition::FeasibleSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskProfile {
    /// `a_i > 0`: score ceiling of task `i`.
    pub capacity_gain: Vec<f64>,
    /// `b_i > 0`: how fast task `i` saturates with usage.
    pub saturation: Vec<f64>,
    /// Row-major symmetric `c_ij` with zero diagonal; negative entries model synergy.
    pub interference: Vec<f64>,
    pub seed: u64,
}

impl SyntheticTaskProfile {
    pub fn new(capacity_gain: Vec<f64>, saturation: Vec<f64>, interference: Vec<f64>, seed: u64) -> Result<Self> {
        let n = capacity_gain.len();
        if n == 0 {
            return Err(Error::NoTasks);
        }
        if saturation.len() != n || interference.len() != n * n {
            return Err(Error::Dimension("synthetic profile arrays disagree on task count".into()));
        }
        if capacity_gain.iter().chain(&saturation).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("capacity gains and saturations must be positive".into()));
        }
        for i in 0..n {
            if interference[i * n + i] != 0.0 {
                return Err(Error::Config("interference diagonal must be zero".into()));
            }
            for j in 0..n {
                let c = interference[i * n + j];
                if !c.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if c != interference[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SyntheticTaskProfile {
            capacity_gain,
            saturation,
            interference,
            seed,
        })
    }

    /// Seeded profile with `a ~ U[0.5, 1.5]`, `b ~ U[1, 5]` and mixed-sign
    /// interference `c ~ U[-0.1, 0.3]`.
    pub fn random(n_tasks: usize, seed: u64) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..n_tasks).map(|_| rng.random_range(0.5..1.5)).collect();
        let b = (0..n_tasks).map(|_| rng.random_range(1.0..5.0)).collect();
        let mut c = vec![0.0; n_tasks * n_tasks];
        for i in 0..n_tasks {
            for j in i + 1..n_tasks {
                let v = rng.random_range(-0.1..0.3);
                c[i * n_tasks + j] = v;
                c[j * n_tasks + i] = v;
            }
        }
        Self::new(a, b, c, seed)
    }

    pub fn n_tasks(&self) -> usize {
        self.capacity_gain.len()
    }
}

/// `s_i = a_i (1 - exp(-b_i P̃_ii)) - Σ_{j≠i} c_ij P̃_ij`.
pub fn synthetic_score(spec: &FeasibleSpec, profile: &SyntheticTaskProfile) -> Result<EvalReport> {
    let n = spec.n_tasks();
    if profile.n_tasks() != n {
        return Err(Error::TaskMismatch {
            left: n,
            right: profile.n_tasks(),
        });
    }
    let scores = (0..n)
        .map(|i| {
            let gain = profile.capacity_gain[i] * (1.0 - (-profile.saturation[i] * spec.get(i, i)).exp());
            let cost: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| profile.interference[i * n + j] * spec.get(i, j))
                .sum();
            gain - cost
        })
        .collect();
    Ok(EvalReport::new(scores, spec.avg_usage(), SyntheticEvaluator::ID, None))
}

#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    pub profile: SyntheticTaskProfile,
}

impl SyntheticEvaluator {
    pub const ID: &'static str = "synthetic";

    pub fn new(profile: SyntheticTaskProfile) -> Self {
        SyntheticEvaluator { profile }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn id(&self) -> &str {
        Self::ID
    }

    fn evaluate(&self, spec: &FeasibleSpec) -> Result<EvalReport> {
        synthetic_score(spec, &self.profile)
    }
}
