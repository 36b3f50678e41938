//! Binary mask synthesis from a feasible sharing spec.
//!
//! Pairwise targets do not pin down higher-order overlaps, so the spec is
//! first lifted to a distribution over task subsets: `x_S` is the fraction of
//! channels shared by exactly the tasks in `S`. Usage and pairwise sharing are
//! linear in `x`, which turns synthesis into a least-squares problem on the
//! probability simplex. The fractional solution is rounded to channel counts
//! and then polished by single-channel reassignments.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::partition::{gram, upper_pairs, ChannelMask, FeasibleSpec, SharingSpec};

/// Largest task count accepted by subset enumeration.
pub const MAX_SUBSET_TASKS: usize = 16;

/// Fraction of channels assigned to each task subset, indexed by the subset's
/// bitset (bit `t` set means task `t` belongs to it).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetAllocation {
    n_tasks: usize,
    fractions: Vec<f64>,
}

impl SubsetAllocation {
    pub fn new(n_tasks: usize, fractions: Vec<f64>) -> Result<Self> {
        check_task_count(n_tasks)?;
        if fractions.len() != 1 << n_tasks {
            return Err(Error::Shape {
                expected: 1 << n_tasks,
                got: fractions.len(),
            });
        }
        if fractions.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("subset fractions must be finite and nonnegative".into()));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("subset fractions sum to {total}, not 1")));
        }
        Ok(SubsetAllocation { n_tasks, fractions })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn fraction(&self, subset: u32) -> f64 {
        self.fractions[subset as usize]
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    /// Sum of squared differences between the implied spec and `target`
    /// over the diagonal and upper triangle.
    pub fn objective(&self, target: &FeasibleSpec) -> f64 {
        let layout = SubsetLayout::new(self.n_tasks);
        let t = target_vector(target);
        layout.objective(&self.fractions, &t)
    }
}

fn check_task_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::NoTasks);
    }
    if n > MAX_SUBSET_TASKS {
        return Err(Error::TooManyTasks {
            max: MAX_SUBSET_TASKS,
            got: n,
        });
    }
    Ok(())
}

fn target_vector(target: &FeasibleSpec) -> Vec<f64> {
    upper_pairs(target.n_tasks()).map(|(i, j)| target.get(i, j)).collect()
}

/// Which upper-triangle entries each subset contributes to.
struct SubsetLayout {
    n_tasks: usize,
    n_entries: usize,
    /// CSR-style: entries of subset `s` are `entries[offsets[s]..offsets[s+1]]`.
    offsets: Vec<usize>,
    entries: Vec<u16>,
}

impl SubsetLayout {
    fn new(n_tasks: usize) -> Self {
        let pairs: Vec<(usize, usize)> = upper_pairs(n_tasks).collect();
        let n_sub = 1usize << n_tasks;
        let mut offsets = Vec::with_capacity(n_sub + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for s in 0..n_sub {
            for (e, &(i, j)) in pairs.iter().enumerate() {
                if (s >> i) & 1 == 1 && (s >> j) & 1 == 1 {
                    entries.push(e as u16);
                }
            }
            offsets.push(entries.len());
        }
        SubsetLayout {
            n_tasks,
            n_entries: pairs.len(),
            offsets,
            entries,
        }
    }

    fn n_subsets(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    fn entries_of(&self, s: usize) -> &[u16] {
        &self.entries[self.offsets[s]..self.offsets[s + 1]]
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (s, &xs) in x.iter().enumerate() {
            if xs != 0.0 {
                for &e in self.entries_of(s) {
                    out[e as usize] += xs;
                }
            }
        }
    }

    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = self.entries_of(s).iter().map(|&e| r[e as usize]).sum();
        }
    }

    fn objective(&self, x: &[f64], target: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n_entries];
        self.apply(x, &mut y);
        y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Largest eigenvalue of `A Aᵀ`, where entry `(e, e')` counts the subsets
    /// containing both index pairs: `2^(N - |e ∪ e'|)`.
    fn spectral_bound(&self) -> f64 {
        let pairs: Vec<(usize, usize)> = upper_pairs(self.n_tasks).collect();
        let m = pairs.len();
        let mut gram = vec![0.0; m * m];
        for (a, &(i, j)) in pairs.iter().enumerate() {
            for (b, &(k, l)) in pairs.iter().enumerate() {
                let union = (1u32 << i) | (1 << j) | (1 << k) | (1 << l);
                gram[a * m + b] = (1u64 << (self.n_tasks - union.count_ones() as usize)) as f64;
            }
        }
        let mut v = vec![1.0; m];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w: Vec<f64> = (0..m)
                .map(|a| (0..m).map(|b| gram[a * m + b] * v[b]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Tuning knobs for [`solve_fractions_with`] and [`synthesize_with`].
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Number of projected-gradient starts; the first is the independent
    /// (product) allocation, the rest are seeded random simplex points.
    pub restarts: usize,
    pub max_iters: usize,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            restarts: 5,
            max_iters: 5000,
            max_passes: 8,
            seed: 0,
        }
    }
}

/// Least-squares subset fractions for `target` with default options.
pub fn solve_fractions(target: &FeasibleSpec) -> Result<SubsetAllocation> {
    solve_fractions_with(target, &SynthesisOptions::default())
}

pub fn solve_fractions_with(target: &FeasibleSpec, opts: &SynthesisOptions) -> Result<SubsetAllocation> {
    let n = target.n_tasks();
    check_task_count(n)?;
    if target.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    let layout = SubsetLayout::new(n);
    let t = target_vector(target);
    let lipschitz = 2.0 * layout.spectral_bound() * 1.001;

    let diag = target.diagonal();
    let n_sub = layout.n_subsets();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if restart == 0 {
            (0..n_sub)
                .map(|s| {
                    (0..n)
                        .map(|i| if (s >> i) & 1 == 1 { diag[i] } else { 1.0 - diag[i] })
                        .product()
                })
                .collect()
        } else {
            // uniform on the simplex
            let mut e: Vec<f64> = (0..n_sub).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = e.iter().sum();
            e.iter_mut().for_each(|v| *v /= total);
            e
        };
        let (obj, x) = accelerated_projected_gradient(&layout, &t, start, lipschitz, opts.max_iters);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    let (_, mut x) = best.expect("at least one restart");
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    SubsetAllocation::new(n, x)
}

/// FISTA with function-value restart. Returns the best iterate seen.
fn accelerated_projected_gradient(
    layout: &SubsetLayout,
    target: &[f64],
    start: Vec<f64>,
    lipschitz: f64,
    max_iters: usize,
) -> (f64, Vec<f64>) {
    let n_sub = layout.n_subsets();
    let mut x = start;
    project_simplex(&mut x);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut residual = vec![0.0; layout.n_entries];
    let mut grad = vec![0.0; n_sub];
    let mut next = vec![0.0; n_sub];
    let mut f_x = layout.objective(&x, target);

    for _ in 0..max_iters {
        layout.apply(&y, &mut residual);
        residual.iter_mut().zip(target).for_each(|(r, t)| *r -= t);
        layout.apply_transpose(&residual, &mut grad);
        for s in 0..n_sub {
            next[s] = y[s] - 2.0 * grad[s] / lipschitz;
        }
        project_simplex(&mut next);
        let f_next = layout.objective(&next, target);

        let step: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if f_next > f_x {
            // restart momentum from the current point
            momentum = 1.0;
            y.copy_from_slice(&x);
            continue;
        }
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / m_next;
        for s in 0..n_sub {
            y[s] = next[s] + beta * (next[s] - x[s]);
        }
        momentum = m_next;
        x.copy_from_slice(&next);
        f_x = f_next;
        if f_x < 1e-28 || step < 1e-14 {
            break;
        }
    }
    (f_x, x)
}

/// Rounds `C * x_S` to integer channel counts summing to `C` by largest
/// remainder (ties go to the lower subset index), then lays channels out in
/// ascending subset order.
pub fn round_to_mask(alloc: &SubsetAllocation, n_channels: usize) -> Result<ChannelMask> {
    let counts = largest_remainder(&alloc.fractions, n_channels)?;
    let mut subsets = Vec::with_capacity(n_channels);
    for (s, &count) in counts.iter().enumerate() {
        subsets.extend(std::iter::repeat_n(s as u32, count));
    }
    ChannelMask::from_channel_subsets(alloc.n_tasks, &subsets)
}

fn largest_remainder(fractions: &[f64], total: usize) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::Config("mask needs at least one channel".into()));
    }
    let sum: f64 = fractions.iter().sum();
    let scaled: Vec<f64> = fractions.iter().map(|x| x / sum * total as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();

    let mut order: Vec<usize> = (0..fractions.len()).collect();
    let remainder = |s: usize| scaled[s] - scaled[s].floor();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)));
    if assigned <= total {
        for &s in order.iter().take(total - assigned) {
            counts[s] += 1;
        }
    } else {
        // only reachable through accumulated rounding in the normalization
        let mut excess = assigned - total;
        for &s in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[s] > 0 {
                counts[s] -= 1;
                excess -= 1;
            }
        }
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), total);
    Ok(counts)
}

/// Outcome of mask synthesis: the mask, what it achieves and how far that is
/// from the target.
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub mask: ChannelMask,
    pub target: FeasibleSpec,
    pub achieved: SharingSpec,
    /// Row-major `N x N` absolute differences between achieved and target.
    pub elementwise_abs_error: Vec<f64>,
    pub median_error: f64,
    pub max_error: f64,
    pub moves_accepted: usize,
    /// Squared-error objective after the initial state and each accepted move.
    pub objective_trace: Vec<f64>,
}

impl SynthesisReport {
    fn build(mask: ChannelMask, target: FeasibleSpec, moves_accepted: usize, objective_trace: Vec<f64>) -> Self {
        let achieved = gram(&mask);
        let n = target.n_tasks();
        let elementwise_abs_error: Vec<f64> = achieved
            .values()
            .iter()
            .zip(target.values())
            .map(|(a, t)| (a - t).abs())
            .collect();
        let mut population: Vec<f64> = upper_pairs(n).map(|(i, j)| elementwise_abs_error[i * n + j]).collect();
        population.sort_unstable_by(f64::total_cmp);
        let median_error = median_sorted(&population);
        let max_error = population.last().copied().unwrap_or(0.0);
        SynthesisReport {
            mask,
            target,
            achieved,
            elementwise_abs_error,
            median_error,
            max_error,
            moves_accepted,
            objective_trace,
        }
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 0 {
        return 0.0;
    }
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Greedy polish: for each channel in turn, move it to the subset that most
/// reduces the squared error, if any strictly does. Stops after `max_passes`
/// sweeps over all channels or a sweep with no accepted move.
pub fn refine(mask: &ChannelMask, target: &FeasibleSpec, max_passes: usize) -> Result<SynthesisReport> {
    let n = target.n_tasks();
    if mask.n_tasks() != n {
        return Err(Error::TaskMismatch {
            left: mask.n_tasks(),
            right: n,
        });
    }
    check_task_count(n)?;
    let layout = SubsetLayout::new(n);
    let t = target_vector(target);
    let c = mask.n_channels();
    let scale = c as f64;

    let mut subsets: Vec<usize> = (0..c)
        .map(|ch| {
            mask.row(ch)
                .iter()
                .enumerate()
                .fold(0usize, |acc, (task, &b)| acc | ((b as usize) << task))
        })
        .collect();
    let mut counts = vec![0i64; layout.n_entries];
    for &s in &subsets {
        for &e in layout.entries_of(s) {
            counts[e as usize] += 1;
        }
    }
    let error_of = |counts: &[i64]| -> Vec<f64> {
        counts.iter().zip(&t).map(|(&k, &tv)| k as f64 / scale - tv).collect()
    };
    let sse = |err: &[f64]| err.iter().map(|e| e * e).sum::<f64>();

    let n_sub = layout.n_subsets();
    let sizes: Vec<f64> = (0..n_sub).map(|s| layout.entries_of(s).len() as f64).collect();
    let mut err = error_of(&counts);
    let mut current = sse(&err);
    let mut trace = vec![current];
    let mut score = vec![0.0; n_sub];
    layout.apply_transpose(&err, &mut score);

    let mut moves = 0;
    for _ in 0..max_passes {
        let mut improved = false;
        for ch in 0..c {
            let from = subsets[ch];
            let mut best = (0.0, from);
            for to in 0..n_sub {
                if to == from {
                    continue;
                }
                let shared = layout.entries_of(from & to).len() as f64;
                let delta = 2.0 * (score[to] - score[from]) / scale
                    + (sizes[to] + sizes[from] - 2.0 * shared) / (scale * scale);
                if delta < best.0 {
                    best = (delta, to);
                }
            }
            let (delta, to) = best;
            // guard against accepting rounding noise as an improvement
            if to == from || delta > -1e-12 {
                continue;
            }
            let mut next_counts = counts.clone();
            for &e in layout.entries_of(from) {
                next_counts[e as usize] -= 1;
            }
            for &e in layout.entries_of(to) {
                next_counts[e as usize] += 1;
            }
            let next_err = error_of(&next_counts);
            let next = sse(&next_err);
            if next >= current {
                continue;
            }
            subsets[ch] = to;
            counts = next_counts;
            err = next_err;
            current = next;
            trace.push(current);
            layout.apply_transpose(&err, &mut score);
            moves += 1;
            improved = true;
        }
        if !improved {
            break;
        }
    }

    let subsets: Vec<u32> = subsets.into_iter().map(|s| s as u32).collect();
    let mask = ChannelMask::from_channel_subsets(n, &subsets)?;
    Ok(SynthesisReport::build(mask, target.clone(), moves, trace))
}

/// Finds a channel mask whose Gram matrix approximates `target`.
pub fn synthesize(target: &FeasibleSpec, n_channels: usize) -> Result<SynthesisReport> {
    synthesize_with(target, n_channels, &SynthesisOptions::default())
}

pub fn synthesize_with(target: &FeasibleSpec, n_channels: usize, opts: &SynthesisOptions) -> Result<SynthesisReport> {
    let alloc = solve_fractions_with(target, opts)?;
    let mask = round_to_mask(&alloc, n_channels)?;
    refine(&mask, target, opts.max_passes)
}

fn write_matrix(f: &mut fmt::Formatter<'_>, n: usize, values: &[f64]) -> fmt::Result {
    for i in 0..n {
        let row: Vec<String> = values[i * n..(i + 1) * n].iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Sectioned text report: summary statistics, then `[target]`,
/// `[achieved]`, `[abs_error]` and `[mask]` blocks.
impl fmt::Display for SynthesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.target.n_tasks();
        writeln!(f, "median_error {}", self.median_error)?;
        writeln!(f, "max_error {}", self.max_error)?;
        writeln!(f, "moves_accepted {}", self.moves_accepted)?;
        writeln!(f, "[target]")?;
        write!(f, "{}", self.target)?;
        writeln!(f, "[achieved]")?;
        write!(f, "{}", self.achieved)?;
        writeln!(f, "[abs_error]")?;
        write_matrix(f, n, &self.elementwise_abs_error)?;
        writeln!(f, "[mask]")?;
        write!(f, "{}", self.mask)
    }
}
