//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use feature_partition::eval::{Mlp, ToyDistillationSetup};
use feature_partition::partition::{ChannelMask, FeasibleSpec, SharingSpec, TaskMaskPair};
use nalgebra::{DMatrix, DVector};

/// `(1/C) Σ_c M[c,i] M[c,j]` computed entry by entry.
pub fn brute_gram(mask: &ChannelMask) -> Vec<f64> {
    let n = mask.n_tasks();
    let c = mask.n_channels();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for ch in 0..c {
                if mask.get(ch, i) && mask.get(ch, j) {
                    s += 1.0;
                }
            }
            out[i * n + j] = s / c as f64;
        }
    }
    out
}

/// Design matrix of the subset least-squares problem: one row per entry
/// `(i, j)`, `i <= j`, one column per subset bitset.
pub fn subset_design(n: usize) -> (DMatrix<f64>, Vec<(usize, usize)>) {
    let mut pairs = vec![];
    for i in 0..n {
        for j in i..n {
            pairs.push((i, j));
        }
    }
    let cols = 1usize << n;
    let a = DMatrix::from_fn(pairs.len(), cols, |r, s| {
        let (i, j) = pairs[r];
        if s >> i & 1 == 1 && s >> j & 1 == 1 {
            1.0
        } else {
            0.0
        }
    });
    (a, pairs)
}

pub fn target_vec(target: &FeasibleSpec, pairs: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| target.get(i, j)))
}

/// Exact minimum of `||A x - t||²` over the probability simplex, by
/// enumerating every support whose columns are affinely independent and
/// solving the equality-constrained problem on it.
pub fn active_set_minimum(target: &FeasibleSpec) -> f64 {
    let n = target.n_tasks();
    let (a, pairs) = subset_design(n);
    let t = target_vec(target, &pairs);
    let cols = a.ncols();
    let mut best = f64::INFINITY;
    for support in 1u64..(1u64 << cols) {
        let idx: Vec<usize> = (0..cols).filter(|&s| support >> s & 1 == 1).collect();
        let k = idx.len();
        if k > a.nrows() + 1 {
            continue;
        }
        let a_s = DMatrix::from_fn(a.nrows(), k, |r, c| a[(r, idx[c])]);
        let mut aug = DMatrix::zeros(a.nrows() + 1, k);
        aug.view_mut((0, 0), (a.nrows(), k)).copy_from(&a_s);
        aug.row_mut(a.nrows()).fill(1.0);
        let sv = aug.clone().svd(false, false).singular_values;
        if sv.iter().any(|&v| v < 1e-9) {
            continue;
        }
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&(a_s.transpose() * &a_s * 2.0));
        for c in 0..k {
            kkt[(c, k)] = 1.0;
            kkt[(k, c)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs.rows_mut(0, k).copy_from(&(a_s.transpose() * &t * 2.0));
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, k);
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let r = &a_s * x - &t;
        best = best.min(r.norm_squared());
    }
    best
}

/// Minimum over a regular grid of the simplex with resolution `1/h`.
pub fn grid_minimum(target: &FeasibleSpec, h: usize) -> f64 {
    let n = target.n_tasks();
    let (a, pairs) = subset_design(n);
    let t = target_vec(target, &pairs);
    let cols = a.ncols();
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; cols];
    fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, h: usize, a: &DMatrix<f64>, t: &DVector<f64>, best: &mut f64) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let x = DVector::from_iterator(counts.len(), counts.iter().map(|&c| c as f64 / h as f64));
            *best = best.min((a * x - t).norm_squared());
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, h, a, t, best);
        }
    }
    rec(0, h, &mut counts, h, &a, &t, &mut best);
    best
}

/// Mean of the per-element squared error over the whole output, as a plain
/// double loop.
pub fn loss(net: &Mlp, x: &[f64], mask: &[bool], target: &[f64]) -> f64 {
    let out = net.masked_forward(x, mask).unwrap().output;
    out.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / out.len() as f64
}

/// Central-difference gradient of `loss` with respect to every parameter.
pub fn numeric_gradient(net: &Mlp, x: &[f64], masks: &TaskMaskPair, target: &[f64], h: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = vec![];
    for l in 0..net.layers.len() {
        let mut gw = vec![0.0; net.layers[l].weight.len()];
        let mut gb = vec![0.0; net.layers[l].bias.len()];
        for k in 0..gw.len() {
            let mut p = net.clone();
            p.layers[l].weight[k] += h;
            let up = loss(&p, x, masks.forward(), target);
            p.layers[l].weight[k] -= 2.0 * h;
            let down = loss(&p, x, masks.forward(), target);
            gw[k] = (up - down) / (2.0 * h);
        }
        for k in 0..gb.len() {
            let mut p = net.clone();
            p.layers[l].bias[k] += h;
            let up = loss(&p, x, masks.forward(), target);
            p.layers[l].bias[k] -= 2.0 * h;
            let down = loss(&p, x, masks.forward(), target);
            gb[k] = (up - down) / (2.0 * h);
        }
        out.push((gw, gb));
    }
    out
}

/// Average ranks (ties share the mean rank).
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation as the Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

pub fn spec(rows: &[&[f64]]) -> SharingSpec {
    SharingSpec::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Exact check of `max(0, di + dj - 1) <= p <= min(di, dj)` in rational
/// arithmetic.
pub fn exactly_in_band(p: f64, di: f64, dj: f64) -> bool {
    use num_rational::BigRational;
    let q = |v: f64| BigRational::from_float(v).expect("finite");
    let (p, a, b) = (q(p), q(di), q(dj));
    let zero = q(0.0);
    let lo = (&a + &b - q(1.0)).max(zero);
    let hi = a.min(b);
    lo <= p && p <= hi
}

/// Zeroes the entries the backward mask forbids, mirroring the documented rule.
pub fn restrict(grads: &mut [(Vec<f64>, Vec<f64>)], net: &Mlp, keep: &[bool]) {
    for l in 0..net.layers.len() {
        let (inputs, outputs) = (net.layers[l].inputs, net.layers[l].outputs);
        let (w, b) = &mut grads[l];
        if net.is_masked_site(l) {
            for o in (0..outputs).filter(|&o| !keep[o]) {
                b[o] = 0.0;
                w[o * inputs..(o + 1) * inputs].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if l > 0 && net.is_masked_site(l - 1) {
            for i in (0..inputs).filter(|&i| !keep[i]) {
                for o in 0..outputs {
                    w[o * inputs + i] = 0.0;
                }
            }
        }
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `(layer, is_bias, index)` of every parameter touching a channel only
/// `task` uses.
pub fn owned_entries(setup: &ToyDistillationSetup, mask: &ChannelMask, task: usize) -> Vec<(usize, bool, usize)> {
    let net = setup.student_init();
    let owned: Vec<usize> = (0..mask.n_channels())
        .filter(|&c| mask.get(c, task) && mask.row(c).iter().filter(|&&b| b == 1).count() == 1)
        .collect();
    let mut out = vec![];
    for l in 0..net.layers.len() {
        let layer = &net.layers[l];
        if net.is_masked_site(l) {
            for &c in &owned {
                out.push((l, true, c));
                out.extend((0..layer.inputs).map(|i| (l, false, c * layer.inputs + i)));
            }
        }
        if l > 0 && net.is_masked_site(l - 1) {
            for &c in &owned {
                out.extend((0..layer.outputs).map(|o| (l, false, o * layer.inputs + c)));
            }
        }
    }
    out
}

pub fn param(net: &Mlp, (l, bias, k): (usize, bool, usize)) -> f64 {
    if bias {
        net.layers[l].bias[k]
    } else {
        net.layers[l].weight[k]
    }
}
