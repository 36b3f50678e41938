//! Sharing specifications, channel masks and the maps between them.
//!
//! A [`SharingSpec`] is an `N x N` symmetric matrix whose diagonal gives the
//! fraction of channels each task uses and whose off-diagonals give the
//! fraction of channels shared by a pair of tasks. [`constrain`] remaps the
//! off-diagonals into the band that a binary channel mask could actually
//! realize, producing a [`FeasibleSpec`]. [`gram`] goes the other way, from a
//! concrete [`ChannelMask`] to the spec it achieves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form shared by both spec types.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixRepr {
    n_tasks: usize,
    values: Vec<f64>,
}

/// Symmetric `N x N` matrix of usage (diagonal) and sharing (off-diagonal)
/// fractions, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct SharingSpec {
    n_tasks: usize,
    values: Vec<f64>,
}

impl TryFrom<MatrixRepr> for SharingSpec {
    type Error = Error;
    fn try_from(repr: MatrixRepr) -> Result<Self> {
        SharingSpec::new(repr.n_tasks, repr.values)
    }
}

impl From<SharingSpec> for MatrixRepr {
    fn from(spec: SharingSpec) -> Self {
        MatrixRepr {
            n_tasks: spec.n_tasks,
            values: spec.values,
        }
    }
}

/// Number of independent coordinates (diagonal plus upper triangle).
pub fn n_free(n_tasks: usize) -> usize {
    n_tasks * (n_tasks + 1) / 2
}

/// Iterates the `(i, j)` pairs with `i <= j` in row-major order. This is the
/// coordinate order used by [`SharingSpec::free_coords`].
pub fn upper_pairs(n_tasks: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_tasks).flat_map(move |i| (i..n_tasks).map(move |j| (i, j)))
}

impl SharingSpec {
    /// Builds a spec from a row-major `n_tasks * n_tasks` buffer, rejecting
    /// asymmetric, non-finite or out-of-range input.
    pub fn new(n_tasks: usize, values: Vec<f64>) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        if values.len() != n_tasks * n_tasks {
            return Err(Error::Shape {
                expected: n_tasks * n_tasks,
                got: values.len(),
            });
        }
        for i in 0..n_tasks {
            for j in 0..n_tasks {
                let v = values[i * n_tasks + j];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                if v != values[j * n_tasks + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(SharingSpec { n_tasks, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(n, values)
    }

    /// Builds a spec from its independent coordinates, clamping each to
    /// `[0, 1]` and mirroring the upper triangle.
    pub fn from_free(n_tasks: usize, free: &[f64]) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        if free.len() != n_free(n_tasks) {
            return Err(Error::Shape {
                expected: n_free(n_tasks),
                got: free.len(),
            });
        }
        let mut values = vec![0.0; n_tasks * n_tasks];
        for ((i, j), &v) in upper_pairs(n_tasks).zip(free) {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            let v = v.clamp(0.0, 1.0);
            values[i * n_tasks + j] = v;
            values[j * n_tasks + i] = v;
        }
        Ok(SharingSpec { n_tasks, values })
    }

    /// Constant matrix with `diag` on the diagonal and `off` elsewhere.
    pub fn uniform(n_tasks: usize, diag: f64, off: f64) -> Result<Self> {
        let mut values = vec![off; n_tasks * n_tasks];
        for i in 0..n_tasks {
            values[i * n_tasks + i] = diag;
        }
        Self::new(n_tasks, values)
    }

    pub fn free_coords(&self) -> Vec<f64> {
        upper_pairs(self.n_tasks).map(|(i, j)| self.get(i, j)).collect()
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_tasks + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_tasks).map(|i| self.get(i, i)).collect()
    }

    pub fn avg_usage(&self) -> f64 {
        avg_usage(self)
    }
}

impl AsRef<SharingSpec> for SharingSpec {
    fn as_ref(&self) -> &SharingSpec {
        self
    }
}

/// The `[lo, hi]` range of pairwise overlap achievable by two tasks using
/// fractions `di` and `dj` of the channels: `max(0, di + dj - 1)` and
/// `min(di, dj)`.
///
/// `lo` is the smallest double not below the exact real bound, so comparing
/// against it decides feasibility exactly. It never exceeds `hi` and is
/// symmetric in its arguments.
#[inline]
pub fn overlap_band(di: f64, dj: f64) -> (f64, f64) {
    let (small, large) = if di <= dj { (di, dj) } else { (dj, di) };
    if large < 0.5 {
        return (0.0, small);
    }
    // 1 - large is exact here; recover the rounding error of the subtraction
    let d = 1.0 - large;
    let s = small - d;
    let bb = s - small;
    let err = (small - (s - bb)) + (-d - bb);
    let lo = if err > 0.0 { s.next_up() } else { s };
    (lo.max(0.0), small)
}

/// A sharing spec whose off-diagonals respect the inclusion-exclusion bounds
/// implied by its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct FeasibleSpec(SharingSpec);

impl TryFrom<MatrixRepr> for FeasibleSpec {
    type Error = Error;
    fn try_from(repr: MatrixRepr) -> Result<Self> {
        FeasibleSpec::new(SharingSpec::new(repr.n_tasks, repr.values)?)
    }
}

impl From<FeasibleSpec> for MatrixRepr {
    fn from(spec: FeasibleSpec) -> Self {
        spec.0.into()
    }
}

impl FeasibleSpec {
    /// Accepts `spec` only if every off-diagonal lies inside its band.
    pub fn new(spec: SharingSpec) -> Result<Self> {
        let n = spec.n_tasks;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (lo, hi) = overlap_band(spec.get(i, i), spec.get(j, j));
                let v = spec.get(i, j);
                if v < lo || v > hi {
                    return Err(Error::Infeasible {
                        row: i,
                        col: j,
                        value: v,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(FeasibleSpec(spec))
    }

    /// Clips every off-diagonal into its band. Unlike [`constrain`], values
    /// already inside the band are left untouched.
    pub fn project(spec: &SharingSpec) -> Self {
        let n = spec.n_tasks;
        let mut values = spec.values.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (lo, hi) = overlap_band(spec.get(i, i), spec.get(j, j));
                    values[i * n + j] = values[i * n + j].clamp(lo, hi);
                }
            }
        }
        FeasibleSpec(SharingSpec { n_tasks: n, values })
    }

    pub fn as_sharing(&self) -> &SharingSpec {
        &self.0
    }

    pub fn into_sharing(self) -> SharingSpec {
        self.0
    }

    pub fn n_tasks(&self) -> usize {
        self.0.n_tasks
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal()
    }

    pub fn avg_usage(&self) -> f64 {
        avg_usage(self)
    }
}

impl AsRef<SharingSpec> for FeasibleSpec {
    fn as_ref(&self) -> &SharingSpec {
        &self.0
    }
}

/// Remaps each off-diagonal from `[0, 1]` onto the feasible overlap band of
/// its pair: raw 0 becomes the minimum possible overlap and raw 1 the maximum.
/// The diagonal is copied unchanged.
pub fn constrain(spec: &SharingSpec) -> FeasibleSpec {
    let n = spec.n_tasks;
    let mut values = spec.values.clone();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (lo, hi) = overlap_band(spec.get(i, i), spec.get(j, j));
            values[i * n + j] = remap(spec.get(i, j), lo, hi);
        }
    }
    FeasibleSpec(SharingSpec { n_tasks: n, values })
}

/// `lo + raw * (hi - lo)`, monotone in `raw`, with the endpoints hit exactly.
#[inline]
fn remap(raw: f64, lo: f64, hi: f64) -> f64 {
    let raw = raw.clamp(0.0, 1.0);
    if raw >= 1.0 {
        return hi;
    }
    (lo + raw * (hi - lo)).clamp(lo, hi)
}

/// Mean of the diagonal: the average fraction of channels used per task.
pub fn avg_usage<S: AsRef<SharingSpec> + ?Sized>(spec: &S) -> f64 {
    let spec = spec.as_ref();
    let n = spec.n_tasks;
    (0..n).map(|i| spec.get(i, i)).sum::<f64>() / n as f64
}

/// Binary `C x N` assignment of channels to tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMask {
    n_channels: usize,
    n_tasks: usize,
    bits: Vec<u8>,
}

impl ChannelMask {
    /// Row-major `n_channels * n_tasks` buffer of 0/1 entries.
    pub fn new(n_channels: usize, n_tasks: usize, bits: Vec<u8>) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::NoTasks);
        }
        if n_channels == 0 {
            return Err(Error::Config("mask needs at least one channel".into()));
        }
        if bits.len() != n_channels * n_tasks {
            return Err(Error::Shape {
                expected: n_channels * n_tasks,
                got: bits.len(),
            });
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::NonBinary {
                channel: pos / n_tasks,
                task: pos % n_tasks,
            });
        }
        Ok(ChannelMask {
            n_channels,
            n_tasks,
            bits,
        })
    }

    /// One subset bitset per channel; bit `t` set means task `t` uses it.
    pub fn from_channel_subsets(n_tasks: usize, subsets: &[u32]) -> Result<Self> {
        if n_tasks > 32 {
            return Err(Error::TooManyTasks {
                max: 32,
                got: n_tasks,
            });
        }
        let bits = subsets
            .iter()
            .flat_map(|&s| (0..n_tasks).map(move |t| ((s >> t) & 1) as u8))
            .collect();
        Self::new(subsets.len(), n_tasks, bits)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    #[inline]
    pub fn get(&self, channel: usize, task: usize) -> bool {
        self.bits[channel * self.n_tasks + task] == 1
    }

    pub fn row(&self, channel: usize) -> &[u8] {
        &self.bits[channel * self.n_tasks..(channel + 1) * self.n_tasks]
    }

    pub fn column(&self, task: usize) -> Vec<bool> {
        (0..self.n_channels).map(|c| self.get(c, task)).collect()
    }

    /// Number of channels used by `task`.
    pub fn task_count(&self, task: usize) -> usize {
        (0..self.n_channels).filter(|&c| self.get(c, task)).count()
    }
}

/// `(1/C) MᵀM`: diagonal is per-task usage, off-diagonals pairwise sharing.
pub fn gram(mask: &ChannelMask) -> SharingSpec {
    let n = mask.n_tasks;
    let mut counts = vec![0usize; n * n];
    for c in 0..mask.n_channels {
        let row = mask.row(c);
        for i in 0..n {
            if row[i] == 0 {
                continue;
            }
            for j in i..n {
                if row[j] == 1 {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let scale = mask.n_channels as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = counts[i * n + j] as f64 / scale;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    SharingSpec {
        n_tasks: n,
        values,
    }
}

/// Forward and backward channel masks for one task. The backward support is
/// always a subset of the forward support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskMaskPair {
    forward: Vec<bool>,
    backward: Vec<bool>,
}

impl TaskMaskPair {
    pub fn new(forward: Vec<bool>, backward: Vec<bool>) -> Result<Self> {
        if forward.len() != backward.len() {
            return Err(Error::Dimension(format!(
                "forward mask has {} channels, backward has {}",
                forward.len(),
                backward.len()
            )));
        }
        if let Some(c) = (0..forward.len()).find(|&c| backward[c] && !forward[c]) {
            return Err(Error::Dimension(format!(
                "backward mask enables channel {c} which the forward mask disables"
            )));
        }
        Ok(TaskMaskPair { forward, backward })
    }

    /// Same mask for both passes.
    pub fn full(forward: Vec<bool>) -> Self {
        TaskMaskPair {
            backward: forward.clone(),
            forward,
        }
    }

    pub fn forward(&self) -> &[bool] {
        &self.forward
    }

    pub fn backward(&self) -> &[bool] {
        &self.backward
    }

    pub fn n_channels(&self) -> usize {
        self.forward.len()
    }
}

/// Extracts the masks of `task`. With `trainable_only_owned`, the backward
/// mask keeps only channels no other task uses.
pub fn task_masks(mask: &ChannelMask, task: usize, trainable_only_owned: bool) -> Result<TaskMaskPair> {
    if task >= mask.n_tasks {
        return Err(Error::TaskIndex {
            index: task,
            n_tasks: mask.n_tasks,
        });
    }
    let forward = mask.column(task);
    let backward = if trainable_only_owned {
        (0..mask.n_channels)
            .map(|c| forward[c] && mask.row(c).iter().map(|&b| b as usize).sum::<usize>() == 1)
            .collect()
    } else {
        forward.clone()
    };
    Ok(TaskMaskPair { forward, backward })
}

fn content_lines(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_header(
    line: Option<(usize, &str)>,
    keys: &[&str],
) -> Result<(usize, Vec<usize>)> {
    let (lineno, text) = line.ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != keys.len() * 2 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected header `{}`", keys.join(" <n> ")),
        });
    }
    let mut out = Vec::new();
    for (pair, key) in tokens.chunks(2).zip(keys) {
        if pair[0] != *key {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `{key}`, found `{}`", pair[0]),
            });
        }
        out.push(pair[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad count `{}`", pair[1]),
        })?);
    }
    Ok((lineno, out))
}

/// Text form: an `n_tasks N` header followed by `N` rows of decimals.
impl fmt::Display for SharingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n_tasks {}", self.n_tasks)?;
        for i in 0..self.n_tasks {
            let row: Vec<String> = (0..self.n_tasks).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for SharingSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = content_lines(s);
        let (_, counts) = parse_header(lines.next(), &["n_tasks"])?;
        let n = counts[0];
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n {
            let (lineno, text) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("expected {n} matrix rows"),
            })?;
            let row: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno,
                    msg: e.to_string(),
                })?;
            if row.len() != n {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {n} values, found {}", row.len()),
                });
            }
            values.extend(row);
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(Error::Parse {
                line: lineno,
                msg: "trailing content".into(),
            });
        }
        SharingSpec::new(n, values)
    }
}

impl fmt::Display for FeasibleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Text form: an `n_channels C n_tasks N` header followed by one row of
/// `N` binary digits per channel.
impl fmt::Display for ChannelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n_channels {} n_tasks {}", self.n_channels, self.n_tasks)?;
        for c in 0..self.n_channels {
            let row: String = self.row(c).iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl FromStr for ChannelMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = content_lines(s);
        let (_, counts) = parse_header(lines.next(), &["n_channels", "n_tasks"])?;
        let (c, n) = (counts[0], counts[1]);
        let mut bits = Vec::with_capacity(c * n);
        for _ in 0..c {
            let (lineno, text) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("expected {c} channel rows"),
            })?;
            if text.chars().count() != n {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {n} digits"),
                });
            }
            for ch in text.chars() {
                bits.push(match ch {
                    '0' => 0,
                    '1' => 1,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("unexpected `{other}`"),
                        })
                    }
                });
            }
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(Error::Parse {
                line: lineno,
                msg: "trailing content".into(),
            });
        }
        ChannelMask::new(c, n, bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_task_mask() -> ChannelMask {
        // task0 owns {0,1}, task1 owns {1,2}
        ChannelMask::new(4, 2, vec![1, 0, 1, 1, 0, 1, 0, 0]).unwrap()
    }

    #[test]
    fn constrain_half_usage_scales_offdiag() {
        for x in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let p = SharingSpec::from_rows(&[vec![0.5, x], vec![x, 0.5]]).unwrap();
            let q = constrain(&p);
            assert_eq!(q.get(0, 1), 0.5 * x);
            assert_eq!(q.get(1, 0), 0.5 * x);
            assert_eq!(q.diagonal(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn full_usage_forces_full_overlap() {
        for p in [0.0, 0.3, 1.0] {
            let s = SharingSpec::from_rows(&[vec![1.0, p], vec![p, 1.0]]).unwrap();
            assert_eq!(constrain(&s).values(), &[1.0, 1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn three_task_midpoints() {
        let d = [0.9, 0.6, 0.3];
        let mut rows = vec![vec![0.5; 3]; 3];
        for i in 0..3 {
            rows[i][i] = d[i];
        }
        let q = constrain(&SharingSpec::from_rows(&rows).unwrap());
        // (0.9,0.6): [0.5,0.6]; (0.9,0.3): [0.2,0.3]; (0.6,0.3): [0,0.3]
        let expected = [[0.9, 0.55, 0.25], [0.55, 0.6, 0.15], [0.25, 0.15, 0.3]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((q.get(i, j) - expected[i][j]).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            SharingSpec::from_rows(&[vec![0.5, 0.1], vec![0.2, 0.5]]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            SharingSpec::from_rows(&[vec![1.5]]),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            SharingSpec::from_rows(&[vec![f64::NAN]]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(SharingSpec::new(0, vec![]), Err(Error::NoTasks)));
        let bad = SharingSpec::from_rows(&[vec![0.5, 0.9], vec![0.9, 0.5]]).unwrap();
        assert!(matches!(FeasibleSpec::new(bad), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn free_coords_clamp_and_mirror() {
        let s = SharingSpec::from_free(2, &[1.2, -0.1, 0.4]).unwrap();
        assert_eq!(s.values(), &[1.0, 0.0, 0.0, 0.4]);
        assert_eq!(s.free_coords(), vec![1.0, 0.0, 0.4]);
    }

    #[test]
    fn gram_of_small_mask() {
        let g = gram(&two_task_mask());
        assert_eq!(g.values(), &[0.5, 0.25, 0.25, 0.5]);
        let zero = ChannelMask::new(3, 2, vec![0; 6]).unwrap();
        assert!(gram(&zero).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn avg_usage_examples() {
        assert_eq!(SharingSpec::uniform(3, 1.0, 0.2).unwrap().avg_usage(), 1.0);
        let s = SharingSpec::from_rows(&[
            vec![0.2, 0.0, 0.0],
            vec![0.0, 0.4, 0.0],
            vec![0.0, 0.0, 0.6],
        ])
        .unwrap();
        assert!((s.avg_usage() - 0.4).abs() < 1e-15);
        assert_eq!(SharingSpec::uniform(9, 1.0, 1.0).unwrap().avg_usage(), 1.0);
    }

    #[test]
    fn task_mask_policies() {
        let m = two_task_mask();
        let shared = task_masks(&m, 0, false).unwrap();
        assert_eq!(shared.forward(), &[true, true, false, false]);
        assert_eq!(shared.backward(), shared.forward());
        let owned = task_masks(&m, 0, true).unwrap();
        assert_eq!(owned.backward(), &[true, false, false, false]);

        let all = ChannelMask::new(3, 2, vec![1; 6]).unwrap();
        for t in 0..2 {
            assert!(task_masks(&all, t, true).unwrap().backward().iter().all(|&b| !b));
        }
        assert!(matches!(task_masks(&m, 2, false), Err(Error::TaskIndex { .. })));
    }

    #[test]
    fn mask_pair_rejects_backward_outside_forward() {
        assert!(TaskMaskPair::new(vec![true, false], vec![false, true]).is_err());
        assert!(TaskMaskPair::new(vec![true, false], vec![true, false]).is_ok());
    }

    #[test]
    fn text_formats_parse_back() {
        let s = SharingSpec::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.7]]).unwrap();
        let text = s.to_string();
        assert!(text.starts_with("n_tasks 2\n"));
        assert_eq!(text.parse::<SharingSpec>().unwrap(), s);

        let m = two_task_mask();
        let text = m.to_string();
        assert_eq!(text, "n_channels 4 n_tasks 2\n10\n11\n01\n00\n");
        assert_eq!(text.parse::<ChannelMask>().unwrap(), m);

        assert!("n_tasks 2\n0.1 0.2\n".parse::<SharingSpec>().is_err());
        assert!("n_channels 1 n_tasks 2\n12\n".parse::<ChannelMask>().is_err());
    }

    #[test]
    fn nonbinary_mask_rejected() {
        assert!(matches!(
            ChannelMask::new(1, 2, vec![1, 2]),
            Err(Error::NonBinary { channel: 0, task: 1 })
        ));
    }
}
