//! Small fully connected ReLU network with channel masks.
//!
//! Masks act on the hidden activations after every other layer: after layer
//! `l` whenever `l` is even and `l` is not the output layer. With that layout
//! every weight matrix is indexed by a masked dimension on one side, so tasks
//! with disjoint masks touch disjoint weights.
//!
//! Batches are flat row-major buffers of `batch * dim` values.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::partition::TaskMaskPair;

/// Affine layer `y = W x + b` with `W` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-initialized weights, small uniform biases.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        let weight = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        let bias = (0..outputs).map(|_| rng.random_range(-0.1..0.1)).collect();
        Dense {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    #[inline]
    pub fn w(&self, out: usize, inp: usize) -> f64 {
        self.weight[out * self.inputs + inp]
    }

    fn apply(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut z = vec![0.0; batch * self.outputs];
        for b in 0..batch {
            let xb = &x[b * self.inputs..(b + 1) * self.inputs];
            for o in 0..self.outputs {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(xb) {
                    acc += w * v;
                }
                z[b * self.outputs + o] = acc + self.bias[o];
            }
        }
        z
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub batch: usize,
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let layers = dims.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Whether a mask is applied after layer `l`.
    pub fn is_masked_site(&self, l: usize) -> bool {
        l.is_multiple_of(2) && l + 1 < self.layers.len()
    }

    pub fn masked_sites(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&l| self.is_masked_site(l)).collect()
    }

    fn check_mask(&self, mask: &[bool]) -> Result<()> {
        for l in self.masked_sites() {
            if self.layers[l].outputs != mask.len() {
                return Err(Error::Dimension(format!(
                    "layer {l} has {} outputs but the mask has {} channels",
                    self.layers[l].outputs,
                    mask.len()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if !x.len().is_multiple_of(d) {
            return Err(Error::Dimension(format!("input length {} is not a multiple of {d}", x.len())));
        }
        Ok(x.len() / d)
    }

    /// Unmasked forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = self.check_input(x)?;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h, batch);
            if l + 1 < self.layers.len() {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Forward pass zeroing every channel with `mask[c] == false` at each
    /// masked site.
    pub fn masked_forward(&self, x: &[f64], mask: &[bool]) -> Result<ForwardTrace> {
        self.check_mask(mask)?;
        let batch = self.check_input(x)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h, batch);
            inputs.push(std::mem::take(&mut h));
            h = if l + 1 == n {
                z.clone()
            } else if self.is_masked_site(l) {
                z.iter()
                    .enumerate()
                    .map(|(k, &v)| if mask[k % layer.outputs] { v.max(0.0) } else { 0.0 })
                    .collect()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            pre.push(z);
        }
        Ok(ForwardTrace {
            batch,
            inputs,
            pre,
            output: h,
        })
    }

    /// Backpropagates `grad_output` (dLoss/dOutput) through a recorded pass.
    ///
    /// The forward mask gates the activations exactly as in the forward pass.
    /// The backward mask then zeroes every weight row (layer feeding a masked
    /// site) or column (layer reading from a masked site) and bias entry that
    /// touches a channel the task may not update.
    pub fn masked_backward(&self, trace: &ForwardTrace, grad_output: &[f64], masks: &TaskMaskPair) -> Result<Vec<Dense>> {
        self.check_mask(masks.forward())?;
        let batch = trace.batch;
        let n = self.layers.len();
        if grad_output.len() != batch * self.output_dim() {
            return Err(Error::Dimension("gradient does not match the output shape".into()));
        }
        let forward = masks.forward();
        let backward = masks.backward();
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut delta = grad_output.to_vec();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if l + 1 < n {
                let site = self.is_masked_site(l);
                for (k, d) in delta.iter_mut().enumerate() {
                    let active = trace.pre[l][k] > 0.0 && (!site || forward[k % layer.outputs]);
                    if !active {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads[l];
            let input = &trace.inputs[l];
            for b in 0..batch {
                let db = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let xb = &input[b * layer.inputs..(b + 1) * layer.inputs];
                for (o, &d) in db.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &v) in row.iter_mut().zip(xb) {
                        *gw += d * v;
                    }
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; batch * layer.inputs];
                for b in 0..batch {
                    for o in 0..layer.outputs {
                        let d = delta[b * layer.outputs + o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                        let pb = &mut prev[b * layer.inputs..(b + 1) * layer.inputs];
                        for (p, &w) in pb.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                delta = prev;
            }
        }
        for l in 0..n {
            let g = &mut grads[l];
            if self.is_masked_site(l) {
                for (o, &keep) in backward.iter().enumerate() {
                    if !keep {
                        g.bias[o] = 0.0;
                        g.weight[o * g.inputs..(o + 1) * g.inputs].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
            if l > 0 && self.is_masked_site(l - 1) {
                for (i, &keep) in backward.iter().enumerate() {
                    if !keep {
                        for o in 0..g.outputs {
                            g.weight[o * g.inputs + i] = 0.0;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Physically removes the channels with `keep[c] == false` at every masked
    /// site. The result computes the same function as `masked_forward` with
    /// `keep` as the forward mask.
    pub fn prune(&self, keep: &[bool]) -> Result<Mlp> {
        self.check_mask(keep)?;
        let mut layers = self.layers.clone();
        for l in self.masked_sites() {
            let kept: Vec<usize> = (0..keep.len()).filter(|&c| keep[c]).collect();
            let src = &self.layers[l];
            let mut rows = Dense::zeros(src.inputs, kept.len());
            for (r, &c) in kept.iter().enumerate() {
                rows.weight[r * src.inputs..(r + 1) * src.inputs]
                    .copy_from_slice(&src.weight[c * src.inputs..(c + 1) * src.inputs]);
                rows.bias[r] = src.bias[c];
            }
            layers[l] = rows;
            let next = &layers[l + 1];
            let mut cols = Dense::zeros(kept.len(), next.outputs);
            for o in 0..next.outputs {
                for (r, &c) in kept.iter().enumerate() {
                    cols.weight[o * kept.len() + r] = next.weight[o * next.inputs + c];
                }
            }
            cols.bias.copy_from_slice(&next.bias);
            layers[l + 1] = cols;
        }
        Ok(Mlp { layers })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }
}

/// Mean squared error over every output element, and its gradient with
/// respect to `output`.
pub fn mse_with_grad(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let m = output.len() as f64;
    let mut loss = 0.0;
    let grad = output
        .iter()
        .zip(target)
        .map(|(y, t)| {
            let d = y - t;
            loss += d * d;
            2.0 * d / m
        })
        .collect();
    (loss / m, grad)
}

pub fn mse(output: &[f64], target: &[f64]) -> f64 {
    output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / output.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::random(&[3, 6, 6, 6, 2], &mut rng)
    }

    fn batch(seed: u64, n: usize, dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn all_ones_mask_matches_plain_forward() {
        let m = net(1);
        let x = batch(2, 5, 3);
        assert_eq!(m.masked_forward(&x, &[true; 6]).unwrap().output, m.forward(&x).unwrap());
    }

    #[test]
    fn zero_mask_leaves_only_bias_path() {
        let m = net(1);
        let trace_a = m.masked_forward(&batch(2, 4, 3), &[false; 6]).unwrap();
        let trace_b = m.masked_forward(&batch(9, 4, 3), &[false; 6]).unwrap();
        // layer 1 input is the masked site
        assert!(trace_a.inputs[1].iter().all(|&v| v == 0.0));
        assert_eq!(trace_a.output, trace_b.output);
    }

    #[test]
    fn zero_mask_gradients_vanish_in_masked_layers() {
        let m = net(3);
        let x = batch(4, 4, 3);
        let masks = TaskMaskPair::full(vec![false; 6]);
        let trace = m.masked_forward(&x, masks.forward()).unwrap();
        let (_, g) = mse_with_grad(&trace.output, &[0.3; 8]);
        let grads = m.masked_backward(&trace, &g, &masks).unwrap();
        for l in 0..4 {
            assert!(grads[l].weight.iter().all(|&v| v == 0.0), "layer {l}");
        }
        // only the output bias still learns
        assert!(grads[3].bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn dimension_checks() {
        let m = net(1);
        assert!(m.masked_forward(&[0.0; 4], &[true; 6]).is_err());
        assert!(m.masked_forward(&[0.0; 3], &[true; 5]).is_err());
    }

    #[test]
    fn sites_alternate() {
        assert_eq!(net(0).masked_sites(), vec![0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Mlp::random(&[2, 4, 4, 1], &mut rng).masked_sites(), vec![0]);
    }
}
