//! Fully connected network over a single flat parameter vector.
//!
//! Parameters live in one `Vec<f64>` (per layer: weights row-major
//! `out × in`, then biases) so that the optimizer, the Fisher estimate and the
//! EWC anchor all share one indexing scheme.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RcaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    fn weight_count(&self) -> usize {
        self.input * self.output
    }

    fn param_count(&self) -> usize {
        self.weight_count() + self.output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
    pub l1_coeff: f64,
    pub l2_coeff: f64,
}

/// Intermediate values of a forward pass, needed by backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    /// Input of each layer (the network input first).
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    /// Post-activation values before dropout.
    activations: Vec<Vec<f64>>,
    /// Inverted-dropout scale per unit (0 or 1/(1-p)); empty when no dropout was applied.
    masks: Vec<Vec<f64>>,
}

/// Loss decomposition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mse: f64,
    pub ewc: f64,
    pub l1: f64,
    pub l2: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.mse + self.ewc + self.l1 + self.l2
    }
}

/// Elastic-weight-consolidation penalty `Σ λ/2 · F_k · (θ_k − θ*_k)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub lambda: f64,
    pub fisher: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl FisherInfo {
    pub fn value(&self, params: &[f64]) -> f64 {
        let s: f64 = self
            .fisher
            .iter()
            .zip(&self.anchor)
            .zip(params)
            .map(|((f, a), p)| f * (p - a) * (p - a))
            .sum();
        0.5 * self.lambda * s
    }

    fn add_gradient(&self, params: &[f64], grad: &mut [f64]) {
        for (((g, f), a), p) in grad.iter_mut().zip(&self.fisher).zip(&self.anchor).zip(params) {
            *g += self.lambda * f * (p - a);
        }
    }
}

impl DenseNet {
    /// Network with the given widths; hidden layers use `hidden` activation and `dropout`,
    /// the last layer `output` activation and no dropout. Weights are uniform in
    /// `±1/√fan_in`, biases zero.
    pub fn new<R: Rng>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "need at least an input and an output width");
        let n = widths.len() - 1;
        let layers: Vec<LayerSpec> = (0..n)
            .map(|i| LayerSpec {
                input: widths[i],
                output: widths[i + 1],
                activation: if i + 1 == n { output } else { hidden },
                dropout: if i + 1 == n { 0.0 } else { dropout },
            })
            .collect();
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for l in &layers {
            let bound = 1.0 / (l.input as f64).sqrt();
            params.extend((0..l.weight_count()).map(|_| rng.gen_range(-bound..=bound)));
            params.extend(std::iter::repeat(0.0).take(l.output));
        }
        Self {
            layers,
            params,
            l1_coeff: 0.0,
            l2_coeff: 0.0,
        }
    }

    pub fn with_regularization(mut self, l1: f64, l2: f64) -> Self {
        self.l1_coeff = l1;
        self.l2_coeff = l2;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(weight range, bias range)` of each layer inside `params`.
    fn offsets(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = at..at + l.weight_count();
                let b = w.end..w.end + l.output;
                at = b.end;
                (w, b)
            })
            .collect()
    }

    fn is_weight(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for l in &self.layers {
            mask.extend(std::iter::repeat(true).take(l.weight_count()));
            mask.extend(std::iter::repeat(false).take(l.output));
        }
        mask
    }

    /// Forward pass over `rows` row-major samples. Dropout is applied only when
    /// `training` is set and an RNG is supplied.
    pub fn forward<R: Rng>(
        &self,
        input: &[f64],
        rows: usize,
        training: bool,
        mut rng: Option<&mut R>,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        let d = self.input_dim();
        if input.len() != rows * d {
            return Err(RcaError::Dimension {
                expected: rows * d,
                actual: input.len(),
            });
        }
        let mut cache = ForwardCache {
            rows,
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            activations: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut current = input.to_vec();
        for (layer, (wr, br)) in self.layers.iter().zip(self.offsets()) {
            let w = &self.params[wr];
            let b = &self.params[br];
            let (n_in, n_out) = (layer.input, layer.output);
            let mut z = vec![0.0; rows * n_out];
            for r in 0..rows {
                let x = &current[r * n_in..(r + 1) * n_in];
                let zr = &mut z[r * n_out..(r + 1) * n_out];
                for (o, zo) in zr.iter_mut().enumerate() {
                    let wo = &w[o * n_in..(o + 1) * n_in];
                    *zo = b[o] + wo.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            let h: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            let mut out = h.clone();
            let mut mask = Vec::new();
            if training && layer.dropout > 0.0 {
                if let Some(rng) = rng.as_deref_mut() {
                    let keep = 1.0 - layer.dropout;
                    mask = (0..h.len())
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (o, m) in out.iter_mut().zip(&mask) {
                        *o *= m;
                    }
                }
            }
            cache.inputs.push(std::mem::replace(&mut current, out));
            cache.pre_activations.push(z);
            cache.activations.push(h);
            cache.masks.push(mask);
        }
        Ok((current, cache))
    }

    /// Inference-mode forward pass (no dropout).
    pub fn predict(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.forward::<rand_chacha::ChaCha8Rng>(input, rows, false, None)
            .map(|(y, _)| y)
    }

    /// Loss of `output` against `target` plus regularizers at the current parameters.
    /// The reconstruction term is the mean over rows of the per-row squared error sum.
    pub fn loss(&self, output: &[f64], target: &[f64], rows: usize, ewc: Option<&FisherInfo>) -> LossParts {
        let sq: f64 = output.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        let mse = if rows > 0 { sq / rows as f64 } else { 0.0 };
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        if self.l1_coeff != 0.0 || self.l2_coeff != 0.0 {
            for (wr, _) in self.offsets() {
                for &w in &self.params[wr] {
                    l1 += w.abs();
                    l2 += w * w;
                }
            }
        }
        LossParts {
            mse,
            ewc: ewc.map_or(0.0, |e| e.value(&self.params)),
            l1: self.l1_coeff * l1,
            l2: self.l2_coeff * l2,
        }
    }

    /// Gradient of the reconstruction term only, by backprop through `cache`.
    pub fn backward_data(&self, cache: &ForwardCache, output: &[f64], target: &[f64]) -> Vec<f64> {
        let rows = cache.rows;
        let mut grad = vec![0.0; self.params.len()];
        let scale = if rows > 0 { 2.0 / rows as f64 } else { 0.0 };
        // dL/d(output of the last layer)
        let mut upstream: Vec<f64> = output.iter().zip(target).map(|(y, t)| scale * (y - t)).collect();
        let offsets = self.offsets();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (n_in, n_out) = (layer.input, layer.output);
            let (wr, br) = offsets[li].clone();
            let mask = &cache.masks[li];
            let z = &cache.pre_activations[li];
            let h = &cache.activations[li];
            let x = &cache.inputs[li];
            let delta: Vec<f64> = (0..upstream.len())
                .map(|k| {
                    let g = if mask.is_empty() { upstream[k] } else { upstream[k] * mask[k] };
                    g * layer.activation.derivative(z[k], h[k])
                })
                .collect();
            let w = &self.params[wr.clone()];
            let mut next = if li > 0 { vec![0.0; rows * n_in] } else { Vec::new() };
            {
                let (gw, gb) = grad[wr.start..br.end].split_at_mut(wr.len());
                for r in 0..rows {
                    let dr = &delta[r * n_out..(r + 1) * n_out];
                    let xr = &x[r * n_in..(r + 1) * n_in];
                    for (o, &dv) in dr.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        gb[o] += dv;
                        let gwo = &mut gw[o * n_in..(o + 1) * n_in];
                        for (g, &xi) in gwo.iter_mut().zip(xr) {
                            *g += dv * xi;
                        }
                        if li > 0 {
                            let nr = &mut next[r * n_in..(r + 1) * n_in];
                            for (nv, &wv) in nr.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                                *nv += dv * wv;
                            }
                        }
                    }
                }
            }
            upstream = next;
        }
        grad
    }

    /// Gradient of the full loss: reconstruction, L1/L2 on weights and EWC on all parameters.
    pub fn backward(&self, cache: &ForwardCache, output: &[f64], target: &[f64], ewc: Option<&FisherInfo>) -> Vec<f64> {
        let mut grad = self.backward_data(cache, output, target);
        if self.l1_coeff != 0.0 || self.l2_coeff != 0.0 {
            for ((g, &p), is_w) in grad.iter_mut().zip(&self.params).zip(self.is_weight()) {
                if is_w {
                    *g += self.l1_coeff * sign(p) + 2.0 * self.l2_coeff * p;
                }
            }
        }
        if let Some(e) = ewc {
            e.add_gradient(&self.params, &mut grad);
        }
        grad
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
