//! Fixed-topology multilayer perceptrons with hand-written backpropagation,
//! an Adam optimizer and a finite-difference gradient checker.
//!
//! Everything is `f64`. Weight matrices are stored row-major with shape
//! `outputs x inputs`, so one row holds the fan-in of one unit.

mod adam;
pub(crate) mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_params, write_params, NN_MAGIC};
pub use gradcheck::{gradient_check, mse_loss, GradCheckReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    /// One `outputs x inputs` row-major matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

/// Gradient (or any other tensor) shaped exactly like an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer activations recorded by [`MlpParams::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache always holds the input")
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(MepError::InvalidArgument(
            "an MLP needs at least an input and an output size".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(MepError::InvalidArgument("layer sizes must be positive".into()));
    }
    Ok(())
}

/// Dot product with eight independent accumulators. The summation order is
/// fixed, so results are bit-reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let s4 = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (s4[0] + s4[1]) + (s4[2] + s4[3]) + tail
}

impl MlpParams {
    /// Network with weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output_activation: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes, output_activation)?;
        for (l, (w, b)) in params
            .weights
            .iter_mut()
            .zip(params.biases.iter_mut())
            .enumerate()
        {
            let bound = 1.0 / (layer_sizes[l] as f64).sqrt();
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation: HiddenActivation::Relu,
            output_activation,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Checks that weight shapes chain with `layer_sizes` and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        validate_sizes(&self.layer_sizes)?;
        check_len(self.layer_sizes.len() - 1, self.weights.len())?;
        check_len(self.layer_sizes.len() - 1, self.biases.len())?;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            check_len(self.layer_sizes[l] * self.layer_sizes[l + 1], w.len())?;
            check_len(self.layer_sizes[l + 1], b.len())?;
            if !w.iter().chain(b).all(|v| v.is_finite()) {
                return Err(MepError::NonFinite("network parameters"));
            }
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, input: &[f64], out: &mut Vec<f64>) {
        let n_in = self.layer_sizes[l];
        let last = l + 1 == self.num_layers();
        out.clear();
        for (row, b) in self.weights[l].chunks_exact(n_in).zip(&self.biases[l]) {
            let z = dot(row, input) + b;
            out.push(match (last, self.output_activation) {
                (false, _) => z.max(0.0),
                (true, OutputActivation::Identity) => z,
                (true, OutputActivation::Tanh) => z.tanh(),
            });
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), input.len())?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.num_layers() {
            self.layer_forward(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        check_len(self.input_dim(), input.len())?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_vec());
        for l in 0..self.num_layers() {
            let mut out = Vec::with_capacity(self.layer_sizes[l + 1]);
            self.layer_forward(l, &activations[l], &mut out);
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Backpropagates `upstream = dLoss/dOutput` through the cached pass,
    /// accumulating parameter gradients into `grads` and returning
    /// `dLoss/dInput`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        self.backprop(cache, upstream, Some(grads))
    }

    /// `dLoss/dInput` only, skipping parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backprop(cache, upstream, None)
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        mut grads: Option<&mut MlpGrads>,
    ) -> Result<Vec<f64>> {
        check_len(self.output_dim(), upstream.len())?;
        check_len(self.num_layers() + 1, cache.activations.len())?;
        if !upstream.iter().all(|g| g.is_finite()) {
            return Err(MepError::NonFinite("upstream gradient"));
        }
        let n = self.num_layers();
        // Gradient w.r.t. the pre-activation of the current layer.
        let out = cache.output();
        let mut delta: Vec<f64> = match self.output_activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Tanh => upstream
                .iter()
                .zip(out)
                .map(|(g, y)| g * (1.0 - y * y))
                .collect(),
        };
        for l in (0..n).rev() {
            let n_in = self.layer_sizes[l];
            let input = &cache.activations[l];
            check_len(n_in, input.len())?;
            if let Some(grads) = grads.as_deref_mut() {
                let gw = &mut grads.weights[l];
                for (j, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grads.biases[l][j] += d;
                    for (g, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let mut prev = vec![0.0; n_in];
            for (row, d) in self.weights[l].chunks_exact(n_in).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if l > 0 {
                // ReLU derivative, taken as 0 at the kink.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Parameter gradient and input gradient for a single input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let cache = self.forward_cached(input)?;
        let mut grads = MlpGrads::zeros_like(self);
        let dx = self.backward_into(&cache, upstream, &mut grads)?;
        Ok((grads, dx))
    }

    /// `self <- retain * self + (1 - retain) * other`, elementwise.
    pub fn blend_towards(&mut self, other: &MlpParams, retain: f64) -> Result<()> {
        check_len(self.layer_sizes.len(), other.layer_sizes.len())?;
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(&other.biases))
        {
            check_len(a.len(), b.len())?;
            for (x, y) in a.iter_mut().zip(b) {
                *x = retain * *x + (1.0 - retain) * y;
            }
        }
        Ok(())
    }

    pub(crate) fn flat_get(&self, idx: usize) -> f64 {
        let (t, l, i) = locate(&self.weights, &self.biases, idx);
        if t == 0 {
            self.weights[l][i]
        } else {
            self.biases[l][i]
        }
    }

    pub(crate) fn flat_set(&mut self, idx: usize, v: f64) {
        let (t, l, i) = locate(&self.weights, &self.biases, idx);
        if t == 0 {
            self.weights[l][i] = v;
        } else {
            self.biases[l][i] = v;
        }
    }
}

/// Maps a flat parameter index (all weights first, then all biases) to
/// `(0 = weight | 1 = bias, layer, offset)`.
fn locate(weights: &[Vec<f64>], biases: &[Vec<f64>], mut idx: usize) -> (u8, usize, usize) {
    for (l, w) in weights.iter().enumerate() {
        if idx < w.len() {
            return (0, l, idx);
        }
        idx -= w.len();
    }
    for (l, b) in biases.iter().enumerate() {
        if idx < b.len() {
            return (1, l, idx);
        }
        idx -= b.len();
    }
    panic!("flat parameter index out of range");
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.biases.iter_mut().flatten())
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn flat_get(&self, idx: usize) -> f64 {
        let (t, l, i) = locate(&self.weights, &self.biases, idx);
        if t == 0 {
            self.weights[l][i]
        } else {
            self.biases[l][i]
        }
    }

    #[cfg(test)]
    pub(crate) fn flat_set(&mut self, idx: usize, v: f64) {
        let (t, l, i) = locate(&self.weights, &self.biases, idx);
        if t == 0 {
            self.weights[l][i] = v;
        } else {
            self.biases[l][i] = v;
        }
    }

    fn same_shape(&self, params: &MlpParams) -> Result<()> {
        check_len(params.weights.len(), self.weights.len())?;
        check_len(params.biases.len(), self.biases.len())?;
        for (a, b) in self
            .weights
            .iter()
            .chain(&self.biases)
            .zip(params.weights.iter().chain(&params.biases))
        {
            check_len(b.len(), a.len())?;
        }
        Ok(())
    }
}
