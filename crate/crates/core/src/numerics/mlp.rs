//! Multilayer perceptrons with manual reverse-mode gradients.
//!
//! Parameters live in a [`ParamVector`] under segments `"l{i}.w"` (shape
//! `[fan_out, fan_in]`, row-major) and `"l{i}.b"` (shape `[fan_out]`). The
//! activation applies to hidden layers; the output layer is linear. The
//! functions accept any parameter vector whose layout *contains* the MLP's
//! segments, so callers may append extra segments (a policy's `log_std`).

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::param::{ParamLayout, ParamVector, Segment};
use super::rng::RngSeed;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed in terms of the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Tanh,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// `(fan_in, fan_out)` per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    /// Σ (fan_in + 1) · fan_out over layers.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fi, fo)| (fi + 1) * fo)
            .sum()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut segments = Vec::new();
        for (i, (fi, fo)) in self.layer_dims().into_iter().enumerate() {
            segments.push(Segment::new(&format!("l{i}.w"), &[fo, fi]));
            segments.push(Segment::new(&format!("l{i}.b"), &[fo]));
        }
        ParamLayout::new(segments)
    }

    /// Deterministic init: weights uniform in ±√(6/(fan_in+fan_out)), biases 0.
    pub fn init_params(&self, seed: RngSeed) -> ParamVector {
        let mut params = ParamVector::zeros(self.layout());
        self.init_params_into(seed, &mut params)
            .expect("own layout always matches");
        params
    }

    /// Same init, writing into an existing (possibly larger) vector.
    pub fn init_params_into(&self, seed: RngSeed, params: &mut ParamVector) -> Result<()> {
        let mut rng = seed.rng();
        for (i, (fi, fo)) in self.layer_dims().into_iter().enumerate() {
            let bound = libm::sqrt(6.0 / (fi + fo) as f64);
            let w = params.segment_mut(&format!("l{i}.w"))?;
            for v in w.iter_mut() {
                *v = rng.uniform_in(-bound, bound);
            }
            let b = params.segment_mut(&format!("l{i}.b"))?;
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::DimMismatch {
                what: "mlp input".to_string(),
                expected: self.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer_params<'p>(
        &self,
        params: &'p ParamVector,
        layer: usize,
        fi: usize,
        fo: usize,
    ) -> Result<(&'p [f64], &'p [f64])> {
        let w = params.segment(&format!("l{layer}.w"))?;
        let b = params.segment(&format!("l{layer}.b"))?;
        if w.len() != fi * fo {
            return Err(Error::DimMismatch {
                what: format!("segment 'l{layer}.w'"),
                expected: fi * fo,
                got: w.len(),
            });
        }
        if b.len() != fo {
            return Err(Error::DimMismatch {
                what: format!("segment 'l{layer}.b'"),
                expected: fo,
                got: b.len(),
            });
        }
        Ok((w, b))
    }

    /// Deterministic forward pass.
    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut act = input.to_vec();
        for (layer, (fi, fo)) in dims.into_iter().enumerate() {
            let (w, b) = self.layer_params(params, layer, fi, fo)?;
            let mut next = vec![0.0; fo];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(&act) {
                    z += wi * xi;
                }
                next[o] = if layer == last {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            act = next;
        }
        Ok(act)
    }

    /// Reverse-mode gradients of `output · output_grad` with respect to both
    /// parameters and input. Parameter gradients are freshly allocated over
    /// the MLP's own layout.
    pub fn backward(
        &self,
        params: &ParamVector,
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<(ParamVector, Vec<f64>)> {
        let mut grad = ParamVector::zeros(self.layout());
        let input_grad = self.backward_into(params, input, output_grad, &mut grad)?;
        Ok((grad, input_grad))
    }

    /// Accumulating reverse pass: parameter gradients are *added* into
    /// `grad` (whose layout must contain the MLP segments); the input
    /// gradient is returned.
    pub fn backward_into(
        &self,
        params: &ParamVector,
        input: &[f64],
        output_grad: &[f64],
        grad: &mut ParamVector,
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if output_grad.len() != self.output_dim {
            return Err(Error::DimMismatch {
                what: "mlp output_grad".to_string(),
                expected: self.output_dim,
                got: output_grad.len(),
            });
        }

        let dims = self.layer_dims();
        let last = dims.len() - 1;

        // Forward pass, caching per-layer activations (post-activation).
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(dims.len() + 1);
        acts.push(input.to_vec());
        for (layer, &(fi, fo)) in dims.iter().enumerate() {
            let (w, b) = self.layer_params(params, layer, fi, fo)?;
            let prev = &acts[layer];
            let mut next = vec![0.0; fo];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(prev) {
                    z += wi * xi;
                }
                next[o] = if layer == last {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            acts.push(next);
        }

        // Backward pass. The output layer is linear, so its delta is the
        // output gradient itself.
        let mut delta = output_grad.to_vec();
        for layer in (0..dims.len()).rev() {
            let (fi, fo) = dims[layer];
            let prev = &acts[layer];
            {
                let gw = grad.segment_mut(&format!("l{layer}.w"))?;
                for o in 0..fo {
                    let row = &mut gw[o * fi..(o + 1) * fi];
                    let d = delta[o];
                    for (gi, xi) in row.iter_mut().zip(prev) {
                        *gi += d * xi;
                    }
                }
            }
            {
                let gb = grad.segment_mut(&format!("l{layer}.b"))?;
                for o in 0..fo {
                    gb[o] += delta[o];
                }
            }
            // Delta for the previous layer, through its activation.
            let w = params.segment(&format!("l{layer}.w"))?;
            let mut prev_delta = vec![0.0; fi];
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let d = delta[o];
                for (pd, wi) in prev_delta.iter_mut().zip(row) {
                    *pd += d * wi;
                }
            }
            if layer > 0 {
                for (pd, a) in prev_delta.iter_mut().zip(prev) {
                    *pd *= self.activation.derivative_from_output(*a);
                }
            }
            delta = prev_delta;
        }
        Ok(delta)
    }
}
