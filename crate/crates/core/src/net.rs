//! Minimal dense-network engine: parameter layout, forward pass, and
//! reverse-mode gradients.
//!
//! Parameters are flattened layer-major: for each layer `l` mapping
//! `layer_dims[l]` inputs to `layer_dims[l+1]` outputs, the weight matrix is
//! stored row-major (`out` rows of `in` entries) followed by the `out`
//! biases. This order is the canonical vectorization used everywhere a
//! [`ParamVector`] is interpreted as network parameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError};
use crate::rng;
use crate::vecmath::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Softmax,
}

/// Architecture of a dense network: layer widths plus one activation per
/// hidden layer and an output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_dims: Vec<usize>,
    /// One entry per hidden layer (`layer_dims.len() - 2` of them).
    pub hidden_activations: Vec<Activation>,
    pub output_activation: OutputActivation,
}

impl NetworkSpec {
    /// Spec with the same activation on every hidden layer.
    pub fn new(
        layer_dims: Vec<usize>,
        activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self, CoreError> {
        let hidden = layer_dims.len().saturating_sub(2);
        let spec = Self {
            layer_dims,
            hidden_activations: vec![activation; hidden],
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.layer_dims.len() < 2 {
            return Err(CoreError::Config(format!(
                "need at least input and output dims, got {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(CoreError::Config(format!(
                "zero layer width in {:?}",
                self.layer_dims
            )));
        }
        let hidden = self.layer_dims.len() - 2;
        if self.hidden_activations.len() != hidden {
            return Err(CoreError::Config(format!(
                "expected {} hidden activations, got {}",
                hidden,
                self.hidden_activations.len()
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Total parameter count: sum over layers of `in*out + out`.
    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn activation_of_layer(&self, layer: usize) -> Option<Activation> {
        // Last layer uses the output head instead.
        if layer + 1 < self.num_layers() {
            Some(self.hidden_activations[layer])
        } else {
            None
        }
    }
}

/// Deterministic fan-in-scaled initialization: every entry of layer `l` is
/// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamVector, CoreError> {
    spec.validate()?;
    let mut r = rng::seeded(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for w in spec.layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = 1.0 / libm::sqrt(fan_in as f64);
        for _ in 0..fan_in * fan_out + fan_out {
            values.push(rng::uniform_in(&mut r, -scale, scale));
        }
    }
    Ok(ParamVector::from_vec(values))
}

fn apply_activation(act: Activation, pre: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match act {
        Activation::Tanh => out.extend(pre.iter().map(|&z| libm::tanh(z))),
        Activation::Relu => out.extend(pre.iter().map(|&z| if z > 0.0 { z } else { 0.0 })),
        Activation::Identity => out.extend_from_slice(pre),
    }
}

fn softmax(pre: &[f64]) -> Vec<f64> {
    let max = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = pre.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

struct Trace {
    /// Post-activation output of each layer; `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pres: Vec<Vec<f64>>,
}

fn forward_trace(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
) -> Result<Trace, CoreError> {
    spec.validate()?;
    check_len(spec.input_dim(), input.len())?;
    check_len(spec.param_count(), params.len())?;
    let p = params.as_slice();
    let mut acts = Vec::with_capacity(spec.num_layers() + 1);
    let mut pres = Vec::with_capacity(spec.num_layers());
    acts.push(input.to_vec());
    let mut offset = 0;
    for layer in 0..spec.num_layers() {
        let (fan_in, fan_out) = (spec.layer_dims[layer], spec.layer_dims[layer + 1]);
        let weights = &p[offset..offset + fan_in * fan_out];
        let biases = &p[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let x = acts.last().unwrap();
        let mut pre = vec![0.0; fan_out];
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut acc = biases[o];
            for i in 0..fan_in {
                acc += row[i] * x[i];
            }
            pre[o] = acc;
        }
        let out = match spec.activation_of_layer(layer) {
            Some(act) => {
                let mut out = Vec::new();
                apply_activation(act, &pre, &mut out);
                out
            }
            None => match spec.output_activation {
                OutputActivation::Identity => pre.clone(),
                OutputActivation::Softmax => softmax(&pre),
            },
        };
        pres.push(pre);
        acts.push(out);
    }
    Ok(Trace { acts, pres })
}

pub fn forward(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
) -> Result<Vec<f64>, CoreError> {
    Ok(forward_trace(spec, params, input)?.acts.pop().unwrap())
}

/// Gradient of `<upstream, forward(spec, params, input)>` with respect to
/// the parameters and the input.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<(ParamVector, Vec<f64>), CoreError> {
    check_len(spec.output_dim(), upstream.len())?;
    let trace = forward_trace(spec, params, input)?;
    let p = params.as_slice();
    let mut grad = vec![0.0; params.len()];

    // Delta through the output head.
    let y = trace.acts.last().unwrap();
    let mut delta: Vec<f64> = match spec.output_activation {
        OutputActivation::Identity => upstream.to_vec(),
        OutputActivation::Softmax => {
            let uy: f64 = upstream.iter().zip(y).map(|(u, yi)| u * yi).sum();
            upstream
                .iter()
                .zip(y)
                .map(|(u, yi)| yi * (u - uy))
                .collect()
        }
    };

    // Layer parameter offsets, front to back.
    let mut offsets = Vec::with_capacity(spec.num_layers());
    let mut offset = 0;
    for w in spec.layer_dims.windows(2) {
        offsets.push(offset);
        offset += w[0] * w[1] + w[1];
    }

    for layer in (0..spec.num_layers()).rev() {
        let (fan_in, fan_out) = (spec.layer_dims[layer], spec.layer_dims[layer + 1]);
        let base = offsets[layer];
        let weights = &p[base..base + fan_in * fan_out];
        let x = &trace.acts[layer];
        // Weight and bias gradients.
        for o in 0..fan_out {
            let grow = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
            for i in 0..fan_in {
                grow[i] = delta[o] * x[i];
            }
        }
        for o in 0..fan_out {
            grad[base + fan_in * fan_out + o] = delta[o];
        }
        // Delta into the previous layer's output.
        let mut prev = vec![0.0; fan_in];
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                prev[i] += row[i] * delta[o];
            }
        }
        // Through the previous hidden activation, if any.
        if layer > 0 {
            let act = spec.hidden_activations[layer - 1];
            let pre = &trace.pres[layer - 1];
            let post = &trace.acts[layer];
            match act {
                Activation::Tanh => {
                    for i in 0..fan_in {
                        prev[i] *= 1.0 - post[i] * post[i];
                    }
                }
                Activation::Relu => {
                    for i in 0..fan_in {
                        if pre[i] <= 0.0 {
                            prev[i] = 0.0;
                        }
                    }
                }
                Activation::Identity => {}
            }
        }
        delta = prev;
    }

    Ok((ParamVector::from_vec(grad), delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = NetworkSpec::new(vec![2, 2], Activation::Tanh, OutputActivation::Identity)
            .unwrap();
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 8).unwrap());
    }

    #[test]
    fn param_count_examples() {
        let spec = NetworkSpec::new(vec![4, 8, 4], Activation::Tanh, OutputActivation::Identity)
            .unwrap();
        assert_eq!(spec.param_count(), 76);
        assert_eq!(init_params(&spec, 0).unwrap().len(), 76);
    }

    #[test]
    fn affine_1x1_matches_hand_computation() {
        let spec = NetworkSpec::new(vec![1, 1], Activation::Identity, OutputActivation::Identity)
            .unwrap();
        let params = ParamVector::from_vec(vec![3.0, -1.0]); // w=3, b=-1
        let out = forward(&spec, &params, &[2.0]).unwrap();
        assert_eq!(out, vec![5.0]);
    }

    #[test]
    fn identity_network_passes_input_through() {
        let spec = NetworkSpec::new(vec![2, 2], Activation::Identity, OutputActivation::Identity)
            .unwrap();
        // W = I, b = 0.
        let params = ParamVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let out = forward(&spec, &params, &[0.3, -0.7]).unwrap();
        assert_eq!(out, vec![0.3, -0.7]);
    }

    #[test]
    fn softmax_on_equal_logits_is_uniform() {
        let spec = NetworkSpec::new(vec![2, 2], Activation::Identity, OutputActivation::Softmax)
            .unwrap();
        let params = ParamVector::from_vec(vec![0.0; 6]);
        let out = forward(&spec, &params, &[1.0, -1.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_is_probability_vector() {
        let spec = NetworkSpec::new(vec![3, 5, 4], Activation::Tanh, OutputActivation::Softmax)
            .unwrap();
        let params = init_params(&spec, 11).unwrap();
        let out = forward(&spec, &params, &[0.4, -2.0, 1.5]).unwrap();
        assert!(out.iter().all(|&p| p >= 0.0));
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let spec = NetworkSpec::new(vec![3, 4, 2], Activation::Tanh, OutputActivation::Softmax)
            .unwrap();
        let params = init_params(&spec, 5).unwrap();
        let (g, gi) = backward(&spec, &params, &[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(gi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let spec = NetworkSpec::new(vec![2, 3], Activation::Identity, OutputActivation::Identity)
            .unwrap();
        let params = init_params(&spec, 1).unwrap();
        let input = [0.5, -1.5];
        let upstream = [2.0, -1.0, 0.25];
        let (g, gi) = backward(&spec, &params, &input, &upstream).unwrap();
        let gs = g.as_slice();
        for o in 0..3 {
            for i in 0..2 {
                assert!((gs[o * 2 + i] - upstream[o] * input[i]).abs() < 1e-15);
            }
            assert!((gs[6 + o] - upstream[o]).abs() < 1e-15);
        }
        // Input gradient is W^T upstream.
        let p = params.as_slice();
        for i in 0..2 {
            let expect: f64 = (0..3).map(|o| p[o * 2 + i] * upstream[o]).sum();
            assert!((gi[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let spec = NetworkSpec::new(vec![2, 2], Activation::Tanh, OutputActivation::Identity)
            .unwrap();
        let params = init_params(&spec, 0).unwrap();
        assert!(matches!(
            forward(&spec, &params, &[1.0]).unwrap_err(),
            CoreError::Shape { .. }
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(NetworkSpec::new(vec![2], Activation::Tanh, OutputActivation::Identity).is_err());
        assert!(NetworkSpec::new(vec![2, 0], Activation::Tanh, OutputActivation::Identity).is_err());
    }
}
