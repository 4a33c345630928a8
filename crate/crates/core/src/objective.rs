//! The two training objectives: regression toward clean targets and
//! classification of enhanced output through a frozen proxy model.
//!
//! Both return the loss together with its exact gradient with respect to the
//! enhancer parameters only. Gradients are averaged over the batch so the
//! coefficient dynamics do not depend on batch size.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError};
use crate::net::{self, NetworkSpec, OutputActivation};
use crate::vecmath::{Matrix, ParamVector};

/// Paired (noisy, clean) feature rows for the regression objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegBatch {
    pub noisy: Matrix,
    pub clean: Matrix,
}

impl RegBatch {
    pub fn new(noisy: Matrix, clean: Matrix) -> Result<Self, CoreError> {
        check_len(noisy.nrows(), clean.nrows())?;
        check_len(noisy.ncols(), clean.ncols())?;
        if noisy.nrows() == 0 {
            return Err(CoreError::Data("empty regression batch".into()));
        }
        Ok(Self { noisy, clean })
    }

    pub fn len(&self) -> usize {
        self.noisy.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// (noisy, label) rows for the classification objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClsBatch {
    pub noisy: Matrix,
    pub labels: Vec<usize>,
}

impl ClsBatch {
    pub fn new(noisy: Matrix, labels: Vec<usize>) -> Result<Self, CoreError> {
        check_len(noisy.nrows(), labels.len())?;
        if labels.is_empty() {
            return Err(CoreError::Data("empty classification batch".into()));
        }
        Ok(Self { noisy, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A frozen softmax classifier. Parameters are never modified after
/// construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyModel {
    spec: NetworkSpec,
    params: ParamVector,
}

impl ProxyModel {
    pub fn new(spec: NetworkSpec, params: ParamVector) -> Result<Self, CoreError> {
        spec.validate()?;
        check_len(spec.param_count(), params.len())?;
        if spec.output_activation != OutputActivation::Softmax {
            return Err(CoreError::Config("proxy model needs a softmax head".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.spec.output_dim()
    }

    /// Class probabilities for a raw (un-enhanced) feature row.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, CoreError> {
        net::forward(&self.spec, &self.params, input)
    }
}

/// Mean squared error between enhanced noisy rows and clean rows, with its
/// gradient: `(1/(B*D)) * sum_i ||enhance(noisy_i) - clean_i||^2`.
pub fn reg_loss_and_grad(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    batch: &RegBatch,
) -> Result<(f64, ParamVector), CoreError> {
    check_len(enhancer_spec.input_dim(), batch.noisy.ncols())?;
    check_len(enhancer_spec.output_dim(), batch.clean.ncols())?;
    let b = batch.len() as f64;
    let d = batch.clean.ncols() as f64;
    let scale = 1.0 / (b * d);
    let mut loss = 0.0;
    let mut grad = ParamVector::zeros(theta.len());
    for i in 0..batch.len() {
        let out = net::forward(enhancer_spec, theta, batch.noisy.row(i))?;
        let clean = batch.clean.row(i);
        let residual: Vec<f64> = out.iter().zip(clean).map(|(o, c)| o - c).collect();
        loss += residual.iter().map(|r| r * r).sum::<f64>() * scale;
        let upstream: Vec<f64> = residual.iter().map(|r| 2.0 * r * scale).collect();
        let (g, _) = net::backward(enhancer_spec, theta, batch.noisy.row(i), &upstream)?;
        grad.axpy_mut(1.0, &g)?;
    }
    Ok((loss, grad))
}

/// Mean negative log-likelihood of the labels under
/// `proxy(enhance(noisy))`, with its gradient with respect to the enhancer
/// parameters only.
pub fn cls_loss_and_grad(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    proxy: &ProxyModel,
    batch: &ClsBatch,
) -> Result<(f64, ParamVector), CoreError> {
    check_len(enhancer_spec.input_dim(), batch.noisy.ncols())?;
    check_len(proxy.spec.input_dim(), enhancer_spec.output_dim())?;
    let k = proxy.num_classes();
    for &label in &batch.labels {
        if label >= k {
            return Err(CoreError::Data(format!(
                "label {label} out of range for {k} classes"
            )));
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = ParamVector::zeros(theta.len());
    for i in 0..batch.len() {
        let enhanced = net::forward(enhancer_spec, theta, batch.noisy.row(i))?;
        let probs = net::forward(&proxy.spec, &proxy.params, &enhanced)?;
        let label = batch.labels[i];
        let p = probs[label].max(1e-300);
        loss -= libm::log(p) * scale;
        // d(-log p_label)/d(probs) routed through the proxy's softmax head;
        // backward reduces this to (probs - onehot) at the logits.
        let mut upstream = alloc::vec![0.0; k];
        upstream[label] = -scale / p;
        let (_, input_grad) = net::backward(&proxy.spec, &proxy.params, &enhanced, &upstream)?;
        let (g, _) = net::backward(enhancer_spec, theta, batch.noisy.row(i), &input_grad)?;
        grad.axpy_mut(1.0, &g)?;
    }
    Ok((loss, grad))
}

/// Loss-only variant of [`reg_loss_and_grad`] for evaluation passes.
pub fn reg_loss(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    batch: &RegBatch,
) -> Result<f64, CoreError> {
    check_len(enhancer_spec.input_dim(), batch.noisy.ncols())?;
    check_len(enhancer_spec.output_dim(), batch.clean.ncols())?;
    let scale = 1.0 / (batch.len() as f64 * batch.clean.ncols() as f64);
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let out = net::forward(enhancer_spec, theta, batch.noisy.row(i))?;
        loss += out
            .iter()
            .zip(batch.clean.row(i))
            .map(|(o, c)| (o - c) * (o - c))
            .sum::<f64>()
            * scale;
    }
    Ok(loss)
}

/// Loss-only variant of [`cls_loss_and_grad`] for evaluation passes.
pub fn cls_loss(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    proxy: &ProxyModel,
    batch: &ClsBatch,
) -> Result<f64, CoreError> {
    check_len(enhancer_spec.input_dim(), batch.noisy.ncols())?;
    check_len(proxy.spec.input_dim(), enhancer_spec.output_dim())?;
    let k = proxy.num_classes();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let label = batch.labels[i];
        if label >= k {
            return Err(CoreError::Data(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let enhanced = net::forward(enhancer_spec, theta, batch.noisy.row(i))?;
        let probs = net::forward(&proxy.spec, &proxy.params, &enhanced)?;
        loss -= libm::log(probs[label].max(1e-300)) * scale;
    }
    Ok(loss)
}
