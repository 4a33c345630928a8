//! Synthetic desk-scale data pipeline: class-conditional clean features,
//! SNR-controlled noise mixing, frozen proxy/evaluator training, and
//! error-rate evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError};
use crate::net::{self, NetworkSpec};
use crate::objective::{ClsBatch, ProxyModel};
use crate::rng::{self, Rng};
use crate::vecmath::{Matrix, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleanGenerator {
    GaussianClasses,
    SinusoidBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseGenerator {
    Gaussian,
    Impulsive,
    Structured,
}

/// Description of one synthetic task instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// (low, high) in dB; per-sample SNR is drawn uniformly from this range.
    pub snr_range_db: (f64, f64),
    pub clean_generator: CleanGenerator,
    pub noise_generator: NoiseGenerator,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    /// Fraction of the classification training set that keeps its labels.
    pub label_fraction: f64,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.feature_dim == 0 || self.num_classes < 2 {
            return Err(CoreError::Config("need feature_dim >= 1, num_classes >= 2".into()));
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return Err(CoreError::Config("snr_range_db low > high".into()));
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return Err(CoreError::Config("split sizes must be >= 1".into()));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(CoreError::Config("label_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One split of the synthetic task: aligned clean/noisy features, labels,
/// and the SNR each row was mixed at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskData {
    pub clean: Matrix,
    pub noisy: Matrix,
    pub labels: Vec<usize>,
    pub snr_db: Vec<f64>,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Class means are a property of the task (derived from `spec.seed`), not
/// of the call-site rng, so every split shares the same class geometry.
fn class_means(spec: &TaskSpec) -> Vec<Vec<f64>> {
    let d = spec.feature_dim;
    let k = spec.num_classes;
    let mut r = rng::substream(spec.seed, 0xC1A5);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng::gaussian(&mut r)).collect();
        // Gram-Schmidt against earlier means keeps classes well separated
        // whenever k <= d.
        for m in &means {
            let dot: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum();
            let msq: f64 = m.iter().map(|x| x * x).sum();
            if msq > 0.0 {
                for (vi, mi) in v.iter_mut().zip(m) {
                    *vi -= dot / msq * mi;
                }
            }
        }
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n > 1e-9 {
            for vi in &mut v {
                *vi /= n;
            }
        } else {
            v[0] = 1.0;
        }
        const SEPARATION: f64 = 6.0;
        for vi in &mut v {
            *vi *= SEPARATION;
        }
        means.push(v);
    }
    means
}

/// Generate `n` clean feature rows with balanced, deterministic labels
/// (round-robin over classes, so counts differ by at most one).
pub fn gen_clean(spec: &TaskSpec, n: usize, rng: &mut Rng) -> Result<(Matrix, Vec<usize>), CoreError> {
    spec.validate()?;
    if n == 0 {
        return Err(CoreError::Config("need n >= 1".into()));
    }
    let d = spec.feature_dim;
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    match spec.clean_generator {
        CleanGenerator::GaussianClasses => {
            const WITHIN_STD: f64 = 0.6;
            let means = class_means(spec);
            for i in 0..n {
                let k = i % spec.num_classes;
                labels.push(k);
                let row = features.row_mut(i);
                for (j, m) in means[k].iter().enumerate() {
                    row[j] = m + WITHIN_STD * rng::gaussian(rng);
                }
            }
        }
        CleanGenerator::SinusoidBank => {
            // Class k is a sinusoid at frequency k+1 across the feature
            // index, with a random per-sample phase and light jitter.
            const AMPLITUDE: f64 = 2.0;
            const JITTER: f64 = 0.05;
            for i in 0..n {
                let k = i % spec.num_classes;
                labels.push(k);
                let phase = rng::uniform_in(rng, 0.0, 2.0 * core::f64::consts::PI);
                let freq = (k + 1) as f64;
                let row = features.row_mut(i);
                for j in 0..d {
                    let x = 2.0 * core::f64::consts::PI * freq * j as f64 / d as f64 + phase;
                    row[j] = AMPLITUDE * libm::sin(x) + JITTER * rng::gaussian(rng);
                }
            }
        }
    }
    Ok((features, labels))
}

/// Draw one raw (unscaled) noise vector.
pub fn gen_noise(kind: NoiseGenerator, dim: usize, rng: &mut Rng) -> Vec<f64> {
    match kind {
        NoiseGenerator::Gaussian => (0..dim).map(|_| rng::gaussian(rng)).collect(),
        NoiseGenerator::Impulsive => (0..dim)
            .map(|_| {
                let scale = if rng::uniform(rng) < 0.1 { 10.0 } else { 1.0 };
                scale * rng::gaussian(rng)
            })
            .collect(),
        NoiseGenerator::Structured => {
            let freq = rng::uniform_in(rng, 1.0, (dim as f64 / 2.0).max(2.0));
            let phase = rng::uniform_in(rng, 0.0, 2.0 * core::f64::consts::PI);
            (0..dim)
                .map(|j| {
                    let x = 2.0 * core::f64::consts::PI * freq * j as f64 / dim as f64 + phase;
                    libm::sqrt(2.0) * libm::sin(x)
                })
                .collect()
        }
    }
}

/// Additively mix `noise` into `clean`, scaling the noise so the resulting
/// clean-to-noise power ratio is exactly `snr_db`:
/// `10*log10(P_clean / P_scaled_noise) = snr_db`.
pub fn mix_noise(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>, CoreError> {
    check_len(clean.len(), noise.len())?;
    let p_clean: f64 = clean.iter().map(|x| x * x).sum::<f64>() / clean.len() as f64;
    let p_noise: f64 = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
    if p_clean <= 0.0 {
        return Err(CoreError::Data("zero-power clean signal".into()));
    }
    if p_noise <= 0.0 {
        return Err(CoreError::Data("zero-power noise signal".into()));
    }
    let scale = libm::sqrt(p_clean / (p_noise * libm::pow(10.0, snr_db / 10.0)));
    Ok(clean
        .iter()
        .zip(noise)
        .map(|(c, n)| c + scale * n)
        .collect())
}

/// Measured SNR in dB between a clean row and the additive residual of its
/// noisy counterpart.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let p_clean: f64 = clean.iter().map(|x| x * x).sum();
    let p_noise: f64 = clean
        .iter()
        .zip(noisy)
        .map(|(c, n)| (n - c) * (n - c))
        .sum();
    10.0 * libm::log10(p_clean / p_noise)
}

/// Generate one split: clean features plus per-row noisy mixtures at SNRs
/// drawn uniformly from the task's range.
pub fn gen_split(spec: &TaskSpec, n: usize, rng: &mut Rng) -> Result<TaskData, CoreError> {
    let (clean, labels) = gen_clean(spec, n, rng)?;
    let d = spec.feature_dim;
    let mut noisy = Matrix::zeros(n, d);
    let mut snrs = Vec::with_capacity(n);
    for i in 0..n {
        let snr = rng::uniform_in(rng, spec.snr_range_db.0, spec.snr_range_db.1);
        let noise = gen_noise(spec.noise_generator, d, rng);
        let mixed = mix_noise(clean.row(i), &noise, snr)?;
        noisy.row_mut(i).copy_from_slice(&mixed);
        snrs.push(snr);
    }
    Ok(TaskData { clean, noisy, labels, snr_db: snrs })
}

/// Training budget for the frozen classifiers (proxy and evaluators).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    /// Required accuracy on the clean training data; training fails loudly
    /// if the floor is not met within the budget.
    pub accuracy_floor: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, batch_size: 32, max_steps: 10_000, accuracy_floor: 0.95 }
    }
}

fn classifier_accuracy(
    spec: &NetworkSpec,
    params: &ParamVector,
    features: &Matrix,
    labels: &[usize],
) -> Result<f64, CoreError> {
    let mut correct = 0usize;
    for i in 0..features.nrows() {
        let probs = net::forward(spec, params, features.row(i))?;
        let pred = argmax(&probs);
        if pred == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.nrows() as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn train_classifier(
    spec: &NetworkSpec,
    features: &Matrix,
    labels: &[usize],
    seed: u64,
    cfg: &ClassifierTrainConfig,
) -> Result<ParamVector, CoreError> {
    spec.validate()?;
    check_len(features.nrows(), labels.len())?;
    let k = spec.output_dim();
    let mut params = net::init_params(spec, seed)?;
    let mut r = rng::substream(seed, 0x70C4);
    let n = features.nrows();
    let bsz = cfg.batch_size.min(n);
    let scale = 1.0 / bsz as f64;
    for step in 0..cfg.max_steps {
        let mut grad = ParamVector::zeros(params.len());
        for _ in 0..bsz {
            let i = rng::index(&mut r, n);
            let probs = net::forward(spec, &params, features.row(i))?;
            let p = probs[labels[i]].max(1e-300);
            let mut upstream = vec![0.0; k];
            upstream[labels[i]] = -scale / p;
            let (g, _) = net::backward(spec, &params, features.row(i), &upstream)?;
            grad.axpy_mut(1.0, &g)?;
        }
        params.axpy_mut(-cfg.learning_rate, &grad)?;
        if !params.is_finite() {
            return Err(CoreError::Numerical {
                step,
                what: "classifier parameters diverged".into(),
            });
        }
        // Accuracy check every 200 steps and at the end of the budget.
        if (step + 1) % 200 == 0 || step + 1 == cfg.max_steps {
            if classifier_accuracy(spec, &params, features, labels)? >= cfg.accuracy_floor {
                return Ok(params);
            }
        }
    }
    if cfg.accuracy_floor <= 0.0 {
        return Ok(params);
    }
    let acc = classifier_accuracy(spec, &params, features, labels)?;
    if acc >= cfg.accuracy_floor {
        Ok(params)
    } else {
        Err(CoreError::Training(format!(
            "classifier accuracy {acc:.3} below floor {:.3} after {} steps",
            cfg.accuracy_floor, cfg.max_steps
        )))
    }
}

/// Train the frozen proxy classifier on clean data.
pub fn train_proxy(
    proxy_spec: &NetworkSpec,
    clean: &Matrix,
    labels: &[usize],
    seed: u64,
    cfg: &ClassifierTrainConfig,
) -> Result<ProxyModel, CoreError> {
    let params = train_classifier(proxy_spec, clean, labels, seed, cfg)?;
    ProxyModel::new(proxy_spec.clone(), params)
}

/// One frozen held-out classifier with its clean-data error rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluator {
    pub name: String,
    pub model: ProxyModel,
    pub clean_error: f64,
}

/// Frozen classifiers standing in for unseen recognizers. None of them may
/// coincide with the proxy in both architecture and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatorSet {
    pub evaluators: Vec<Evaluator>,
}

impl EvaluatorSet {
    pub fn len(&self) -> usize {
        self.evaluators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluators.is_empty()
    }
}

/// Train a family of frozen evaluator classifiers on clean data.
pub fn train_evaluators(
    specs: &[(String, NetworkSpec, u64)],
    proxy_spec: &NetworkSpec,
    proxy_seed: u64,
    clean: &Matrix,
    labels: &[usize],
    cfg: &ClassifierTrainConfig,
) -> Result<EvaluatorSet, CoreError> {
    let mut evaluators = Vec::with_capacity(specs.len());
    for (name, spec, seed) in specs {
        if spec == proxy_spec && *seed == proxy_seed {
            return Err(CoreError::Config(format!(
                "evaluator {name} duplicates the proxy (same architecture and seed)"
            )));
        }
        let params = train_classifier(spec, clean, labels, *seed, cfg)?;
        let clean_error = 1.0 - classifier_accuracy(spec, &params, clean, labels)?;
        evaluators.push(Evaluator {
            name: name.clone(),
            model: ProxyModel::new(spec.clone(), params)?,
            clean_error,
        });
    }
    Ok(EvaluatorSet { evaluators })
}

/// Per-evaluator classification error rate on the given feature rows.
pub fn evaluate_features(
    evaluators: &EvaluatorSet,
    features: &Matrix,
    labels: &[usize],
) -> Result<Vec<f64>, CoreError> {
    check_len(features.nrows(), labels.len())?;
    let mut errors = Vec::with_capacity(evaluators.len());
    for ev in &evaluators.evaluators {
        let mut wrong = 0usize;
        for i in 0..features.nrows() {
            let probs = ev.model.predict(features.row(i))?;
            if argmax(&probs) != labels[i] {
                wrong += 1;
            }
        }
        errors.push(wrong as f64 / features.nrows() as f64);
    }
    Ok(errors)
}

/// Per-evaluator error rate after enhancing the rows with the given
/// enhancer parameters.
pub fn evaluate_enhanced(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    evaluators: &EvaluatorSet,
    noisy: &Matrix,
    labels: &[usize],
) -> Result<Vec<f64>, CoreError> {
    let mut enhanced = Matrix::zeros(noisy.nrows(), enhancer_spec.output_dim());
    for i in 0..noisy.nrows() {
        let out = net::forward(enhancer_spec, theta, noisy.row(i))?;
        enhanced.row_mut(i).copy_from_slice(&out);
    }
    evaluate_features(evaluators, &enhanced, labels)
}

/// Mean NLL of the labels under one frozen classifier applied to enhanced
/// rows; used for validation-loss traces.
pub fn eval_cls_loss(
    enhancer_spec: &NetworkSpec,
    theta: &ParamVector,
    model: &ProxyModel,
    noisy: &Matrix,
    labels: &[usize],
) -> Result<f64, CoreError> {
    let batch = ClsBatch::new(noisy.clone(), labels.to_vec())?;
    crate::objective::cls_loss(enhancer_spec, theta, model, &batch)
}
