//! Two-stage training: regression-only pre-training, then joint
//! fine-tuning with the calibrated + reweighted update and optional
//! Langevin noise.
//!
//! The joint update at step `t` is
//!
//! ```text
//! theta <- theta - eps_t * (g_cls + coeff * g_reg) + eta_t
//! ```
//!
//! where `coeff` depends on the mode (see [`Mode`]) and
//! `eta_t ~ N(0, 2*eps_t)` per coordinate when Langevin noise is enabled.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::combiner::{self, CombinerConfig, CombinerState};
use crate::error::CoreError;
use crate::net::{self, NetworkSpec};
use crate::objective::{self, ClsBatch, ProxyModel, RegBatch};
use crate::rng::{self, Rng};
use crate::task::{self, EvaluatorSet, TaskData};
use crate::vecmath::{Matrix, ParamVector};

/// Fine-tuning mode. `Clso` uses the classification gradient alone; `Gclb`
/// adds only the calibration coefficient; `Srpr` adapts only the
/// surrogate-prior coefficient; `D4am` combines both; `FixedWeight`
/// replaces both with a constant for grid-search baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    InitPretrain,
    Clso,
    Srpr,
    Gclb,
    D4am,
    FixedWeight(f64),
}

impl Mode {
    pub fn is_joint(&self) -> bool {
        !matches!(self, Mode::InitPretrain)
    }

    /// Whether the surrogate-prior machinery runs in this mode.
    pub fn adapts_alpha(&self) -> bool {
        matches!(self, Mode::Srpr | Mode::D4am)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonSchedule {
    Constant(f64),
    LinearDecay { start: f64, end: f64 },
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64, total_steps: u64) -> f64 {
        match *self {
            EpsilonSchedule::Constant(e) => e,
            EpsilonSchedule::LinearDecay { start, end } => {
                if total_steps <= 1 {
                    start
                } else {
                    let frac = step as f64 / (total_steps - 1) as f64;
                    start + (end - start) * frac
                }
            }
        }
    }

    fn validate(&self) -> Result<(), CoreError> {
        let ok = match *self {
            EpsilonSchedule::Constant(e) => e > 0.0,
            EpsilonSchedule::LinearDecay { start, end } => start > 0.0 && end > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config("epsilon values must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub mode: Mode,
    pub total_steps: u64,
    pub epsilon: EpsilonSchedule,
    pub langevin: bool,
    pub seed: u64,
    pub batch_size_cls: usize,
    pub batch_size_reg: usize,
    pub combiner: CombinerConfig,
    pub eval_every: u64,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.epsilon.validate()?;
        self.combiner.validate()?;
        if self.total_steps == 0 {
            return Err(CoreError::Config("total_steps must be >= 1".into()));
        }
        if self.batch_size_cls == 0 || self.batch_size_reg == 0 {
            return Err(CoreError::Config("batch sizes must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(CoreError::Config("eval_every must be >= 1".into()));
        }
        if let Mode::FixedWeight(w) = self.mode {
            if !(w >= 0.0) {
                return Err(CoreError::Config(format!("fixed weight must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// One per-step trace record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub alpha_gclb: f64,
    pub alpha_srpr: f64,
    pub criterion: f64,
    pub reg_grad_norm_sq: f64,
    /// Inner product of the calibrated gradient with the regression
    /// gradient; equals `criterion` in modes without calibration.
    pub gstar_dot_greg: f64,
    pub noise_applied: bool,
}

/// Periodic held-out evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub val_reg_loss: f64,
    pub val_proxy_cls_loss: f64,
    pub val_evaluator_cls_loss: Vec<f64>,
}

/// Full trace of one fine-tuning run plus the final parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub final_theta: ParamVector,
}

/// Everything a fine-tuning run consumes: the enhancer architecture, the
/// frozen proxy, data splits, and the held-out evaluator family.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub enhancer_spec: NetworkSpec,
    pub proxy: ProxyModel,
    /// Full noisy-clean pairs for the regression objective.
    pub reg_train: TaskData,
    /// Labeled subset for the classification objective.
    pub cls_train: TaskData,
    pub val: TaskData,
    pub evaluators: EvaluatorSet,
}

/// Gaussian noise vector with per-coordinate variance `2 * epsilon_t`.
pub fn langevin_noise(dim: usize, epsilon_t: f64, rng: &mut Rng) -> ParamVector {
    let std = libm::sqrt(2.0 * epsilon_t);
    ParamVector::from_vec((0..dim).map(|_| std * rng::gaussian(rng)).collect())
}

fn check_finite(v: &ParamVector, loss: f64, step: u64, what: &str) -> Result<(), CoreError> {
    if !loss.is_finite() || !v.is_finite() {
        return Err(CoreError::Numerical { step, what: format!("non-finite {what}") });
    }
    Ok(())
}

/// One joint fine-tuning step. Returns the updated parameters, the updated
/// combiner state, and the trace record for this step.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    theta: &ParamVector,
    enhancer_spec: &NetworkSpec,
    proxy: &ProxyModel,
    reg_batch: &RegBatch,
    cls_batch: &ClsBatch,
    state: &CombinerState,
    cfg: &TrainerConfig,
    step: u64,
    noise_rng: &mut Rng,
) -> Result<(ParamVector, CombinerState, StepRecord), CoreError> {
    if !cfg.mode.is_joint() {
        return Err(CoreError::Config("joint_step requires a joint mode".into()));
    }
    let (cls_loss, g_cls) = objective::cls_loss_and_grad(enhancer_spec, theta, proxy, cls_batch)?;
    let (reg_loss, g_reg) = objective::reg_loss_and_grad(enhancer_spec, theta, reg_batch)?;
    check_finite(&g_cls, cls_loss, step, "classification gradient")?;
    check_finite(&g_reg, reg_loss, step, "regression gradient")?;

    let c = combiner::criterion(&g_cls, &g_reg)?;
    let reg_nsq = g_reg.norm_sq();
    let guard = cfg.combiner.eps_guard;

    let (a_gclb, coeff, next_state) = match cfg.mode {
        Mode::D4am => {
            let a = combiner::alpha_gclb(&g_cls, &g_reg, guard)?;
            let g_alpha = combiner::alpha_srpr_grad(&g_cls, &g_reg, a, state.alpha_srpr, guard)?;
            let clamped = combiner::clamp_alpha_grad(g_alpha, &cfg.combiner);
            let next = combiner::accumulate_and_update_alpha(state, clamped, &cfg.combiner);
            (a, a + state.alpha_srpr, next)
        }
        Mode::Gclb => {
            let a = combiner::alpha_gclb(&g_cls, &g_reg, guard)?;
            (a, a, *state)
        }
        Mode::Srpr => {
            let g_alpha =
                combiner::alpha_srpr_grad(&g_cls, &g_reg, 0.0, state.alpha_srpr, guard)?;
            let clamped = combiner::clamp_alpha_grad(g_alpha, &cfg.combiner);
            let next = combiner::accumulate_and_update_alpha(state, clamped, &cfg.combiner);
            (0.0, state.alpha_srpr, next)
        }
        Mode::Clso => (0.0, 0.0, *state),
        Mode::FixedWeight(w) => (0.0, w, *state),
        Mode::InitPretrain => unreachable!(),
    };

    let eps = cfg.epsilon.at(step, cfg.total_steps);
    let mut next_theta = theta.clone();
    next_theta.axpy_mut(-eps, &g_cls)?;
    if coeff != 0.0 {
        next_theta.axpy_mut(-eps * coeff, &g_reg)?;
    }
    if cfg.langevin {
        let eta = langevin_noise(theta.len(), eps, noise_rng);
        next_theta.axpy_mut(1.0, &eta)?;
    }
    if !next_theta.is_finite() {
        return Err(CoreError::Numerical { step, what: "non-finite parameters".into() });
    }

    let record = StepRecord {
        step,
        cls_loss,
        reg_loss,
        alpha_gclb: a_gclb,
        alpha_srpr: state.alpha_srpr,
        criterion: c,
        reg_grad_norm_sq: reg_nsq,
        gstar_dot_greg: c + a_gclb * reg_nsq,
        noise_applied: cfg.langevin,
    };
    Ok((next_theta, next_state, record))
}

fn sample_reg_batch(data: &TaskData, batch_size: usize, rng: &mut Rng) -> Result<RegBatch, CoreError> {
    let d = data.noisy.ncols();
    let mut noisy = Matrix::zeros(batch_size, d);
    let mut clean = Matrix::zeros(batch_size, d);
    for b in 0..batch_size {
        let i = rng::index(rng, data.len());
        noisy.row_mut(b).copy_from_slice(data.noisy.row(i));
        clean.row_mut(b).copy_from_slice(data.clean.row(i));
    }
    RegBatch::new(noisy, clean)
}

fn sample_cls_batch(data: &TaskData, batch_size: usize, rng: &mut Rng) -> Result<ClsBatch, CoreError> {
    let d = data.noisy.ncols();
    let mut noisy = Matrix::zeros(batch_size, d);
    let mut labels = Vec::with_capacity(batch_size);
    for b in 0..batch_size {
        let i = rng::index(rng, data.len());
        noisy.row_mut(b).copy_from_slice(data.noisy.row(i));
        labels.push(data.labels[i]);
    }
    ClsBatch::new(noisy, labels)
}

/// Regression-only pre-training by plain gradient descent: no noise, no
/// coefficient machinery. Returns the trained checkpoint. `steps == 0`
/// returns the initialization unchanged.
pub fn pretrain(
    enhancer_spec: &NetworkSpec,
    data: &TaskData,
    steps: u64,
    epsilon: f64,
    batch_size: usize,
    seed: u64,
) -> Result<ParamVector, CoreError> {
    let mut theta = net::init_params(enhancer_spec, seed)?;
    let mut batch_rng = rng::substream(seed, 0x9E6);
    for step in 0..steps {
        let batch = sample_reg_batch(data, batch_size.min(data.len()), &mut batch_rng)?;
        let (loss, grad) = objective::reg_loss_and_grad(enhancer_spec, &theta, &batch)?;
        check_finite(&grad, loss, step, "pre-training gradient")?;
        theta.axpy_mut(-epsilon, &grad)?;
        if !theta.is_finite() {
            return Err(CoreError::Numerical { step, what: "non-finite parameters".into() });
        }
    }
    Ok(theta)
}

fn eval_pass(
    bundle: &TaskBundle,
    theta: &ParamVector,
    step: u64,
) -> Result<EvalRecord, CoreError> {
    let val = &bundle.val;
    let reg_batch = RegBatch::new(val.noisy.clone(), val.clean.clone())?;
    let val_reg_loss = objective::reg_loss(&bundle.enhancer_spec, theta, &reg_batch)?;
    let val_proxy_cls_loss = task::eval_cls_loss(
        &bundle.enhancer_spec,
        theta,
        &bundle.proxy,
        &val.noisy,
        &val.labels,
    )?;
    let mut val_evaluator_cls_loss = Vec::with_capacity(bundle.evaluators.len());
    for ev in &bundle.evaluators.evaluators {
        val_evaluator_cls_loss.push(task::eval_cls_loss(
            &bundle.enhancer_spec,
            theta,
            &ev.model,
            &val.noisy,
            &val.labels,
        )?);
    }
    Ok(EvalRecord { step, val_reg_loss, val_proxy_cls_loss, val_evaluator_cls_loss })
}

/// Run a full fine-tuning trajectory from `init_theta`, evaluating every
/// `eval_every` steps and at the final step.
pub fn run(
    cfg: &TrainerConfig,
    bundle: &TaskBundle,
    init_theta: ParamVector,
) -> Result<RunReport, CoreError> {
    cfg.validate()?;
    if !cfg.mode.is_joint() {
        return Err(CoreError::Config("run requires a joint mode".into()));
    }
    // Batch draws and Langevin noise use independent streams so toggling
    // the noise does not shift the data sequence.
    let mut batch_rng = rng::substream(cfg.seed, 0xBA7C);
    let mut noise_rng = rng::substream(cfg.seed, 0x401E);
    let mut theta = init_theta;
    let mut state = CombinerState::new(&cfg.combiner);
    let mut steps = Vec::with_capacity(cfg.total_steps as usize);
    let mut evals = Vec::new();
    for step in 0..cfg.total_steps {
        let reg_batch = sample_reg_batch(
            &bundle.reg_train,
            cfg.batch_size_reg.min(bundle.reg_train.len()),
            &mut batch_rng,
        )?;
        let cls_batch = sample_cls_batch(
            &bundle.cls_train,
            cfg.batch_size_cls.min(bundle.cls_train.len()),
            &mut batch_rng,
        )?;
        let (next_theta, next_state, record) = joint_step(
            &theta,
            &bundle.enhancer_spec,
            &bundle.proxy,
            &reg_batch,
            &cls_batch,
            &state,
            cfg,
            step,
            &mut noise_rng,
        )?;
        theta = next_theta;
        state = next_state;
        steps.push(record);
        if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps {
            evals.push(eval_pass(bundle, &theta, step)?);
        }
    }
    Ok(RunReport { mode: cfg.mode, seed: cfg.seed, steps, evals, final_theta: theta })
}
