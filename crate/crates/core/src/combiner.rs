//! Gradient combination: the alignment criterion, the calibration
//! coefficient and calibrated gradient, and the adaptive surrogate-prior
//! coefficient with its clamped, accumulated update.
//!
//! Given the classification gradient `g_cls` and regression gradient
//! `g_reg` at a step, the criterion is `C = <g_cls, g_reg>`. When `C < 0`
//! the classification gradient is calibrated to the closest vector whose
//! inner product with `g_reg` is nonnegative:
//!
//! ```text
//! g* = g_cls + alpha_gclb * g_reg,   alpha_gclb = [C < 0] * (-C / ||g_reg||^2)
//! ```
//!
//! Independently, the coefficient `alpha_srpr` weighting the regression
//! term is adapted by gradient descent on
//! `||g_cls + (alpha_gclb - alpha) * g_reg||^2`, with per-step clamping and
//! accumulation over a fixed update period.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::vecmath::ParamVector;

/// Hyperparameters of the surrogate-prior update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerConfig {
    /// Learning rate for `alpha_srpr`.
    pub beta: f64,
    /// Steps between `alpha_srpr` updates; gradients are accumulated in
    /// between.
    pub update_period: u32,
    /// Per-step clamp bounds on the `alpha` gradient.
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    pub alpha_srpr_init: f64,
    /// Below this squared norm of `g_reg`, calibration and the `alpha`
    /// gradient are zeroed instead of dividing by a vanishing norm.
    pub eps_guard: f64,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            update_period: 16,
            clamp_lo: -1.0,
            clamp_hi: 1.0,
            alpha_srpr_init: 1.0,
            eps_guard: 1e-12,
        }
    }
}

impl CombinerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.update_period < 1 {
            return Err(CoreError::Config("update_period must be >= 1".into()));
        }
        if !(self.beta > 0.0) {
            return Err(CoreError::Config("beta must be positive".into()));
        }
        if !(self.clamp_lo < self.clamp_hi) {
            return Err(CoreError::Config("clamp_lo must be below clamp_hi".into()));
        }
        if !(self.eps_guard > 0.0) {
            return Err(CoreError::Config("eps_guard must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable state of the surrogate-prior coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinerState {
    pub alpha_srpr: f64,
    pub accum_alpha_grad: f64,
    pub steps_since_alpha_update: u32,
}

impl CombinerState {
    pub fn new(cfg: &CombinerConfig) -> Self {
        Self {
            alpha_srpr: cfg.alpha_srpr_init,
            accum_alpha_grad: 0.0,
            steps_since_alpha_update: 0,
        }
    }
}

/// Alignment criterion `C = <g_cls, g_reg>`.
pub fn criterion(g_cls: &ParamVector, g_reg: &ParamVector) -> Result<f64, CoreError> {
    g_cls.dot(g_reg)
}

/// Calibration coefficient: zero when the gradients already agree
/// (`C >= 0`) or when `||g_reg||^2` falls under the guard, otherwise
/// `-C / ||g_reg||^2` (strictly positive).
pub fn alpha_gclb(
    g_cls: &ParamVector,
    g_reg: &ParamVector,
    eps_guard: f64,
) -> Result<f64, CoreError> {
    let c = criterion(g_cls, g_reg)?;
    let reg_norm_sq = g_reg.norm_sq();
    if reg_norm_sq <= eps_guard || c >= 0.0 {
        Ok(0.0)
    } else {
        Ok(-c / reg_norm_sq)
    }
}

/// Calibrated gradient `g* = g_cls + alpha_gclb * g_reg`. When `C >= 0`
/// the input is returned unchanged bit-for-bit.
pub fn calibrate(
    g_cls: &ParamVector,
    g_reg: &ParamVector,
    eps_guard: f64,
) -> Result<(ParamVector, f64), CoreError> {
    let a = alpha_gclb(g_cls, g_reg, eps_guard)?;
    if a == 0.0 {
        // Checks lengths even on the no-op path.
        criterion(g_cls, g_reg)?;
        Ok((g_cls.clone(), 0.0))
    } else {
        Ok((g_cls.axpy(a, g_reg)?, a))
    }
}

/// Exact derivative of `||g_cls + (alpha_gclb - alpha) * g_reg||^2` with
/// respect to `alpha`, evaluated at `alpha = alpha_srpr`:
/// `-2<g_cls, g_reg> - 2(alpha_gclb - alpha_srpr)||g_reg||^2`.
/// Zero when `||g_reg||^2` falls under the guard.
pub fn alpha_srpr_grad(
    g_cls: &ParamVector,
    g_reg: &ParamVector,
    alpha_gclb: f64,
    alpha_srpr: f64,
    eps_guard: f64,
) -> Result<f64, CoreError> {
    let c = criterion(g_cls, g_reg)?;
    let reg_norm_sq = g_reg.norm_sq();
    if reg_norm_sq <= eps_guard {
        return Ok(0.0);
    }
    Ok(-2.0 * c - 2.0 * (alpha_gclb - alpha_srpr) * reg_norm_sq)
}

/// Clamp the per-step `alpha` gradient to `[clamp_lo, clamp_hi]`.
pub fn clamp_alpha_grad(g_alpha: f64, cfg: &CombinerConfig) -> f64 {
    g_alpha.max(cfg.clamp_lo).min(cfg.clamp_hi)
}

/// Add one clamped gradient to the buffer; on every `update_period`-th call
/// apply `alpha_srpr -= beta * mean(buffer)` and reset. `alpha_srpr` itself
/// is unbounded.
pub fn accumulate_and_update_alpha(
    state: &CombinerState,
    g_alpha_clamped: f64,
    cfg: &CombinerConfig,
) -> CombinerState {
    let mut next = *state;
    next.accum_alpha_grad += g_alpha_clamped;
    next.steps_since_alpha_update += 1;
    if next.steps_since_alpha_update >= cfg.update_period {
        let mean = next.accum_alpha_grad / cfg.update_period as f64;
        next.alpha_srpr -= cfg.beta * mean;
        next.accum_alpha_grad = 0.0;
        next.steps_since_alpha_update = 0;
    }
    next
}
