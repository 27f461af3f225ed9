//! Adadelta update rule.
//!
//! Per element, with decay `rho` and stabilizer `eps`:
//!
//! ```text
//! E[g²]  ← rho·E[g²] + (1-rho)·g²
//! Δ      = -sqrt(E[Δ²] + eps) / sqrt(E[g²] + eps) · g
//! E[Δ²]  ← rho·E[Δ²] + (1-rho)·Δ²
//! value  += Δ
//! ```
//!
//! There is no global learning rate; `eps` guards both roots so the update
//! magnitude stays finite for any finite gradient.

use super::Parameter;
use crate::error::{Error, Result};

/// Canonical hyperparameters for the recurrence.
pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// Apply one Adadelta step to `param` and zero its gradient.
/// Frozen parameters are left untouched (gradient included).
pub fn adadelta_step(param: &mut Parameter, rho: f64, eps: f64) -> Result<()> {
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::invalid(format!("adadelta rho {rho} not in (0, 1)")));
    }
    if eps <= 0.0 {
        return Err(Error::invalid(format!("adadelta eps {eps} must be positive")));
    }
    if param.frozen {
        return Ok(());
    }
    if !param.grad.all_finite() {
        return Err(Error::numerical("non-finite gradient in adadelta step"));
    }
    let n = param.value.len();
    let value = param.value.values_mut();
    let grad = param.grad.values_mut();
    let eg2 = param.acc_grad_sq.values_mut();
    let ed2 = param.acc_update_sq.values_mut();
    for i in 0..n {
        let g = grad[i];
        eg2[i] = rho * eg2[i] + (1.0 - rho) * g * g;
        let delta = -((ed2[i] + eps).sqrt() / (eg2[i] + eps).sqrt()) * g;
        ed2[i] = rho * ed2[i] + (1.0 - rho) * delta * delta;
        value[i] += delta;
        grad[i] = 0.0;
    }
    Ok(())
}
