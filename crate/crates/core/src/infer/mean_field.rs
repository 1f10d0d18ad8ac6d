//! Naive mean field: fully factorized fixed point over magnetizations.

use super::{BaselineResult, FixedPointConfig};
use crate::error::{Error, Result};
use crate::model::BinaryMrf;

/// Synchronous damped iteration of
/// `m_i <- tanh(b_i + sum_{j in N_i} J_ij m_j)` from `m = 0`,
/// reported as `p_i(+1) = (1 + m_i) / 2`.
pub fn mean_field(mrf: &BinaryMrf, cfg: &FixedPointConfig) -> Result<BaselineResult> {
    cfg.validate()?;
    let n = mrf.n();
    let mut m = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let mut residual = 0.0f64;
        for i in 0..n {
            let mut field = mrf.bias(i);
            for &(j, e) in mrf.topology().neighbors(i) {
                field += mrf.coupling(e) * m[j];
            }
            let updated = (1.0 - cfg.damping) * field.tanh() + cfg.damping * m[i];
            if !updated.is_finite() {
                return Err(Error::NumericalFailure { method: "mean_field", iteration: iter });
            }
            residual = residual.max((updated - m[i]).abs());
            next[i] = updated;
        }
        std::mem::swap(&mut m, &mut next);
        residuals.push(residual);
        if residual <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(BaselineResult {
        marginals_p1: m.iter().map(|v| (1.0 + v) / 2.0).collect(),
        map_state: Some(m.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()),
        converged,
        iterations,
        residuals,
    })
}
