//! Sum-product and max-product belief propagation.

use super::{directed_id, run_sweeps, BaselineResult, FixedPointConfig, MessageSet};
use crate::error::Result;
use crate::model::BinaryMrf;

const SPINS: [f64; 2] = [1.0, -1.0];

/// Product over incoming messages `mu_{k -> i}(x_i)` for `k` in `N_i`
/// excluding `skip`, in neighbor order.
#[inline]
fn incoming_product(mrf: &BinaryMrf, messages: &MessageSet, i: usize, skip: usize) -> [f64; 2] {
    let mut product = [1.0f64; 2];
    for &(k, ke) in mrf.topology().neighbors(i) {
        if k == skip {
            continue;
        }
        let m = messages.get(directed_id(ke, k, i));
        product[0] *= m[0];
        product[1] *= m[1];
    }
    product
}

fn message_endpoints(mrf: &BinaryMrf, d: usize) -> (usize, usize, f64) {
    let (a, b) = mrf.topology().edges()[d / 2];
    let coupling = mrf.coupling(d / 2);
    if d.is_multiple_of(2) {
        (a, b, coupling)
    } else {
        (b, a, coupling)
    }
}

/// Sum-product update for the directed message `i -> j`:
/// `mu_ij(x_j) = sum_{x_i} exp(J_ij x_i x_j + b_i x_i) prod_{k in N_i \ j} mu_ki(x_i)`.
fn sum_product_update(mrf: &BinaryMrf, messages: &MessageSet, d: usize) -> [f64; 2] {
    let (i, j, coupling) = message_endpoints(mrf, d);
    let bias = mrf.bias(i);
    let product = incoming_product(mrf, messages, i, j);
    let mut out = [0.0f64; 2];
    for (xj_idx, &xj) in SPINS.iter().enumerate() {
        let mut acc = 0.0;
        for (xi_idx, &xi) in SPINS.iter().enumerate() {
            acc += (coupling * xi * xj + bias * xi).exp() * product[xi_idx];
        }
        out[xj_idx] = acc;
    }
    out
}

/// Max-product variant: the sum over `x_i` becomes a max.
fn max_product_update(mrf: &BinaryMrf, messages: &MessageSet, d: usize) -> [f64; 2] {
    let (i, j, coupling) = message_endpoints(mrf, d);
    let bias = mrf.bias(i);
    let product = incoming_product(mrf, messages, i, j);
    let mut out = [0.0f64; 2];
    for (xj_idx, &xj) in SPINS.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for (xi_idx, &xi) in SPINS.iter().enumerate() {
            best = best.max((coupling * xi * xj + bias * xi).exp() * product[xi_idx]);
        }
        out[xj_idx] = best;
    }
    out
}

/// Normalized node beliefs `p_i(x_i) ~ exp(b_i x_i) prod_k mu_ki(x_i)`.
fn beliefs(mrf: &BinaryMrf, messages: &MessageSet) -> Vec<f64> {
    (0..mrf.n())
        .map(|i| {
            let bias = mrf.bias(i);
            let mut belief = [bias.exp(), (-bias).exp()];
            for &(k, ke) in mrf.topology().neighbors(i) {
                let m = messages.get(directed_id(ke, k, i));
                belief[0] *= m[0];
                belief[1] *= m[1];
            }
            belief[0] / (belief[0] + belief[1])
        })
        .collect()
}

/// Loopy sum-product from uniform messages; exact on trees.
pub fn bp_sum_product(mrf: &BinaryMrf, cfg: &FixedPointConfig) -> Result<BaselineResult> {
    let (result, _) = sum_product_with_init(mrf, cfg, MessageSet::uniform(mrf.topology()))?;
    Ok(result)
}

pub(crate) fn sum_product_with_init(
    mrf: &BinaryMrf,
    cfg: &FixedPointConfig,
    init: MessageSet,
) -> Result<(BaselineResult, MessageSet)> {
    let (messages, converged, iterations, residuals) =
        run_sweeps("bp_sum_product", init, cfg, |msgs, d| {
            sum_product_update(mrf, msgs, d)
        })?;
    let result = BaselineResult {
        marginals_p1: beliefs(mrf, &messages),
        map_state: None,
        converged,
        iterations,
        residuals,
    };
    Ok((result, messages))
}

/// Max-product (belief revision). The decoded state takes the per-node
/// argmax of the max-marginal, ties toward `+1`.
pub fn bp_max_product(mrf: &BinaryMrf, cfg: &FixedPointConfig) -> Result<BaselineResult> {
    let (messages, converged, iterations, residuals) = run_sweeps(
        "bp_max_product",
        MessageSet::uniform(mrf.topology()),
        cfg,
        |msgs, d| max_product_update(mrf, msgs, d),
    )?;
    let marginals_p1 = beliefs(mrf, &messages);
    let map_state = marginals_p1
        .iter()
        .map(|&p| if p >= 0.5 { 1 } else { -1 })
        .collect();
    Ok(BaselineResult {
        marginals_p1,
        map_state: Some(map_state),
        converged,
        iterations,
        residuals,
    })
}
