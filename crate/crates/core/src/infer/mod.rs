//! Message-passing and variational baselines on binary pairwise MRFs.

mod bp;
mod mean_field;
mod trbp;

pub use bp::{bp_max_product, bp_sum_product};
pub use mean_field::mean_field;
pub use trbp::{edge_appearance_probs, trbp, RhoMethod};

use crate::error::{Error, Result};
use crate::graph::GraphTopology;

/// One normalized message per directed edge. For the undirected edge at
/// index `e` joining `i < j`, direction `i -> j` sits at `2e` and `j -> i`
/// at `2e + 1`. Entry 0 is the mass on `+1`, entry 1 on `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    values: Vec<[f64; 2]>,
}

impl MessageSet {
    /// All messages uniform `(0.5, 0.5)`.
    pub fn uniform(topology: &GraphTopology) -> Self {
        Self {
            values: vec![[0.5, 0.5]; 2 * topology.edge_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, directed: usize) -> [f64; 2] {
        self.values[directed]
    }

    /// Every message strictly positive and summing to one.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|m| m[0] > 0.0 && m[1] > 0.0 && (m[0] + m[1] - 1.0).abs() <= tol)
    }
}

/// Directed slot of `from -> to` for the undirected edge at `edge_idx`.
#[inline]
pub(crate) fn directed_id(edge_idx: usize, from: usize, to: usize) -> usize {
    2 * edge_idx + usize::from(from > to)
}

/// Fixed-point iteration controls shared by all baselines: synchronous
/// sweeps, damped update `(1 - damping) * new + damping * old`, and a stop
/// on the max absolute change per sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    pub tolerance: f64,
    pub damping: f64,
}

impl FixedPointConfig {
    /// Damped preset for graphs with cycles.
    pub fn default_loopy() -> Self {
        Self {
            max_iters: 200,
            tolerance: 1e-8,
            damping: 0.5,
        }
    }

    /// Undamped preset; on trees this converges within diameter + 1 sweeps.
    pub fn undamped() -> Self {
        Self {
            damping: 0.0,
            ..Self::default_loopy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Contract("max_iters must be >= 1".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::Contract("tolerance must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Contract(format!(
                "damping must be in [0, 1), got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self::default_loopy()
    }
}

/// Output of one baseline run. Non-convergence is reported, not raised:
/// the final iterate is still scored on dense graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Estimated `p_i(+1)`; for max-product these are normalized
    /// max-marginals rather than sum-marginals.
    pub marginals_p1: Vec<f64>,
    /// Decoded state, present for max-product runs.
    pub map_state: Option<Vec<i8>>,
    pub converged: bool,
    pub iterations: usize,
    /// Max absolute message change per sweep; never empty.
    pub residuals: Vec<f64>,
}

/// Synchronous damped sweep driver over directed-edge messages. `update`
/// reads only the previous iterate, so the sweep order is immaterial; the
/// residual is reduced in directed-edge order.
pub(crate) fn run_sweeps<F>(
    method: &'static str,
    init: MessageSet,
    cfg: &FixedPointConfig,
    mut update: F,
) -> Result<(MessageSet, bool, usize, Vec<f64>)>
where
    F: FnMut(&MessageSet, usize) -> [f64; 2],
{
    cfg.validate()?;
    let mut current = init;
    let mut next = current.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let mut residual = 0.0f64;
        for d in 0..current.len() {
            let raw = update(&current, d);
            let sum = raw[0] + raw[1];
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::NumericalFailure { method, iteration: iter });
            }
            let normalized = [raw[0] / sum, raw[1] / sum];
            let old = current.values[d];
            let damped = [
                (1.0 - cfg.damping) * normalized[0] + cfg.damping * old[0],
                (1.0 - cfg.damping) * normalized[1] + cfg.damping * old[1],
            ];
            let dsum = damped[0] + damped[1];
            let renorm = [damped[0] / dsum, damped[1] / dsum];
            residual = residual.max((renorm[0] - old[0]).abs());
            residual = residual.max((renorm[1] - old[1]).abs());
            next.values[d] = renorm;
        }
        std::mem::swap(&mut current, &mut next);
        residuals.push(residual);
        if residual <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok((current, converged, iterations, residuals))
}
