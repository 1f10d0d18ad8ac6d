//! Ground truth by exhaustive enumeration: log partition function, exact
//! marginals, and the MAP state.

use crate::error::{Error, Result};
use crate::model::{check_state, BinaryMrf};

/// Largest node count accepted for enumeration (2^20 states).
pub const ENUMERATION_CAP: usize = 20;

/// Exact quantities for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub log_z: f64,
    /// `p_i(x_i = +1)`, strictly inside `(0, 1)` for finite parameters.
    pub marginals_p1: Vec<f64>,
    /// Most probable joint state; ties resolved to the lexicographically
    /// smallest state under the order `+1 < -1`.
    pub map_state: Vec<i8>,
    /// Unnormalized log-probability of `map_state`.
    pub map_log_score: f64,
}

/// Energy of a state: `b . x + sum_{(i,j) in E} J_ij x_i x_j`, each
/// undirected edge counted once.
pub fn unnormalized_log_prob(mrf: &BinaryMrf, x: &[i8]) -> Result<f64> {
    check_state(mrf.n(), x)?;
    let mut total = 0.0;
    for (i, &b) in mrf.biases().iter().enumerate() {
        total += b * f64::from(x[i]);
    }
    for (idx, &(i, j)) in mrf.topology().edges().iter().enumerate() {
        total += mrf.coupling(idx) * f64::from(x[i]) * f64::from(x[j]);
    }
    Ok(total)
}

/// Bit pattern -> state vector; variable 0 is the most significant bit and
/// a zero bit means `+1`, so ascending patterns are ascending in the
/// lexicographic order `+1 < -1`.
fn state_from_bits(n: usize, bits: u64) -> Vec<i8> {
    (0..n)
        .map(|i| if (bits >> (n - 1 - i)) & 1 == 0 { 1 } else { -1 })
        .collect()
}

pub fn enumerate(mrf: &BinaryMrf) -> Result<OracleResult> {
    enumerate_with_cap(mrf, ENUMERATION_CAP)
}

/// Enumerate all `2^n` states.
///
/// States are visited in complement pairs `(x, -x)`: the coupling energy is
/// shared and the bias energy flips sign, which halves the work and makes
/// the two conditional accumulators of every variable receive identical
/// addend sequences when `b = 0` — so unbiased models report marginals of
/// exactly one half.
pub fn enumerate_with_cap(mrf: &BinaryMrf, cap: usize) -> Result<OracleResult> {
    let n = mrf.n();
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    let half: u64 = 1 << (n - 1);
    let full_mask: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };

    let edges = mrf.topology().edges();
    let couplings = mrf.couplings();
    let biases = mrf.biases();

    // Pass 1: energies per pair, global max, MAP.
    let mut coupling_energy = vec![0.0f64; half as usize];
    let mut bias_energy = vec![0.0f64; half as usize];
    let mut max_score = f64::NEG_INFINITY;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_bits = 0u64;
    let mut spin = vec![1.0f64; n];
    for u in 0..half {
        for (i, s) in spin.iter_mut().enumerate() {
            *s = if (u >> (n - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
        }
        let mut e_j = 0.0;
        for (idx, &(i, j)) in edges.iter().enumerate() {
            e_j += couplings[idx] * spin[i] * spin[j];
        }
        let mut e_b = 0.0;
        for (i, &b) in biases.iter().enumerate() {
            e_b += b * spin[i];
        }
        let s_plus = e_j + e_b;
        let s_minus = e_j - e_b;
        coupling_energy[u as usize] = e_j;
        bias_energy[u as usize] = e_b;
        max_score = max_score.max(s_plus).max(s_minus);
        for (score, bits) in [(s_plus, u), (s_minus, (!u) & full_mask)] {
            if score > best_score || (score == best_score && bits < best_bits) {
                best_score = score;
                best_bits = bits;
            }
        }
    }

    // Pass 2: stable accumulation of the partition function and the
    // per-variable conditional masses.
    let mut acc_z = 0.0f64;
    let mut acc_plus = vec![0.0f64; n];
    let mut acc_minus = vec![0.0f64; n];
    for u in 0..half {
        let e_u = (coupling_energy[u as usize] + bias_energy[u as usize] - max_score).exp();
        let e_c = (coupling_energy[u as usize] - bias_energy[u as usize] - max_score).exp();
        acc_z += e_u;
        acc_z += e_c;
        for i in 0..n {
            if (u >> (n - 1 - i)) & 1 == 0 {
                acc_plus[i] += e_u;
                acc_minus[i] += e_c;
            } else {
                acc_minus[i] += e_u;
                acc_plus[i] += e_c;
            }
        }
    }

    let log_z = max_score + acc_z.ln();
    let marginals_p1: Vec<f64> = (0..n)
        .map(|i| acc_plus[i] / (acc_plus[i] + acc_minus[i]))
        .collect();
    debug_assert!(marginals_p1.iter().all(|&p| p > 0.0 && p < 1.0));

    Ok(OracleResult {
        log_z,
        marginals_p1,
        map_state: state_from_bits(n, best_bits),
        map_log_score: best_score,
    })
}
