//! Binary pairwise Markov random fields over spins in `{+1, -1}`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::GraphTopology;

/// Standard deviation of sampled couplings.
pub const COUPLING_STD: f64 = 1.0;
/// Standard deviation of sampled biases.
pub const BIAS_STD: f64 = 0.25;

/// A binary pairwise MRF: a topology, one symmetric coupling per undirected
/// edge (aligned with `topology.edges()`), and one bias per node.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMrf {
    topology: GraphTopology,
    coupling: Vec<f64>,
    bias: Vec<f64>,
}

impl BinaryMrf {
    pub fn new(topology: GraphTopology, coupling: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if coupling.len() != topology.edge_count() {
            return Err(Error::Contract(format!(
                "expected {} couplings, got {}",
                topology.edge_count(),
                coupling.len()
            )));
        }
        if bias.len() != topology.n() {
            return Err(Error::Contract(format!(
                "expected {} biases, got {}",
                topology.n(),
                bias.len()
            )));
        }
        if coupling.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Contract("all parameters must be finite".into()));
        }
        Ok(Self { topology, coupling, bias })
    }

    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    /// Coupling of the edge at `edge_idx` in `topology.edges()` order.
    pub fn coupling(&self, edge_idx: usize) -> f64 {
        self.coupling[edge_idx]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.coupling
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.bias[i]
    }

    pub fn biases(&self) -> &[f64] {
        &self.bias
    }

    /// Same topology with negated biases; couplings unchanged.
    pub fn with_negated_biases(&self) -> BinaryMrf {
        BinaryMrf {
            topology: self.topology.clone(),
            coupling: self.coupling.clone(),
            bias: self.bias.iter().map(|b| -b).collect(),
        }
    }
}

/// Draw couplings `N(0, 1)` and biases `N(0, 1/4^2)` on a fixed topology.
/// Couplings are drawn in edge order, then biases in node order, so the
/// result is a pure function of the generator state.
pub fn sample_mrf(topology: &GraphTopology, rng: &mut impl Rng) -> BinaryMrf {
    let coupling_dist = Normal::new(0.0, COUPLING_STD).unwrap();
    let bias_dist = Normal::new(0.0, BIAS_STD).unwrap();
    let coupling = (0..topology.edge_count())
        .map(|_| coupling_dist.sample(rng))
        .collect();
    let bias = (0..topology.n()).map(|_| bias_dist.sample(rng)).collect();
    BinaryMrf::new(topology.clone(), coupling, bias).expect("sampled parameters are finite")
}

/// Check that a state vector is over `{+1, -1}` and the right length.
pub fn check_state(n: usize, x: &[i8]) -> Result<()> {
    if x.len() != n {
        return Err(Error::Contract(format!(
            "state length {} does not match n={}",
            x.len(),
            n
        )));
    }
    if let Some(bad) = x.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::Contract(format!("state entry {bad} is not +1 or -1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, StructureKind};
    use crate::rng::seeded_rng;

    #[test]
    fn sampled_coupling_variance_near_unit() {
        let t = build_topology(StructureKind::Complete, 9).unwrap();
        let mut rng = seeded_rng(77);
        let mut values = Vec::with_capacity(100_000);
        while values.len() < 100_000 {
            let mrf = sample_mrf(&t, &mut rng);
            values.extend_from_slice(mrf.couplings());
        }
        values.truncate(100_000);
        let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let var: f64 =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        assert!((0.97..=1.03).contains(&var), "coupling variance {var}");
    }

    #[test]
    fn sampled_bias_std_near_quarter() {
        let t = build_topology(StructureKind::Complete, 9).unwrap();
        let mut rng = seeded_rng(78);
        let mut values = Vec::with_capacity(100_000);
        while values.len() < 100_000 {
            let mrf = sample_mrf(&t, &mut rng);
            values.extend_from_slice(mrf.biases());
        }
        values.truncate(100_000);
        let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64)
            .sqrt();
        assert!((0.245..=0.255).contains(&std), "bias std {std}");
    }

    #[test]
    fn same_seed_same_mrf() {
        let t = build_topology(StructureKind::Grid, 9).unwrap();
        let a = sample_mrf(&t, &mut seeded_rng(5));
        let b = sample_mrf(&t, &mut seeded_rng(5));
        assert_eq!(a, b);
    }

    #[test]
    fn new_validates_lengths_and_finiteness() {
        let t = build_topology(StructureKind::Chain, 3).unwrap();
        assert!(BinaryMrf::new(t.clone(), vec![0.0], vec![0.0; 3]).is_err());
        assert!(BinaryMrf::new(t.clone(), vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(BinaryMrf::new(t.clone(), vec![f64::NAN, 0.0], vec![0.0; 3]).is_err());
        assert!(BinaryMrf::new(t, vec![0.0; 2], vec![0.0; 3]).is_ok());
    }

    #[test]
    fn check_state_rejects_bad_entries() {
        assert!(check_state(2, &[1, -1]).is_ok());
        assert!(check_state(2, &[1]).is_err());
        assert!(check_state(2, &[1, 0]).is_err());
    }
}
