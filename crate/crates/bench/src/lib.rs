//! Shared fixtures for the benchmark targets.

use gnni_core::graph::{build_topology, StructureKind};
use gnni_core::model::{sample_mrf, BinaryMrf};
use gnni_core::rng::seeded_rng;

/// A dense 9-node instance with seeded parameters.
pub fn k9_instance(seed: u64) -> BinaryMrf {
    let topology = build_topology(StructureKind::Complete, 9).expect("k9 builds");
    sample_mrf(&topology, &mut seeded_rng(seed))
}

/// A 4x4 lattice instance with seeded parameters.
pub fn grid16_instance(seed: u64) -> BinaryMrf {
    let topology = build_topology(StructureKind::Grid, 16).expect("grid builds");
    sample_mrf(&topology, &mut seeded_rng(seed))
}
