//! Shared helpers for the integration suites: finite-difference gradient
//! probes that stay independent of the tape's backward rules.

use std::collections::BTreeMap;

use gnni_core::dataset::LabeledModel;
use gnni_core::gnn::{build_gnn_graph, forward, GnnGraph, GnnWeights};
use gnni_core::tape::Tape;
use gnni_core::train::{cross_entropy_loss, cross_entropy_value, targets_for, Task};

/// Forward-only loss of the network on one graph, as a plain number.
pub fn gnn_loss_value(weights: &GnnWeights, graph: &GnnGraph, targets: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let pass = forward(graph, weights, weights.arch.t_steps, &mut tape).expect("forward");
    cross_entropy_value(&pass.marginals_p1, targets)
}

/// Backward-pass gradients for the same loss.
pub fn gnn_analytic_grads(
    weights: &mut GnnWeights,
    graph: &GnnGraph,
    targets: &[f64],
) -> BTreeMap<String, Vec<f64>> {
    weights.store.clear_grads();
    let mut tape = Tape::new();
    let pass = forward(graph, weights, weights.arch.t_steps, &mut tape).expect("forward");
    let loss = cross_entropy_loss(&mut tape, &pass.pred_ids, targets).expect("loss");
    tape.backward(loss, &mut weights.store).expect("backward");
    let grads = weights
        .store
        .names()
        .map(|n| (n.to_string(), weights.store.grad(n).unwrap().data().to_vec()))
        .collect();
    weights.store.clear_grads();
    grads
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Outcome of a full-network finite-difference sweep.
pub struct GradCheck {
    /// Max relative error over all parameter entries, each taken at its
    /// first valid probe step.
    pub worst_rel_err: f64,
    /// Entries whose probe at the primary step straddled a ReLU kink and
    /// needed a smaller step to become a valid derivative estimate.
    #[allow(dead_code)]
    pub fallback_entries: usize,
    #[allow(dead_code)]
    pub total_entries: usize,
}

/// Compare backward-pass gradients against central finite differences over
/// every entry of every parameter.
///
/// A probe of half-width `step` is only a derivative estimate while the
/// loss is smooth inside it; a rectifier boundary inside the interval
/// invalidates it. Entries failing at the primary step are re-probed at
/// `step / 10` and `step / 100` (a wrong gradient fails at every width,
/// since the finite-difference error only shrinks).
pub fn gnn_grad_check(weights: &mut GnnWeights, model: &LabeledModel, step: f64) -> GradCheck {
    let graph = build_gnn_graph(&model.mrf, weights.arch.kind);
    let targets = targets_for(Task::Marginals, model);
    let analytic = gnn_analytic_grads(weights, &graph, &targets);
    let names: Vec<String> = weights.store.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    let mut fallbacks = 0usize;
    let mut total = 0usize;
    for name in names {
        let data = weights.store.get(&name).unwrap().data().to_vec();
        for (i, &original) in data.iter().enumerate() {
            total += 1;
            let mut best = f64::INFINITY;
            for (attempt, h) in [step, step / 10.0, step / 100.0].into_iter().enumerate() {
                weights.store.set_entry(&name, i, original + h).unwrap();
                let up = gnn_loss_value(weights, &graph, &targets);
                weights.store.set_entry(&name, i, original - h).unwrap();
                let down = gnn_loss_value(weights, &graph, &targets);
                weights.store.set_entry(&name, i, original).unwrap();
                let numeric = (up - down) / (2.0 * h);
                best = best.min(rel_err(analytic[&name][i], numeric));
                if best < 1e-4 {
                    if attempt > 0 {
                        fallbacks += 1;
                    }
                    break;
                }
            }
            worst = worst.max(best);
        }
    }
    GradCheck {
        worst_rel_err: worst,
        fallback_entries: fallbacks,
        total_entries: total,
    }
}
