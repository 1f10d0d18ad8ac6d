//! Named trainable parameters, their optimizer state, and the small
//! network building blocks (linear stacks and a gated recurrent cell)
//! expressed on the tape.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Tensor, ValueId};

/// Adam moments for one parameter.
#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Tensor,
    v: Tensor,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    value: Tensor,
    grad: Tensor,
    adam: AdamState,
}

/// Named parameter tensors with per-parameter Adam state. Iteration order
/// is the sorted name order, which keeps updates and serialization stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    grads_populated: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.slots.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter {name:?}")));
        }
        let (r, c) = value.shape();
        self.slots.insert(
            name.to_string(),
            Slot {
                grad: Tensor::zeros(r, c),
                adam: AdamState {
                    m: Tensor::zeros(r, c),
                    v: Tensor::zeros(r, c),
                    step: 0,
                },
                value,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    /// Overwrite one parameter entry; used by finite-difference probes.
    pub fn set_entry(&mut self, name: &str, index: usize, value: f64) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        slot.value.data_mut()[index] = value;
        Ok(())
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if slot.grad.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "accumulate_grad",
                lhs: slot.grad.shape(),
                rhs: g.shape(),
            });
        }
        slot.grad.add_assign(g);
        Ok(())
    }

    pub(crate) fn mark_grads_populated(&mut self) {
        self.grads_populated = true;
    }

    pub fn grads_populated(&self) -> bool {
        self.grads_populated
    }

    /// Scale every gradient in place, e.g. to average over a batch.
    pub fn scale_grads(&mut self, factor: f64) {
        for slot in self.slots.values_mut() {
            for g in slot.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    /// Largest absolute gradient entry.
    pub fn grad_max_abs(&self) -> f64 {
        self.slots
            .values()
            .flat_map(|s| s.grad.data())
            .fold(0.0f64, |acc, g| acc.max(g.abs()))
    }

    pub fn clear_grads(&mut self) {
        for slot in self.slots.values_mut() {
            for g in slot.grad.data_mut() {
                *g = 0.0;
            }
        }
        self.grads_populated = false;
    }

    /// One bias-corrected Adam update over all parameters, in name order.
    /// Requires gradients populated by a backward pass; clears them after.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
        if !self.grads_populated {
            return Err(Error::MissingGradients);
        }
        for slot in self.slots.values_mut() {
            slot.adam.step += 1;
            let t = slot.adam.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for i in 0..slot.value.len() {
                let g = slot.grad.data()[i];
                let m = beta1 * slot.adam.m.data()[i] + (1.0 - beta1) * g;
                let v = beta2 * slot.adam.v.data()[i] + (1.0 - beta2) * g * g;
                slot.adam.m.data_mut()[i] = m;
                slot.adam.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                slot.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.clear_grads();
        Ok(())
    }

    /// Copy of the parameter values only (no optimizer state).
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.slots
            .iter()
            .map(|(k, s)| (k.clone(), s.value.clone()))
            .collect()
    }

    /// Restore values from a snapshot; names and shapes must match.
    pub fn restore(&mut self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        if snapshot.len() != self.slots.len() {
            return Err(Error::Contract("snapshot names do not match store".into()));
        }
        for (name, value) in snapshot {
            let slot = self
                .slots
                .get_mut(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if slot.value.shape() != value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "restore",
                    lhs: slot.value.shape(),
                    rhs: value.shape(),
                });
            }
            slot.value = value.clone();
        }
        Ok(())
    }

    /// Serializable view of the parameter values.
    pub fn to_named_tensors(&self) -> BTreeMap<String, Tensor> {
        self.snapshot()
    }

    pub fn from_named_tensors(tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut store = ParamStore::new();
        for (name, value) in tensors {
            store.insert(&name, value)?;
        }
        Ok(store)
    }
}

/// Glorot-style uniform init on `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random::<f64>() * 2.0 * s - s)
        .collect();
    Tensor::matrix(rows, cols, data)
}

/// A stack of linear layers with ReLU between them and a linear output.
/// Owns only parameter names; values live in the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
}

impl Mlp {
    /// Register parameters for the layer sizes `dims = [in, h1, ..., out]`.
    /// Weights are Glorot-uniform, biases zero.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Contract(format!("bad layer sizes {dims:?}")));
        }
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            store.insert(&format!("{prefix}.l{l}.w"), glorot_uniform(fan_out, fan_in, rng))?;
            store.insert(&format!("{prefix}.l{l}.b"), Tensor::zeros(fan_out, 1))?;
        }
        Ok(Self {
            prefix: prefix.to_string(),
            dims: dims.to_vec(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Put the parameters on a tape once; the binding is then reused for
    /// every forward call on that tape.
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<BoundMlp> {
        let mut layers = Vec::new();
        for l in 0..self.dims.len() - 1 {
            let w = tape.param(store, &format!("{}.l{l}.w", self.prefix))?;
            let b = tape.param(store, &format!("{}.l{l}.b", self.prefix))?;
            layers.push((w, b));
        }
        Ok(BoundMlp { layers })
    }
}

#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(ValueId, ValueId)>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wx = tape.matvec(w, h)?;
            let z = tape.add(wx, b)?;
            h = if l + 1 < self.layers.len() { tape.relu(z) } else { z };
        }
        Ok(h)
    }
}

/// Standard three-gate recurrent cell: update and reset gates plus a
/// candidate state, state dimension `d`, input dimension `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    prefix: String,
    state_dim: usize,
    input_dim: usize,
}

impl GruCell {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        state_dim: usize,
        input_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::Contract("gru dimensions must be >= 1".into()));
        }
        for gate in ["z", "r", "c"] {
            store.insert(&format!("{prefix}.w{gate}"), glorot_uniform(state_dim, input_dim, rng))?;
            store.insert(&format!("{prefix}.u{gate}"), glorot_uniform(state_dim, state_dim, rng))?;
            store.insert(&format!("{prefix}.b{gate}"), Tensor::zeros(state_dim, 1))?;
        }
        Ok(Self {
            prefix: prefix.to_string(),
            state_dim,
            input_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<BoundGru> {
        let mut get = |gate: &str, part: &str| tape.param(store, &format!("{}.{part}{gate}", self.prefix));
        Ok(BoundGru {
            wz: get("z", "w")?,
            uz: get("z", "u")?,
            bz: get("z", "b")?,
            wr: get("r", "w")?,
            ur: get("r", "u")?,
            br: get("r", "b")?,
            wc: get("c", "w")?,
            uc: get("c", "u")?,
            bc: get("c", "b")?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGru {
    wz: ValueId,
    uz: ValueId,
    bz: ValueId,
    wr: ValueId,
    ur: ValueId,
    br: ValueId,
    wc: ValueId,
    uc: ValueId,
    bc: ValueId,
}

impl BoundGru {
    /// `h' = z * h + (1 - z) * tanh(Wc x + Uc (r * h) + bc)`.
    pub fn step(&self, tape: &mut Tape, h: ValueId, x: ValueId) -> Result<ValueId> {
        let gate = |tape: &mut Tape, w: ValueId, u: ValueId, b: ValueId, hv: ValueId, xv: ValueId| -> crate::error::Result<ValueId> {
            let wx = tape.matvec(w, xv)?;
            let uh = tape.matvec(u, hv)?;
            let s = tape.add(wx, uh)?;
            tape.add(s, b)
        };
        let z = {
            let pre = gate(tape, self.wz, self.uz, self.bz, h, x)?;
            tape.sigmoid(pre)
        };
        let r = {
            let pre = gate(tape, self.wr, self.ur, self.br, h, x)?;
            tape.sigmoid(pre)
        };
        let rh = tape.mul(r, h)?;
        let candidate = {
            let pre = gate(tape, self.wc, self.uc, self.bc, rh, x)?;
            tape.tanh(pre)
        };
        let zh = tape.mul(z, h)?;
        let one = tape.leaf(Tensor::matrix(tape.value(z).rows(), 1, vec![1.0; tape.value(z).rows()]));
        let one_minus_z = tape.sub(one, z)?;
        let zc = tape.mul(one_minus_z, candidate)?;
        tape.add(zh, zc)
    }
}
