//! Reverse-mode automatic differentiation over dense rank-<=2 tensors.
//!
//! A [`Tape`] records every executed primitive in order; [`Tape::backward`]
//! replays it in reverse, accumulating gradients into per-value slots and
//! then into the bound [`crate::nn::ParamStore`] entries. Tapes are cheap
//! and rebuilt per example, so graphs of different shapes pose no problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Dense row-major tensor, rank <= 2. Vectors are single-column.
/// Serializes as `{"shape": [rows, cols], "data": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl From<Tensor> for TensorRepr {
    fn from(t: Tensor) -> Self {
        Self {
            shape: [t.rows, t.cols],
            data: t.data,
        }
    }
}

impl TryFrom<TensorRepr> for Tensor {
    type Error = String;

    fn try_from(r: TensorRepr) -> std::result::Result<Self, String> {
        if r.data.len() != r.shape[0] * r.shape[1] {
            return Err(format!(
                "tensor data length {} does not match shape {:?}",
                r.data.len(),
                r.shape
            ));
        }
        if r.data.iter().any(|v| !v.is_finite()) {
            return Err("non-finite tensor entry".into());
        }
        Ok(Tensor {
            rows: r.shape[0],
            cols: r.shape[1],
            data: r.data,
        })
    }
}

impl Tensor {
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        let t = Self { rows, cols, data };
        t.debug_check_finite();
        t
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let rows = data.len();
        Self::matrix(rows, 1, data)
    }

    pub fn scalar(value: f64) -> Self {
        Self::matrix(1, 1, vec![value])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() needs a 1x1 tensor");
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn debug_check_finite(&self) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "non-finite tensor entry"
        );
    }
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    MatVec(ValueId, ValueId),
    MatMul(ValueId, ValueId),
    Concat(Vec<ValueId>),
    SumAll(Vec<ValueId>),
    SumElems(ValueId),
    Relu(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    Log(ValueId),
    ScalarMul(ValueId, f64),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of executed operations.
pub struct Tape {
    nodes: Vec<Node>,
    bindings: Vec<(ValueId, String)>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bindings: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        value.debug_check_finite();
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    /// Record a constant or input; no gradient is kept for it.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value)
    }

    /// Record a leaf mirroring the named store parameter; its gradient is
    /// routed back into the store on `backward`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<ValueId> {
        let value = store
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let id = self.push(Op::Leaf, value.clone());
        self.bindings.push((id, name.to_string()));
        Ok(id)
    }

    fn binary_shape_check(&self, op: &'static str, a: ValueId, b: ValueId) -> Result<()> {
        let (la, lb) = (self.value(a).shape(), self.value(b).shape());
        if la != lb {
            return Err(Error::ShapeMismatch { op, lhs: la, rhs: lb });
        }
        Ok(())
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_shape_check("add", a, b)?;
        let mut out = self.value(a).clone();
        for (x, y) in out.data.iter_mut().zip(&self.value(b).data) {
            *x += y;
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_shape_check("sub", a, b)?;
        let mut out = self.value(a).clone();
        for (x, y) in out.data.iter_mut().zip(&self.value(b).data) {
            *x -= y;
        }
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_shape_check("mul", a, b)?;
        let mut out = self.value(a).clone();
        for (x, y) in out.data.iter_mut().zip(&self.value(b).data) {
            *x *= y;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// `(m x k) . (k x 1) -> (m x 1)`.
    pub fn matvec(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        let (wr, wc) = self.value(w).shape();
        let (xr, xc) = self.value(x).shape();
        if xc != 1 || wc != xr {
            return Err(Error::ShapeMismatch { op: "matvec", lhs: (wr, wc), rhs: (xr, xc) });
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out = vec![0.0; wr];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &wv.data[r * wc..(r + 1) * wc];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(&xv.data) {
                acc += a * b;
            }
            *slot = acc;
        }
        Ok(self.push(Op::MatVec(w, x), Tensor::vector(out)))
    }

    /// `(m x k) . (k x n) -> (m x n)`.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: (ar, ac), rhs: (br, bc) });
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; ar * bc];
        for r in 0..ar {
            for k in 0..ac {
                let x = av.data[r * ac + k];
                for c in 0..bc {
                    out[r * bc + c] += x * bv.data[k * bc + c];
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(ar, bc, out)))
    }

    /// Stack column vectors into one column vector.
    pub fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != 1 {
                return Err(Error::ShapeMismatch { op: "concat", lhs: v.shape(), rhs: (v.rows(), 1) });
            }
            out.extend_from_slice(&v.data);
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(out)))
    }

    /// Elementwise sum of same-shaped tensors, in the given order.
    pub fn sum_all(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::Contract("sum of zero tensors".into()));
        }
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            self.binary_shape_check("sum_all", parts[0], p)?;
            for (x, y) in out.data.iter_mut().zip(&self.value(p).data) {
                *x += y;
            }
        }
        Ok(self.push(Op::SumAll(parts.to_vec()), out))
    }

    /// Total of all entries, as a scalar.
    pub fn sum_elems(&mut self, a: ValueId) -> ValueId {
        let total: f64 = self.value(a).data.iter().sum();
        self.push(Op::SumElems(a), Tensor::scalar(total))
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x = 1.0 / (1.0 + (-*x).exp());
        }
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: ValueId) -> ValueId {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x = x.tanh();
        }
        self.push(Op::Tanh(a), out)
    }

    /// Natural log; the input must be strictly positive.
    pub fn log(&mut self, a: ValueId) -> Result<ValueId> {
        let v = self.value(a);
        if v.data.iter().any(|&x| x <= 0.0) {
            return Err(Error::Contract("log of a non-positive entry".into()));
        }
        let mut out = v.clone();
        for x in out.data.iter_mut() {
            *x = x.ln();
        }
        Ok(self.push(Op::Log(a), out))
    }

    pub fn scalar_mul(&mut self, a: ValueId, c: f64) -> ValueId {
        let mut out = self.value(a).clone();
        for x in out.data.iter_mut() {
            *x *= c;
        }
        self.push(Op::ScalarMul(a, c), out)
    }

    /// Reverse sweep from a scalar loss. Gradients of every bound parameter
    /// accumulate into the store; a tape can only be walked once.
    pub fn backward(&mut self, loss: ValueId, store: &mut ParamStore) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_shape = self.value(loss).shape();
        if loss_shape != (1, 1) {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, b, &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, &g);
                    let mut neg = g;
                    for x in neg.data.iter_mut() {
                        *x = -*x;
                    }
                    accumulate(&mut grads, b, &neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let mut ga = g.clone();
                    for (x, y) in ga.data.iter_mut().zip(&self.nodes[b.0].value.data) {
                        *x *= y;
                    }
                    let mut gb = g;
                    for (x, y) in gb.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        *x *= y;
                    }
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::MatVec(w, x) => {
                    let (w, x) = (*w, *x);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let (wr, wc) = wv.shape();
                    // dW = g . x^T, dx = W^T . g
                    let mut gw = Tensor::zeros(wr, wc);
                    let mut gx = Tensor::zeros(wc, 1);
                    for r in 0..wr {
                        let gr = g.data[r];
                        let row = &wv.data[r * wc..(r + 1) * wc];
                        let grow = &mut gw.data[r * wc..(r + 1) * wc];
                        for c in 0..wc {
                            grow[c] += gr * xv.data[c];
                            gx.data[c] += gr * row[c];
                        }
                    }
                    accumulate(&mut grads, w, &gw);
                    accumulate(&mut grads, x, &gx);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let (ar, ac) = av.shape();
                    let bc = bv.cols();
                    // dA = g . B^T, dB = A^T . g
                    let mut ga = Tensor::zeros(ar, ac);
                    let mut gb = Tensor::zeros(ac, bc);
                    for r in 0..ar {
                        for k in 0..ac {
                            let mut acc = 0.0;
                            for c in 0..bc {
                                acc += g.data[r * bc + c] * bv.data[k * bc + c];
                                gb.data[k * bc + c] += av.data[r * ac + k] * g.data[r * bc + c];
                            }
                            ga.data[r * ac + k] = acc;
                        }
                    }
                    accumulate(&mut grads, a, &ga);
                    accumulate(&mut grads, b, &gb);
                }
                Op::Concat(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let slice = Tensor::vector(g.data[offset..offset + rows].to_vec());
                        accumulate(&mut grads, p, &slice);
                        offset += rows;
                    }
                }
                Op::SumAll(parts) => {
                    for p in parts.clone() {
                        accumulate(&mut grads, p, &g);
                    }
                }
                Op::SumElems(a) => {
                    let a = *a;
                    let shape = self.nodes[a.0].value.shape();
                    let mut ga = Tensor::zeros(shape.0, shape.1);
                    let gv = g.data[0];
                    for x in ga.data.iter_mut() {
                        *x = gv;
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut ga = g;
                    for (x, v) in ga.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        if *v <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let mut ga = g;
                    for (x, y) in ga.data.iter_mut().zip(&self.nodes[idx].value.data) {
                        *x *= y * (1.0 - y);
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let mut ga = g;
                    for (x, y) in ga.data.iter_mut().zip(&self.nodes[idx].value.data) {
                        *x *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::Log(a) => {
                    let a = *a;
                    let mut ga = g;
                    for (x, v) in ga.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        *x /= v;
                    }
                    accumulate(&mut grads, a, &ga);
                }
                Op::ScalarMul(a, c) => {
                    let (a, c) = (*a, *c);
                    let mut ga = g;
                    for x in ga.data.iter_mut() {
                        *x *= c;
                    }
                    accumulate(&mut grads, a, &ga);
                }
            }
        }

        for (id, name) in &self.bindings {
            if let Some(g) = &grads[id.0] {
                store.accumulate_grad(name, g)?;
            }
        }
        store.mark_grads_populated();
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: ValueId, g: &Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}
