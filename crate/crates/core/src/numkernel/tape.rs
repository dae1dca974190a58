//! Tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied during one forward pass; the
//! record is append-only and therefore already topologically ordered.
//! [`Tape::backward`] walks it once in reverse, accumulating gradients for
//! the parameters the pass touched. Parameters are borrowed from a
//! [`ParamSet`] rather than copied, so a tape is cheap to build per session.

use crate::error::{dim_err, Error, Result};

use super::params::{Gradients, ParamId, ParamSet};
use super::tensor::{axpy, dot, Shape, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Param(usize),
    Constant,
    /// `W x (+ b)`, `W` is m×n.
    Affine { w: Var, x: Var, b: Option<Var> },
    /// `xᵀ W`, `W` is n×m.
    VecMat { x: Var, w: Var },
    Row { table: Var, index: usize },
    Add(Var, Var),
    OneMinus(Var),
    Hadamard(Var, Var),
    /// Vector times a length-1 vector.
    Scale { v: Var, s: Var },
    Concat(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Sum(Var),
    BceOneHot { p: Var, target: usize },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Shape,
    /// Empty for parameter leaves; their values live in the `ParamSet`.
    value: Vec<f64>,
    requires_grad: bool,
}

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
    #[cfg(test)]
    pub(crate) corrupt_sigmoid: bool,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
            consumed: false,
            #[cfg(test)]
            corrupt_sigmoid: false,
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Shape, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == shape.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a learnable tensor. Repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape();
        let v = self.push(Op::Param(id.0), shape, Vec::new(), true);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape();
        self.push(Op::Constant, shape, t.into_data(), false)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Result<Var> {
        if data.is_empty() {
            return Err(dim_err("empty constant vector"));
        }
        let t = Tensor::vector(data)?;
        Ok(self.constant(t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        value_of(&self.nodes, self.params, v)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::from_parts_unchecked(self.shape(v), self.value(v).to_vec())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn vector_len(&self, v: Var, what: &str) -> Result<usize> {
        match self.shape(v) {
            Shape::Vector(0) => Err(dim_err(format!("{what}: empty vector"))),
            Shape::Vector(n) => Ok(n),
            s => Err(dim_err(format!("{what}: expected a vector, got {s}"))),
        }
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            Shape::Matrix(r, c) => Ok((r, c)),
            s => Err(dim_err(format!("{what}: expected a matrix, got {s}"))),
        }
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<usize> {
        let n = self.vector_len(a, what)?;
        let m = self.vector_len(b, what)?;
        if n != m {
            return Err(dim_err(format!(
                "{what}: shapes {} and {} disagree",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(n)
    }

    /// `y = W x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let (m, n) = self.matrix_dims(w, "affine")?;
        let xn = self.vector_len(x, "affine")?;
        if xn != n {
            return Err(dim_err(format!(
                "affine: W {} cannot act on x {}",
                self.shape(w),
                self.shape(x)
            )));
        }
        if let Some(b) = b {
            let bn = self.vector_len(b, "affine bias")?;
            if bn != m {
                return Err(dim_err(format!(
                    "affine: W {} with bias {}",
                    self.shape(w),
                    self.shape(b)
                )));
            }
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out: Vec<f64> = wv.chunks_exact(n).map(|row| dot(row, xv)).collect();
        if let Some(b) = b {
            for (o, bi) in out.iter_mut().zip(self.value(b)) {
                *o += bi;
            }
        }
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Op::Affine { w, x, b }, Shape::Vector(m), out, rg))
    }

    /// `y = xᵀ W`, i.e. a row vector times an n×m matrix.
    pub fn vecmat(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, m) = self.matrix_dims(w, "vecmat")?;
        let xn = self.vector_len(x, "vecmat")?;
        if xn != n {
            return Err(dim_err(format!(
                "vecmat: x {} cannot multiply W {}",
                self.shape(x),
                self.shape(w)
            )));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out = vec![0.0; m];
        for (xi, row) in xv.iter().zip(wv.chunks_exact(m)) {
            axpy(*xi, row, &mut out);
        }
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(Op::VecMat { x, w }, Shape::Vector(m), out, rg))
    }

    /// Row `index` of a matrix as a vector (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(table, "row")?;
        if index >= r {
            return Err(dim_err(format!(
                "row {index} out of range for {}",
                self.shape(table)
            )));
        }
        let out = self.value(table)[index * c..(index + 1) * c].to_vec();
        let rg = self.rg(table);
        Ok(self.push(Op::Row { table, index }, Shape::Vector(c), out, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let n = self.same_len(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), Shape::Vector(n), out, rg))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "one_minus")?;
        let out = self.value(a).iter().map(|x| 1.0 - x).collect();
        let rg = self.rg(a);
        Ok(self.push(Op::OneMinus(a), Shape::Vector(n), out, rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let n = self.same_len(a, b, "hadamard")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Hadamard(a, b), Shape::Vector(n), out, rg))
    }

    /// Vector `v` scaled by the single entry of `s`.
    pub fn scale(&mut self, v: Var, s: Var) -> Result<Var> {
        let n = self.vector_len(v, "scale")?;
        if self.vector_len(s, "scale factor")? != 1 {
            return Err(dim_err(format!("scale: factor must be [1], got {}", self.shape(s))));
        }
        let k = self.scalar(s);
        let out = self.value(v).iter().map(|x| x * k).collect();
        let rg = self.rg(v) || self.rg(s);
        Ok(self.push(Op::Scale { v, s }, Shape::Vector(n), out, rg))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let n = self.vector_len(a, "concat")?;
        let m = self.vector_len(b, "concat")?;
        let mut out = Vec::with_capacity(n + m);
        out.extend_from_slice(self.value(a));
        out.extend_from_slice(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Concat(a, b), Shape::Vector(n + m), out, rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "sigmoid")?;
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let rg = self.rg(a);
        Ok(self.push(Op::Sigmoid(a), Shape::Vector(n), out, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "tanh")?;
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let rg = self.rg(a);
        Ok(self.push(Op::Tanh(a), Shape::Vector(n), out, rg))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "softmax")?;
        let out = softmax(self.value(a));
        let rg = self.rg(a);
        Ok(self.push(Op::Softmax(a), Shape::Vector(n), out, rg))
    }

    /// Sum of all entries, as a length-1 vector.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.vector_len(a, "sum")?;
        let s: f64 = self.value(a).iter().sum();
        let rg = self.rg(a);
        Ok(self.push(Op::Sum(a), Shape::Vector(1), vec![s], rg))
    }

    /// Binary cross-entropy of a probability vector against a one-hot target,
    /// summed over every entry.
    pub fn bce_one_hot(&mut self, p: Var, target: usize) -> Result<Var> {
        let n = self.vector_len(p, "bce")?;
        if target >= n {
            return Err(dim_err(format!("bce: target {target} out of range for [{n}]")));
        }
        let loss = bce_one_hot(self.value(p), target);
        let rg = self.rg(p);
        Ok(self.push(Op::BceOneHot { p, target }, Shape::Vector(1), vec![loss], rg))
    }

    /// Reverse sweep from a scalar `loss`, returning fresh gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Reverse sweep that adds this tape's gradients into `grads`.
    pub fn backward_into(&mut self, loss: Var, grads: &mut Gradients) -> Result<()> {
        if self.consumed {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        if self.shape(loss) != Shape::Vector(1) {
            return Err(dim_err(format!(
                "backward needs a scalar loss, got {}",
                self.shape(loss)
            )));
        }
        if grads.len() != self.params.len() {
            return Err(dim_err("gradient map does not match the parameter set"));
        }
        self.consumed = true;
        #[cfg(test)]
        let corrupt = self.corrupt_sigmoid;
        #[cfg(not(test))]
        let corrupt = false;
        reverse_sweep(&self.nodes, self.params, loss, grads, corrupt);
        Ok(())
    }
}

fn value_of<'a>(nodes: &'a [Node], params: &'a ParamSet, v: Var) -> &'a [f64] {
    match nodes[v.0].op {
        Op::Param(pid) => params.get(ParamId(pid)).data(),
        _ => &nodes[v.0].value,
    }
}

fn sink<'a>(
    nodes: &[Node],
    node_grads: &'a mut [Vec<f64>],
    pgrads: &'a mut Gradients,
    v: Var,
) -> Option<&'a mut [f64]> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    match n.op {
        Op::Param(pid) => Some(pgrads.slot_mut(pid)),
        _ => {
            let g = &mut node_grads[v.0];
            if g.is_empty() {
                g.resize(n.shape.len(), 0.0);
            }
            Some(g.as_mut_slice())
        }
    }
}

fn reverse_sweep(nodes: &[Node], params: &ParamSet, loss: Var, pgrads: &mut Gradients, corrupt: bool) {
    let mut node_grads: Vec<Vec<f64>> = vec![Vec::new(); nodes.len()];
    node_grads[loss.0] = vec![1.0];
    let val = |v: Var| value_of(nodes, params, v);

    for i in (0..=loss.0).rev() {
        let node = &nodes[i];
        if matches!(node.op, Op::Param(_) | Op::Constant) {
            continue;
        }
        let g = std::mem::take(&mut node_grads[i]);
        if g.is_empty() {
            continue;
        }
        let y = &node.value;
        match node.op {
            Op::Param(_) | Op::Constant => unreachable!(),
            Op::Affine { w, x, b } => {
                let n = val(x).len();
                if let Some(dw) = sink(nodes, &mut node_grads, pgrads, w) {
                    let xv = val(x);
                    for (gi, row) in g.iter().zip(dw.chunks_exact_mut(n)) {
                        axpy(*gi, xv, row);
                    }
                }
                if let Some(dx) = sink(nodes, &mut node_grads, pgrads, x) {
                    for (gi, row) in g.iter().zip(val(w).chunks_exact(n)) {
                        axpy(*gi, row, dx);
                    }
                }
                if let Some(b) = b {
                    if let Some(db) = sink(nodes, &mut node_grads, pgrads, b) {
                        axpy(1.0, &g, db);
                    }
                }
            }
            Op::VecMat { x, w } => {
                let m = g.len();
                if let Some(dw) = sink(nodes, &mut node_grads, pgrads, w) {
                    for (xi, row) in val(x).iter().zip(dw.chunks_exact_mut(m)) {
                        axpy(*xi, &g, row);
                    }
                }
                if let Some(dx) = sink(nodes, &mut node_grads, pgrads, x) {
                    for (dxi, row) in dx.iter_mut().zip(val(w).chunks_exact(m)) {
                        *dxi += dot(row, &g);
                    }
                }
            }
            Op::Row { table, index } => {
                let c = g.len();
                if let Some(dt) = sink(nodes, &mut node_grads, pgrads, table) {
                    axpy(1.0, &g, &mut dt[index * c..(index + 1) * c]);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    axpy(1.0, &g, da);
                }
                if let Some(db) = sink(nodes, &mut node_grads, pgrads, b) {
                    axpy(1.0, &g, db);
                }
            }
            Op::OneMinus(a) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    axpy(-1.0, &g, da);
                }
            }
            Op::Hadamard(a, b) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    for ((d, gi), bi) in da.iter_mut().zip(&g).zip(val(b)) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = sink(nodes, &mut node_grads, pgrads, b) {
                    for ((d, gi), ai) in db.iter_mut().zip(&g).zip(val(a)) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale { v, s } => {
                let k = val(s)[0];
                if let Some(dv) = sink(nodes, &mut node_grads, pgrads, v) {
                    axpy(k, &g, dv);
                }
                if let Some(ds) = sink(nodes, &mut node_grads, pgrads, s) {
                    ds[0] += dot(&g, val(v));
                }
            }
            Op::Concat(a, b) => {
                let n = nodes[a.0].shape.len();
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    axpy(1.0, &g[..n], da);
                }
                if let Some(db) = sink(nodes, &mut node_grads, pgrads, b) {
                    axpy(1.0, &g[n..], db);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        let local = if corrupt { *yi } else { yi * (1.0 - yi) };
                        *d += gi * local;
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    let gy = dot(&g, y);
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += yi * (gi - gy);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = sink(nodes, &mut node_grads, pgrads, a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::BceOneHot { p, target } => {
                if let Some(dp) = sink(nodes, &mut node_grads, pgrads, p) {
                    for (j, (d, pj)) in dp.iter_mut().zip(val(p)).enumerate() {
                        if *pj <= BCE_EPS || *pj >= 1.0 - BCE_EPS {
                            continue;
                        }
                        let local = if j == target { -1.0 / pj } else { 1.0 / (1.0 - pj) };
                        *d += g[0] * local;
                    }
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// `-Σ [y log p + (1-y) log(1-p)]` with `y` one-hot at `target`.
pub fn bce_one_hot(p: &[f64], target: usize) -> f64 {
    p.iter()
        .enumerate()
        .map(|(j, &pj)| {
            let pj = pj.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if j == target {
                -pj.ln()
            } else {
                -(1.0 - pj).ln()
            }
        })
        .sum()
}
