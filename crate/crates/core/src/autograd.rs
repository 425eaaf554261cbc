//! Minimal dense-tensor reverse-mode differentiation and Adam.
//!
//! A `Tape` records the forward pass of one example (history lengths vary,
//! so the graph is rebuilt per pass). Leaves are either constants or
//! references into a `ParamStore`; `backward` returns per-parameter
//! gradients which the caller accumulates into the store. All math is f64.

use std::collections::HashMap;

use crate::error::{CoreError, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch"
        );
        debug_assert!(data.iter().all(|x| x.is_finite()), "non-finite tensor data");
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor::from_vec(&[], vec![x])
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        let n = data.len();
        Tensor::from_vec(&[n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// A trainable tensor with gradient storage and Adam moment state.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    adam_m: Tensor,
    adam_v: Tensor,
    pub step: u64,
}

impl Parameter {
    fn new(value: Tensor) -> Parameter {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step: 0,
        }
    }
}

/// Named collection of parameters; the unit of checkpointing.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    names: Vec<String>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(value));
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Add tape gradients into parameter grads. Calling twice without
    /// `zero_grads` doubles them.
    pub fn accumulate(&mut self, grads: &ParamGrads) {
        for (&id, g) in &grads.0 {
            let p = &mut self.params[id.0];
            for (dst, src) in p.grad.data.iter_mut().zip(&g.data) {
                *dst += src;
            }
        }
    }

    /// L2 weight decay folded into grads: grad += 2*l2*value.
    pub fn apply_l2(&mut self, l2: f64) {
        if l2 == 0.0 {
            return;
        }
        for p in &mut self.params {
            for (g, v) in p.grad.data.iter_mut().zip(&p.value.data) {
                *g += 2.0 * l2 * v;
            }
        }
    }

    pub fn l2_sum_squares(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.value.data.iter())
            .map(|x| x * x)
            .sum()
    }

    /// Bias-corrected Adam update over all parameters. Grads are left
    /// untouched; the caller zeroes them.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        for p in &mut self.params {
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                p.adam_m.data[i] = beta1 * p.adam_m.data[i] + (1.0 - beta1) * g;
                p.adam_v.data[i] = beta2 * p.adam_v.data[i] + (1.0 - beta2) * g * g;
                let m_hat = p.adam_m.data[i] / bc1;
                let v_hat = p.adam_v.data[i] / bc2;
                p.value.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Optimizer state of one parameter (first moment, second moment, step).
    pub fn opt_state(&self, id: ParamId) -> (&Tensor, &Tensor, u64) {
        let p = &self.params[id.0];
        (&p.adam_m, &p.adam_v, p.step)
    }

    /// Restore optimizer state by name (checkpoint resume).
    pub fn set_opt_state(&mut self, name: &str, m: Tensor, v: Tensor, step: u64) -> Result<()> {
        let id = self
            .lookup(name)
            .ok_or_else(|| CoreError::Data(format!("unknown parameter {name:?}")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != m.shape() || p.value.shape() != v.shape() {
            return Err(CoreError::ShapeMismatch {
                op: format!("restore optimizer state {name}"),
                left: p.value.shape().to_vec(),
                right: m.shape().to_vec(),
            });
        }
        p.adam_m = m;
        p.adam_v = v;
        p.step = step;
        Ok(())
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.params.iter().map(|p| &p.value))
    }

    /// Overwrite a parameter value by name (checkpoint restore).
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .lookup(name)
            .ok_or_else(|| CoreError::Data(format!("unknown parameter {name:?}")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(CoreError::ShapeMismatch {
                op: format!("restore {name}"),
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    ParamLeaf(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Dot(Var, Var),
    MatVec(Var, Var),
    MatMul(Var, Var),
    Outer(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Stack(Vec<Var>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Softmax(Var),
    Sum(Var),
    ScaleByVar(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by parameter, as returned by `Tape::backward`.
pub struct ParamGrads(HashMap<ParamId, Tensor>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(&id)
    }
}

/// Records one forward pass against a read-only parameter store.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Tape<'s> {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::ParamLeaf(id) => &self.store.param(id).value,
            _ => &self.nodes[v.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        debug_assert!(value.all_finite(), "non-finite op output");
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const, t)
    }

    pub fn constant_vec(&mut self, data: &[f64]) -> Var {
        self.constant(Tensor::vector(data.to_vec()))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::ParamLeaf(id), Tensor::zeros(&[]))
    }

    fn shape_err(&self, op: &str, a: Var, b: Var) -> CoreError {
        CoreError::ShapeMismatch {
            op: op.into(),
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("add", a, b));
        }
        let v: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Add(a, b), Tensor::from_vec(&shape, v)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("sub", a, b));
        }
        let v: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Sub(a, b), Tensor::from_vec(&shape, v)))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x + c).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Op::AddConst(a), Tensor::from_vec(&shape, v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Op::Scale(a, c), Tensor::from_vec(&shape, v))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err("mul", a, b));
        }
        let v: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Mul(a, b), Tensor::from_vec(&shape, v)))
    }

    /// Inner product of two vectors, yielding a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() || self.value(a).shape().len() != 1 {
            return Err(self.shape_err("dot", a, b));
        }
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    /// Matrix [m,n] times vector [n] -> [m].
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (ash, xsh) = (self.value(a).shape(), self.value(x).shape());
        if ash.len() != 2 || xsh.len() != 1 || ash[1] != xsh[0] {
            return Err(self.shape_err("matvec", a, x));
        }
        let (m, n) = (ash[0], ash[1]);
        let mut out = vec![0.0; m];
        let ad = self.value(a).data();
        let xd = self.value(x).data();
        for i in 0..m {
            let row = &ad[i * n..(i + 1) * n];
            out[i] = row.iter().zip(xd).map(|(p, q)| p * q).sum();
        }
        Ok(self.push(Op::MatVec(a, x), Tensor::vector(out)))
    }

    /// Matrix [m,n] times matrix [n,p] -> [m,p].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.value(a).shape(), self.value(b).shape());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, n, p) = (ash[0], ash[1], bsh[1]);
        let mut out = vec![0.0; m * p];
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        for i in 0..m {
            for k in 0..n {
                let aik = ad[i * n + k];
                for j in 0..p {
                    out[i * p + j] += aik * bd[k * p + j];
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(m, p, out)))
    }

    /// Outer product of vectors [m] x [n] -> [m,n].
    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.value(a).shape(), self.value(b).shape());
        if ash.len() != 1 || bsh.len() != 1 {
            return Err(self.shape_err("outer", a, b));
        }
        let (m, n) = (ash[0], bsh[0]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = self.value(a).data()[i] * self.value(b).data()[j];
            }
        }
        Ok(self.push(Op::Outer(a, b), Tensor::matrix(m, n, out)))
    }

    /// Concatenate vectors in order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.value(p).shape().len() != 1 {
                return Err(CoreError::ShapeMismatch {
                    op: "concat".into(),
                    left: self.value(p).shape().to_vec(),
                    right: vec![],
                });
            }
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(out)))
    }

    /// Sub-range [start, end) of a vector.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let n = self.value(a).len();
        if self.value(a).shape().len() != 1 || start > end || end > n {
            return Err(CoreError::Data(format!(
                "invalid slice [{start}, {end}) of vector of length {n}"
            )));
        }
        let v = self.value(a).data()[start..end].to_vec();
        Ok(self.push(Op::Slice(a, start, end), Tensor::vector(v)))
    }

    /// Pack scalar vars into a vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        let mut out = Vec::with_capacity(scalars.len());
        for &s in scalars {
            if !self.value(s).is_scalar() {
                return Err(CoreError::Data("stack expects scalar inputs".into()));
            }
            out.push(self.value(s).item());
        }
        Ok(self.push(Op::Stack(scalars.to_vec()), Tensor::vector(out)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Op::Relu(a), Tensor::from_vec(&shape, v))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Op::Tanh(a), Tensor::from_vec(&shape, v))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| {
                // split by sign so exp never overflows
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Op::Sigmoid(a), Tensor::from_vec(&shape, v))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(CoreError::Numeric("ln of non-positive value".into()));
        }
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x.ln()).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Ln(a), Tensor::from_vec(&shape, v)))
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).shape().len() != 1 || self.value(a).is_empty() {
            return Err(CoreError::Data("softmax expects a non-empty vector".into()));
        }
        let d = self.value(a).data();
        let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = d.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let v: Vec<f64> = exps.iter().map(|e| e / z).collect();
        Ok(self.push(Op::Softmax(a), Tensor::vector(v)))
    }

    /// Sum all entries to a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Multiply a tensor by a scalar var.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(CoreError::Data("scale_by expects a scalar".into()));
        }
        let c = self.value(s).item();
        let v: Vec<f64> = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::ScaleByVar(a, s), Tensor::from_vec(&shape, v)))
    }

    /// Reverse-mode sweep from a scalar root. Returns gradients for every
    /// parameter leaf reachable from the root.
    pub fn backward(&self, root: Var) -> Result<ParamGrads> {
        if !self.value(root).is_scalar() {
            return Err(CoreError::Data(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            // put back for leaf collection afterwards
            grads[i] = Some(g.clone());
            let add_to = |grads: &mut Vec<Option<Tensor>>, v: Var, contrib: &[f64]| {
                let slot = grads[v.0].get_or_insert_with(|| {
                    Tensor::zeros(match self.nodes[v.0].op {
                        Op::ParamLeaf(id) => self.store.param(id).value.shape(),
                        _ => self.nodes[v.0].value.shape(),
                    })
                });
                for (dst, src) in slot.data.iter_mut().zip(contrib) {
                    *dst += src;
                }
            };
            match &self.nodes[i].op {
                Op::Const | Op::ParamLeaf(_) => {}
                Op::Add(a, b) => {
                    add_to(&mut grads, *a, g.data());
                    add_to(&mut grads, *b, g.data());
                }
                Op::Sub(a, b) => {
                    add_to(&mut grads, *a, g.data());
                    let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                    add_to(&mut grads, *b, &neg);
                }
                Op::AddConst(a) => add_to(&mut grads, *a, g.data()),
                Op::Scale(a, c) => {
                    let v: Vec<f64> = g.data().iter().map(|x| x * c).collect();
                    add_to(&mut grads, *a, &v);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(x, y)| x * y)
                        .collect();
                    let db: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(x, y)| x * y)
                        .collect();
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *b, &db);
                }
                Op::Dot(a, b) => {
                    let g0 = g.item();
                    let da: Vec<f64> = self.value(*b).data().iter().map(|x| x * g0).collect();
                    let db: Vec<f64> = self.value(*a).data().iter().map(|x| x * g0).collect();
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *b, &db);
                }
                Op::MatVec(a, x) => {
                    let (m, n) = {
                        let s = self.value(*a).shape();
                        (s[0], s[1])
                    };
                    let ad = self.value(*a).data();
                    let xd = self.value(*x).data();
                    let mut da = vec![0.0; m * n];
                    let mut dx = vec![0.0; n];
                    for i2 in 0..m {
                        let gi = g.data()[i2];
                        for j in 0..n {
                            da[i2 * n + j] += gi * xd[j];
                            dx[j] += gi * ad[i2 * n + j];
                        }
                    }
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *x, &dx);
                }
                Op::MatMul(a, b) => {
                    let (m, n) = {
                        let s = self.value(*a).shape();
                        (s[0], s[1])
                    };
                    let p = self.value(*b).shape()[1];
                    let ad = self.value(*a).data();
                    let bd = self.value(*b).data();
                    let mut da = vec![0.0; m * n];
                    let mut db = vec![0.0; n * p];
                    for i2 in 0..m {
                        for j in 0..p {
                            let gij = g.data()[i2 * p + j];
                            for k in 0..n {
                                da[i2 * n + k] += gij * bd[k * p + j];
                                db[k * p + j] += gij * ad[i2 * n + k];
                            }
                        }
                    }
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *b, &db);
                }
                Op::Outer(a, b) => {
                    let m = self.value(*a).len();
                    let n = self.value(*b).len();
                    let mut da = vec![0.0; m];
                    let mut db = vec![0.0; n];
                    for i2 in 0..m {
                        for j in 0..n {
                            let gij = g.data()[i2 * n + j];
                            da[i2] += gij * self.value(*b).data()[j];
                            db[j] += gij * self.value(*a).data()[i2];
                        }
                    }
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *b, &db);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        add_to(&mut grads, p, &g.data()[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice(a, start, end) => {
                    let mut da = vec![0.0; self.value(*a).len()];
                    da[*start..*end].copy_from_slice(g.data());
                    add_to(&mut grads, *a, &da);
                }
                Op::Stack(scalars) => {
                    for (k, &s) in scalars.iter().enumerate() {
                        add_to(&mut grads, s, &[g.data()[k]]);
                    }
                }
                Op::Relu(a) => {
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                        .collect();
                    add_to(&mut grads, *a, &da);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gi, yi)| gi * (1.0 - yi * yi))
                        .collect();
                    add_to(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    add_to(&mut grads, *a, &da);
                }
                Op::Ln(a) => {
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gi, xi)| gi / xi)
                        .collect();
                    add_to(&mut grads, *a, &da);
                }
                Op::Softmax(a) => {
                    let y = &self.nodes[i].value;
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(gi, yi)| gi * yi).sum();
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(gi, yi)| yi * (gi - dot))
                        .collect();
                    add_to(&mut grads, *a, &da);
                }
                Op::Sum(a) => {
                    let g0 = g.item();
                    let da = vec![g0; self.value(*a).len()];
                    add_to(&mut grads, *a, &da);
                }
                Op::ScaleByVar(a, s) => {
                    let c = self.value(*s).item();
                    let da: Vec<f64> = g.data().iter().map(|x| x * c).collect();
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gi, ai)| gi * ai)
                        .sum();
                    add_to(&mut grads, *a, &da);
                    add_to(&mut grads, *s, &[ds]);
                }
            }
        }

        let mut out = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::ParamLeaf(id) = node.op {
                if let Some(g) = grads[i].take() {
                    out.entry(id)
                        .and_modify(|acc: &mut Tensor| {
                            for (dst, src) in acc.data.iter_mut().zip(&g.data) {
                                *dst += src;
                            }
                        })
                        .or_insert(g);
                }
            }
        }
        Ok(ParamGrads(out))
    }
}

/// A ReLU MLP with a linear output layer, as a bundle of parameter ids.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl MlpParams {
    /// He-style init, seeded through the supplied closure-free RNG.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        rng: &mut impl rand::Rng,
    ) -> MlpParams {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut prev = in_dim;
        let dims: Vec<usize> = hidden.iter().copied().chain([out_dim]).collect();
        for (l, &d) in dims.iter().enumerate() {
            let std = (2.0 / prev as f64).sqrt();
            let w: Vec<f64> = (0..d * prev)
                .map(|_| {
                    // Box-Muller keeps us off rand_distr for one Gaussian
                    gaussian(rng) * std
                })
                .collect();
            weights.push(store.add(&format!("{prefix}.w{l}"), Tensor::matrix(d, prev, w)));
            biases.push(store.add(&format!("{prefix}.b{l}"), Tensor::zeros(&[d])));
            prev = d;
        }
        MlpParams {
            weights,
            biases,
            in_dim,
            out_dim,
        }
    }

    /// Forward through the MLP: ReLU on hidden layers, linear output.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let mut x = input;
        let last = self.weights.len() - 1;
        for l in 0..=last {
            let w = tape.param(self.weights[l]);
            let b = tape.param(self.biases[l]);
            let wx = tape.matvec(w, x)?;
            x = tape.add(wx, b)?;
            if l < last {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }
}

pub fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}
