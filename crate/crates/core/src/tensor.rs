//! Dense tensors, a named parameter store, and a tape-based reverse-mode
//! autodiff graph.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters enter
//! the graph by reference (no copy), so a graph borrows the [`ParamStore`]
//! for its whole lifetime. [`Graph::backward`] walks the tape in reverse and
//! returns [`Gradients`] keyed by [`ParamId`]; [`ParamStore::accumulate`]
//! adds them into each tensor's `grad` slot, so repeated backward passes sum
//! until [`ParamStore::zero_grads`].
//!
//! Shapes are 1-D `[n]` or 2-D `[rows, cols]`, row-major. There is no
//! implicit broadcasting: the only mixed-shape elementwise op is
//! [`Graph::add_bias`].

use std::borrow::Cow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(not(feature = "f32"))]
pub type Float = f64;
#[cfg(feature = "f32")]
pub type Float = f32;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Float>,
    grad: Option<Vec<Float>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<Float>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::arg(format!(
                "tensor shape {shape:?} must have positive dimensions"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn vector(data: Vec<Float>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<Float>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[Float] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Float] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[Float]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[Float]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::Shape {
                op: "accumulate_grad",
                left: self.shape.clone(),
                right: vec![delta.len()],
            });
        }
        let g = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (a, b) in g.iter_mut().zip(delta) {
            *a += *b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::arg(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad(true));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .map(move |(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar entries across trainable tensors.
    pub fn num_trainable(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.requires_grad)
            .map(Tensor::numel)
            .sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        let bound = self.tensors.len();
        for (i, g) in grads.grads.iter().enumerate() {
            if let Some(g) = g {
                self.tensors
                    .get_mut(i)
                    .ok_or(Error::Index { index: i, bound })?
                    .accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// Per-parameter gradient buffers produced by a backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<Float>>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&[Float]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    fn slot(&mut self, id: ParamId, len: usize) -> &mut Vec<Float> {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }
}

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Float),
    Offset(Var),
    Tanh(Var),
    Sigmoid(Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Softmax(Var),
    Sum(Var),
    Reshape(Var),
    Embed {
        table: ParamId,
        ids: Vec<usize>,
        dim: usize,
    },
    Unfold {
        x: Var,
        window: usize,
        rows: usize,
        cols: usize,
    },
    Concat(Vec<Var>),
    Row {
        x: Var,
        row: usize,
    },
    MulConst {
        x: Var,
        factors: Vec<Float>,
    },
}

struct Node<'p> {
    value: Cow<'p, [Float]>,
    shape: Vec<usize>,
    op: Op,
}

/// Recorded forward computation over parameters borrowed from a [`ParamStore`].
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node<'p>>,
}

fn as_matrix(shape: &[usize], left: bool) -> Option<(usize, usize)> {
    match shape {
        [n] if left => Some((1, *n)),
        [n] => Some((*n, 1)),
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, [Float]>, shape: Vec<usize>, op: Op) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[Float] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// First entry of a node, for scalars.
    pub fn scalar(&self, v: Var) -> Float {
        self.nodes[v.0].value[0]
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<Float>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(Cow::Owned(t.data), t.shape, Op::Constant))
    }

    pub fn scalar_constant(&mut self, x: Float) -> Var {
        self.push(Cow::Owned(vec![x]), vec![1], Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id);
        self.push(Cow::Borrowed(t.data()), t.shape().to_vec(), Op::Param(id))
    }

    /// Matrix product. A 1-D left operand acts as a row vector and a 1-D right
    /// operand as a column vector; the squeezed axis is dropped from the result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || Error::Shape {
            op: "matmul",
            left: sa.clone(),
            right: sb.clone(),
        };
        let (m, k) = as_matrix(&sa, true).ok_or_else(mismatch)?;
        let (k2, n) = as_matrix(&sb, false).ok_or_else(mismatch)?;
        if k != k2 {
            return Err(mismatch());
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let shape = match (sa.len(), sb.len()) {
            (1, 1) => vec![1],
            (1, _) => vec![n],
            (_, 1) => vec![m],
            _ => vec![m, n],
        };
        Ok(self.push(Cow::Owned(out), shape, Op::MatMul { a, b, m, k, n }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(Float, Float) -> Float) -> Vec<Float> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect()
    }

    fn map(&self, a: Var, f: impl Fn(Float) -> Float) -> Vec<Float> {
        self.value(a).iter().map(|x| f(*x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: Float) -> Var {
        let out = self.map(a, |x| x * c);
        self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Scale(a, c))
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: Float) -> Var {
        let out = self.map(a, |x| x + c);
        self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, Float::tanh);
        self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        self.push(Cow::Owned(out), self.shape(a).to_vec(), Op::Sigmoid(a))
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix (or to a
    /// length-`n` vector).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias).to_vec();
        let n = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != n || sx.len() > 2 {
            return Err(Error::Shape {
                op: "add_bias",
                left: sx,
                right: sb,
            });
        }
        let bv = self.value(bias);
        let out: Vec<Float> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + bv[i % n])
            .collect();
        Ok(self.push(Cow::Owned(out), sx, Op::AddBias { x, bias }))
    }

    /// Softmax of a 1-D node, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.masked_softmax(a, None)
    }

    /// Softmax where entries with `mask[i] == false` get probability exactly 0.
    /// If every entry is masked the result is all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 1 {
            return Err(Error::Shape {
                op: "softmax",
                left: shape,
                right: vec![],
            });
        }
        if shape[0] == 0 {
            return Err(Error::arg("softmax of an empty vector"));
        }
        if let Some(m) = mask {
            if m.len() != shape[0] {
                return Err(Error::Shape {
                    op: "softmax mask",
                    left: shape,
                    right: vec![m.len()],
                });
            }
        }
        let out = softmax_values(self.value(a), mask);
        Ok(self.push(Cow::Owned(out), shape, Op::Softmax(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Cow::Owned(vec![s]), vec![1], Op::Sum(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape,
            });
        }
        let out = self.value(a).to_vec();
        Ok(self.push(Cow::Owned(out), shape, Op::Reshape(a)))
    }

    /// Gathers rows of a `[V, d]` parameter table into a `[T, d]` node.
    pub fn embed(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        let (rows, dim) = match t.shape() {
            [r, d] => (*r, *d),
            other => {
                return Err(Error::Shape {
                    op: "embed",
                    left: other.to_vec(),
                    right: vec![],
                })
            }
        };
        if ids.is_empty() {
            return Err(Error::arg("embedding lookup needs at least one token"));
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    index: id,
                    bound: rows,
                });
            }
            out.extend_from_slice(&t.data()[id * dim..(id + 1) * dim]);
        }
        Ok(self.push(
            Cow::Owned(out),
            vec![ids.len(), dim],
            Op::Embed {
                table,
                ids: ids.to_vec(),
                dim,
            },
        ))
    }

    /// Sliding windows over the rows of `[T, d]` with zero same-padding:
    /// output row `t` concatenates input rows `t - left .. t - left + window`,
    /// where `left = (window - 1) / 2`. Result is `[T, window * d]`.
    pub fn unfold(&mut self, x: Var, window: usize) -> Result<Var> {
        let (rows, cols) = match self.shape(x) {
            [r, c] => (*r, *c),
            other => {
                return Err(Error::Shape {
                    op: "unfold",
                    left: other.to_vec(),
                    right: vec![window],
                })
            }
        };
        if window == 0 {
            return Err(Error::arg("window must be positive"));
        }
        let left = (window - 1) / 2;
        let xv = self.value(x);
        let width = window * cols;
        let mut out = vec![0.0; rows * width];
        for t in 0..rows {
            for j in 0..window {
                let src = t as isize - left as isize + j as isize;
                if src < 0 || src as usize >= rows {
                    continue;
                }
                let src = src as usize;
                out[t * width + j * cols..t * width + (j + 1) * cols]
                    .copy_from_slice(&xv[src * cols..(src + 1) * cols]);
            }
        }
        Ok(self.push(
            Cow::Owned(out),
            vec![rows, width],
            Op::Unfold {
                x,
                window,
                rows,
                cols,
            },
        ))
    }

    /// Flattens and concatenates nodes into one 1-D node.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::arg("concat of nothing"));
        }
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        let n = out.len();
        Ok(self.push(Cow::Owned(out), vec![n], Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length nodes as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or_else(|| Error::arg("stack of nothing"))?;
        let n = self.value(first).len();
        for r in rows {
            if self.value(*r).len() != n {
                return Err(Error::Shape {
                    op: "stack_rows",
                    left: self.shape(first).to_vec(),
                    right: self.shape(*r).to_vec(),
                });
            }
        }
        let flat = self.concat(rows)?;
        self.reshape(flat, vec![rows.len(), n])
    }

    /// Row `row` of an `[m, n]` matrix as a 1-D node.
    pub fn row(&mut self, x: Var, row: usize) -> Result<Var> {
        let (m, n) = match self.shape(x) {
            [m, n] => (*m, *n),
            other => {
                return Err(Error::Shape {
                    op: "row",
                    left: other.to_vec(),
                    right: vec![row],
                })
            }
        };
        if row >= m {
            return Err(Error::Index {
                index: row,
                bound: m,
            });
        }
        let out = self.value(x)[row * n..(row + 1) * n].to_vec();
        Ok(self.push(Cow::Owned(out), vec![n], Op::Row { x, row }))
    }

    /// Elementwise product with fixed, non-differentiable factors
    /// (dropout masks, padding masks).
    pub fn mul_const(&mut self, x: Var, factors: Vec<Float>) -> Result<Var> {
        if factors.len() != self.value(x).len() {
            return Err(Error::Shape {
                op: "mul_const",
                left: self.shape(x).to_vec(),
                right: vec![factors.len()],
            });
        }
        let out = self.zip_const(x, &factors);
        Ok(self.push(
            Cow::Owned(out),
            self.shape(x).to_vec(),
            Op::MulConst { x, factors },
        ))
    }

    fn zip_const(&self, x: Var, factors: &[Float]) -> Vec<Float> {
        self.value(x)
            .iter()
            .zip(factors)
            .map(|(a, b)| a * b)
            .collect()
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let mut grads = Gradients::new();
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Reverse pass that adds into existing gradient buffers.
    pub fn backward_into(&self, loss: Var, out: &mut Gradients) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<Float>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<Float>>], v: Var, len: usize) -> &mut Vec<Float> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if self.params.get(*id).requires_grad() {
                        let slot = out.slot(*id, g.len());
                        for (s, d) in slot.iter_mut().zip(&g) {
                            *s += d;
                        }
                    }
                }
                Op::MatMul { a, b, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    {
                        // dA = dC · Bᵀ
                        let ga = acc(&mut grads, *a, m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                let mut s = 0.0;
                                for (x, y) in grow.iter().zip(brow) {
                                    s += x * y;
                                }
                                ga[i * k + p] += s;
                            }
                        }
                    }
                    // dB = Aᵀ · dC
                    let gb = acc(&mut grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            let dst = &mut gb[p * n..(p + 1) * n];
                            for (d, y) in dst.iter_mut().zip(grow) {
                                *d += x * y;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    add_into(acc(&mut grads, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    let gb = acc(&mut grads, *b, g.len());
                    for (d, x) in gb.iter_mut().zip(&g) {
                        *d -= x;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Scale(a, c) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for (d, x) in ga.iter_mut().zip(&g) {
                        *d += x * c;
                    }
                }
                Op::Offset(a) | Op::Reshape(a) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::AddBias { x, bias } => {
                    add_into(acc(&mut grads, *x, g.len()), &g);
                    let n = self.value(*bias).len();
                    let gb = acc(&mut grads, *bias, n);
                    for (i, v) in g.iter().enumerate() {
                        gb[i % n] += v;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot: Float = g.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += y[i] * (g[i] - dot);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let ga = acc(&mut grads, *a, n);
                    for d in ga.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Embed { table, ids, dim } => {
                    let t = self.params.get(*table);
                    if t.requires_grad() {
                        let slot = out.slot(*table, t.numel());
                        for (r, &id) in ids.iter().enumerate() {
                            let dst = &mut slot[id * dim..(id + 1) * dim];
                            add_into(dst, &g[r * dim..(r + 1) * dim]);
                        }
                    }
                }
                Op::Unfold {
                    x,
                    window,
                    rows,
                    cols,
                } => {
                    let (window, rows, cols) = (*window, *rows, *cols);
                    let left = (window - 1) / 2;
                    let width = window * cols;
                    let gx = acc(&mut grads, *x, rows * cols);
                    for t in 0..rows {
                        for j in 0..window {
                            let src = t as isize - left as isize + j as isize;
                            if src < 0 || src as usize >= rows {
                                continue;
                            }
                            let src = src as usize;
                            add_into(
                                &mut gx[src * cols..(src + 1) * cols],
                                &g[t * width + j * cols..t * width + (j + 1) * cols],
                            );
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        add_into(acc(&mut grads, *p, n), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Row { x, row } => {
                    let n = g.len();
                    let total = self.value(*x).len();
                    let gx = acc(&mut grads, *x, total);
                    add_into(&mut gx[row * n..(row + 1) * n], &g);
                }
                Op::MulConst { x, factors } => {
                    let gx = acc(&mut grads, *x, g.len());
                    for i in 0..g.len() {
                        gx[i] += g[i] * factors[i];
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [Float], src: &[Float]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: Float) -> Float {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_values(x: &[Float], mask: Option<&[bool]>) -> Vec<Float> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = x
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .fold(Float::NEG_INFINITY, Float::max);
    if max == Float::NEG_INFINITY {
        return vec![0.0; x.len()];
    }
    let exps: Vec<Float> = x
        .iter()
        .enumerate()
        .map(|(i, v)| if keep(i) { (v - max).exp() } else { 0.0 })
        .collect();
    let total: Float = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over a plain slice.
pub fn softmax(x: &[Float]) -> Result<Vec<Float>> {
    if x.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    Ok(softmax_values(x, None))
}
