//! Reverse-mode differentiation over a small set of matrix operations.
//!
//! A [`Tape`] records every operation eagerly: values are computed when the
//! node is pushed and operands always precede their consumers, so the tape
//! order is a topological order and [`Tape::backward`] is a single reverse
//! sweep. Values are scalars, dense matrices or CSR matrices; the gradient of
//! a sparse node is always dense, since a perturbation may touch any entry.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::sparse::Csr;

#[derive(Debug, Clone)]
pub enum Value {
    Scalar(f64),
    Dense(Array2<f64>),
    Sparse(Arc<Csr>),
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Scalar(_) => (1, 1),
            Value::Dense(m) => m.dim(),
            Value::Sparse(m) => m.shape(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Dense(m) => m.iter().all(|x| x.is_finite()),
            Value::Sparse(m) => m.values().iter().all(|x| x.is_finite()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Scalar(_) => "scalar",
            Value::Dense(_) => "dense",
            Value::Sparse(_) => "sparse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grad {
    Scalar(f64),
    Dense(Array2<f64>),
}

impl Grad {
    pub fn as_scalar(&self) -> f64 {
        match self {
            Grad::Scalar(x) => *x,
            Grad::Dense(_) => panic!("dense gradient where a scalar was expected"),
        }
    }

    pub fn as_dense(&self) -> &Array2<f64> {
        match self {
            Grad::Dense(m) => m,
            Grad::Scalar(_) => panic!("scalar gradient where a matrix was expected"),
        }
    }

    pub fn into_dense(self) -> Array2<f64> {
        match self {
            Grad::Dense(m) => m,
            Grad::Scalar(_) => panic!("scalar gradient where a matrix was expected"),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    ConcatColumns(Vec<Var>),
    RowBlock(Var, usize),
    Relu(Var),
    Transpose(Var),
    Scale(Var, f64),
    Sum(Var),
    ScalarAdd(Var, Var),
    ScalarMul(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<usize>,
        probs: Array2<f64>,
    },
    GcnNormalize {
        input: Var,
        degree: Vec<f64>,
    },
    HomophilyRelaxed {
        adjacency: Var,
        labels: Vec<usize>,
        denominator: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to the requested leaves.
#[derive(Debug, Clone)]
pub struct GradientSet {
    entries: Vec<(Var, Grad)>,
}

impl GradientSet {
    pub fn get(&self, var: Var) -> Option<&Grad> {
        self.entries.iter().find(|(v, _)| *v == var).map(|(_, g)| g)
    }

    pub fn dense(&self, var: Var) -> &Array2<f64> {
        self.get(var).expect("leaf was requested").as_dense()
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.get(var).expect("leaf was requested").as_scalar()
    }

    pub fn take(&mut self, var: Var) -> Option<Grad> {
        let pos = self.entries.iter().position(|(v, _)| *v == var)?;
        Some(self.entries.swap_remove(pos).1)
    }
}

fn add_into(slot: &mut Option<Grad>, g: Grad) {
    match (slot.as_mut(), g) {
        (None, g) => *slot = Some(g),
        (Some(Grad::Scalar(a)), Grad::Scalar(b)) => *a += b,
        (Some(Grad::Dense(a)), Grad::Dense(b)) => *a += &b,
        _ => unreachable!("gradient kind is fixed per node"),
    }
}

/// `slot += lhs · rhsᵀ` without an intermediate allocation when possible.
fn add_outer_into(slot: &mut Option<Grad>, lhs: &Array2<f64>, rhs: &Array2<f64>) {
    match slot {
        Some(Grad::Dense(acc)) => general_mat_mul(1.0, lhs, &rhs.t(), 1.0, acc),
        None => *slot = Some(Grad::Dense(lhs.dot(&rhs.t()))),
        Some(Grad::Scalar(_)) => unreachable!("matrix node with scalar gradient"),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).requires_grad)
    }

    /// Constant input: no gradient is tracked through it.
    pub fn input(&mut self, value: Value) -> Result<Var> {
        self.push(value, Op::Leaf, false, "input")
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Value) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        match self.value(v) {
            Value::Scalar(x) => *x,
            other => panic!("expected scalar, found {}", other.kind()),
        }
    }

    pub fn dense(&self, v: Var) -> &Array2<f64> {
        match self.value(v) {
            Value::Dense(m) => m,
            other => panic!("expected dense matrix, found {}", other.kind()),
        }
    }

    fn dense_operand(&self, v: Var, op: &'static str) -> Result<&Array2<f64>> {
        match self.value(v) {
            Value::Dense(m) => Ok(m),
            other => Err(Error::shape(op, format!("expected dense operand, found {}", other.kind()))),
        }
    }

    fn scalar_operand(&self, v: Var, op: &'static str) -> Result<f64> {
        match self.value(v) {
            Value::Scalar(x) => Ok(*x),
            other => Err(Error::shape(op, format!("expected scalar operand, found {}", other.kind()))),
        }
    }

    /// Matrix product; the left operand may be sparse, the right must be dense.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let rhs = self.dense_operand(b, "matmul")?;
        let value = match self.value(a) {
            Value::Sparse(m) => m.mul_dense(rhs.view())?,
            Value::Dense(m) => {
                if m.ncols() != rhs.nrows() {
                    return Err(Error::shape(
                        "matmul",
                        format!("{:?} · {:?}", m.dim(), rhs.dim()),
                    ));
                }
                m.dot(rhs)
            }
            Value::Scalar(_) => return Err(Error::shape("matmul", "scalar left operand")),
        };
        let rg = self.grad_flag(&[a, b]);
        self.push(Value::Dense(value), Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let x = self.dense_operand(a, "add")?;
        let y = self.dense_operand(b, "add")?;
        if x.dim() != y.dim() {
            return Err(Error::shape("add", format!("{:?} + {:?}", x.dim(), y.dim())));
        }
        let value = x + y;
        let rg = self.grad_flag(&[a, b]);
        self.push(Value::Dense(value), Op::Add(a, b), rg, "add")
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let x = self.dense_operand(a, "hadamard")?;
        let y = self.dense_operand(b, "hadamard")?;
        if x.dim() != y.dim() {
            return Err(Error::shape("hadamard", format!("{:?} ⊙ {:?}", x.dim(), y.dim())));
        }
        let value = x * y;
        let rg = self.grad_flag(&[a, b]);
        self.push(Value::Dense(value), Op::Hadamard(a, b), rg, "hadamard")
    }

    pub fn concat_columns(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_columns", "no operands"));
        }
        let mats = parts
            .iter()
            .map(|&p| self.dense_operand(p, "concat_columns").map(|m| m.view()))
            .collect::<Result<Vec<_>>>()?;
        let value = ndarray::concatenate(Axis(1), &mats)
            .map_err(|e| Error::shape("concat_columns", e.to_string()))?;
        let rg = self.grad_flag(parts);
        self.push(Value::Dense(value), Op::ConcatColumns(parts.to_vec()), rg, "concat_columns")
    }

    /// Rows `start..start + len` of a dense matrix.
    pub fn row_block(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.dense_operand(a, "row_block")?;
        if start + len > m.nrows() {
            return Err(Error::shape(
                "row_block",
                format!("rows {start}..{} of {}", start + len, m.nrows()),
            ));
        }
        let value = m.slice(s![start..start + len, ..]).to_owned();
        let rg = self.grad_flag(&[a]);
        self.push(Value::Dense(value), Op::RowBlock(a, start), rg, "row_block")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.dense_operand(a, "relu")?.mapv(|x| x.max(0.0));
        let rg = self.grad_flag(&[a]);
        self.push(Value::Dense(value), Op::Relu(a), rg, "relu")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.dense_operand(a, "transpose")?.t().to_owned();
        let rg = self.grad_flag(&[a]);
        self.push(Value::Dense(value), Op::Transpose(a), rg, "transpose")
    }

    /// Multiply a scalar or dense node by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = match self.value(a) {
            Value::Scalar(x) => Value::Scalar(x * factor),
            Value::Dense(m) => Value::Dense(m * factor),
            Value::Sparse(_) => return Err(Error::shape("scale", "sparse operand")),
        };
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Scale(a, factor), rg, "scale")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = self.dense_operand(a, "sum")?.sum();
        let rg = self.grad_flag(&[a]);
        self.push(Value::Scalar(value), Op::Sum(a), rg, "sum")
    }

    pub fn scalar_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.scalar_operand(a, "scalar_add")? + self.scalar_operand(b, "scalar_add")?;
        let rg = self.grad_flag(&[a, b]);
        self.push(Value::Scalar(value), Op::ScalarAdd(a, b), rg, "scalar_add")
    }

    pub fn scalar_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.scalar_operand(a, "scalar_mul")? * self.scalar_operand(b, "scalar_mul")?;
        let rg = self.grad_flag(&[a, b]);
        self.push(Value::Scalar(value), Op::ScalarMul(a, b), rg, "scalar_mul")
    }

    /// Mean softmax cross-entropy of `logits` rows in `mask` against `targets`
    /// (indexed by node, so `targets.len()` equals the number of rows).
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[usize],
    ) -> Result<Var> {
        let z = self.dense_operand(logits, "softmax_cross_entropy")?;
        let (n, k) = z.dim();
        if targets.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} targets for {} rows", targets.len(), n),
            ));
        }
        if mask.is_empty() {
            return Err(Error::shape("softmax_cross_entropy", "empty mask"));
        }
        let mut probs = Array2::zeros((mask.len(), k));
        let mut total = 0.0;
        for (r, &i) in mask.iter().enumerate() {
            if i >= n || targets[i] >= k {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("row {i} / class {} outside {n}x{k}", targets.get(i).copied().unwrap_or(0)),
                ));
            }
            let row = z.row(i);
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[targets[i]];
            for c in 0..k {
                probs[[r, c]] = (row[c] - lse).exp();
            }
        }
        let value = total / mask.len() as f64;
        let rg = self.grad_flag(&[logits]);
        self.push(
            Value::Scalar(value),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
            rg,
            "softmax_cross_entropy",
        )
    }

    /// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the row sums of `A + I`.
    /// Sparse input gives sparse output; dense gives dense.
    pub fn gcn_normalize(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if r != c {
            return Err(Error::shape("gcn_normalize", format!("{r}x{c} is not square")));
        }
        let (value, degree) = match self.value(a) {
            Value::Sparse(m) => {
                let view = crate::graph::normalize_csr(m);
                (Value::Sparse(Arc::new(view.a_hat)), view.degree)
            }
            Value::Dense(m) => {
                let degree: Vec<f64> = m.rows().into_iter().map(|row| row.sum() + 1.0).collect();
                let out = Array2::from_shape_fn((r, c), |(i, j)| {
                    let s = m[[i, j]] + if i == j { 1.0 } else { 0.0 };
                    s / (degree[i] * degree[j]).sqrt()
                });
                (Value::Dense(out), degree)
            }
            Value::Scalar(_) => return Err(Error::shape("gcn_normalize", "scalar operand")),
        };
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::GcnNormalize { input: a, degree }, rg, "gcn_normalize")
    }

    /// Relaxed homophily `Σ A⊙H / Σ A` of a (continuous) adjacency, with `H`
    /// given by `labels`. With `include_self_loops`, `A + I` is used instead
    /// of `A`. Both triangles of a symmetric matrix are counted.
    pub fn homophily_ratio_relaxed(
        &mut self,
        adjacency: Var,
        labels: &[usize],
        include_self_loops: bool,
    ) -> Result<Var> {
        let (n, m) = self.value(adjacency).shape();
        if n != m || labels.len() != n {
            return Err(Error::shape(
                "homophily_ratio_relaxed",
                format!("{n}x{m} adjacency with {} labels", labels.len()),
            ));
        }
        let (mut num, mut den) = (0.0, 0.0);
        let mut visit = |i: usize, j: usize, v: f64| {
            den += v;
            if labels[i] == labels[j] {
                num += v;
            }
        };
        match self.value(adjacency) {
            Value::Sparse(a) => a.iter().for_each(|(i, j, v)| visit(i, j, v)),
            Value::Dense(a) => a.indexed_iter().for_each(|((i, j), &v)| visit(i, j, v)),
            Value::Scalar(_) => unreachable!("shape check rejects scalars"),
        }
        if include_self_loops {
            num += n as f64;
            den += n as f64;
        }
        if den == 0.0 {
            return Err(Error::EmptyEdgeSet);
        }
        let rg = self.grad_flag(&[adjacency]);
        self.push(
            Value::Scalar(num / den),
            Op::HomophilyRelaxed {
                adjacency,
                labels: labels.to_vec(),
                denominator: den,
            },
            rg,
            "homophily_ratio_relaxed",
        )
    }

    /// Reverse sweep from a scalar `root`; returns the gradient for every
    /// requested leaf (zero when the root does not depend on it).
    pub fn backward(&self, root: Var, leaves: &[Var]) -> Result<GradientSet> {
        if !matches!(self.value(root), Value::Scalar(_)) {
            return Err(Error::NotScalarRoot);
        }
        let mut grads: Vec<Option<Grad>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Grad::Scalar(1.0));
        let wanted = |v: Var| self.node(v).requires_grad;

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let g = g.into_dense();
                    if wanted(*b) {
                        let gb = match self.value(*a) {
                            Value::Sparse(m) => m.t_mul_dense(g.view())?,
                            Value::Dense(m) => m.t().dot(&g),
                            Value::Scalar(_) => unreachable!(),
                        };
                        add_into(&mut grads[b.0], Grad::Dense(gb));
                    }
                    if wanted(*a) {
                        add_outer_into(&mut grads[a.0], &g, self.dense(*b));
                    }
                }
                Op::Add(a, b) => {
                    let g = g.into_dense();
                    if wanted(*a) {
                        add_into(&mut grads[a.0], Grad::Dense(g.clone()));
                    }
                    if wanted(*b) {
                        add_into(&mut grads[b.0], Grad::Dense(g));
                    }
                }
                Op::Hadamard(a, b) => {
                    let g = g.into_dense();
                    if wanted(*a) {
                        add_into(&mut grads[a.0], Grad::Dense(&g * self.dense(*b)));
                    }
                    if wanted(*b) {
                        add_into(&mut grads[b.0], Grad::Dense(&g * self.dense(*a)));
                    }
                }
                Op::ConcatColumns(parts) => {
                    let g = g.into_dense();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.dense(*p).ncols();
                        if wanted(*p) {
                            let block = g.slice(s![.., offset..offset + w]).to_owned();
                            add_into(&mut grads[p.0], Grad::Dense(block));
                        }
                        offset += w;
                    }
                }
                Op::RowBlock(a, start) => {
                    let g = g.into_dense();
                    let src = self.dense(*a);
                    let mut full = Array2::zeros(src.dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    add_into(&mut grads[a.0], Grad::Dense(full));
                }
                Op::Relu(a) => {
                    let mut g = g.into_dense();
                    g.zip_mut_with(self.dense(*a), |gi, &x| {
                        if x <= 0.0 {
                            *gi = 0.0;
                        }
                    });
                    add_into(&mut grads[a.0], Grad::Dense(g));
                }
                Op::Transpose(a) => {
                    let g = g.into_dense().t().to_owned();
                    add_into(&mut grads[a.0], Grad::Dense(g));
                }
                Op::Scale(a, f) => {
                    let scaled = match g {
                        Grad::Scalar(x) => Grad::Scalar(x * f),
                        Grad::Dense(m) => Grad::Dense(m * *f),
                    };
                    add_into(&mut grads[a.0], scaled);
                }
                Op::Sum(a) => {
                    let dim = self.dense(*a).dim();
                    add_into(&mut grads[a.0], Grad::Dense(Array2::from_elem(dim, g.as_scalar())));
                }
                Op::ScalarAdd(a, b) => {
                    let g = g.as_scalar();
                    if wanted(*a) {
                        add_into(&mut grads[a.0], Grad::Scalar(g));
                    }
                    if wanted(*b) {
                        add_into(&mut grads[b.0], Grad::Scalar(g));
                    }
                }
                Op::ScalarMul(a, b) => {
                    let g = g.as_scalar();
                    let (x, y) = (self.scalar(*a), self.scalar(*b));
                    if wanted(*a) {
                        add_into(&mut grads[a.0], Grad::Scalar(g * y));
                    }
                    if wanted(*b) {
                        add_into(&mut grads[b.0], Grad::Scalar(g * x));
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    mask,
                    probs,
                } => {
                    let g = g.as_scalar() / mask.len() as f64;
                    let mut out = Array2::zeros(self.dense(*logits).dim());
                    for (r, &i) in mask.iter().enumerate() {
                        for c in 0..probs.ncols() {
                            out[[i, c]] += g * probs[[r, c]];
                        }
                        out[[i, targets[i]]] -= g;
                    }
                    add_into(&mut grads[logits.0], Grad::Dense(out));
                }
                Op::GcnNormalize { input, degree } => {
                    let g = g.into_dense();
                    let gin = normalize_backward(&node.value, degree, &g);
                    add_into(&mut grads[input.0], Grad::Dense(gin));
                }
                Op::HomophilyRelaxed {
                    adjacency,
                    labels,
                    denominator,
                } => {
                    let g = g.as_scalar();
                    let h = match node.value {
                        Value::Scalar(h) => h,
                        _ => unreachable!(),
                    };
                    let n = labels.len();
                    let out = Array2::from_shape_fn((n, n), |(i, j)| {
                        let hij = if labels[i] == labels[j] { 1.0 } else { 0.0 };
                        g * (hij - h) / denominator
                    });
                    add_into(&mut grads[adjacency.0], Grad::Dense(out));
                }
            }
        }

        let entries = leaves
            .iter()
            .map(|&leaf| {
                let g = grads
                    .get_mut(leaf.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| match self.value(leaf) {
                        Value::Scalar(_) => Grad::Scalar(0.0),
                        v => Grad::Dense(Array2::zeros(v.shape())),
                    });
                (leaf, g)
            })
            .collect();
        Ok(GradientSet { entries })
    }
}

/// Gradient of `Â = D̃^{-1/2}(A+I)D̃^{-1/2}` with respect to `A`, given the
/// upstream gradient `g` on `Â`:
/// `∂L/∂A_ij = g_ij / √(d_i d_j) + ∂L/∂d_i`, where
/// `∂L/∂d_i = −(Σ_b g_ib Â_ib + Σ_a g_ai Â_ai) / (2 d_i)`.
fn normalize_backward(a_hat: &Value, degree: &[f64], g: &Array2<f64>) -> Array2<f64> {
    let n = degree.len();
    let mut row_terms = vec![0.0; n];
    let mut add = |i: usize, j: usize, v: f64| {
        let t = g[[i, j]] * v;
        row_terms[i] += t;
        row_terms[j] += t;
    };
    match a_hat {
        Value::Sparse(m) => m.iter().for_each(|(i, j, v)| add(i, j, v)),
        Value::Dense(m) => m.indexed_iter().for_each(|((i, j), &v)| add(i, j, v)),
        Value::Scalar(_) => unreachable!(),
    }
    let d_grad: Vec<f64> = row_terms
        .iter()
        .zip(degree)
        .map(|(t, d)| -t / (2.0 * d))
        .collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut out = g.clone();
    for ((i, j), x) in out.indexed_iter_mut() {
        *x = *x * inv_sqrt[i] * inv_sqrt[j] + d_grad[i];
    }
    out
}
