use super::kernels::gemm;
use super::tensor::{broadcast_index_map, broadcast_shape};
use super::{gelu, gelu_grad, sigmoid, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Gelu,
    Exp,
    Log,
}

impl ElementwiseKind {
    fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul)
    }
}

/// An operation with a hand-written backward rule.
///
/// The forward value is computed by the caller and handed to
/// [`Graph::custom`]; `backward` receives the input values, that output and
/// the incoming gradient, and returns one optional gradient per input.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Elementwise(ElementwiseKind, Var, Option<Var>),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    ContractLast(Var, Var),
    LogSumExp(Var),
    Sum(Var),
    MeanRows(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of a computation, owned by a single thread while in use.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<(), TensorError> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn elementwise(
        &mut self,
        kind: ElementwiseKind,
        a: Var,
        b: Option<Var>,
    ) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        if kind.is_binary() {
            let b = b.ok_or(TensorError::Invalid {
                op: "elementwise",
                detail: format!("{kind:?} needs two operands"),
            })?;
            let bv = &self.nodes[b.0].value;
            let out_shape =
                broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| shape_err("elementwise", av, bv))?;
            let data = if av.shape() == bv.shape() {
                binary_same(kind, av.data(), bv.data())
            } else {
                let ma = broadcast_index_map(av.shape(), &out_shape);
                let mb = broadcast_index_map(bv.shape(), &out_shape);
                ma.iter()
                    .zip(&mb)
                    .map(|(&i, &j)| apply_binary(kind, av.data()[i], bv.data()[j]))
                    .collect()
            };
            let needs = self.needs(&[a, b]);
            Ok(self.push(
                Tensor::from_parts(out_shape, data),
                Op::Elementwise(kind, a, Some(b)),
                needs,
            ))
        } else {
            if b.is_some() {
                return Err(TensorError::Invalid {
                    op: "elementwise",
                    detail: format!("{kind:?} takes one operand"),
                });
            }
            let f: fn(f64) -> f64 = match kind {
                ElementwiseKind::Tanh => f64::tanh,
                ElementwiseKind::Sigmoid => sigmoid,
                ElementwiseKind::Gelu => gelu,
                ElementwiseKind::Exp => f64::exp,
                ElementwiseKind::Log => f64::ln,
                _ => unreachable!(),
            };
            let out = av.map(f);
            let needs = self.needs(&[a]);
            Ok(self.push(out, Op::Elementwise(kind, a, None), needs))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Mul, a, Some(b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseKind::Tanh, a, None).expect("unary op")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseKind::Sigmoid, a, None).expect("unary op")
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseKind::Gelu, a, None).expect("unary op")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseKind::Exp, a, None).expect("unary op")
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseKind::Log, a, None).expect("unary op")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.nodes[a.0].value.map(|v| v * factor);
        let needs = self.needs(&[a]);
        self.push(out, Op::Scale(a, factor), needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        require_rank("matmul", av, 2)?;
        require_rank("matmul", bv, 2)?;
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, av.data(), false, bv.data(), false, 0.0, &mut out);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        require_rank("transpose", av, 2)?;
        let out = transpose(av);
        let needs = self.needs(&[a]);
        Ok(self.push(out, Op::Transpose(a), needs))
    }

    /// Contracts the last mode of `t` with vector `e`:
    /// `out[..] = sum_k t[.., k] * e[k]`.
    pub fn contract_last(&mut self, t: Var, e: Var) -> Result<Var, TensorError> {
        let tv = &self.nodes[t.0].value;
        let ev = &self.nodes[e.0].value;
        require_rank("contract_last", ev, 1)?;
        if tv.rank() < 2 || tv.shape()[tv.rank() - 1] != ev.len() {
            return Err(shape_err("contract_last", tv, ev));
        }
        let d = ev.len();
        let rows = tv.len() / d;
        let mut out = vec![0.0; rows];
        gemm(rows, d, 1, 1.0, tv.data(), false, ev.data(), false, 0.0, &mut out);
        let shape = tv.shape()[..tv.rank() - 1].to_vec();
        let needs = self.needs(&[t, e]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::ContractLast(t, e), needs))
    }

    /// `M x N x d` tensor contracted with a length-`d` vector into `M x N`.
    pub fn mode3_contract(&mut self, t: Var, e: Var) -> Result<Var, TensorError> {
        require_rank("mode3_contract", &self.nodes[t.0].value, 3)?;
        self.contract_last(t, e)
    }

    pub fn logsumexp(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        require_rank("logsumexp", av, 1)?;
        let v = super::logsumexp(av.data())?;
        let needs = self.needs(&[a]);
        Ok(self.push(Tensor::scalar(v), Op::LogSumExp(a), needs))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.sum();
        let needs = self.needs(&[a]);
        self.push(Tensor::scalar(v), Op::Sum(a), needs)
    }

    /// Mean over the rows of a matrix.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        require_rank("mean_rows", av, 2)?;
        let (r, c) = (av.rows(), av.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(av.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        let needs = self.needs(&[a]);
        Ok(self.push(Tensor::from_parts(vec![c], out), Op::MeanRows(a), needs))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let out = self.nodes[a.0].value.reshaped(shape)?;
        let needs = self.needs(&[a]);
        Ok(self.push(out, Op::Reshape(a), needs))
    }

    /// Rows of `table` selected by `rows`, stacked into a matrix.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let tv = &self.nodes[table.0].value;
        require_rank("gather_rows", tv, 2)?;
        if rows.is_empty() {
            return Err(TensorError::Empty { op: "gather_rows" });
        }
        let c = tv.cols();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= tv.rows() {
                return Err(TensorError::Invalid {
                    op: "gather_rows",
                    detail: format!("row {r} out of range for {} rows", tv.rows()),
                });
            }
            out.extend_from_slice(tv.row(r));
        }
        let needs = self.needs(&[table]);
        Ok(self.push(
            Tensor::from_parts(vec![rows.len(), c], out),
            Op::GatherRows(table, rows.to_vec()),
            needs,
        ))
    }

    /// Single row of a matrix as a vector.
    pub fn row(&mut self, table: Var, row: usize) -> Result<Var, TensorError> {
        let m = self.gather_rows(table, &[row])?;
        let c = self.shape(m)[1];
        self.reshape(m, vec![c])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        require_rank("slice_cols", av, 2)?;
        if start >= end || end > av.cols() {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                detail: format!("range {start}..{end} for {} columns", av.cols()),
            });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(av.rows() * w);
        for i in 0..av.rows() {
            out.extend_from_slice(&av.row(i)[start..end]);
        }
        let needs = self.needs(&[a]);
        Ok(self.push(
            Tensor::from_parts(vec![av.rows(), w], out),
            Op::SliceCols(a, start, end),
            needs,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Empty { op: "concat_cols" })?;
        let rows = self.nodes[first.0].value.rows();
        let mut total = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            require_rank("concat_cols", pv, 2)?;
            if pv.rows() != rows {
                return Err(shape_err("concat_cols", &self.nodes[first.0].value, pv));
            }
            total += pv.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let needs = self.needs(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
            needs,
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = &self.nodes[a.0].value;
        require_rank("softmax_rows", av, 2)?;
        let c = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let needs = self.needs(&[a]);
        Ok(self.push(Tensor::from_parts(av.shape().to_vec(), out), Op::SoftmaxRows(a), needs))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, TensorError> {
        let xv = &self.nodes[x.0].value;
        require_rank("layer_norm", xv, 2)?;
        let c = xv.cols();
        let gv = &self.nodes[gamma.0].value;
        let bv = &self.nodes[beta.0].value;
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(shape_err("layer_norm", xv, gv));
        }
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(c) {
            let (mean, inv) = row_stats(row, eps);
            for j in 0..c {
                out.push((row[j] - mean) * inv * gv.data()[j] + bv.data()[j]);
            }
        }
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::from_parts(xv.shape().to_vec(), out),
            Op::LayerNorm { x, gamma, beta, eps },
            needs,
        ))
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], output: Tensor) -> Var {
        let needs = self.needs(inputs);
        self.push(output, Op::Custom(op, inputs.to_vec()), needs)
    }

    /// Reverse sweep from a scalar `root`; each node is visited once.
    pub fn backward(&self, root: Var) -> Result<Gradients, TensorError> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(TensorError::NonScalarRoot {
                shape: rv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_parts(rv.shape().to_vec(), vec![1.0]));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
        if !self.nodes[var.0].needs_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Elementwise(kind, a, b) => {
                let av = val(*a);
                match (kind, b) {
                    (ElementwiseKind::Add | ElementwiseKind::Sub | ElementwiseKind::Mul, Some(b)) => {
                        let bv = val(*b);
                        let out_shape = node.value.shape();
                        let ma = broadcast_index_map(av.shape(), out_shape);
                        let mb = broadcast_index_map(bv.shape(), out_shape);
                        if self.nodes[a.0].needs_grad {
                            let mut ga = vec![0.0; av.len()];
                            for (i, (&ia, &ib)) in ma.iter().zip(&mb).enumerate() {
                                ga[ia] += match kind {
                                    ElementwiseKind::Mul => g.data()[i] * bv.data()[ib],
                                    _ => g.data()[i],
                                };
                            }
                            self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), ga));
                        }
                        if self.nodes[b.0].needs_grad {
                            let mut gb = vec![0.0; bv.len()];
                            for (i, (&ia, &ib)) in ma.iter().zip(&mb).enumerate() {
                                gb[ib] += match kind {
                                    ElementwiseKind::Mul => g.data()[i] * av.data()[ia],
                                    ElementwiseKind::Sub => -g.data()[i],
                                    _ => g.data()[i],
                                };
                            }
                            self.accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), gb));
                        }
                    }
                    (kind, None) => {
                        let out = node.value.data();
                        let ga: Vec<f64> = av
                            .data()
                            .iter()
                            .zip(out)
                            .zip(g.data())
                            .map(|((&x, &y), &gi)| {
                                gi * match kind {
                                    ElementwiseKind::Tanh => 1.0 - y * y,
                                    ElementwiseKind::Sigmoid => y * (1.0 - y),
                                    ElementwiseKind::Gelu => gelu_grad(x),
                                    ElementwiseKind::Exp => y,
                                    ElementwiseKind::Log => 1.0 / x,
                                    _ => unreachable!(),
                                }
                            })
                            .collect();
                        self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), ga));
                    }
                    _ => unreachable!("validated at construction"),
                }
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, g.map(|v| v * factor));
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.nodes[a.0].needs_grad {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, g.data(), false, bv.data(), true, 0.0, &mut ga);
                    self.accumulate(grads, *a, Tensor::from_parts(vec![m, k], ga));
                }
                if self.nodes[b.0].needs_grad {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, av.data(), true, g.data(), false, 0.0, &mut gb);
                    self.accumulate(grads, *b, Tensor::from_parts(vec![k, n], gb));
                }
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, transpose(g));
            }
            Op::ContractLast(t, e) => {
                let (tv, ev) = (val(*t), val(*e));
                let d = ev.len();
                let rows = tv.len() / d;
                if self.nodes[t.0].needs_grad {
                    let mut gt = vec![0.0; tv.len()];
                    gemm(rows, 1, d, 1.0, g.data(), false, ev.data(), false, 0.0, &mut gt);
                    self.accumulate(grads, *t, Tensor::from_parts(tv.shape().to_vec(), gt));
                }
                if self.nodes[e.0].needs_grad {
                    let mut ge = vec![0.0; d];
                    gemm(1, rows, d, 1.0, g.data(), false, tv.data(), false, 0.0, &mut ge);
                    self.accumulate(grads, *e, Tensor::from_parts(vec![d], ge));
                }
            }
            Op::LogSumExp(a) => {
                let av = val(*a);
                let lse = node.value.item();
                let gi = g.item();
                self.accumulate(grads, *a, av.map(|v| gi * (v - lse).exp()));
            }
            Op::Sum(a) => {
                let av = val(*a);
                self.accumulate(grads, *a, Tensor::filled(av.shape(), g.item()));
            }
            Op::MeanRows(a) => {
                let av = val(*a);
                let r = av.rows();
                let mut ga = Vec::with_capacity(av.len());
                for _ in 0..r {
                    ga.extend(g.data().iter().map(|v| v / r as f64));
                }
                self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), ga));
            }
            Op::Reshape(a) => {
                let shape = val(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::GatherRows(table, rows) => {
                let tv = val(*table);
                let c = tv.cols();
                let mut gt = vec![0.0; tv.len()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        gt[r * c + j] += g.data()[i * c + j];
                    }
                }
                self.accumulate(grads, *table, Tensor::from_parts(tv.shape().to_vec(), gt));
            }
            Op::SliceCols(a, start, end) => {
                let av = val(*a);
                let c = av.cols();
                let w = end - start;
                let mut ga = vec![0.0; av.len()];
                for i in 0..av.rows() {
                    ga[i * c + start..i * c + end].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                self.accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), ga));
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let pv = val(*p);
                    let w = pv.cols();
                    if self.nodes[p.0].needs_grad {
                        let mut gp = Vec::with_capacity(pv.len());
                        for i in 0..pv.rows() {
                            gp.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(grads, *p, Tensor::from_parts(pv.shape().to_vec(), gp));
                    }
                    offset += w;
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut ga = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    ga.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - dot)));
                }
                self.accumulate(grads, *a, Tensor::from_parts(y.shape().to_vec(), ga));
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xv = val(*x);
                let gv = val(*gamma);
                let c = xv.cols();
                let mut gx = Vec::with_capacity(xv.len());
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                let mut xhat = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                for (row, grow) in xv.data().chunks(c).zip(g.data().chunks(c)) {
                    let (mean, inv) = row_stats(row, *eps);
                    for j in 0..c {
                        xhat[j] = (row[j] - mean) * inv;
                        dxhat[j] = grow[j] * gv.data()[j];
                        ggamma[j] += grow[j] * xhat[j];
                        gbeta[j] += grow[j];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / c as f64;
                    let mean_dx = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        gx.push(inv * (dxhat[j] - mean_d - xhat[j] * mean_dx));
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), gx));
                self.accumulate(grads, *gamma, Tensor::from_parts(vec![c], ggamma));
                self.accumulate(grads, *beta, Tensor::from_parts(vec![c], gbeta));
            }
            Op::Custom(op, inputs) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                let input_grads = op.backward(&values, &node.value, g);
                debug_assert_eq!(input_grads.len(), inputs.len(), "{}", op.name());
                for (v, gi) in inputs.iter().zip(input_grads) {
                    if let Some(gi) = gi {
                        self.accumulate(grads, *v, gi);
                    }
                }
            }
        }
    }
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let c = row.len() as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    (mean, 1.0 / (var + eps).sqrt())
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::from_parts(vec![c, r], out)
}

fn apply_binary(kind: ElementwiseKind, a: f64, b: f64) -> f64 {
    match kind {
        ElementwiseKind::Add => a + b,
        ElementwiseKind::Sub => a - b,
        ElementwiseKind::Mul => a * b,
        _ => unreachable!(),
    }
}

fn binary_same(kind: ElementwiseKind, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| apply_binary(kind, x, y)).collect()
}
