//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every primitive appended to a [`Tape`] stores its output value and its
//! inputs. [`Tape::backward`] walks the record in reverse and emits the
//! vector-Jacobian products *as new tape operations*, so the returned gradient
//! nodes are themselves differentiable. Differentiating a gradient a second
//! time is how [`hessian_vector_product`] obtains `H·v` exactly.
//!
//! The primitive set is closed under differentiation: the backward rule of
//! every operation is expressed with operations from the same set.
//!
//! ReLU and `abs` use a subgradient of 0 at 0.

mod conv;

use std::sync::Arc;

pub use conv::{ConvGeometry, Layout};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded primitive. Operands refer to earlier nodes.
#[derive(Clone, Debug)]
pub enum Op {
    /// Differentiable input (a parameter).
    Leaf,
    /// Non-differentiable input (data, labels, masks).
    Const,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
    },
    /// `x[r, j] + bias[j]` for a 2-D `x`.
    AddRowBias(Var, Var),
    /// Column sums of a 2-D tensor.
    SumRows(Var),
    /// Repeats a 1-D tensor as the rows of a 2-D tensor.
    BroadcastRows { v: Var, rows: usize },
    SumAll(Var),
    /// Fills `shape` with a one-element tensor's value.
    BroadcastScalar { s: Var, shape: Vec<usize> },
    Relu(Var),
    Abs(Var),
    Reshape { x: Var, shape: Vec<usize> },
    Im2Col { x: Var, geom: ConvGeometry },
    Col2Im { x: Var, geom: ConvGeometry },
    /// Row-wise softmax of a 2-D tensor.
    Softmax(Var),
    /// `y[r, j] = Σ_k x[r, k]` (self-adjoint).
    RowSumBroadcast(Var),
    /// Mean over rows of `-log softmax(logits)[label]`.
    SoftmaxCrossEntropy { logits: Var, labels: Arc<[usize]> },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul { .. } => "matmul",
            Op::AddRowBias(..) => "add_bias",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows { .. } => "broadcast_rows",
            Op::SumAll(..) => "sum",
            Op::BroadcastScalar { .. } => "broadcast_scalar",
            Op::Relu(..) => "relu",
            Op::Abs(..) => "abs",
            Op::Reshape { .. } => "reshape",
            Op::Im2Col { .. } => "im2col",
            Op::Col2Im { .. } => "col2im",
            Op::Softmax(..) => "softmax",
            Op::RowSumBroadcast(..) => "row_sum_broadcast",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf | Op::Const => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::AddRowBias(a, b) => vec![a, b],
            Op::MatMul { a, b, .. } => vec![a, b],
            Op::Scale(x, _)
            | Op::SumRows(x)
            | Op::SumAll(x)
            | Op::Relu(x)
            | Op::Abs(x)
            | Op::Softmax(x)
            | Op::RowSumBroadcast(x) => vec![x],
            Op::BroadcastRows { v, .. } => vec![v],
            Op::BroadcastScalar { s, .. } => vec![s],
            Op::Reshape { x, .. } | Op::Im2Col { x, .. } | Op::Col2Im { x, .. } => vec![x],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    value: Tensor<T>,
    requires_grad: bool,
}

/// The computation record: a topologically ordered list of primitives with
/// their forward values. Confined to one thread; create one per evaluation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(Op::Const, value, false)
    }

    fn push_raw(&mut self, op: Op, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = compute(&op, |v| &self.nodes[v.0].value)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(x, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        self.push(Op::MatMul {
            a,
            b,
            trans_a,
            trans_b,
        })
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddRowBias(x, bias))
    }

    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumRows(x))
    }

    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var> {
        self.push(Op::BroadcastRows { v, rows })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.push(Op::SumAll(x))
    }

    pub fn broadcast_scalar(&mut self, s: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::BroadcastScalar {
            s,
            shape: shape.to_vec(),
        })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Relu(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Abs(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.value(x).shape() == shape {
            return Ok(x);
        }
        self.push(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }

    pub fn im2col(&mut self, x: Var, geom: ConvGeometry) -> Result<Var> {
        self.push(Op::Im2Col { x, geom })
    }

    pub fn col2im(&mut self, x: Var, geom: ConvGeometry) -> Result<Var> {
        self.push(Op::Col2Im { x, geom })
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Softmax(x))
    }

    pub fn row_sum_broadcast(&mut self, x: Var) -> Result<Var> {
        self.push(Op::RowSumBroadcast(x))
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.push(Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.into(),
        })
    }

    /// `Σ x ⊙ y` over all elements.
    pub fn dot(&mut self, x: Var, y: Var) -> Result<Var> {
        let p = self.mul(x, y)?;
        self.sum(p)
    }

    /// 2-D convolution of `x` with weights `[out_c, in_c, kh, kw]`, recorded
    /// as im2col → matmul (→ bias). The result is laid out NHWC:
    /// `[batch, out_h, out_w, out_c]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    ) -> Result<Var> {
        let ws = self.value(weight).shape().to_vec();
        if ws.len() != 4 || ws[1] != geom.channels || ws[2] != geom.kernel_h || ws[3] != geom.kernel_w
        {
            return Err(shape_err(
                "conv2d",
                format!(
                    "weight {ws:?} incompatible with {} input channels and {}x{} kernel",
                    geom.channels, geom.kernel_h, geom.kernel_w
                ),
            ));
        }
        let cols = self.im2col(x, geom)?;
        let w2 = self.reshape(weight, &[ws[0], ws[1] * ws[2] * ws[3]])?;
        let mut y = self.matmul(cols, w2, false, true)?;
        if let Some(b) = bias {
            y = self.add_bias(y, b)?;
        }
        self.reshape(y, &[geom.batch, geom.out_h(), geom.out_w(), ws[0]])
    }

    /// Records the backward pass of the scalar `output` and returns one
    /// gradient node per entry of `wrt`. Inputs not reached by `output`
    /// receive a zero constant.
    ///
    /// The gradient nodes are ordinary tape nodes and can be differentiated
    /// again.
    pub fn backward(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let out_shape = self.value(output).shape().to_vec();
        if self.value(output).len() != 1 {
            return Err(Error::NonScalarOutput(out_shape));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Var>> = vec![None; n];
        grads[output.0] = Some(self.constant(Tensor::ones(&out_shape)));

        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let rg = |tape: &Self, v: Var| tape.nodes[v.0].requires_grad;
            match op {
                Op::Leaf | Op::Const => {}
                Op::Add(a, b) => {
                    if rg(self, a) {
                        self.accumulate(&mut grads, a, g)?;
                    }
                    if rg(self, b) {
                        self.accumulate(&mut grads, b, g)?;
                    }
                }
                Op::Mul(a, b) => {
                    if rg(self, a) {
                        let ga = self.mul(g, b)?;
                        self.accumulate(&mut grads, a, ga)?;
                    }
                    if rg(self, b) {
                        let gb = self.mul(g, a)?;
                        self.accumulate(&mut grads, b, gb)?;
                    }
                }
                Op::Scale(x, c) => {
                    let gx = self.scale(g, c)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::MatMul {
                    a,
                    b,
                    trans_a,
                    trans_b,
                } => {
                    // C = op_a(A)·op_b(B)
                    if rg(self, a) {
                        let ga = if trans_a {
                            self.matmul(b, g, trans_b, true)?
                        } else {
                            self.matmul(g, b, false, !trans_b)?
                        };
                        self.accumulate(&mut grads, a, ga)?;
                    }
                    if rg(self, b) {
                        let gb = if trans_b {
                            self.matmul(g, a, true, trans_a)?
                        } else {
                            self.matmul(a, g, !trans_a, false)?
                        };
                        self.accumulate(&mut grads, b, gb)?;
                    }
                }
                Op::AddRowBias(x, bias) => {
                    if rg(self, x) {
                        self.accumulate(&mut grads, x, g)?;
                    }
                    if rg(self, bias) {
                        let gb = self.sum_rows(g)?;
                        self.accumulate(&mut grads, bias, gb)?;
                    }
                }
                Op::SumRows(x) => {
                    let rows = self.value(x).shape()[0];
                    let gx = self.broadcast_rows(g, rows)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::BroadcastRows { v, .. } => {
                    let gv = self.sum_rows(g)?;
                    self.accumulate(&mut grads, v, gv)?;
                }
                Op::SumAll(x) => {
                    let shape = self.value(x).shape().to_vec();
                    let gx = self.broadcast_scalar(g, &shape)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::BroadcastScalar { s, .. } => {
                    let gs = self.sum(g)?;
                    self.accumulate(&mut grads, s, gs)?;
                }
                Op::Relu(x) => {
                    let step = self.value(x).map(|v| if v > T::zero() { T::one() } else { T::zero() });
                    let step = self.constant(step);
                    let gx = self.mul(g, step)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Abs(x) => {
                    let sign = self.value(x).map(|v| {
                        if v > T::zero() {
                            T::one()
                        } else if v < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        }
                    });
                    let sign = self.constant(sign);
                    let gx = self.mul(g, sign)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Reshape { x, .. } => {
                    let shape = self.value(x).shape().to_vec();
                    let gx = self.reshape(g, &shape)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Im2Col { x, geom } => {
                    let gx = self.col2im(g, geom)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Col2Im { x, geom } => {
                    let gx = self.im2col(g, geom)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::Softmax(x) => {
                    // s ⊙ (g − rowsum(g ⊙ s))
                    let s = Var(i);
                    let gs = self.mul(g, s)?;
                    let r = self.row_sum_broadcast(gs)?;
                    let centered = self.sub(g, r)?;
                    let gx = self.mul(s, centered)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::RowSumBroadcast(x) => {
                    let gx = self.row_sum_broadcast(g)?;
                    self.accumulate(&mut grads, x, gx)?;
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    // g · (softmax(logits) − onehot) / batch
                    let shape = self.value(logits).shape().to_vec();
                    let (rows, classes) = (shape[0], shape[1]);
                    let s = self.softmax(logits)?;
                    let mut onehot = vec![T::zero(); rows * classes];
                    for (r, &l) in labels.iter().enumerate() {
                        onehot[r * classes + l] = T::one();
                    }
                    let onehot = self.constant(Tensor::new(shape.clone(), onehot)?);
                    let diff = self.sub(s, onehot)?;
                    let diff = self.scale(diff, 1.0 / rows as f64)?;
                    let gb = self.broadcast_scalar(g, &shape)?;
                    let gx = self.mul(gb, diff)?;
                    self.accumulate(&mut grads, logits, gx)?;
                }
            }
        }

        wrt.iter()
            .map(|&v| match grads.get(v.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let shape = self.value(v).shape().to_vec();
                    Ok(self.constant(Tensor::zeros(&shape)))
                }
            })
            .collect()
    }

    fn accumulate(&mut self, grads: &mut [Option<Var>], target: Var, contrib: Var) -> Result<()> {
        let contrib = if self.value(contrib).shape() != self.value(target).shape() {
            let shape = self.value(target).shape().to_vec();
            self.reshape(contrib, &shape)?
        } else {
            contrib
        };
        grads[target.0] = Some(match grads[target.0] {
            Some(prev) => self.add(prev, contrib)?,
            None => contrib,
        });
        Ok(())
    }

    /// ∂output/∂wrt as plain tensors.
    pub fn gradient(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>> {
        let gs = self.backward(output, wrt)?;
        Ok(gs.into_iter().map(|g| self.value(g).clone()).collect())
    }

    /// Recomputes every node from the recorded leaves and constants.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf | Op::Const => node.value.clone(),
                ref op => compute(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }
}

fn compute<'a, T: Scalar>(op: &Op, get: impl Fn(Var) -> &'a Tensor<T>) -> Result<Tensor<T>> {
    Ok(match op {
        Op::Leaf | Op::Const => unreachable!("inputs are pushed with their values"),
        Op::Add(a, b) => get(*a).zip_map(get(*b), "add", |x, y| x + y)?,
        Op::Mul(a, b) => get(*a).zip_map(get(*b), "mul", |x, y| x * y)?,
        Op::Scale(x, c) => {
            let c = T::from_f64_lossy(*c);
            get(*x).map(|v| v * c)
        }
        Op::MatMul {
            a,
            b,
            trans_a,
            trans_b,
        } => get(*a).matmul(get(*b), *trans_a, *trans_b)?,
        Op::AddRowBias(x, bias) => {
            let (x, bias) = (get(*x), get(*bias));
            if x.shape().len() != 2 || bias.shape() != [x.shape()[1]] {
                return Err(shape_err(
                    "add_bias",
                    format!("input {:?} with bias {:?}", x.shape(), bias.shape()),
                ));
            }
            let n = x.shape()[1];
            let mut out = x.data().to_vec();
            for row in out.chunks_mut(n) {
                for (o, &b) in row.iter_mut().zip(bias.data()) {
                    *o = *o + b;
                }
            }
            Tensor::new(x.shape().to_vec(), out)?
        }
        Op::SumRows(x) => {
            let x = get(*x);
            if x.shape().len() != 2 {
                return Err(shape_err("sum_rows", format!("expected 2-D, got {:?}", x.shape())));
            }
            let n = x.shape()[1];
            let mut out = vec![T::zero(); n];
            for row in x.data().chunks(n) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = *o + v;
                }
            }
            Tensor::new(vec![n], out)?
        }
        Op::BroadcastRows { v, rows } => {
            let v = get(*v);
            if v.shape().len() != 1 {
                return Err(shape_err("broadcast_rows", format!("expected 1-D, got {:?}", v.shape())));
            }
            let mut out = Vec::with_capacity(rows * v.len());
            for _ in 0..*rows {
                out.extend_from_slice(v.data());
            }
            Tensor::new(vec![*rows, v.len()], out)?
        }
        Op::SumAll(x) => Tensor::scalar(get(*x).sum()),
        Op::BroadcastScalar { s, shape } => {
            let s = get(*s);
            if s.len() != 1 {
                return Err(shape_err("broadcast_scalar", format!("source {:?} is not a scalar", s.shape())));
            }
            Tensor::full(shape, s.item())
        }
        Op::Relu(x) => get(*x).map(|v| if v > T::zero() { v } else { T::zero() }),
        Op::Abs(x) => get(*x).map(|v| v.abs()),
        Op::Reshape { x, shape } => get(*x).clone().reshape(shape)?,
        Op::Im2Col { x, geom } => conv::im2col(get(*x), geom)?,
        Op::Col2Im { x, geom } => conv::col2im(get(*x), geom)?,
        Op::Softmax(x) => softmax_rows(get(*x))?,
        Op::RowSumBroadcast(x) => {
            let x = get(*x);
            let n = row_width(x, "row_sum_broadcast")?;
            let mut out = Vec::with_capacity(x.len());
            for row in x.data().chunks(n) {
                let s: T = row.iter().copied().sum();
                out.extend(std::iter::repeat_n(s, n));
            }
            Tensor::new(x.shape().to_vec(), out)?
        }
        Op::SoftmaxCrossEntropy { logits, labels } => {
            let x = get(*logits);
            let n = row_width(x, "softmax_cross_entropy")?;
            let rows = x.shape()[0];
            if labels.len() != rows {
                return Err(shape_err(
                    "softmax_cross_entropy",
                    format!("{rows} rows but {} labels", labels.len()),
                ));
            }
            let mut total = T::zero();
            for (row, &label) in x.data().chunks(n).zip(labels.iter()) {
                if label >= n {
                    return Err(shape_err(
                        "softmax_cross_entropy",
                        format!("label {label} out of range for {n} classes"),
                    ));
                }
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
                total = total + (lse - row[label]);
            }
            Tensor::scalar(total / T::from_usize(rows).expect("row count fits"))
        }
    })
}

fn row_width<T: Scalar>(x: &Tensor<T>, op: &'static str) -> Result<usize> {
    if x.shape().len() != 2 || x.shape()[1] == 0 {
        return Err(shape_err(op, format!("expected non-empty 2-D, got {:?}", x.shape())));
    }
    Ok(x.shape()[1])
}

fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = row_width(x, "softmax")?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(n) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - m).exp()));
        let z: T = out[start..].iter().copied().sum();
        for o in &mut out[start..] {
            *o = *o / z;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Gradient of a scalar loss with respect to `params`, plus the loss value.
pub fn gradient<T, F>(params: &[Tensor<T>], loss: F) -> Result<(T, Vec<Tensor<T>>)>
where
    T: Scalar,
    F: FnOnce(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let value = tape.value(out).clone();
    if value.len() != 1 {
        return Err(Error::NonScalarOutput(value.shape().to_vec()));
    }
    let grads = tape.gradient(out, &vars)?;
    Ok((value.item(), grads))
}

/// `H·v`, where `H` is the Hessian of `loss` at `params`, by differentiating
/// `⟨∇loss, v⟩` a second time.
pub fn hessian_vector_product<T, F>(params: &[Tensor<T>], v: &[Tensor<T>], loss: F) -> Result<Vec<Tensor<T>>>
where
    T: Scalar,
    F: FnOnce(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if params.len() != v.len() {
        return Err(shape_err(
            "hessian_vector_product",
            format!("{} parameters but {} direction tensors", params.len(), v.len()),
        ));
    }
    for (p, d) in params.iter().zip(v) {
        if p.shape() != d.shape() {
            return Err(shape_err(
                "hessian_vector_product",
                format!("parameter {:?} vs direction {:?}", p.shape(), d.shape()),
            ));
        }
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let grads = tape.backward(out, &vars)?;
    let mut total: Option<Var> = None;
    for (g, d) in grads.into_iter().zip(v) {
        let d = tape.constant(d.clone());
        let term = tape.dot(g, d)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let Some(total) = total else {
        return Ok(Vec::new());
    };
    tape.gradient(total, &vars)
}
