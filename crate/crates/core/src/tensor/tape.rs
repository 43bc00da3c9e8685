//! Wengert-list tape: ops are appended in execution order, so the node list is
//! already topologically sorted and backward is a single reverse sweep.

use super::{kernels, stable_sigmoid, Element, Tensor, TensorError, TensorResult};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Relu(Var),
    Exp(Var),
    Log(Var),
    ClampedLog(Var, F),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    L2NormalizeRows(Var, Vec<F>),
    DotRows(Var, Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<F>,
    },
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Records primitive ops for one forward pass. Confined to one thread.
#[derive(Debug, Clone, Default)]
pub struct Tape<F = f32> {
    nodes: Vec<Node<F>>,
}

/// Gradients of the root with respect to every leaf that requires them.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    leaves: Vec<Option<Tensor<F>>>,
}

impl<F: Element> Gradients<F> {
    /// d(root)/d(leaf), or `None` if `var` is not a grad-requiring leaf.
    pub fn get(&self, var: Var) -> Option<&[F]> {
        self.leaves
            .get(var.0)
            .and_then(Option::as_ref)
            .and_then(Tensor::grad)
    }

    /// The leaf tensor with its gradient slot filled.
    pub fn leaf(&self, var: Var) -> Option<&Tensor<F>> {
        self.leaves.get(var.0).and_then(Option::as_ref)
    }

    pub fn take_leaf(&mut self, var: Var) -> Option<Tensor<F>> {
        self.leaves.get_mut(var.0).and_then(Option::take)
    }
}

/// How the right operand of an elementwise op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Rows,
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> TensorResult<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if !a.is_empty() {
        let trailing = &a[1..];
        let row_vec = b.len() == a.len() && b[0] == 1 && &b[1..] == trailing;
        if b == trailing || row_vec {
            return Ok(Broadcast::Rows);
        }
    }
    Err(TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    })
}

impl<F: Element> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf, keeping the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, tensor: Tensor<F>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<F>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<F>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> TensorResult<F> {
        self.node(var)?.value.item()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes.get(var.0).is_some_and(|n| n.requires_grad)
    }

    fn node(&self, var: Var) -> TensorResult<&Node<F>> {
        self.nodes.get(var.0).ok_or(TensorError::UnknownVar(var.0))
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> TensorResult<Var> {
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary<M>(&mut self, name: &'static str, a: Var, op: Op<F>, map: M) -> TensorResult<Var>
    where
        M: Fn(F) -> F,
    {
        let x = &self.node(a)?.value;
        let data = x.data().iter().map(|&v| map(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data).map_err(|_| TensorError::NonFinite { op: name })?;
        self.push(name, value, op, &[a])
    }

    fn binary<M>(&mut self, name: &'static str, a: Var, b: Var, op: Op<F>, map: M) -> TensorResult<Var>
    where
        M: Fn(F, F) -> F,
    {
        let x = &self.node(a)?.value;
        let y = &self.node(b)?.value;
        let mode = broadcast(name, x.shape(), y.shape())?;
        let data = match mode {
            Broadcast::Same => x.data().iter().zip(y.data()).map(|(&p, &q)| map(p, q)).collect(),
            Broadcast::Rows => {
                let w = y.len();
                x.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| map(p, y.data()[i % w]))
                    .collect()
            }
        };
        let value = Tensor::new(x.shape().to_vec(), data).map_err(|_| TensorError::NonFinite { op: name })?;
        self.push(name, value, op, &[a, b])
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let value = self.node(a)?.value.matmul(&self.node(b)?.value)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// `a (m×k) · bᵀ` with `b` of shape `n×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let value = self.node(a)?.value.matmul_t(&self.node(b)?.value)?;
        self.push("matmul_t", value, Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.binary("add", a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn scale(&mut self, a: Var, c: F) -> TensorResult<Var> {
        self.unary("scale", a, Op::Scale(a, c), |v| v * c)
    }

    pub fn relu(&mut self, a: Var) -> TensorResult<Var> {
        self.unary("relu", a, Op::Relu(a), |v| if v > F::zero() { v } else { F::zero() })
    }

    pub fn exp(&mut self, a: Var) -> TensorResult<Var> {
        self.unary("exp", a, Op::Exp(a), F::exp)
    }

    pub fn log(&mut self, a: Var) -> TensorResult<Var> {
        if let Some(bad) = self.node(a)?.value.data().iter().find(|v| **v <= F::zero()) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        self.unary("log", a, Op::Log(a), F::ln)
    }

    /// `log(max(x, eps))`; the gradient is zero wherever the clamp is active.
    pub fn clamped_log(&mut self, a: Var, eps: F) -> TensorResult<Var> {
        if eps <= F::zero() {
            return Err(TensorError::Domain {
                op: "clamped_log",
                detail: format!("clamp {eps} must be positive"),
            });
        }
        if let Some(bad) = self.node(a)?.value.data().iter().find(|v| **v < F::zero()) {
            return Err(TensorError::Domain {
                op: "clamped_log",
                detail: format!("negative input {bad}"),
            });
        }
        self.unary("clamped_log", a, Op::ClampedLog(a, eps), |v| v.max(eps).ln())
    }

    pub fn sigmoid(&mut self, a: Var) -> TensorResult<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn sum(&mut self, a: Var) -> TensorResult<Var> {
        let s = self.node(a)?.value.data().iter().fold(F::zero(), |acc, &v| acc + v);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> TensorResult<Var> {
        let x = &self.node(a)?.value;
        if x.is_empty() {
            return Err(TensorError::Invalid("mean of an empty tensor".into()));
        }
        let n = F::of_f64(x.len() as f64);
        let s = x.data().iter().fold(F::zero(), |acc, &v| acc + v) / n;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Scales every row to unit L2 norm; rows of exact zeros stay zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> TensorResult<Var> {
        let x = &self.node(a)?.value;
        let (rows, cols) = x.dims2()?;
        let mut data = x.data().to_vec();
        let mut norms = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            let norm = row.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt();
            if norm > F::zero() {
                row.iter_mut().for_each(|v| *v = *v / norm);
            }
            norms.push(norm);
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        self.push("l2_normalize_rows", value, Op::L2NormalizeRows(a, norms), &[a])
    }

    /// Row-wise inner products of two equal-shape matrices, shape `[m]`.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let x = &self.node(a)?.value;
        let y = &self.node(b)?.value;
        if x.shape() != y.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "dot_rows",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let (rows, cols) = x.dims2()?;
        let data = (0..rows)
            .map(|r| {
                x.data()[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(&y.data()[r * cols..(r + 1) * cols])
                    .fold(F::zero(), |acc, (&p, &q)| acc + p * q)
            })
            .collect();
        let value = Tensor::new(vec![rows], data)?;
        self.push("dot_rows", value, Op::DotRows(a, b), &[a, b])
    }

    /// Mean softmax cross-entropy of `logits (m×C)` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> TensorResult<Var> {
        let x = &self.node(logits)?.value;
        let (rows, classes) = x.dims2()?;
        if labels.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: x.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if rows == 0 {
            return Err(TensorError::Invalid("cross-entropy over an empty batch".into()));
        }
        let mut probs = vec![F::zero(); rows * classes];
        let mut total = F::zero();
        for (r, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(TensorError::Domain {
                    op: "softmax_cross_entropy",
                    detail: format!("label {label} outside 0..{classes}"),
                });
            }
            let row = &x.data()[r * classes..(r + 1) * classes];
            let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
            let denom = row.iter().fold(F::zero(), |acc, &v| acc + (v - max).exp());
            let log_denom = denom.ln() + max;
            for (c, &v) in row.iter().enumerate() {
                probs[r * classes + c] = (v - log_denom).exp();
            }
            total = total + (log_denom - row[label]);
        }
        let loss = total / F::of_f64(rows as f64);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar root. Consumes the tape.
    pub fn backward(self, root: Var) -> TensorResult<Gradients<F>> {
        let root_node = self.node(root)?;
        if root_node.value.len() != 1 {
            return Err(TensorError::NonScalarRoot(root_node.value.shape().to_vec()));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<F>>> = vec![None; nodes.len()];
        grads[root.0] = Some(vec![F::one()]);

        for idx in (0..=root.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let mut acc = |var: Var, contrib: Vec<F>| {
                if !nodes[var.0].requires_grad {
                    return;
                }
                match &mut grads[var.0] {
                    Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e = *e + c),
                    slot @ None => *slot = Some(contrib),
                }
            };
            let val = |var: Var| &nodes[var.0].value;
            match &node.op {
                Op::Leaf => unreachable!("leaves are skipped above"),
                Op::MatMul(a, b) => {
                    let (m, k) = val(*a).dims2()?;
                    let n = val(*b).cols();
                    acc(*a, kernels::matmul_nt(&g, val(*b).data(), m, n, k));
                    acc(*b, kernels::matmul_tn(val(*a).data(), &g, m, k, n));
                }
                Op::MatMulT(a, b) => {
                    let (m, k) = val(*a).dims2()?;
                    let n = val(*b).rows();
                    acc(*a, kernels::matmul_nn(&g, val(*b).data(), m, n, k));
                    acc(*b, kernels::matmul_tn(&g, val(*a).data(), m, n, k));
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -F::one() } else { F::one() };
                    let rhs: Vec<F> = g.iter().map(|&v| v * sign).collect();
                    acc(*b, reduce_rows(rhs, val(*b).len()));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let x = val(*a).data();
                    let y = val(*b).data();
                    let w = y.len();
                    let da = g.iter().enumerate().map(|(i, &gv)| gv * y[i % w]).collect();
                    let db = g.iter().zip(x).map(|(&gv, &xv)| gv * xv).collect();
                    acc(*b, reduce_rows(db, w));
                    acc(*a, da);
                }
                Op::Scale(a, c) => {
                    acc(*a, g.iter().map(|&v| v * *c).collect());
                }
                Op::Relu(a) => {
                    let x = val(*a).data();
                    acc(
                        *a,
                        g.iter()
                            .zip(x)
                            .map(|(&gv, &xv)| if xv > F::zero() { gv } else { F::zero() })
                            .collect(),
                    );
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    acc(*a, g.iter().zip(y).map(|(&gv, &yv)| gv * yv).collect());
                }
                Op::Log(a) => {
                    let x = val(*a).data();
                    acc(*a, g.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect());
                }
                Op::ClampedLog(a, eps) => {
                    let x = val(*a).data();
                    acc(
                        *a,
                        g.iter()
                            .zip(x)
                            .map(|(&gv, &xv)| if xv > *eps { gv / xv } else { F::zero() })
                            .collect(),
                    );
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    acc(
                        *a,
                        g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (F::one() - yv)).collect(),
                    );
                }
                Op::Sum(a) => {
                    acc(*a, vec![g[0]; val(*a).len()]);
                }
                Op::Mean(a) => {
                    let n = val(*a).len();
                    acc(*a, vec![g[0] / F::of_f64(n as f64); n]);
                }
                Op::L2NormalizeRows(a, norms) => {
                    let y = node.value.data();
                    let cols = node.value.cols();
                    let mut dx = vec![F::zero(); y.len()];
                    for (r, &norm) in norms.iter().enumerate() {
                        if norm == F::zero() {
                            continue;
                        }
                        let span = r * cols..(r + 1) * cols;
                        let yr = &y[span.clone()];
                        let gr = &g[span.clone()];
                        let proj = yr.iter().zip(gr).fold(F::zero(), |s, (&p, &q)| s + p * q);
                        for ((d, &yv), &gv) in dx[span].iter_mut().zip(yr).zip(gr) {
                            *d = (gv - yv * proj) / norm;
                        }
                    }
                    acc(*a, dx);
                }
                Op::DotRows(a, b) => {
                    let cols = val(*a).cols();
                    let x = val(*a).data();
                    let y = val(*b).data();
                    let da = y.iter().enumerate().map(|(i, &yv)| g[i / cols] * yv).collect();
                    let db = x.iter().enumerate().map(|(i, &xv)| g[i / cols] * xv).collect();
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let classes = val(*logits).cols();
                    let scale = g[0] / F::of_f64(labels.len() as f64);
                    let mut d = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        d[r * classes + label] = d[r * classes + label] - F::one();
                    }
                    d.iter_mut().for_each(|v| *v = *v * scale);
                    acc(*logits, d);
                }
            }
        }

        let leaves = nodes
            .into_iter()
            .zip(grads)
            .map(|(node, grad)| match node.op {
                Op::Leaf if node.requires_grad => {
                    let mut t = node.value;
                    let g = grad.unwrap_or_else(|| vec![F::zero(); t.len()]);
                    t.set_grad(g).ok()?;
                    Some(t)
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { leaves })
    }
}

/// Folds a full-size gradient down to a broadcast operand of `width` elements.
fn reduce_rows<F: Element>(g: Vec<F>, width: usize) -> Vec<F> {
    if g.len() == width {
        return g;
    }
    let mut out = vec![F::zero(); width];
    for (i, v) in g.into_iter().enumerate() {
        out[i % width] = out[i % width] + v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let root = tape.sum(sq).unwrap();
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_root_gives_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let c = tape.constant(t(&[], &[3.0]));
        let root = tape.scale(c, 2.0).unwrap();
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 0.0]);
        assert!(grads.leaf(x).unwrap().requires_grad());
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let y = tape.exp(x).unwrap();
        assert!(matches!(tape.backward(y), Err(TensorError::NonScalarRoot(_))));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::<f64>::zeros(vec![2, 3]));
        match tape.matmul(a, b) {
            Err(TensorError::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_of_non_positive_is_domain_error() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(TensorError::Domain { .. })));
        let y = tape.constant(t(&[1], &[-1.0]));
        assert!(matches!(tape.clamped_log(y, 1e-12), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn overflow_is_reported_as_non_finite() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new(vec![1], vec![1000.0]).unwrap());
        assert!(matches!(tape.exp(x), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn broadcast_only_over_leading_dim() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let row = tape.param(t(&[2], &[10.0, 20.0]));
        let sum = tape.add(a, row).unwrap();
        assert_eq!(tape.value(sum).data(), &[11.0, 22.0, 13.0, 24.0]);
        let col = tape.constant(t(&[2, 1], &[1.0, 1.0]));
        assert!(tape.add(a, col).is_err());
        let s = tape.sum(sum).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(row).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn normalize_keeps_zero_rows() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 2], &[3.0, 4.0, 0.0, 0.0]));
        let y = tape.l2_normalize_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.6, 0.8, 0.0, 0.0]);
        let s = tape.sum(y).unwrap();
        let grads = tape.backward(s).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(&g[2..], &[0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let mut tape = Tape::new();
        let logits = tape.param(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let loss = tape.softmax_cross_entropy(logits, &[2]).unwrap();
        let lse = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((tape.scalar(loss).unwrap() - (lse - 3.0)).abs() < 1e-12);
        assert!(tape.softmax_cross_entropy(logits, &[3]).is_err());
    }
}
