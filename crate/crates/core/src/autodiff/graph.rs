//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Each node stores the op that
//! produced it, the ids of its parents (always smaller than its own id) and its
//! forward value. [`Graph::backward`] walks the tape in reverse. With
//! `create_graph` set, every adjoint computation is itself recorded as graph
//! ops, so gradients can be differentiated again; this is what lets the
//! meta-learner back-propagate through unrolled SGD steps.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a specific graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    id: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Square(usize),
    Exp(usize),
    Scale(usize, f64),
    Mean(usize),
    Sum(usize),
    /// Broadcast a single-element tensor to a shape.
    Expand(usize),
    /// Multiply a tensor by a single-element variable.
    MulScalar(usize, usize),
    /// Matrix plus a `1 × cols` row added to every row.
    AddRow(usize, usize),
    /// Matrix times a `1 × cols` row, elementwise on every row.
    MulRow(usize, usize),
    SumRows(usize),
    RepeatRows(usize),
}

impl Op {
    fn parents(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | MulScalar(a, b) | AddRow(a, b)
            | MulRow(a, b) => [Some(a), Some(b)],
            Transpose(a) | Relu(a) | Square(a) | Exp(a) | Scale(a, _) | Mean(a) | Sum(a)
            | Expand(a) | SumRows(a) | RepeatRows(a) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Single-writer computation graph.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.id >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.id)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { op, value });
        Var { graph: self.id, id }
    }

    /// Adds a leaf variable (parameter, input or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.id].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.id].value.shape()
    }

    /// Leaf copy of `v`'s value; gradients do not flow through it.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let i = self.check(v)?;
        let value = self.nodes[i].value.clone();
        Ok(self.leaf(value))
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape("add", a, b)?;
        let v = self.nodes[a].value.zip_with(&self.nodes[b].value, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape("sub", a, b)?;
        let v = self.nodes[a].value.zip_with(&self.nodes[b].value, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape("mul", a, b)?;
        let v = self.nodes[a].value.zip_with(&self.nodes[b].value, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.matmul(&self.nodes[b].value)?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        if self.nodes[a].value.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: vec![],
            });
        }
        let v = self.nodes[a].value.transpose();
        Ok(self.push(Op::Transpose(a), v))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        Ok(self.push(Op::Relu(a), v))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let v = self.nodes[a].value.map(|x| x * x);
        Ok(self.push(Op::Square(a), v))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let v = self.nodes[a].value.map(f64::exp);
        Ok(self.push(Op::Exp(a), v))
    }

    /// Multiplies by a constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let a = self.check(a)?;
        let v = self.nodes[a].value.map(|x| x * c);
        Ok(self.push(Op::Scale(a, c), v))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let t = &self.nodes[a].value;
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        Ok(self.push(Op::Mean(a), v))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let v = Tensor::scalar(self.nodes[a].value.sum());
        Ok(self.push(Op::Sum(a), v))
    }

    /// Broadcasts a single-element variable to `shape`.
    pub fn expand(&mut self, s: Var, shape: &[usize]) -> Result<Var> {
        let s = self.check(s)?;
        if !self.nodes[s].value.is_scalar_like() {
            return Err(Error::ShapeMismatch {
                op: "expand",
                lhs: self.nodes[s].value.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let v = Tensor::filled(shape, self.nodes[s].value.item());
        Ok(self.push(Op::Expand(s), v))
    }

    /// `s · x` with `s` a single-element variable.
    pub fn mul_scalar(&mut self, s: Var, x: Var) -> Result<Var> {
        let (s, x) = (self.check(s)?, self.check(x)?);
        if !self.nodes[s].value.is_scalar_like() {
            return Err(Error::ShapeMismatch {
                op: "mul_scalar",
                lhs: self.nodes[s].value.shape().to_vec(),
                rhs: self.nodes[x].value.shape().to_vec(),
            });
        }
        let c = self.nodes[s].value.item();
        let v = self.nodes[x].value.map(|t| c * t);
        Ok(self.push(Op::MulScalar(s, x), v))
    }

    fn row_op_check(&self, op: &'static str, x: usize, r: usize) -> Result<()> {
        let (sx, sr) = (self.nodes[x].value.shape(), self.nodes[r].value.shape());
        if sx.len() != 2 || sr.len() != 2 || sr[0] != 1 || sr[1] != sx[1] {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sx.to_vec(),
                rhs: sr.to_vec(),
            });
        }
        Ok(())
    }

    /// Adds a `1 × cols` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.check(x)?, self.check(row)?);
        self.row_op_check("add_row", x, r)?;
        let xv = &self.nodes[x].value;
        let rv = self.nodes[r].value.data();
        let c = xv.cols();
        let mut v = xv.clone();
        for (i, o) in v.data_mut().iter_mut().enumerate() {
            *o += rv[i % c];
        }
        Ok(self.push(Op::AddRow(x, r), v))
    }

    /// Multiplies every row of `x` elementwise by a `1 × cols` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.check(x)?, self.check(row)?);
        self.row_op_check("mul_row", x, r)?;
        let xv = &self.nodes[x].value;
        let rv = self.nodes[r].value.data();
        let c = xv.cols();
        let mut v = xv.clone();
        for (i, o) in v.data_mut().iter_mut().enumerate() {
            *o *= rv[i % c];
        }
        Ok(self.push(Op::MulRow(x, r), v))
    }

    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.sum_rows();
        Ok(self.push(Op::SumRows(x), v))
    }

    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let r = self.check(row)?;
        let s = self.nodes[r].value.shape();
        if s.len() != 2 || s[0] != 1 {
            return Err(Error::ShapeMismatch {
                op: "repeat_rows",
                lhs: s.to_vec(),
                rhs: vec![n],
            });
        }
        let v = self.nodes[r].value.repeat_rows(n);
        Ok(self.push(Op::RepeatRows(r), v))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// With `create_graph` the adjoint computations stay on the tape and the
    /// returned vars are differentiable functions of the graph's leaves.
    /// Otherwise the tape is restored to its prior length and the gradients
    /// come back as fresh leaves.
    pub fn backward(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        let out = self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        if !self.nodes[out].value.is_scalar_like() {
            return Err(Error::NonScalarOutput(self.nodes[out].value.shape().to_vec()));
        }
        let tape_len = self.nodes.len();

        // Only nodes that depend on some `wrt` need adjoints.
        let mut needs = vec![false; out + 1];
        for &w in wrt {
            if w.id <= out {
                needs[w.id] = true;
            }
        }
        for i in 0..=out {
            if needs[i] {
                continue;
            }
            needs[i] = self.nodes[i]
                .op
                .parents()
                .iter()
                .flatten()
                .any(|&p| needs[p]);
        }

        let mut adj: Vec<Option<Var>> = vec![None; out + 1];
        if needs[out] {
            let seed = Tensor::ones(self.nodes[out].value.shape());
            adj[out] = Some(self.leaf(seed));
        }
        for i in (0..=out).rev() {
            let Some(g) = adj[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, g, &needs, &mut adj)?;
        }

        let mut grads = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let g = match adj.get(w.id).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Tensor::zeros(self.nodes[w.id].value.shape());
                    self.leaf(z)
                }
            };
            grads.push(g);
        }

        if create_graph {
            return Ok(grads);
        }
        let values: Vec<Tensor> = grads.iter().map(|g| self.nodes[g.id].value.clone()).collect();
        self.nodes.truncate(tape_len);
        Ok(values.into_iter().map(|v| self.leaf(v)).collect())
    }

    fn accumulate(&mut self, adj: &mut [Option<Var>], p: usize, contrib: Var) -> Result<()> {
        adj[p] = Some(match adj[p] {
            Some(prev) => self.add(prev, contrib)?,
            None => contrib,
        });
        Ok(())
    }

    fn var(&self, id: usize) -> Var {
        Var { graph: self.id, id }
    }

    fn propagate(
        &mut self,
        i: usize,
        op: &Op,
        g: Var,
        needs: &[bool],
        adj: &mut [Option<Var>],
    ) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs[a] {
                    self.accumulate(adj, a, g)?;
                }
                if needs[b] {
                    self.accumulate(adj, b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if needs[a] {
                    self.accumulate(adj, a, g)?;
                }
                if needs[b] {
                    let n = self.neg(g)?;
                    self.accumulate(adj, b, n)?;
                }
            }
            Op::Mul(a, b) => {
                if needs[a] {
                    let c = self.mul(g, self.var(b))?;
                    self.accumulate(adj, a, c)?;
                }
                if needs[b] {
                    let c = self.mul(g, self.var(a))?;
                    self.accumulate(adj, b, c)?;
                }
            }
            Op::MatMul(a, b) => {
                if needs[a] {
                    let bt = self.transpose(self.var(b))?;
                    let c = self.matmul(g, bt)?;
                    self.accumulate(adj, a, c)?;
                }
                if needs[b] {
                    let at = self.transpose(self.var(a))?;
                    let c = self.matmul(at, g)?;
                    self.accumulate(adj, b, c)?;
                }
            }
            Op::Transpose(a) => {
                let c = self.transpose(g)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Relu(a) => {
                // The mask is piecewise constant, so it enters as a leaf.
                let mask = self.nodes[a].value.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = self.leaf(mask);
                let c = self.mul(g, m)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Square(a) => {
                let ga = self.mul(g, self.var(a))?;
                let c = self.scale(ga, 2.0)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Exp(a) => {
                let c = self.mul(g, self.var(i))?;
                self.accumulate(adj, a, c)?;
            }
            Op::Scale(a, k) => {
                let c = self.scale(g, k)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Mean(a) => {
                let shape = self.nodes[a].value.shape().to_vec();
                let n = self.nodes[a].value.len() as f64;
                let e = self.expand(g, &shape)?;
                let c = self.scale(e, 1.0 / n)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Sum(a) => {
                let shape = self.nodes[a].value.shape().to_vec();
                let c = self.expand(g, &shape)?;
                self.accumulate(adj, a, c)?;
            }
            Op::Expand(s) => {
                let total = self.sum(g)?;
                let c = self.reshape_like(total, s)?;
                self.accumulate(adj, s, c)?;
            }
            Op::MulScalar(s, x) => {
                if needs[s] {
                    let gx = self.mul(g, self.var(x))?;
                    let total = self.sum(gx)?;
                    let c = self.reshape_like(total, s)?;
                    self.accumulate(adj, s, c)?;
                }
                if needs[x] {
                    let c = self.mul_scalar(self.var(s), g)?;
                    self.accumulate(adj, x, c)?;
                }
            }
            Op::AddRow(x, r) => {
                if needs[x] {
                    self.accumulate(adj, x, g)?;
                }
                if needs[r] {
                    let c = self.sum_rows(g)?;
                    self.accumulate(adj, r, c)?;
                }
            }
            Op::MulRow(x, r) => {
                if needs[x] {
                    let c = self.mul_row(g, self.var(r))?;
                    self.accumulate(adj, x, c)?;
                }
                if needs[r] {
                    let gx = self.mul(g, self.var(x))?;
                    let c = self.sum_rows(gx)?;
                    self.accumulate(adj, r, c)?;
                }
            }
            Op::SumRows(x) => {
                let n = self.nodes[x].value.rows();
                let c = self.repeat_rows(g, n)?;
                self.accumulate(adj, x, c)?;
            }
            Op::RepeatRows(r) => {
                let c = self.sum_rows(g)?;
                self.accumulate(adj, r, c)?;
            }
        }
        Ok(())
    }

    /// A scalar-valued var reshaped to the shape of node `like` (also
    /// single-element). Implemented as `expand`, which is the identity on
    /// values for single-element targets.
    fn reshape_like(&mut self, total: Var, like: usize) -> Result<Var> {
        let shape = self.nodes[like].value.shape().to_vec();
        if shape.is_empty() {
            Ok(total)
        } else {
            self.expand(total, &shape)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_equal_tensors_is_zero() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::filled(&[3, 4], 1.5));
        let b = g.leaf(Tensor::filled(&[3, 4], 1.5));
        let m = g.mse(a, b).unwrap();
        assert_eq!(g.value(m).item(), 0.0);
    }

    #[test]
    fn mse_hand_value() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = g.leaf(Tensor::zeros(&[1, 2]));
        let m = g.mse(a, b).unwrap();
        assert_eq!(g.value(m).item(), 2.5);
    }

    #[test]
    fn matmul_of_ones() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[2, 3]));
        let b = g.leaf(Tensor::ones(&[3, 1]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::ones(&[2, 3]));
        let b = g.leaf(Tensor::ones(&[3, 2]));
        match g.add(a, b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "add");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![3, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        let gx = g.backward(y, &[x], false).unwrap();
        assert_eq!(g.value(gx[0]).item(), 6.0);
    }

    #[test]
    fn mse_weight_gradient() {
        // d/dw (w·x − y)² = 2·w·x² for y = 0
        let mut g = Graph::new();
        let w = g.leaf(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let x = g.leaf(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let y = g.leaf(Tensor::zeros(&[1, 1]));
        let p = g.matmul(x, w).unwrap();
        let l = g.mse(p, y).unwrap();
        let gw = g.backward(l, &[w], false).unwrap();
        assert_eq!(g.value(gw[0]).item(), 8.0);
    }

    #[test]
    fn second_order_of_cube() {
        // f = x³, ‖∇f‖² = 9x⁴, derivative 36x³ = 2·(3x²)·(6x) = 288 at x = 2
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let x2 = g.square(x).unwrap();
        let f = g.mul(x2, x).unwrap();
        let grad = g.backward(f, &[x], true).unwrap()[0];
        assert_eq!(g.value(grad).item(), 12.0);
        let gn = g.square(grad).unwrap();
        let h = g.backward(gn, &[x], false).unwrap()[0];
        assert_eq!(g.value(h).item(), 288.0);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::ones(&[2, 2]));
        let y = g.square(x).unwrap();
        assert!(matches!(
            g.backward(y, &[x], false),
            Err(Error::NonScalarOutput(_))
        ));
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut g1 = Graph::new();
        let mut g2 = Graph::new();
        let x1 = g1.leaf(Tensor::scalar(1.0));
        let x2 = g2.leaf(Tensor::scalar(1.0));
        let y = g1.square(x1).unwrap();
        assert!(matches!(g1.backward(y, &[x2], false), Err(Error::ForeignVar)));
    }

    #[test]
    fn first_order_backward_restores_tape() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::ones(&[3, 3]));
        let y = g.square(x).unwrap();
        let l = g.sum(y).unwrap();
        let before = g.len();
        let grads = g.backward(l, &[x], false).unwrap();
        assert_eq!(g.len(), before + 1);
        assert_eq!(g.value(grads[0]).data(), &[2.0; 9]);
    }

    #[test]
    fn unrelated_wrt_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let z = g.leaf(Tensor::ones(&[2, 2]));
        let y = g.square(x).unwrap();
        let grads = g.backward(y, &[z], false).unwrap();
        assert_eq!(g.value(grads[0]), &Tensor::zeros(&[2, 2]));
    }
}
