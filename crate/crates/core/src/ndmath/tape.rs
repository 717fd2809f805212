//! Tensor-level reverse-mode differentiation.
//!
//! Every primitive is evaluated eagerly when it is recorded, so nodes are
//! always stored in topological order. [`Tape::backward`] sweeps the nodes in
//! reverse and accumulates adjoints for every node that depends on a
//! learnable leaf.
//!
//! Binary elementwise primitives broadcast along any dimension of size one,
//! which covers the `n x d` against `n x 1`, `1 x d` and `1 x 1` cases the
//! model needs.

use crate::error::{dim_err, Error, Result};

use super::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    MatMul,
    Sigmoid,
    Tanh,
    Relu,
    Square,
    /// Elementwise square root; inputs must be non-negative.
    Sqrt,
    Exp,
    /// Sum of all entries, 1x1 result.
    Sum,
    /// Mean of all entries, 1x1 result.
    Mean,
    /// Per-row sum, `r x 1` result.
    RowSum,
    Scale(f64),
    AddConst(f64),
    SoftmaxRows,
    ConcatCols,
    Column(usize),
    /// Identity in the forward pass, blocks adjoints in the backward pass.
    StopGradient,
}

impl Primitive {
    fn arity(self) -> Option<usize> {
        use Primitive::*;
        match self {
            Add | Sub | Mul | MatMul => Some(2),
            ConcatCols => None,
            _ => Some(1),
        }
    }
}

struct Node {
    op: Option<Primitive>,
    inputs: Vec<usize>,
    value: Matrix,
    requires_grad: bool,
    learnable: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push_leaf(&mut self, value: Matrix, learnable: bool) -> Var {
        self.nodes.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            requires_grad: learnable,
            learnable,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    pub fn is_learnable(&self, v: Var) -> bool {
        self.nodes[v.0].learnable
    }

    /// Records `primitive` applied to `inputs` and evaluates it.
    pub fn apply(&mut self, primitive: Primitive, inputs: &[Var]) -> Result<Var> {
        if let Some(n) = primitive.arity() {
            if inputs.len() != n {
                return Err(Error::Contract(format!(
                    "{primitive:?} takes {n} inputs, got {}",
                    inputs.len()
                )));
            }
        } else if inputs.is_empty() {
            return Err(Error::Contract(format!("{primitive:?} needs inputs")));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::Contract(format!("{bad:?} is not on this tape")));
        }
        let value = self.eval(primitive, inputs)?;
        let requires_grad = primitive != Primitive::StopGradient
            && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op: Some(primitive),
            inputs: inputs.iter().map(|v| v.0).collect(),
            value,
            requires_grad,
            learnable: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn eval(&self, p: Primitive, inputs: &[Var]) -> Result<Matrix> {
        use Primitive::*;
        let x = self.value(inputs[0]);
        Ok(match p {
            Add => broadcast(x, self.value(inputs[1]), |a, b| a + b)?,
            Sub => broadcast(x, self.value(inputs[1]), |a, b| a - b)?,
            Mul => broadcast(x, self.value(inputs[1]), |a, b| a * b)?,
            MatMul => x.matmul(self.value(inputs[1]))?,
            Sigmoid => x.map(sigmoid),
            Tanh => x.map(f64::tanh),
            Relu => x.map(|v| v.max(0.0)),
            Square => x.map(|v| v * v),
            Sqrt => {
                if let Some(&bad) = x.data().iter().find(|&&v| v < 0.0) {
                    return Err(Error::Contract(format!("sqrt of negative value {bad}")));
                }
                x.map(f64::sqrt)
            }
            Exp => x.map(f64::exp),
            Sum => Matrix::scalar(x.sum()),
            Mean => Matrix::scalar(x.sum() / x.len().max(1) as f64),
            RowSum => {
                let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
                Matrix::from_raw(x.rows(), 1, data)
            }
            Scale(k) => x.map(|v| k * v),
            AddConst(k) => x.map(|v| v + k),
            SoftmaxRows => {
                let mut out = x.clone();
                for r in 0..out.rows() {
                    let row = out.row_mut(r);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        total += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= total;
                    }
                }
                out
            }
            ConcatCols => {
                let rows = x.rows();
                if inputs.iter().any(|v| self.value(*v).rows() != rows) {
                    return dim_err("concat of matrices with differing row counts");
                }
                let cols: usize = inputs.iter().map(|v| self.value(*v).cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for v in inputs {
                        data.extend_from_slice(self.value(*v).row(r));
                    }
                }
                Matrix::from_raw(rows, cols, data)
            }
            Column(j) => {
                if j >= x.cols() {
                    return dim_err(format!("column {j} of a {}-column matrix", x.cols()));
                }
                Matrix::from_raw(x.rows(), 1, x.column(j))
            }
            StopGradient => x.clone(),
        })
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(op) = node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let contributions = self.local_grads(op, &node.inputs, &node.value, &g)?;
            adj[i] = Some(g);
            for (input, grad) in node.inputs.iter().zip(contributions) {
                let Some(grad) = grad else { continue };
                if !self.nodes[*input].requires_grad {
                    continue;
                }
                match &mut adj[*input] {
                    Some(acc) => acc.add_assign(&grad),
                    slot => *slot = Some(grad),
                }
            }
        }

        let learnable = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.learnable)
            .map(|(i, n)| (Var(i), n.value.shape()))
            .collect();
        Ok(Gradients {
            adjoints: adj,
            learnable,
        })
    }

    fn local_grads(
        &self,
        op: Primitive,
        inputs: &[usize],
        out: &Matrix,
        g: &Matrix,
    ) -> Result<Vec<Option<Matrix>>> {
        use Primitive::*;
        let val = |k: usize| &self.nodes[inputs[k]].value;
        Ok(match op {
            Add => vec![
                Some(reduce_to(g, val(0).shape())),
                Some(reduce_to(g, val(1).shape())),
            ],
            Sub => vec![
                Some(reduce_to(g, val(0).shape())),
                Some(reduce_to(g, val(1).shape()).map(|v| -v)),
            ],
            Mul => vec![
                Some(reduce_to(&broadcast(g, val(1), |a, b| a * b)?, val(0).shape())),
                Some(reduce_to(&broadcast(g, val(0), |a, b| a * b)?, val(1).shape())),
            ],
            MatMul => vec![
                Some(g.matmul(&val(1).transpose())?),
                Some(val(0).transpose().matmul(g)?),
            ],
            Sigmoid => vec![Some(g.zip_map(out, |gi, y| gi * y * (1.0 - y))?)],
            Tanh => vec![Some(g.zip_map(out, |gi, y| gi * (1.0 - y * y))?)],
            Relu => vec![Some(
                g.zip_map(val(0), |gi, x| if x > 0.0 { gi } else { 0.0 })?,
            )],
            Square => vec![Some(g.zip_map(val(0), |gi, x| 2.0 * gi * x)?)],
            Sqrt => {
                if out.data().contains(&0.0) {
                    return Err(Error::Numerical(
                        "gradient of sqrt at zero is unbounded".into(),
                    ));
                }
                vec![Some(g.zip_map(out, |gi, y| gi / (2.0 * y))?)]
            }
            Exp => vec![Some(g.zip_map(out, |gi, y| gi * y)?)],
            Sum => {
                let (r, c) = val(0).shape();
                vec![Some(Matrix::filled(r, c, g.data()[0]))]
            }
            Mean => {
                let (r, c) = val(0).shape();
                let n = (r * c).max(1) as f64;
                vec![Some(Matrix::filled(r, c, g.data()[0] / n))]
            }
            RowSum => {
                let (r, c) = val(0).shape();
                let mut m = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    m.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                vec![Some(m)]
            }
            Scale(k) => vec![Some(g.map(|v| k * v))],
            AddConst(_) => vec![Some(g.clone())],
            SoftmaxRows => {
                let mut m = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((dst, &yi), &gi) in m.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *dst = yi * (gi - dot);
                    }
                }
                vec![Some(m)]
            }
            ConcatCols => {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(inputs.len());
                for &input in inputs {
                    let (r, c) = self.nodes[input].value.shape();
                    let mut m = Matrix::zeros(r, c);
                    for i in 0..r {
                        m.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                    }
                    offset += c;
                    grads.push(Some(m));
                }
                grads
            }
            Column(j) => {
                let (r, c) = val(0).shape();
                let mut m = Matrix::zeros(r, c);
                for i in 0..r {
                    m.set(i, j, g.get(i, 0));
                }
                vec![Some(m)]
            }
            StopGradient => vec![None],
        })
    }

    // Convenience wrappers.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Square, &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sqrt, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::RowSum, &[a])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.apply(Primitive::Scale(k), &[a])
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Result<Var> {
        self.apply(Primitive::AddConst(k), &[a])
    }

    pub fn stop_gradient(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::StopGradient, &[a])
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    learnable: Vec<(Var, (usize, usize))>,
}

impl Gradients {
    /// Raw adjoint of any node reached by the sweep.
    pub fn adjoint(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a learnable leaf; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<Matrix> {
        let &(_, (r, c)) = self.learnable.iter().find(|(l, _)| *l == v)?;
        Some(
            self.adjoint(v)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(r, c)),
        )
    }

    pub fn learnable(&self) -> impl Iterator<Item = Var> + '_ {
        self.learnable.iter().map(|(v, _)| *v)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, _) => Some(b),
        (_, 1) => Some(a),
        _ => None,
    }
}

fn broadcast(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (Some(rows), Some(cols)) = (
        broadcast_dim(a.rows(), b.rows()),
        broadcast_dim(a.cols(), b.cols()),
    ) else {
        return dim_err(format!(
            "cannot broadcast {:?} with {:?}",
            a.shape(),
            b.shape()
        ));
    };
    let pick = |m: &Matrix, r: usize, c: usize| {
        m.get(
            if m.rows() == 1 { 0 } else { r },
            if m.cols() == 1 { 0 } else { c },
        )
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(f(pick(a, r, c), pick(b, r, c)));
        }
    }
    Ok(Matrix::from_raw(rows, cols, data))
}

/// Sums `g` over the dimensions that were broadcast up from `shape`.
fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let (rr, cc) = (
                if shape.0 == 1 { 0 } else { r },
                if shape.1 == 1 { 0 } else { c },
            );
            let v = out.get(rr, cc) + g.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.scalar(y), 0.5);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data()[0], 0.25);
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i = t.constant(Matrix::identity(2));
        let a = t.constant(m(2, 2, &[1.0, -2.0, 3.5, 4.0]));
        let p = t.matmul(i, a).unwrap();
        assert_eq!(t.value(p), t.value(a));
    }

    #[test]
    fn sum_of_squares() {
        let mut t = Tape::new();
        let v = t.param(m(1, 2, &[3.0, 4.0]));
        let sq = t.square(v).unwrap();
        let s = t.sum(sq).unwrap();
        assert_eq!(t.scalar(s), 25.0);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(v).unwrap().data(), &[6.0, 8.0]);
        assert_eq!(g.adjoint(s).unwrap().data(), &[1.0]);
    }

    #[test]
    fn power_rule() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(3.0));
        let y = t.square(x).unwrap();
        assert_eq!(t.backward(y).unwrap().wrt(x).unwrap().data()[0], 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(m(1, 2, &[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 3));
        let b = t.constant(Matrix::zeros(2, 3));
        assert!(matches!(t.matmul(a, b), Err(Error::Dimension(_))));
        let c = t.constant(Matrix::zeros(3, 2));
        assert!(matches!(t.add(a, c), Err(Error::Dimension(_))));
        assert!(matches!(
            t.apply(Primitive::Add, &[a]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn broadcast_gradients_reduce() {
        // y = sum(A * s + row), s scalar, row 1x3
        let mut t = Tape::new();
        let a = t.param(m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let s = t.param(Matrix::scalar(2.0));
        let row = t.param(m(1, 3, &[0.1, 0.2, 0.3]));
        let col = t.param(m(2, 1, &[1.0, -1.0]));
        let p = t.mul(a, s).unwrap();
        let q = t.add(p, row).unwrap();
        let r = t.mul(q, col).unwrap();
        let y = t.sum(r).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(s).unwrap().data()[0], 6.0 - 15.0);
        assert_eq!(g.wrt(row).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert_eq!(g.wrt(a).unwrap().data(), &[2.0, 2.0, 2.0, -2.0, -2.0, -2.0]);
        assert!((g.wrt(col).unwrap().data()[0] - (12.0 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn stop_gradient_blocks() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(2.0));
        let sg = t.stop_gradient(x).unwrap();
        let y = t.mul(x, sg).unwrap();
        // d/dx [x * stop(x)] = stop(x) = 2
        assert_eq!(t.backward(y).unwrap().wrt(x).unwrap().data()[0], 2.0);
    }

    #[test]
    fn unreached_param_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(1.0));
        let unused = t.param(Matrix::zeros(2, 2));
        let y = t.square(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(unused).unwrap(), Matrix::zeros(2, 2));
        assert_eq!(g.learnable().count(), 2);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::scalar(-1.0));
        assert!(matches!(t.sqrt(x), Err(Error::Contract(_))));
    }

    fn numeric_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Matrix) {
        let mut t = Tape::new();
        let x = t.param(x0.clone());
        let y = build(&mut t, x);
        let g = t.backward(y).unwrap().wrt(x).unwrap();
        let h = 1e-6;
        for k in 0..x0.len() {
            let eval = |d: f64| {
                let mut xp = x0.clone();
                xp.data_mut()[k] += d;
                let mut t = Tape::new();
                let x = t.param(xp);
                let y = build(&mut t, x);
                t.scalar(y)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!(
                (fd - g.data()[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "component {k}: fd {fd} vs ad {}",
                g.data()[k]
            );
        }
    }

    #[test]
    fn softmax_concat_column_exp_gradients() {
        let x0 = m(2, 3, &[0.3, -1.2, 0.5, 2.0, 0.1, -0.4]);
        numeric_check(
            |t, x| {
                let e = t.apply(Primitive::Exp, &[x]).unwrap();
                let c = t.apply(Primitive::ConcatCols, &[x, e]).unwrap();
                let s = t.apply(Primitive::SoftmaxRows, &[c]).unwrap();
                let col = t.apply(Primitive::Column(4), &[s]).unwrap();
                let w = t.mul(col, x).unwrap();
                let tn = t.tanh(w).unwrap();
                let r = t.row_sum(tn).unwrap();
                let sq = t.square(r).unwrap();
                t.mean(sq).unwrap()
            },
            x0,
        );
    }

    #[test]
    fn relu_sqrt_sub_gradients() {
        let x0 = m(1, 4, &[0.7, 1.3, 2.2, 0.4]);
        numeric_check(
            |t, x| {
                let r = t.relu(x).unwrap();
                let s = t.sqrt(r).unwrap();
                let a = t.add_const(s, -1.0).unwrap();
                let b = t.scale(x, 0.3).unwrap();
                let d = t.sub(a, b).unwrap();
                let sq = t.square(d).unwrap();
                t.sum(sq).unwrap()
            },
            x0,
        );
    }
}
