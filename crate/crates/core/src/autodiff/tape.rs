use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::linalg::{det_with_grad, MAX_DET_DIM};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    /// `x + b` with `b` a single row broadcast over the rows of `x`.
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Transpose(Var),
    Square(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    NormalizeRows(Var, f64),
    Sum(Var),
    Mean(Var),
    Max(Var, usize),
    Det(Var),
    Frobenius(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of matrix operations.
///
/// Nodes are numbered in creation order, which is a topological order, so
/// [`Tape::backward`] simply walks the indices downward.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient of a scalar output with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not reach the output.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
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

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.leaf(Matrix::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "div", |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row",
                format!("bias {:?} for input {:?}", bv.shape(), xv.shape()),
            ));
        }
        let mut v = xv.clone();
        for r in 0..v.rows() {
            for (o, b) in v.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRow(x, bias), v))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).scale(s);
        self.push(Op::Scale(x, s), v)
    }

    /// `x + c` for a constant `c`.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| a + c);
        self.push(Op::Offset(x), v)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).transpose();
        self.push(Op::Transpose(x), v)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(Op::Square(x), v)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.push(Op::Abs(x), v)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), v)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::ln);
        self.push(Op::Log(x), v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::sqrt);
        self.push(Op::Sqrt(x), v)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(Op::Relu(x), v)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(Op::SoftmaxRows(x), v)
    }

    /// Row-wise `x / (Σx + eps)`; rows summing to exactly zero become uniform.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let mut v = self.value(x).clone();
        let k = v.cols() as f64;
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                row.iter_mut().for_each(|a| *a = 1.0 / k);
            } else {
                let d = s + eps;
                row.iter_mut().for_each(|a| *a /= d);
            }
        }
        self.push(Op::NormalizeRows(x, eps), v)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).sum());
        self.push(Op::Sum(x), v)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).mean());
        self.push(Op::Mean(x), v)
    }

    /// Largest entry; the gradient flows to its first occurrence.
    pub fn max(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Contract("max of an empty matrix".into()));
        }
        let (idx, m) = xv
            .as_slice()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &a)| if a > best.1 { (i, a) } else { best });
        Ok(self.push(Op::Max(x, idx), Matrix::scalar(m)))
    }

    pub fn det(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != xv.cols() || xv.rows() > MAX_DET_DIM {
            return Err(Error::shape("det", format!("{:?}", xv.shape())));
        }
        let d = super::linalg::determinant(xv)?;
        Ok(self.push(Op::Det(x), Matrix::scalar(d)))
    }

    pub fn frobenius(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).frobenius_norm());
        self.push(Op::Frobenius(x), v)
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, b, g.clone());
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, b, g.scale(-1.0));
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    accumulate(&mut grads, a, g.zip_map(bv, "mul'", |gi, y| gi * y)?);
                    accumulate(&mut grads, b, g.zip_map(av, "mul'", |gi, x| gi * x)?);
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    accumulate(&mut grads, a, g.zip_map(bv, "div'", |gi, y| gi / y)?);
                    let mut gb = g.zip_map(av, "div'", |gi, x| -gi * x)?;
                    gb = gb.zip_map(bv, "div'", |t, y| t / (y * y))?;
                    accumulate(&mut grads, b, gb);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    accumulate(&mut grads, a, g.matmul_t(bv)?);
                    accumulate(&mut grads, b, av.t_matmul(&g)?);
                }
                Op::AddRow(x, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, bias, gb);
                    accumulate(&mut grads, x, g.clone());
                }
                Op::Scale(x, s) => accumulate(&mut grads, x, g.scale(s)),
                Op::Offset(x) => accumulate(&mut grads, x, g.clone()),
                Op::Transpose(x) => accumulate(&mut grads, x, g.transpose()),
                Op::Square(x) => {
                    let gx = g.zip_map(self.value(x), "square'", |gi, a| 2.0 * a * gi)?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Abs(x) => {
                    let gx = g.zip_map(self.value(x), "abs'", |gi, a| gi * sign(a))?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Exp(x) => {
                    let gx = g.zip_map(&node.value, "exp'", |gi, y| gi * y)?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Log(x) => {
                    let gx = g.zip_map(self.value(x), "log'", |gi, a| gi / a)?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Sqrt(x) => {
                    let gx = g.zip_map(&node.value, "sqrt'", |gi, y| gi * 0.5 / y)?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Tanh(x) => {
                    let gx = g.zip_map(&node.value, "tanh'", |gi, y| gi * (1.0 - y * y))?;
                    accumulate(&mut grads, x, gx);
                }
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(x), "relu'", |gi, a| if a > 0.0 { gi } else { 0.0 })?;
                    accumulate(&mut grads, x, gx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yi), &gi) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yi * (gi - dot);
                        }
                    }
                    accumulate(&mut grads, x, gx);
                }
                Op::NormalizeRows(x, eps) => {
                    let xv = self.value(x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let (xr, gr) = (xv.row(r), g.row(r));
                        let s: f64 = xr.iter().sum();
                        if s == 0.0 {
                            continue;
                        }
                        let d = s + eps;
                        let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, &gi) in gx.row_mut(r).iter_mut().zip(gr) {
                            *o = gi / d - dot / (d * d);
                        }
                    }
                    accumulate(&mut grads, x, gx);
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(x).shape();
                    accumulate(&mut grads, x, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(x) => {
                    let (r, c) = self.value(x).shape();
                    let n = (r * c) as f64;
                    accumulate(&mut grads, x, Matrix::filled(r, c, g.item() / n));
                }
                Op::Max(x, at) => {
                    let (r, c) = self.value(x).shape();
                    let mut gx = Matrix::zeros(r, c);
                    gx.as_mut_slice()[at] = g.item();
                    accumulate(&mut grads, x, gx);
                }
                Op::Det(x) => {
                    let (_, dm) = det_with_grad(self.value(x))?;
                    accumulate(&mut grads, x, dm.scale(g.item()));
                }
                Op::Frobenius(x) => {
                    let norm = node.value.item();
                    let gx = if norm > 0.0 {
                        self.value(x).scale(g.item() / norm)
                    } else {
                        let (r, c) = self.value(x).shape();
                        Matrix::zeros(r, c)
                    };
                    accumulate(&mut grads, x, gx);
                }
            }
            // keep the gradient of leaves for the caller
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for a in row.iter_mut() {
        *a = (*a - m).exp();
        s += *a;
    }
    row.iter_mut().for_each(|a| *a /= s);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(3.0));
        let y = t.square(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(2.0));
        let y = t.leaf(Matrix::scalar(5.0));
        let xy = t.mul(x, y).unwrap();
        let f = t.add(xy, y).unwrap();
        let g = t.backward(f).unwrap();
        assert_eq!(g.wrt(x).item(), 5.0);
        assert_eq!(g.wrt(y).item(), 3.0);
    }

    #[test]
    fn tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(0.0));
        let y = t.tanh(x);
        assert_eq!(t.backward(y).unwrap().wrt(x).item(), 1.0);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 2));
        let y = t.tanh(x);
        assert!(matches!(t.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(1.0));
        let unused = t.leaf(Matrix::zeros(2, 3));
        let y = t.exp(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(unused), Matrix::zeros(2, 3));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = x*x + x  => 2x + 1
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(4.0));
        let xx = t.mul(x, x).unwrap();
        let f = t.add(xx, x).unwrap();
        assert_eq!(t.backward(f).unwrap().wrt(x).item(), 9.0);
    }

    #[test]
    fn normalize_rows_dead_row_is_uniform() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 3.0, 0.0]]).unwrap());
        let y = t.normalize_rows(x, 1e-12);
        let v = t.value(y);
        assert_eq!(v.row(0), &[1.0 / 3.0; 3]);
        assert!((v.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
