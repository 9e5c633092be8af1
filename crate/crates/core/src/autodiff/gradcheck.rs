use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

use super::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Matrix,
    pub numeric: Matrix,
    pub relative_errors: Matrix,
    pub max_relative_error: f64,
}

/// `|a - n| / max(|a|, |n|)`, with exact agreement (including 0 vs 0) as 0.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn eval<F>(f: &F, x: &Matrix) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    let val = tape.value(out);
    if val.shape() != (1, 1) {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got {:?}",
            val.shape()
        )));
    }
    Ok(val.item())
}

/// Compares the tape gradient of a scalar function against central differences.
pub fn grad_check<F>(f: F, point: &Matrix, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let out = f(&mut tape, x)?;
    let analytic = tape.backward(out)?.wrt(x);

    let mut numeric = Matrix::zeros(point.rows(), point.cols());
    let mut probe = point.clone();
    for k in 0..point.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + step;
        let fp = eval(&f, &probe)?;
        probe.as_mut_slice()[k] = orig - step;
        let fm = eval(&f, &probe)?;
        probe.as_mut_slice()[k] = orig;
        numeric.as_mut_slice()[k] = (fp - fm) / (2.0 * step);
    }
    let relative_errors = analytic.zip_map(&numeric, "grad_check", relative_error)?;
    let max_relative_error = relative_errors.as_slice().iter().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport {
        analytic,
        numeric,
        relative_errors,
        max_relative_error,
    })
}

/// Every differentiable tape operation, in the order [`op_suite`] reports them.
pub const OP_NAMES: &[&str] = &[
    "add", "sub", "mul", "div", "matmul", "add_row", "scale", "offset", "transpose", "square", "abs", "exp", "log",
    "sqrt", "tanh", "relu", "softmax_rows", "normalize_rows", "sum", "mean", "max", "det", "frobenius",
];

/// Finite-difference step used by [`op_suite`].
pub const SUITE_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub points: usize,
    pub max_relative_error: f64,
}

type ScalarFn = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

fn uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(lo, hi))
}

/// Magnitudes in `[lo, hi]` with random signs, away from kinks and poles.
fn signed(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let v = rng.uniform(lo, hi);
        if rng.uniform(0.0, 1.0) < 0.5 {
            -v
        } else {
            v
        }
    })
}

/// `Σ y ⊙ w` for a fixed weight matrix.
fn readout(t: &mut Tape, y: Var, w: &Matrix) -> Result<Var> {
    let wv = t.leaf(w.clone());
    let p = t.mul(y, wv)?;
    Ok(t.sum(p))
}

/// Binary op with `x` on the left and on the right.
fn both_sides(op: fn(&mut Tape, Var, Var) -> Result<Var>, c1: Matrix, c2: Matrix, w1: Matrix, w2: Matrix) -> ScalarFn {
    Box::new(move |t, x| {
        let a = t.leaf(c1.clone());
        let b = t.leaf(c2.clone());
        let left = op(t, x, a)?;
        let right = op(t, b, x)?;
        let l = readout(t, left, &w1)?;
        let r = readout(t, right, &w2)?;
        t.add(l, r)
    })
}

fn unary(op: fn(&mut Tape, Var) -> Var, w: Matrix) -> ScalarFn {
    Box::new(move |t, x| {
        let y = op(t, x);
        readout(t, y, &w)
    })
}

/// A random test point and scalar function exercising `op`.
fn op_case(op: &str, rng: &mut Rng) -> (Matrix, ScalarFn) {
    let (r, c) = (3, 4);
    let w = signed(rng, r, c, 0.5, 1.5);
    let w2 = signed(rng, r, c, 0.5, 1.5);
    match op {
        "add" => (uniform(rng, r, c, -2.0, 2.0), both_sides(Tape::add, uniform(rng, r, c, -2.0, 2.0), uniform(rng, r, c, -2.0, 2.0), w, w2)),
        "sub" => (uniform(rng, r, c, -2.0, 2.0), both_sides(Tape::sub, uniform(rng, r, c, -2.0, 2.0), uniform(rng, r, c, -2.0, 2.0), w, w2)),
        "mul" => (uniform(rng, r, c, -2.0, 2.0), both_sides(Tape::mul, uniform(rng, r, c, -2.0, 2.0), uniform(rng, r, c, -2.0, 2.0), w, w2)),
        "div" => (signed(rng, r, c, 0.5, 2.0), both_sides(Tape::div, signed(rng, r, c, 0.5, 2.0), uniform(rng, r, c, -2.0, 2.0), w, w2)),
        "matmul" => {
            let right = uniform(rng, c, 2, -1.0, 1.0);
            let left = uniform(rng, 2, r, -1.0, 1.0);
            let w1 = signed(rng, r, 2, 0.5, 1.5);
            let w2 = signed(rng, 2, c, 0.5, 1.5);
            let f: ScalarFn = Box::new(move |t, x| {
                let b = t.leaf(right.clone());
                let a = t.leaf(left.clone());
                let xb = t.matmul(x, b)?;
                let ax = t.matmul(a, x)?;
                let l = readout(t, xb, &w1)?;
                let rr = readout(t, ax, &w2)?;
                t.add(l, rr)
            });
            (uniform(rng, r, c, -2.0, 2.0), f)
        }
        "add_row" => {
            let base = uniform(rng, r, c, -2.0, 2.0);
            let bias = uniform(rng, 1, c, -2.0, 2.0);
            let w1 = w.clone();
            let w2 = signed(rng, 1, c, 0.5, 1.5);
            let f: ScalarFn = Box::new(move |t, x| {
                let m = t.leaf(base.clone());
                let b = t.leaf(bias.clone());
                let as_bias = t.add_row(m, x)?;
                let as_matrix = t.add_row(x, b)?;
                let l = readout(t, as_bias, &w1)?;
                let rr = readout(t, as_matrix, &w2)?;
                t.add(l, rr)
            });
            (uniform(rng, 1, c, -2.0, 2.0), f)
        }
        "scale" => (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
            let y = t.scale(x, -1.7);
            readout(t, y, &w)
        })),
        "offset" => (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
            let y = t.offset(x, 0.3);
            let y = t.square(y);
            readout(t, y, &w)
        })),
        "transpose" => {
            let wt = signed(rng, c, r, 0.5, 1.5);
            (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
                let y = t.transpose(x);
                let y = t.square(y);
                readout(t, y, &wt)
            }))
        }
        "square" => (uniform(rng, r, c, -2.0, 2.0), unary(Tape::square, w)),
        "abs" => (signed(rng, r, c, 0.1, 2.0), unary(Tape::abs, w)),
        "exp" => (uniform(rng, r, c, -2.0, 2.0), unary(Tape::exp, w)),
        "log" => (uniform(rng, r, c, 0.5, 2.0), unary(Tape::log, w)),
        "sqrt" => (uniform(rng, r, c, 0.5, 2.0), unary(Tape::sqrt, w)),
        "tanh" => (uniform(rng, r, c, -2.0, 2.0), unary(Tape::tanh, w)),
        "relu" => (signed(rng, r, c, 0.1, 2.0), unary(Tape::relu, w)),
        "softmax_rows" => (uniform(rng, r, c, -2.0, 2.0), unary(Tape::softmax_rows, w)),
        "normalize_rows" => (uniform(rng, r, c, 0.5, 2.0), Box::new(move |t, x| {
            let y = t.normalize_rows(x, 1e-12);
            readout(t, y, &w)
        })),
        "sum" => (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
            let y = t.square(x);
            let s = t.sum(y);
            Ok(t.scale(s, 0.5))
        })),
        "mean" => (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
            let y = t.exp(x);
            Ok(t.mean(y))
        })),
        "max" => (uniform(rng, r, c, -2.0, 2.0), Box::new(move |t, x| {
            let wv = t.leaf(w.clone());
            let y = t.mul(x, wv)?;
            t.max(y)
        })),
        "det" => {
            let mut m = uniform(rng, 3, 3, -1.0, 1.0);
            for i in 0..3 {
                m[(i, i)] += 2.0;
            }
            (m, Box::new(|t, x| t.det(x)))
        }
        "frobenius" => (uniform(rng, r, c, -2.0, 2.0), Box::new(|t, x| Ok(t.frobenius(x)))),
        other => unreachable!("no grad-check case for {other}"),
    }
}

/// Gradient check of every tape op on `points` random inputs drawn from
/// `seed`; op `i` uses RNG stream `i`.
pub fn op_suite(seed: u64, points: usize) -> Result<Vec<OpCheck>> {
    let base = Rng::new(seed);
    OP_NAMES
        .iter()
        .enumerate()
        .map(|(i, &op)| {
            let mut rng = base.fork(i as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let (x, f) = op_case(op, &mut rng);
                worst = worst.max(grad_check(f, &x, SUITE_STEP)?.max_relative_error);
            }
            Ok(OpCheck {
                op,
                points,
                max_relative_error: worst,
            })
        })
        .collect()
}
