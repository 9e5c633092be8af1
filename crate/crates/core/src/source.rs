//! Scalar functions consumed by the solvers: analytic expressions, fitted
//! networks, or a difference of two other sources.

use std::fmt;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::matrix::Matrix;
use crate::net::DenseNet;
use crate::train::TrainRecord;

/// How `h` is built from `f` and `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HForm {
    /// `f - g`; the signed form used for intersections.
    Difference,
    /// `(f - g)²`; the minimization form.
    SquaredDifference,
}

impl fmt::Display for HForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HForm::Difference => "difference",
            HForm::SquaredDifference => "squared-difference",
        })
    }
}

impl std::str::FromStr for HForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "difference" => Ok(HForm::Difference),
            "squared-difference" | "squared" => Ok(HForm::SquaredDifference),
            other => Err(Error::Config(format!("unknown h form '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FittedFunction {
    pub net: DenseNet,
    pub record: TrainRecord,
    /// Mean squared error over the full training set after training.
    pub train_mse: f64,
}

#[derive(Clone, Debug)]
pub enum FunctionSource {
    Analytic { name: String, expr: Expr },
    Fitted(Box<FittedFunction>),
    Combined {
        f: Box<FunctionSource>,
        g: Box<FunctionSource>,
        form: HForm,
    },
}

impl FunctionSource {
    pub fn analytic(name: &str, source: &str, arity: usize) -> Result<Self> {
        Ok(FunctionSource::Analytic {
            name: name.to_string(),
            expr: Expr::parse(source, arity)?,
        })
    }

    pub fn arity(&self) -> usize {
        match self {
            FunctionSource::Analytic { expr, .. } => expr.arity(),
            FunctionSource::Fitted(fit) => fit.net.config().n_in,
            FunctionSource::Combined { f, .. } => f.arity(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            FunctionSource::Analytic { name, expr } => format!("{name}(x) = {expr}"),
            FunctionSource::Fitted(fit) => {
                let c = fit.net.config();
                format!("fitted net (w={}, d={}, mse={:.3e})", c.width, c.depth, fit.train_mse)
            }
            FunctionSource::Combined { f, g, form } => {
                format!("{form} of [{}] and [{}]", f.describe(), g.describe())
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            FunctionSource::Analytic { expr, .. } => expr.eval(x),
            FunctionSource::Fitted(fit) => {
                let m = Matrix::from_vec(1, x.len(), x.to_vec()).expect("row");
                fit.net.forward(&m).map(|o| o.item()).unwrap_or(f64::NAN)
            }
            FunctionSource::Combined { f, g, form } => combine(*form, f.evaluate(x), g.evaluate(x)),
        }
    }

    /// Values for every row of `points`.
    pub fn evaluate_batch(&self, points: &Matrix) -> Result<Vec<f64>> {
        if points.cols() != self.arity() {
            return Err(Error::shape(
                "FunctionSource::evaluate_batch",
                format!("{} columns for a function of {} inputs", points.cols(), self.arity()),
            ));
        }
        Ok(match self {
            FunctionSource::Analytic { expr, .. } => points.iter_rows().map(|r| expr.eval(r)).collect(),
            FunctionSource::Fitted(fit) => fit.net.forward(points)?.column(0),
            FunctionSource::Combined { f, g, form } => {
                let fv = f.evaluate_batch(points)?;
                let gv = g.evaluate_batch(points)?;
                fv.into_iter().zip(gv).map(|(a, b)| combine(*form, a, b)).collect()
            }
        })
    }

    /// Exact gradient (dual numbers for expressions, reverse mode for nets).
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            FunctionSource::Analytic { expr, .. } => Some(expr.eval_grad(x).1),
            FunctionSource::Fitted(fit) => {
                let mut tape = Tape::new();
                let input = tape.leaf(Matrix::from_vec(1, x.len(), x.to_vec()).ok()?);
                let vars = fit.net.forward_tape(&mut tape, input).ok()?;
                let out = tape.sum(vars.output);
                Some(tape.backward(out).ok()?.wrt(input).into_vec())
            }
            FunctionSource::Combined { f, g, form } => {
                let (gf, gg) = (f.gradient(x)?, g.gradient(x)?);
                let scale = match form {
                    HForm::Difference => 1.0,
                    HForm::SquaredDifference => 2.0 * (f.evaluate(x) - g.evaluate(x)),
                };
                Some(gf.iter().zip(gg).map(|(a, b)| scale * (a - b)).collect())
            }
        }
    }

    /// Central-difference gradient with step `h`.
    pub fn gradient_fd(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut p = x.to_vec();
        (0..x.len())
            .map(|k| {
                p[k] = x[k] + h;
                let fp = self.evaluate(&p);
                p[k] = x[k] - h;
                let fm = self.evaluate(&p);
                p[k] = x[k];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Exact gradient when available, central differences (h = 1e-5) otherwise.
    pub fn gradient_or_fd(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x).unwrap_or_else(|| self.gradient_fd(x, 1e-5))
    }
}

fn combine(form: HForm, a: f64, b: f64) -> f64 {
    match form {
        HForm::Difference => a - b,
        HForm::SquaredDifference => (a - b) * (a - b),
    }
}

/// `h` from `f` and `g`.
pub fn build_h(f: &FunctionSource, g: &FunctionSource, form: HForm) -> Result<FunctionSource> {
    if f.arity() != g.arity() {
        return Err(Error::shape(
            "build_h",
            format!("f takes {} inputs, g takes {}", f.arity(), g.arity()),
        ));
    }
    Ok(FunctionSource::Combined {
        f: Box::new(f.clone()),
        g: Box::new(g.clone()),
        form,
    })
}
