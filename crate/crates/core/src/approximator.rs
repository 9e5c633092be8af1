//! Data-driven block: regress `f̃ ≈ f` from sample tuples, and sample domains.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{DenseNet, NetConfig};
use crate::rng::Rng;
use crate::source::{FittedFunction, FunctionSource};
use crate::train::{optimize, TrainConfig};

pub use crate::train::TrainRecord;

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("domain needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!(
                    "domain dimension {} has lower {lo} not below upper {hi}",
                    i + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Same interval in every one of `dim` dimensions.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }

    /// Grid spacing per dimension for a given resolution.
    pub fn spacing(&self, resolution: &[usize]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(resolution)
            .map(|(&(lo, hi), &n)| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sampling {
    /// Tensor grid, endpoints included, first coordinate slowest.
    Grid(Vec<usize>),
    UniformRandom { count: usize, seed: u64 },
}

pub(crate) fn linspace_point(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n == 1 {
        lo
    } else if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

pub fn sample_domain(domain: &Domain, sampling: &Sampling) -> Result<Matrix> {
    let dim = domain.dim();
    match sampling {
        Sampling::Grid(res) => {
            if res.len() != dim {
                return Err(Error::Config(format!(
                    "grid resolution has {} entries for a {dim}-D domain",
                    res.len()
                )));
            }
            if res.contains(&0) {
                return Err(Error::Config("grid resolution must be positive".into()));
            }
            let total: usize = res.iter().product();
            let axes: Vec<Vec<f64>> = domain
                .bounds()
                .iter()
                .zip(res)
                .map(|(&(lo, hi), &n)| (0..n).map(|i| linspace_point(lo, hi, n, i)).collect())
                .collect();
            let mut data = Vec::with_capacity(total * dim);
            let mut idx = vec![0usize; dim];
            for _ in 0..total {
                for (d, &i) in idx.iter().enumerate() {
                    data.push(axes[d][i]);
                }
                for d in (0..dim).rev() {
                    idx[d] += 1;
                    if idx[d] < res[d] {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            Matrix::from_vec(total, dim, data)
        }
        Sampling::UniformRandom { count, seed } => {
            if *count == 0 {
                return Err(Error::Config("random sample count must be positive".into()));
            }
            let mut rng = Rng::new(*seed);
            let mut data = Vec::with_capacity(count * dim);
            for _ in 0..*count {
                for &(lo, hi) in domain.bounds() {
                    data.push(rng.uniform(lo, hi));
                }
            }
            Matrix::from_vec(*count, dim, data)
        }
    }
}

/// Splits rows into (train, held-out) keeping every `nth` row for evaluation.
pub fn split_every_nth(x: &Matrix, y: &Matrix, nth: usize) -> Result<((Matrix, Matrix), (Matrix, Matrix))> {
    if nth < 2 {
        return Err(Error::Config("held-out stride must be at least 2".into()));
    }
    let (eval, train): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|i| i % nth == nth - 1);
    Ok((
        (x.select_rows(&train), y.select_rows(&train)),
        (x.select_rows(&eval), y.select_rows(&eval)),
    ))
}

fn check_samples(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Data("no samples".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::Data(format!(
            "{} input rows but {} output rows",
            x.rows(),
            y.rows()
        )));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Data("samples contain NaN or infinite values".into()));
    }
    Ok(())
}

/// Mean squared error of `net` over all rows.
pub fn mse(net: &DenseNet, x: &Matrix, y: &Matrix) -> Result<f64> {
    let out = net.forward(x)?;
    Ok(out.zip_map(y, "mse", |a, b| (a - b) * (a - b))?.mean())
}

/// Minimizes mean `(net(x) - y)²` over random mini-batches drawn with
/// replacement.
pub fn fit_function(samples_x: &Matrix, samples_y: &Matrix, net_cfg: &NetConfig, train_cfg: &TrainConfig) -> Result<FunctionSource> {
    check_samples(samples_x, samples_y)?;
    if samples_y.cols() != 1 {
        return Err(Error::Data(format!(
            "fit_function expects one output column, got {}",
            samples_y.cols()
        )));
    }
    if net_cfg.n_in != samples_x.cols() || net_cfg.n_out != 1 {
        return Err(Error::Config(format!(
            "network is {}->{} but samples are {}->1",
            net_cfg.n_in,
            net_cfg.n_out,
            samples_x.cols()
        )));
    }
    let mut net = DenseNet::new(*net_cfg)?;
    let mut rng = Rng::new(train_cfg.seed);
    let template = net.clone();
    let n = samples_x.rows();
    let batch = train_cfg.batch_size;
    let record = optimize(
        net.params_mut(),
        train_cfg,
        &mut rng,
        |tape, params, rng| {
            let idx: Vec<usize> = (0..batch).map(|_| rng.index(n)).collect();
            let xb = tape.leaf(samples_x.select_rows(&idx));
            let yb = tape.leaf(samples_y.select_rows(&idx));
            let out = template.forward_vars(tape, xb, params)?;
            let diff = tape.sub(out, yb)?;
            let sq = tape.square(diff);
            Ok(tape.mean(sq))
        },
        |_| {},
    )?;
    let train_mse = mse(&net, samples_x, samples_y)?;
    Ok(FunctionSource::Fitted(Box::new(FittedFunction {
        net,
        record,
        train_mse,
    })))
}

/// Largest `|f̃(x) - f(x)|` over the rows of `points`.
pub fn sup_error(fitted: &FunctionSource, truth: &FunctionSource, points: &Matrix) -> Result<f64> {
    let a = fitted.evaluate_batch(points)?;
    let b = truth.evaluate_batch(points)?;
    Ok(a.iter().zip(&b).fold(0.0, |m, (p, q)| m.max((p - q).abs())))
}
