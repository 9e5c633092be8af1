//! Minimum-volume simplex autoencoder for linear-mixture unmixing.
//!
//! Pixels `y` (rows of `Y`, rescaled so the largest entry is `TARGET_MAX`) pass through
//! `b = normalize(relu(y Âᵀ))` and `ŷ = tanh(A b)`. The loss is the mean
//! per-pixel `‖y − ŷ‖²` plus `λ·det(AᵀA)`, and `A` is clipped at zero after
//! every optimizer step.

use crate::autodiff::{determinant, Tape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::train::{optimize, TrainConfig, TrainRecord, LOSS_WINDOW};

/// Largest rescaled reflectance; keeps `tanh` close to linear so that the
/// decoder can reproduce linear mixtures.
pub const TARGET_MAX: f64 = 0.2;
pub const DEFAULT_RESTARTS: usize = 3;
/// Added to the abundance row sum before dividing.
pub const NORMALIZE_EPS: f64 = 1e-12;
pub const DEFAULT_LAMBDA: f64 = 1e-3;
/// Exhaustive alignment is limited to `K!` with `K ≤ 6`.
pub const MAX_ALIGN_K: usize = 6;

/// `Y` is `N × F` (one pixel per row). Optional ground truth is `A_true`
/// (`F × K`, one end-member per column) and `B_true` (`N × K`, one abundance
/// vector per row).
#[derive(Clone, Debug)]
pub struct HsiDataset {
    pub y: Matrix,
    pub a_true: Option<Matrix>,
    pub b_true: Option<Matrix>,
    pub names: Vec<String>,
}

impl HsiDataset {
    pub fn new(y: Matrix, a_true: Option<Matrix>, b_true: Option<Matrix>, names: Vec<String>) -> Result<Self> {
        if y.rows() == 0 || y.cols() < 2 {
            return Err(Error::Data(format!("Y must have pixels and at least two bands, got {:?}", y.shape())));
        }
        if let Some(bad) = y.as_slice().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data(format!("reflectances must be finite and non-negative, found {bad}")));
        }
        if let Some(a) = &a_true {
            if a.rows() != y.cols() || a.cols() < 2 || a.cols() > y.cols() {
                return Err(Error::Data(format!(
                    "A_true is {:?} but Y has {} bands",
                    a.shape(),
                    y.cols()
                )));
            }
            if a.as_slice().iter().any(|v| *v < 0.0) {
                return Err(Error::Data("A_true has negative entries".into()));
            }
        }
        if let Some(b) = &b_true {
            if b.rows() != y.rows() || a_true.as_ref().is_some_and(|a| a.cols() != b.cols()) {
                return Err(Error::Data(format!("B_true shape {:?} does not match the data", b.shape())));
            }
        }
        Ok(Self { y, a_true, b_true, names })
    }

    pub fn pixels(&self) -> usize {
        self.y.rows()
    }

    pub fn bands(&self) -> usize {
        self.y.cols()
    }

    /// Number of end-members in the ground truth, if any.
    pub fn k(&self) -> Option<usize> {
        self.a_true.as_ref().map(Matrix::cols)
    }
}

/// Noiseless linear mixtures: `A_true` entries uniform on `[0.05, 1]`,
/// abundances uniform on the simplex, `Y = B Aᵀ`.
pub fn synthetic_dataset(k: usize, f: usize, n: usize, seed: u64) -> Result<HsiDataset> {
    if k < 2 || f < k || n == 0 {
        return Err(Error::Config(format!("synthetic data needs 2 <= K <= F and N > 0, got K={k} F={f} N={n}")));
    }
    let mut rng = Rng::new(seed);
    let a = Matrix::from_fn(f, k, |_, _| rng.uniform(0.05, 1.0));
    let mut b = Matrix::zeros(n, k);
    for i in 0..n {
        b.row_mut(i).copy_from_slice(&rng.simplex(k));
    }
    let y = b.matmul_t(&a)?;
    let names = (1..=k).map(|j| format!("em{j}")).collect();
    HsiDataset::new(y, Some(a), Some(b), names)
}

/// Encoder `Â` (`K × F`) and decoder `A` (`F × K`), no biases.
#[derive(Clone, Debug, PartialEq)]
pub struct UnmixModel {
    pub encoder: Matrix,
    pub decoder: Matrix,
    pub lambda: f64,
}

impl UnmixModel {
    /// Uniform random non-negative weights on `[0, 1)`.
    pub fn new(k: usize, f: usize, lambda: f64, rng: &mut Rng) -> Result<Self> {
        if k < 2 || f < k {
            return Err(Error::Config(format!("need 2 <= K <= F, got K={k} F={f}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        let encoder = Matrix::from_fn(k, f, |_, _| rng.uniform(0.0, 1.0));
        let decoder = Matrix::from_fn(f, k, |_, _| rng.uniform(0.0, 1.0));
        Ok(Self { encoder, decoder, lambda })
    }

    pub fn k(&self) -> usize {
        self.encoder.rows()
    }

    pub fn f(&self) -> usize {
        self.encoder.cols()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    /// Abundances for rescaled pixels; rows lie on the unit simplex and
    /// all-zero rows fall back to `1/K`.
    pub fn abundances(&self, y: &Matrix) -> Result<Matrix> {
        let mut b = y.matmul_t(&self.encoder)?.map(|v| v.max(0.0));
        let k = self.k() as f64;
        for r in 0..b.rows() {
            let row = b.row_mut(r);
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                row.iter_mut().for_each(|v| *v = 1.0 / k);
            } else {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        Ok(b)
    }

    /// `tanh(A b)` for every row of `y`.
    pub fn reconstruct(&self, y: &Matrix) -> Result<Matrix> {
        Ok(self.abundances(y)?.matmul_t(&self.decoder)?.map(f64::tanh))
    }

    /// Mean per-pixel `‖y − ŷ‖²`.
    pub fn reconstruction_error(&self, y: &Matrix) -> Result<f64> {
        let r = self.reconstruct(y)?;
        let d = y.zip_map(&r, "reconstruction_error", |a, b| (a - b) * (a - b))?;
        Ok(d.sum() / y.rows() as f64)
    }
}

/// `det(AᵀA)`; zero for rank-deficient `A`.
pub fn volume_term(a: &Matrix) -> Result<f64> {
    if a.rows() < a.cols() {
        return Err(Error::shape("volume_term", format!("need F >= K, got {:?}", a.shape())));
    }
    Ok(determinant(&a.t_matmul(a)?)?.max(0.0))
}

/// Simplex volume `|det(A)|/K!`, with `√det(AᵀA)` standing in for `|det(A)|`
/// when `A` is not square.
pub fn simplex_volume(a: &Matrix) -> Result<f64> {
    let k = a.cols();
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    Ok(volume_term(a)?.sqrt() / factorial)
}

/// `‖Â A − I_K‖_F` between encoder and decoder weights.
pub fn biorthogonality_report(model: &UnmixModel) -> Result<f64> {
    let p = model.encoder.matmul(&model.decoder)?;
    let id = Matrix::identity(model.k());
    Ok(p.zip_map(&id, "biorthogonality", |a, b| a - b)?.frobenius_norm())
}

/// Aligned comparison against ground truth.
#[derive(Clone, Debug)]
pub struct UnmixMetrics {
    /// `A_hat` column used for each true end-member.
    pub permutation: Vec<usize>,
    pub mse: f64,
    pub sad: f64,
    /// Same metrics with both matrices in the rescaled training units.
    pub mse_rescaled: f64,
    pub sad_rescaled: f64,
}

#[derive(Clone, Debug)]
pub struct UnmixResult {
    pub model: UnmixModel,
    /// Multiplier that mapped `Y` into `[0, target_max]`.
    pub scale: f64,
    /// End-members in original reflectance units, `tanh(A)/scale`.
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    pub record: TrainRecord,
    /// `(step, reconstruction, λ·det(AᵀA))` of the last batch in each window.
    pub term_trace: Vec<(usize, f64, f64)>,
    pub initial_reconstruction: f64,
    pub final_reconstruction: f64,
    pub biorthogonality: f64,
    pub metrics: Option<UnmixMetrics>,
}

/// Settings for [`unmix_train_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnmixOptions {
    pub k: usize,
    /// Weight of `det(AᵀA)`.
    pub lambda: f64,
    /// Largest reflectance after rescaling, in `(0, 1)`.
    pub target_max: f64,
    /// Independent initializations; the lowest final objective wins.
    pub restarts: usize,
}

impl UnmixOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            lambda: DEFAULT_LAMBDA,
            target_max: TARGET_MAX,
            restarts: DEFAULT_RESTARTS,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Trains the autoencoder on `data` with `K` end-members and default options.
pub fn unmix_train(data: &HsiDataset, k: usize, lambda: f64, train_cfg: &TrainConfig) -> Result<UnmixResult> {
    unmix_train_with(data, &UnmixOptions::new(k).with_lambda(lambda), train_cfg)
}

struct Run {
    model: UnmixModel,
    record: TrainRecord,
    term_trace: Vec<(usize, f64, f64)>,
    initial_reconstruction: f64,
    objective: f64,
}

/// One training run from a random start drawn from `init_rng`.
fn train_once(y: &Matrix, opts: &UnmixOptions, cfg: &TrainConfig, init_rng: &mut Rng, rng: &mut Rng) -> Result<Run> {
    let (n, f) = y.shape();
    let lambda = opts.lambda;
    let mut model = UnmixModel::new(opts.k, f, lambda, init_rng)?;
    // start the reconstruction near the mean reflectance
    model.decoder = model.decoder.scale(2.0 * y.mean());
    let initial_reconstruction = model.reconstruction_error(y)?;

    let batch = cfg.batch_size;
    let mut params = vec![model.encoder.clone(), model.decoder.clone()];
    let mut term_trace = Vec::new();
    let mut step = 0usize;
    let record = optimize(
        &mut params,
        cfg,
        rng,
        |tape: &mut Tape, p, rng| {
            let idx: Vec<usize> = (0..batch).map(|_| rng.index(n)).collect();
            let yb = tape.leaf(y.select_rows(&idx));
            let enc_t = tape.transpose(p[0]);
            let z = tape.matmul(yb, enc_t)?;
            let z = tape.relu(z);
            let b = tape.normalize_rows(z, NORMALIZE_EPS);
            let dec_t = tape.transpose(p[1]);
            let pre = tape.matmul(b, dec_t)?;
            let out = tape.tanh(pre);
            let diff = tape.sub(out, yb)?;
            let sq = tape.square(diff);
            let total = tape.sum(sq);
            let recon = tape.scale(total, 1.0 / batch as f64);
            let gram = tape.matmul(dec_t, p[1])?;
            let det = tape.det(gram)?;
            let vol = tape.scale(det, lambda);
            step += 1;
            if step.is_multiple_of(LOSS_WINDOW) {
                term_trace.push((step, tape.value(recon).item(), tape.value(vol).item()));
            }
            tape.add(recon, vol)
        },
        |p| {
            for v in p[1].as_mut_slice() {
                *v = v.max(0.0);
            }
        },
    )?;
    let [encoder, decoder]: [Matrix; 2] = params.try_into().expect("two parameter blocks");
    model.encoder = encoder;
    model.decoder = decoder;
    let objective = model.reconstruction_error(y)? + lambda * volume_term(&model.decoder)?;
    Ok(Run {
        model,
        record,
        term_trace,
        initial_reconstruction,
        objective,
    })
}

/// Trains `opts.restarts` independently initialized autoencoders and keeps
/// the one with the lowest full-data objective. Restart `r` draws its
/// initial weights from stream `2r + 1` and its batches from `2r + 2` of the
/// seed in `train_cfg`.
pub fn unmix_train_with(data: &HsiDataset, opts: &UnmixOptions, train_cfg: &TrainConfig) -> Result<UnmixResult> {
    let (k, f) = (opts.k, data.bands());
    if !(opts.target_max > 0.0 && opts.target_max < 1.0) {
        return Err(Error::Config(format!("rescale target must lie in (0, 1), got {}", opts.target_max)));
    }
    if opts.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    if k > f {
        return Err(Error::Config(format!("K = {k} exceeds the band count F = {f}")));
    }
    if let Some(kt) = data.k() {
        if kt != k {
            return Err(Error::Config(format!("K = {k} but the ground truth has {kt} end-members")));
        }
    }
    let max = data.y.max_abs();
    if max == 0.0 {
        return Err(Error::Data("all reflectances are zero".into()));
    }
    let scale = opts.target_max / max;
    let y = data.y.scale(scale);

    let base = Rng::new(train_cfg.seed);
    let mut best: Option<Run> = None;
    for r in 0..opts.restarts as u64 {
        let run = train_once(&y, opts, train_cfg, &mut base.fork(2 * r + 1), &mut base.fork(2 * r + 2))?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let Run {
        model,
        record,
        term_trace,
        initial_reconstruction,
        ..
    } = best.expect("at least one restart");

    let final_reconstruction = model.reconstruction_error(&y)?;
    let a_hat = model.decoder.map(|v| v.tanh() / scale);
    let b_hat = model.abundances(&y)?;
    let biorthogonality = biorthogonality_report(&model)?;
    let metrics = match &data.a_true {
        Some(a_true) => {
            let permutation = align_endmembers(a_true, &a_hat)?;
            let aligned = a_hat.select_columns(&permutation);
            let true_rescaled = a_true.scale(scale);
            let aligned_rescaled = aligned.scale(scale);
            Some(UnmixMetrics {
                mse: mse_endmembers(a_true, &aligned)?,
                sad: sad_endmembers(a_true, &aligned)?,
                mse_rescaled: mse_endmembers(&true_rescaled, &aligned_rescaled)?,
                sad_rescaled: sad_endmembers(&true_rescaled, &aligned_rescaled)?,
                permutation,
            })
        }
        None => None,
    };
    Ok(UnmixResult {
        model,
        scale,
        a_hat,
        b_hat,
        record,
        term_trace,
        initial_reconstruction,
        final_reconstruction,
        biorthogonality,
        metrics,
    })
}

fn column_angle(a: &Matrix, i: usize, b: &Matrix, j: usize) -> Result<f64> {
    Ok(column_cosine(a, i, b, j)?.acos())
}

fn column_cosine(a: &Matrix, i: usize, b: &Matrix, j: usize) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for r in 0..a.rows() {
        let (x, y) = (a[(r, i)], b[(r, j)]);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Data(format!("zero-norm end-member column ({i} or {j})")));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

fn check_pair(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Heap's algorithm over `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn heap(n: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..n - 1 {
            heap(n - 1, p, out);
            let j = if n.is_multiple_of(2) { i } else { 0 };
            p.swap(j, n - 1);
        }
        heap(n - 1, p, out);
    }
    let mut out = Vec::new();
    heap(k, &mut (0..k).collect(), &mut out);
    out
}

/// Column permutation `p` of `a_hat` minimizing the total spectral angle,
/// so that `a_hat.select_columns(&p)` lines up with `a_true`. Ties keep the
/// first permutation in enumeration order.
pub fn align_endmembers(a_true: &Matrix, a_hat: &Matrix) -> Result<Vec<usize>> {
    check_pair("align_endmembers", a_true, a_hat)?;
    let k = a_true.cols();
    if k > MAX_ALIGN_K {
        return Err(Error::Config(format!("exhaustive alignment supports K <= {MAX_ALIGN_K}, got {k}")));
    }
    let mut angles = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            angles[(i, j)] = column_angle(a_true, i, a_hat, j)?;
        }
    }
    let mut perms = permutations(k);
    perms.sort();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| angles[(i, j)]).sum::<f64>();
    let mut best = perms[0].clone();
    let mut best_cost = cost(&best);
    for p in &perms[1..] {
        let c = cost(p);
        if c < best_cost {
            best_cost = c;
            best = p.clone();
        }
    }
    Ok(best)
}

/// Mean squared difference over all `F·K` entries.
pub fn mse_endmembers(a_true: &Matrix, a_hat: &Matrix) -> Result<f64> {
    check_pair("mse_endmembers", a_true, a_hat)?;
    Ok(a_true.zip_map(a_hat, "mse_endmembers", |a, b| (a - b) * (a - b))?.mean())
}

/// `arccos` of the mean column cosine similarity, in radians.
pub fn sad_endmembers(a_true: &Matrix, a_hat: &Matrix) -> Result<f64> {
    check_pair("sad_endmembers", a_true, a_hat)?;
    let k = a_true.cols();
    let mut total = 0.0;
    for j in 0..k {
        total += column_cosine(a_true, j, a_hat, j)?;
    }
    Ok((total / k as f64).clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{det_with_grad, inverse};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn volume_examples() {
        let a = Matrix::from_fn(6, 3, |r, c| (r == c) as u8 as f64);
        assert_eq!(volume_term(&a).unwrap(), 1.0);
        let rep = Matrix::from_fn(5, 3, |r, c| if c == 2 { (r + 1) as f64 } else { (r * (c + 1) + 1) as f64 });
        let mut dup = rep.clone();
        for r in 0..5 {
            dup[(r, 2)] = dup[(r, 0)];
        }
        assert!(volume_term(&dup).unwrap().abs() < 1e-9);
        assert!(volume_term(&Matrix::zeros(2, 3)).is_err());
        assert!((simplex_volume(&Matrix::identity(3)).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    fn cofactor3(m: &Matrix) -> f64 {
        m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)]) - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
    }

    #[test]
    fn volume_matches_cofactor_expansion() {
        let mut rng = Rng::new(8);
        for _ in 0..50 {
            let a = Matrix::from_fn(20, 3, |_, _| rng.uniform(0.0, 1.0));
            let gram = a.t_matmul(&a).unwrap();
            let expect = cofactor3(&gram);
            assert!((volume_term(&a).unwrap() - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn volume_gradient_matches_finite_differences() {
        let mut rng = Rng::new(12);
        for _ in 0..10 {
            let a = Matrix::from_fn(10, 3, |_, _| rng.uniform(-1.0, 1.0));
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone());
            let at = tape.transpose(av);
            let g = tape.matmul(at, av).unwrap();
            let d = tape.det(g).unwrap();
            let grad = tape.backward(d).unwrap().wrt(av);
            let h = 1e-6;
            for idx in 0..a.len() {
                let mut p = a.clone();
                p.as_mut_slice()[idx] += h;
                let mut m = a.clone();
                m.as_mut_slice()[idx] -= h;
                let fd = (volume_term(&p).unwrap() - volume_term(&m).unwrap()) / (2.0 * h);
                let an = grad.as_slice()[idx];
                assert!((an - fd).abs() <= 1e-5 * an.abs().max(fd.abs()).max(1e-3), "{an} vs {fd}");
            }
        }
        // the tape op agrees with the closed form det·M⁻ᵀ on the Gram matrix
        let a = Matrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64 * 0.3 + 0.1);
        let (_, g) = det_with_grad(&a.t_matmul(&a).unwrap()).unwrap();
        assert_eq!(g.shape(), (2, 2));
    }

    #[test]
    fn parameter_count_is_2kf() {
        let m = UnmixModel::new(3, 20, 1e-3, &mut Rng::new(0)).unwrap();
        assert_eq!(m.param_count(), 120);
        let m = UnmixModel::new(3, 156, 1e-3, &mut Rng::new(0)).unwrap();
        assert_eq!(m.param_count(), 936);
        let m = UnmixModel::new(4, 200, 1e-3, &mut Rng::new(0)).unwrap();
        assert_eq!(m.param_count(), 1600);
        assert!(UnmixModel::new(5, 4, 1e-3, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn abundances_stay_on_the_simplex() {
        let mut rng = Rng::new(2);
        let m = UnmixModel::new(4, 10, 0.0, &mut rng).unwrap();
        let mut y = Matrix::from_fn(50, 10, |_, _| rng.uniform(0.0, 0.9));
        y.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        let b = m.abundances(&y).unwrap();
        for r in b.iter_rows() {
            assert!(r.iter().all(|&v| v >= 0.0));
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        assert_eq!(b.row(0), &[0.25; 4]);
    }

    #[test]
    fn biorthogonality_examples() {
        let mut rng = Rng::new(4);
        let mut m = UnmixModel::new(3, 8, 0.0, &mut rng).unwrap();
        let e = m.encoder.clone();
        let inv = inverse(&e.matmul_t(&e).unwrap()).unwrap().unwrap();
        m.decoder = e.transpose().matmul(&inv).unwrap();
        assert!(biorthogonality_report(&m).unwrap() <= 1e-10);
        let r = UnmixModel::new(3, 8, 0.0, &mut rng).unwrap();
        assert!(biorthogonality_report(&r).unwrap() > 0.0);
    }

    #[test]
    fn metric_examples() {
        let mut rng = Rng::new(6);
        let a = Matrix::from_fn(10, 3, |_, _| rng.uniform(0.1, 1.0));
        assert_eq!(mse_endmembers(&a, &a).unwrap(), 0.0);
        assert!(sad_endmembers(&a, &a).unwrap() < 1e-7);
        let twice = a.scale(2.0);
        assert!(sad_endmembers(&a, &twice).unwrap() < 1e-7);
        let mean_sq = a.map(|v| v * v).mean();
        assert!((mse_endmembers(&a, &twice).unwrap() - mean_sq).abs() < 1e-15);
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let o = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((sad_endmembers(&e, &o).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(sad_endmembers(&e, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn sad_ignores_column_scaling_but_mse_does_not() {
        let mut rng = Rng::new(10);
        let a = Matrix::from_fn(12, 3, |_, _| rng.uniform(0.1, 1.0));
        let b = Matrix::from_fn(12, 3, |_, _| rng.uniform(0.1, 1.0));
        let scaled = Matrix::from_fn(12, 3, |r, c| b[(r, c)] * (c as f64 + 1.5));
        let (s0, s1) = (sad_endmembers(&a, &b).unwrap(), sad_endmembers(&a, &scaled).unwrap());
        assert!((s0 - s1).abs() < 1e-12);
        assert!(mse_endmembers(&a, &b).unwrap() != mse_endmembers(&a, &scaled).unwrap());
    }

    #[test]
    fn alignment_undoes_a_swap() {
        let mut rng = Rng::new(1);
        let a = Matrix::from_fn(10, 3, |_, _| rng.uniform(0.1, 1.0));
        assert_eq!(align_endmembers(&a, &a).unwrap(), vec![0, 1, 2]);
        let swapped = a.select_columns(&[2, 0, 1]);
        let p = align_endmembers(&a, &swapped).unwrap();
        let back = swapped.select_columns(&p);
        assert_eq!(mse_endmembers(&a, &back).unwrap(), 0.0);
        assert!(align_endmembers(&Matrix::zeros(8, 7), &Matrix::zeros(8, 7)).is_err());
    }

    #[test]
    fn alignment_matches_enumeration() {
        let mut rng = Rng::new(21);
        let explicit = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for _ in 0..100 {
            let a = Matrix::from_fn(6, 3, |_, _| rng.uniform(0.0, 1.0));
            let b = Matrix::from_fn(6, 3, |_, _| rng.uniform(0.0, 1.0));
            let p = align_endmembers(&a, &b).unwrap();
            let best = explicit
                .iter()
                .map(|q| sad_total(&a, &b, q))
                .fold(f64::INFINITY, f64::min);
            assert!((sad_total(&a, &b, &p) - best).abs() < 1e-12);
        }
    }

    fn sad_total(a: &Matrix, b: &Matrix, p: &[usize]) -> f64 {
        p.iter().enumerate().map(|(i, &j)| column_angle(a, i, b, j).unwrap()).sum()
    }

    #[test]
    fn permutation_enumeration_is_complete() {
        for k in 1..=5 {
            let mut p = permutations(k);
            let count = p.len();
            p.sort();
            p.dedup();
            assert_eq!(p.len(), count);
            assert_eq!(count, (1..=k).product::<usize>());
        }
    }

    #[test]
    fn dataset_validation() {
        let y = Matrix::filled(4, 3, 0.5);
        assert!(HsiDataset::new(y.clone(), None, None, vec![]).is_ok());
        let mut neg = y.clone();
        neg[(1, 1)] = -0.1;
        assert!(matches!(HsiDataset::new(neg, None, None, vec![]), Err(Error::Data(_))));
        assert!(HsiDataset::new(y.clone(), Some(Matrix::filled(2, 2, 1.0)), None, vec![]).is_err());
        let d = synthetic_dataset(3, 20, 100, 0).unwrap();
        assert_eq!(d.y.shape(), (100, 20));
        assert_eq!(d.k(), Some(3));
        assert!(unmix_train(&d, 21, 1e-3, &TrainConfig::with_seed(0)).is_err());
        assert!(unmix_train(&d, 2, 1e-3, &TrainConfig::with_seed(0)).is_err());
    }

    #[test]
    fn short_training_keeps_invariants() {
        let d = synthetic_dataset(3, 8, 200, 3).unwrap();
        let cfg = TrainConfig {
            steps_per_epoch: 300,
            epochs: 1,
            batch_size: 32,
            learning_rate: 1e-2,
            loss_tolerance: 1e-12,
            ..TrainConfig::with_seed(3)
        };
        let r = unmix_train(&d, 3, 1e-3, &cfg).unwrap();
        assert!(r.model.decoder.as_slice().iter().all(|&v| v >= 0.0));
        assert!(r.final_reconstruction <= r.initial_reconstruction);
        for row in r.b_hat.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        assert_eq!(r.metrics.as_ref().unwrap().permutation.len(), 3);
        let again = unmix_train(&d, 3, 1e-3, &cfg).unwrap();
        assert_eq!(again.model, r.model);
    }
}
