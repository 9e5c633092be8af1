//! Pareto fronts from the Fritz John condition: assemble
//! `L = [[∇F, ∇G], [0, G]]`, score every grid point by `s = det(LᵀL)`, train
//! a two-logit softmax classifier on the thresholded score and post-filter
//! the candidates by non-domination.

use std::thread;

use crate::approximator::{sample_domain, Domain, Sampling};
use crate::autodiff::determinant;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{Activation, DenseNet, NetConfig};
use crate::oracle::non_dominated;
use crate::rng::Rng;
use crate::source::FunctionSource;
use crate::train::{optimize, TrainConfig, TrainRecord};

/// Default threshold on the median-normalized score.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Softmax probability above which a grid point is a candidate.
pub const CLASS_THRESHOLD: f64 = 0.5;
/// Upper end of the analytic Case I front.
pub const CASE1_F2_MAX: f64 = 0.982;

/// `min F(x) = (f_1, …, f_k)` subject to `g_j(x) ≤ 0` over a box.
#[derive(Clone, Debug)]
pub struct MooProblem {
    pub name: String,
    pub objectives: Vec<FunctionSource>,
    pub constraints: Vec<FunctionSource>,
    pub domain: Domain,
    /// Default grid.
    pub resolution: Vec<usize>,
}

impl MooProblem {
    pub fn new(
        name: &str,
        objectives: Vec<FunctionSource>,
        constraints: Vec<FunctionSource>,
        domain: Domain,
        resolution: Vec<usize>,
    ) -> Result<Self> {
        if objectives.len() < 2 {
            return Err(Error::Config(format!(
                "a multi-objective problem needs at least two objectives, got {}",
                objectives.len()
            )));
        }
        let n = domain.dim();
        for f in objectives.iter().chain(&constraints) {
            if f.arity() != n {
                return Err(Error::Config(format!(
                    "function '{}' takes {} inputs but the domain is {n}-D",
                    f.describe(),
                    f.arity()
                )));
            }
        }
        if resolution.len() != n {
            return Err(Error::Config(format!("grid has {} axes, domain is {n}-D", resolution.len())));
        }
        Ok(Self {
            name: name.to_string(),
            objectives,
            constraints,
            domain,
            resolution,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn k(&self) -> usize {
        self.objectives.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn feasible(&self, x: &[f64]) -> bool {
        self.domain.contains(x) && self.constraints.iter().all(|g| g.evaluate(x) <= 0.0)
    }

    pub fn objective_values(&self, x: &[f64]) -> Vec<f64> {
        self.objectives.iter().map(|f| f.evaluate(x)).collect()
    }

    /// `F(x)` for every row of `points`.
    pub fn objective_matrix(&self, points: &Matrix) -> Matrix {
        let k = self.k();
        let mut out = Matrix::zeros(points.rows(), k);
        for (i, x) in points.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.objective_values(x));
        }
        out
    }

    pub fn grid(&self) -> Result<Matrix> {
        sample_domain(&self.domain, &Sampling::Grid(self.resolution.clone()))
    }
}

fn checked_gradient(f: &FunctionSource, x: &[f64]) -> Result<Vec<f64>> {
    let g = f.gradient_or_fd(x);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::Eval {
            at: x.to_vec(),
            msg: format!("non-finite gradient of '{}'", f.describe()),
        })
    }
}

/// The `(n+m) × (k+m)` Fritz John matrix at `x`.
pub fn assemble_l(problem: &MooProblem, x: &[f64]) -> Result<Matrix> {
    let (n, k, m) = (problem.dim(), problem.k(), problem.m());
    if x.len() != n {
        return Err(Error::shape("assemble_l", format!("point has {} coordinates, problem is {n}-D", x.len())));
    }
    let mut l = Matrix::zeros(n + m, k + m);
    for (c, f) in problem.objectives.iter().chain(&problem.constraints).enumerate() {
        for (r, v) in checked_gradient(f, x)?.into_iter().enumerate() {
            l[(r, c)] = v;
        }
    }
    for (j, g) in problem.constraints.iter().enumerate() {
        l[(n + j, k + j)] = g.evaluate(x);
    }
    Ok(l)
}

/// `s(x) = det(L(x)ᵀ L(x))`.
pub fn fj_score(problem: &MooProblem, x: &[f64]) -> Result<f64> {
    let l = assemble_l(problem, x)?;
    determinant(&l.t_matmul(&l)?)
}

/// Raw scores over a grid plus the median `|s|` used to normalize them.
#[derive(Clone, Debug)]
pub struct ScoreField {
    pub raw: Vec<f64>,
    pub scale: f64,
}

impl ScoreField {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let scale = median_abs(&raw);
        Self { raw, scale }
    }

    pub fn normalized(&self, i: usize) -> f64 {
        self.raw[i].abs() / self.scale
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Median of `|v|`, falling back to the mean and then to 1 when the median
/// vanishes so that normalization never divides by zero.
fn median_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mid = abs.len() / 2;
    let (_, median, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median > 0.0 {
        return median;
    }
    let mean = abs.iter().sum::<f64>() / abs.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// Scores every grid row; rows are split across threads and written back by
/// index, so the result does not depend on the thread count. Targets without
/// threads (single reported core) score inline.
pub fn score_field(problem: &MooProblem, grid: &Matrix) -> Result<ScoreField> {
    let n = grid.rows();
    let threads = thread::available_parallelism().map_or(1, |t| t.get()).min(n.max(1));
    let chunk = n.div_ceil(threads.max(1)).max(1);
    let mut raw = vec![0.0; n];
    if threads <= 1 {
        for (o, i) in raw.iter_mut().zip(0..) {
            *o = fj_score(problem, grid.row(i))?;
        }
        return Ok(ScoreField::from_raw(raw));
    }
    thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = raw
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, out)| {
                scope.spawn(move || -> Result<()> {
                    for (o, i) in out.iter_mut().zip(c * chunk..) {
                        *o = fj_score(problem, grid.row(i))?;
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("score worker panicked")?;
        }
        Ok(())
    })?;
    Ok(ScoreField::from_raw(raw))
}

/// Training label: normalized `|s| ≤ ε` and every constraint satisfied.
pub fn fj_labels(problem: &MooProblem, grid: &Matrix, field: &ScoreField, epsilon: f64) -> Vec<bool> {
    (0..grid.rows())
        .map(|i| field.normalized(i) <= epsilon && problem.feasible(grid.row(i)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ParetoClassifier {
    pub net: DenseNet,
    pub record: TrainRecord,
    pub positives: usize,
    pub negatives: usize,
}

/// Fits a two-logit softmax classifier to the Fritz John labels with an L2
/// loss against one-hot targets. Column 1 is the Pareto class.
///
/// Each batch draws half its rows from each class so that thin fronts are
/// not swamped by the negative majority. A grid with no positive label is an
/// error; an all-positive grid trains the constant map.
pub fn train_pareto_classifier(
    problem: &MooProblem,
    grid: &Matrix,
    field: &ScoreField,
    epsilon: f64,
    net_cfg: &NetConfig,
    train_cfg: &TrainConfig,
) -> Result<ParetoClassifier> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if net_cfg.n_in != problem.dim() || net_cfg.n_out != 2 {
        return Err(Error::Config(format!(
            "classifier must be {}->2, got {}->{}",
            problem.dim(),
            net_cfg.n_in,
            net_cfg.n_out
        )));
    }
    if grid.rows() != field.len() {
        return Err(Error::shape("train_pareto_classifier", "score field and grid differ in length"));
    }
    let labels = fj_labels(problem, grid, field, epsilon);
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() {
        return Err(Error::Data(format!(
            "no grid point has normalized score <= {epsilon} and satisfies the constraints; increase epsilon"
        )));
    }

    let cfg = net_cfg.with_output(Activation::Softmax);
    let mut net = DenseNet::new(cfg)?;
    let template = net.clone();
    let mut rng = Rng::new(train_cfg.seed);
    let batch = train_cfg.batch_size;
    let record = optimize(
        net.params_mut(),
        train_cfg,
        &mut rng,
        |tape, params, rng| {
            let mut idx = Vec::with_capacity(batch);
            let mut target = Matrix::zeros(batch, 2);
            for r in 0..batch {
                let positive = neg.is_empty() || r % 2 == 0;
                let pool = if positive { &pos } else { &neg };
                idx.push(pool[rng.index(pool.len())]);
                target[(r, positive as usize)] = 1.0;
            }
            let xv = tape.leaf(grid.select_rows(&idx));
            let tv = tape.leaf(target);
            let out = template.forward_vars(tape, xv, params)?;
            let diff = tape.sub(out, tv)?;
            let sq = tape.square(diff);
            let total = tape.sum(sq);
            Ok(tape.scale(total, 1.0 / batch as f64))
        },
        |_| {},
    )?;
    Ok(ParetoClassifier {
        net,
        record,
        positives: pos.len(),
        negatives: neg.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrontStatus {
    Ok,
    /// No grid point survived; usually ε is too small.
    Empty,
}

#[derive(Clone, Debug)]
pub struct FrontResult {
    pub grid_points: usize,
    pub epsilon: f64,
    /// Median `|s|` over the grid.
    pub score_scale: f64,
    pub domination_filter: bool,
    /// Pareto-class probability at every grid point.
    pub class_prob: Vec<f64>,
    /// Indices of the front points in the grid.
    pub indices: Vec<usize>,
    pub points: Matrix,
    pub objectives: Matrix,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub status: FrontStatus,
}

impl FrontResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Grid points with class probability above [`CLASS_THRESHOLD`] whose score
/// and constraints also pass, optionally reduced to the non-dominated subset.
pub fn extract_front(
    classifier: &DenseNet,
    problem: &MooProblem,
    grid: &Matrix,
    field: &ScoreField,
    epsilon: f64,
    apply_domination_filter: bool,
) -> Result<FrontResult> {
    if grid.rows() != field.len() {
        return Err(Error::shape("extract_front", "score field and grid differ in length"));
    }
    let mut class_prob = Vec::with_capacity(grid.rows());
    let all: Vec<usize> = (0..grid.rows()).collect();
    for chunk in all.chunks(65_536) {
        class_prob.extend(classifier.forward(&grid.select_rows(chunk))?.column(1));
    }
    let mut indices: Vec<usize> = (0..grid.rows())
        .filter(|&i| {
            class_prob[i] > CLASS_THRESHOLD && field.normalized(i) <= epsilon && problem.feasible(grid.row(i))
        })
        .collect();
    let mut points = grid.select_rows(&indices);
    let mut objectives = problem.objective_matrix(&points);
    if apply_domination_filter && !indices.is_empty() {
        let keep = non_dominated(&objectives)?;
        let rows: Vec<usize> = (0..keep.len()).filter(|&r| keep[r]).collect();
        indices = rows.iter().map(|&r| indices[r]).collect();
        points = points.select_rows(&rows);
        objectives = objectives.select_rows(&rows);
    }
    let status = if indices.is_empty() {
        FrontStatus::Empty
    } else {
        FrontStatus::Ok
    };
    Ok(FrontResult {
        grid_points: grid.rows(),
        epsilon,
        score_scale: field.scale,
        domination_filter: apply_domination_filter,
        scores: indices.iter().map(|&i| field.raw[i]).collect(),
        probs: indices.iter().map(|&i| class_prob[i]).collect(),
        class_prob,
        indices,
        points,
        objectives,
        status,
    })
}

/// Brute-force reference: grid indices of the non-dominated feasible points.
pub fn oracle_front(problem: &MooProblem, grid: &Matrix) -> Result<Vec<usize>> {
    let feasible: Vec<usize> = (0..grid.rows()).filter(|&i| problem.feasible(grid.row(i))).collect();
    if feasible.is_empty() {
        return Ok(Vec::new());
    }
    let values = problem.objective_matrix(&grid.select_rows(&feasible));
    let keep = non_dominated(&values)?;
    Ok(feasible.into_iter().zip(keep).filter(|(_, k)| *k).map(|(i, _)| i).collect())
}

/// F1 between two index sets.
pub fn f1_score(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let truth_set: std::collections::HashSet<usize> = truth.iter().copied().collect();
    let hits = predicted.iter().filter(|i| truth_set.contains(i)).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / predicted.len() as f64;
    let recall = hits / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// `true` when no row dominates another.
pub fn is_antichain(values: &Matrix) -> bool {
    non_dominated(values).map(|k| k.iter().all(|&b| b)).unwrap_or(false)
}

/// Closed-form Case I front `f1 = 1 + (f2 − 1)·exp(−4 + 4√(−ln(1 − f2)))`.
pub fn analytic_front_case1(f2: f64) -> Result<f64> {
    if !(0.0..=CASE1_F2_MAX).contains(&f2) {
        return Err(Error::Config(format!("f2 must lie in [0, {CASE1_F2_MAX}], got {f2}")));
    }
    Ok(1.0 + (f2 - 1.0) * (-4.0 + 4.0 * (-(1.0 - f2).ln()).sqrt()).exp())
}

/// Mean `|f1 − front(f2)|` over rows with `f2` inside the analytic range,
/// and the number of rows used.
pub fn case1_residual(objectives: &Matrix) -> (f64, usize) {
    let residuals: Vec<f64> = objectives
        .iter_rows()
        .filter_map(|r| analytic_front_case1(r[1]).ok().map(|f1| (r[0] - f1).abs()))
        .collect();
    if residuals.is_empty() {
        (f64::NAN, 0)
    } else {
        (residuals.iter().sum::<f64>() / residuals.len() as f64, residuals.len())
    }
}

pub const BUILTIN_NAMES: &[&str] = &["gobbi1", "ghane2", "ghane3"];

pub fn builtin(name: &str) -> Result<MooProblem> {
    let a = |n: &str, e: &str| FunctionSource::analytic(n, e, 2);
    let grid = vec![1000, 1000];
    match name {
        "gobbi1" => {
            let c = std::f64::consts::FRAC_1_SQRT_2;
            MooProblem::new(
                name,
                vec![
                    a("f1", "1 - exp(-((x1 - 1/sqrt(2))^2 + (x2 - 1/sqrt(2))^2))")?,
                    a("f2", "1 - exp(-((x1 + 1/sqrt(2))^2 + (x2 + 1/sqrt(2))^2))")?,
                ],
                vec![],
                Domain::cube(-c, c, 2)?,
                grid,
            )
        }
        "ghane2" => MooProblem::new(
            name,
            vec![a("f1", "x1")?, a("f2", "1 + x2^2 - x1 - 0.1*sin(3*pi*x1)")?],
            vec![],
            Domain::new(vec![(0.0, 1.0), (-2.0, 2.0)])?,
            grid,
        ),
        "ghane3" => MooProblem::new(
            name,
            vec![a("f1", "x1")?, a("f2", "x2")?],
            vec![
                a("g1", "(x1 - 0.5)^2 + (x2 - 0.5)^2 - 0.5")?,
                // the source states g2 >= 0; negated into the <= 0 convention
                a("g2", "-(x1^2 + x2^2 - 1 - 0.1*cos(16*atan2(x1, x2)))")?,
            ],
            Domain::cube(0.0, std::f64::consts::PI, 2)?,
            grid,
        ),
        other => Err(Error::Config(format!(
            "unknown pareto problem '{other}' (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::determinant;
    use std::f64::consts::{E, FRAC_1_SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gobbi_l_at_origin() {
        let p = builtin("gobbi1").unwrap();
        let l = assemble_l(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(l.shape(), (2, 2));
        // ∇f1 = 2(x − a)e^{−|x−a|²} with |a|² = 1, so each entry is ∓√2/e
        let v = 2f64.sqrt() / E;
        for r in 0..2 {
            assert!(close(l[(r, 0)], -v, 1e-12));
            assert!(close(l[(r, 1)], v, 1e-12));
        }
        assert!(fj_score(&p, &[0.0, 0.0]).unwrap().abs() < 1e-20);
    }

    #[test]
    fn gobbi_scores_vanish_on_the_diagonal_only() {
        let p = builtin("gobbi1").unwrap();
        for i in 0..=20 {
            let t = -FRAC_1_SQRT_2 + i as f64 * 2.0 * FRAC_1_SQRT_2 / 20.0;
            let s = fj_score(&p, &[t, t]).unwrap();
            assert!(s.abs() < 1e-12, "{t} {s}");
        }
        assert!(fj_score(&p, &[0.5, -0.5]).unwrap() > 1e-3);
    }

    #[test]
    fn ghane2_score_is_four_x2_squared() {
        let p = builtin("ghane2").unwrap();
        for &(x1, x2) in &[(0.1, 0.0), (0.3, 0.5), (0.9, -1.7)] {
            let s = fj_score(&p, &[x1, x2]).unwrap();
            assert!(close(s, 4.0 * x2 * x2, 1e-9 * (1.0 + s)), "{s}");
        }
    }

    #[test]
    fn constrained_blocks() {
        let p = builtin("ghane3").unwrap();
        let x = [0.8, 0.9];
        let l = assemble_l(&p, &x).unwrap();
        assert_eq!(l.shape(), (4, 4));
        assert_eq!(l[(2, 0)], 0.0);
        assert_eq!(l[(3, 1)], 0.0);
        let g1 = p.constraints[0].evaluate(&x);
        let g2 = p.constraints[1].evaluate(&x);
        assert!(close(l[(2, 2)], g1, 1e-15) && close(l[(3, 3)], g2, 1e-15));
        assert_eq!(l[(2, 3)], 0.0);
        // det(L) = det(∇F)·det(G) and ∇F is the identity here
        let s = fj_score(&p, &x).unwrap();
        assert!(close(s, (g1 * g2).powi(2), 1e-10 * (1.0 + s)));
    }

    #[test]
    fn zero_constraint_gives_zero_diagonal() {
        let p = MooProblem::new(
            "t",
            vec![FunctionSource::analytic("f1", "x1", 2).unwrap(), FunctionSource::analytic("f2", "x2", 2).unwrap()],
            vec![FunctionSource::analytic("g", "x1 + x2 - 1", 2).unwrap()],
            Domain::cube(0.0, 1.0, 2).unwrap(),
            vec![10, 10],
        )
        .unwrap();
        let l = assemble_l(&p, &[0.25, 0.75]).unwrap();
        assert_eq!(l[(2, 2)], 0.0);
        assert_eq!(fj_score(&p, &[0.25, 0.75]).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_gradients_score_one() {
        let p = MooProblem::new(
            "rot",
            vec![
                FunctionSource::analytic("f1", "0.6*x1 + 0.8*x2", 2).unwrap(),
                FunctionSource::analytic("f2", "-0.8*x1 + 0.6*x2", 2).unwrap(),
            ],
            vec![],
            Domain::cube(-1.0, 1.0, 2).unwrap(),
            vec![10, 10],
        )
        .unwrap();
        assert!(close(fj_score(&p, &[0.3, -0.2]).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn objective_minimum_scores_zero() {
        let p = MooProblem::new(
            "bowl",
            vec![
                FunctionSource::analytic("f1", "x1^2 + x2^2", 2).unwrap(),
                FunctionSource::analytic("f2", "(x1^2 + x2^2)^2", 2).unwrap(),
            ],
            vec![],
            Domain::cube(-1.0, 1.0, 2).unwrap(),
            vec![10, 10],
        )
        .unwrap();
        assert_eq!(fj_score(&p, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn block_determinant_identity() {
        let mut rng = Rng::new(5);
        for _ in 0..200 {
            let (n, m) = (2 + rng.index(2), 1 + rng.index(3));
            let k = n;
            let grad_f = Matrix::from_fn(n, k, |_, _| rng.uniform(-1.0, 1.0));
            let grad_g = Matrix::from_fn(n, m, |_, _| rng.uniform(-1.0, 1.0));
            let g: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let l = Matrix::from_fn(n + m, k + m, |r, c| match (r < n, c < k) {
                (true, true) => grad_f[(r, c)],
                (true, false) => grad_g[(r, c - k)],
                (false, true) => 0.0,
                (false, false) => {
                    if r - n == c - k {
                        g[r - n]
                    } else {
                        0.0
                    }
                }
            });
            let lhs = determinant(&l).unwrap();
            let rhs = determinant(&grad_f).unwrap() * g.iter().product::<f64>();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn score_is_invariant_to_objective_order() {
        let p = builtin("ghane2").unwrap();
        let mut q = p.clone();
        q.objectives.reverse();
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let x = [rng.uniform(0.0, 1.0), rng.uniform(-2.0, 2.0)];
            let (a, b) = (fj_score(&p, &x).unwrap(), fj_score(&q, &x).unwrap());
            assert!(close(a.abs(), b.abs(), 1e-12 * (1.0 + a.abs())));
        }
    }

    #[test]
    fn analytic_front_examples() {
        let f2 = 1.0 - (-1.0f64).exp();
        assert!(close(analytic_front_case1(f2).unwrap(), f2, 1e-12));
        assert!(close(analytic_front_case1(0.0).unwrap(), 1.0 - (-4.0f64).exp(), 1e-12));
        assert!(analytic_front_case1(CASE1_F2_MAX).unwrap().abs() < 2e-3);
        assert!(analytic_front_case1(0.99).is_err());
        assert!(analytic_front_case1(-0.1).is_err());
        // the origin maps onto the front at f1 = f2 = 1 - 1/e
        let p = builtin("gobbi1").unwrap();
        let f = p.objective_values(&[0.0, 0.0]);
        assert!(close(f[0], f2, 1e-12) && close(f[1], f2, 1e-12));
    }

    #[test]
    fn diagonal_reproduces_the_analytic_front() {
        let p = builtin("gobbi1").unwrap();
        for i in 0..=50 {
            let t = -FRAC_1_SQRT_2 + i as f64 * 2.0 * FRAC_1_SQRT_2 / 50.0;
            let f = p.objective_values(&[t, t]);
            assert!(close(analytic_front_case1(f[1]).unwrap(), f[0], 1e-9), "t={t}");
        }
    }

    #[test]
    fn oracle_fronts_satisfy_the_score_condition() {
        for name in BUILTIN_NAMES {
            let mut p = builtin(name).unwrap();
            p.resolution = vec![200, 200];
            let grid = p.grid().unwrap();
            let field = score_field(&p, &grid).unwrap();
            let front = oracle_front(&p, &grid).unwrap();
            assert!(!front.is_empty());
            // grid points sit up to half a cell off the continuous front
            let eps = if *name == "gobbi1" { 2e-3 } else { DEFAULT_EPSILON };
            let worst = front.iter().map(|&i| field.normalized(i)).fold(0.0, f64::max);
            assert!(worst <= eps, "{name}: {worst}");
        }
    }

    #[test]
    fn gobbi_oracle_front_follows_the_analytic_curve() {
        let mut p = builtin("gobbi1").unwrap();
        p.resolution = vec![300, 300];
        let grid = p.grid().unwrap();
        let front = oracle_front(&p, &grid).unwrap();
        let values = p.objective_matrix(&grid.select_rows(&front));
        let (mean, used) = case1_residual(&values);
        assert!(used > 100);
        assert!(mean < 5e-3, "{mean}");
    }

    #[test]
    fn all_negative_grid_is_rejected() {
        let p = builtin("ghane2").unwrap();
        let grid = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.5, -1.0]]).unwrap();
        let field = score_field(&p, &grid).unwrap();
        let cfg = NetConfig::new(2, 4, 2, 2, 0);
        let err = train_pareto_classifier(&p, &grid, &field, 1e-3, &cfg, &TrainConfig::with_seed(0));
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn huge_epsilon_learns_the_constant_map() {
        let mut p = builtin("gobbi1").unwrap();
        p.resolution = vec![20, 20];
        let grid = p.grid().unwrap();
        let field = score_field(&p, &grid).unwrap();
        let train = TrainConfig {
            steps_per_epoch: 300,
            epochs: 1,
            batch_size: 32,
            learning_rate: 1e-2,
            ..TrainConfig::with_seed(1)
        };
        let clf = train_pareto_classifier(&p, &grid, &field, f64::INFINITY, &NetConfig::new(2, 4, 2, 2, 1), &train).unwrap();
        assert_eq!(clf.negatives, 0);
        let front = extract_front(&clf.net, &p, &grid, &field, f64::INFINITY, false).unwrap();
        assert_eq!(front.len(), grid.rows());
    }

    #[test]
    fn ghane2_classifier_finds_the_x2_zero_band() {
        let mut p = builtin("ghane2").unwrap();
        p.resolution = vec![100, 201];
        let grid = p.grid().unwrap();
        let field = score_field(&p, &grid).unwrap();
        let train = TrainConfig {
            steps_per_epoch: 1000,
            epochs: 3,
            batch_size: 64,
            learning_rate: 3e-3,
            ..TrainConfig::with_seed(4)
        };
        let clf = train_pareto_classifier(&p, &grid, &field, 1e-2, &NetConfig::new(2, 8, 4, 2, 4), &train).unwrap();
        let front = extract_front(&clf.net, &p, &grid, &field, 1e-2, true).unwrap();
        assert!(!front.is_empty());
        assert!(front.points.column(1).iter().all(|x2| x2.abs() < 0.2));
        assert!(is_antichain(&front.objectives));
        let truth = oracle_front(&p, &grid).unwrap();
        assert!(f1_score(&front.indices, &truth) > 0.8);
    }

    #[test]
    fn classifier_is_deterministic() {
        let mut p = builtin("ghane2").unwrap();
        p.resolution = vec![30, 41];
        let grid = p.grid().unwrap();
        let field = score_field(&p, &grid).unwrap();
        let train = TrainConfig {
            steps_per_epoch: 100,
            epochs: 1,
            batch_size: 16,
            ..TrainConfig::with_seed(9)
        };
        let cfg = NetConfig::new(2, 4, 2, 2, 9);
        let a = train_pareto_classifier(&p, &grid, &field, 1e-2, &cfg, &train).unwrap();
        let b = train_pareto_classifier(&p, &grid, &field, 1e-2, &cfg, &train).unwrap();
        assert_eq!(a.net.params(), b.net.params());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(f1_score(&[], &[]), 1.0);
        assert_eq!(f1_score(&[4], &[1]), 0.0);
        assert!(close(f1_score(&[1, 2], &[1, 3]), 0.5, 1e-12));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin("zdt1"), Err(Error::Config(_))));
    }
}
