//! Network-free ground truth: grid root finding, implicit surface
//! intersection and non-dominated sorting.
//!
//! Every residual reported here is recomputed from the analytic sources.

use std::cmp::Ordering;
use std::time::Instant;

use crate::approximator::{sample_domain, Domain, Sampling};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::source::FunctionSource;

/// Bisection stops once the bracket is narrower than this.
pub const BISECTION_TOL: f64 = 1e-10;
/// Gradient-descent steps used to refine multi-dimensional roots.
pub const DESCENT_STEPS: usize = 20;

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub method: &'static str,
    pub resolution: Vec<usize>,
    pub points: Matrix,
    pub residuals: Vec<f64>,
    /// Seconds; informational only.
    pub wall_time: f64,
}

impl OracleReport {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

fn bisect(h: &FunctionSource, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = h.evaluate(&[mid]);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zeros of `h` over `domain`.
///
/// In 1-D every sign change between neighbouring grid points is bisected to
/// [`BISECTION_TOL`]. In higher dimensions, grid points whose `|h|` is below
/// the cell-local Lipschitz bound `‖∇h‖·(half cell diagonal)` are refined by
/// [`DESCENT_STEPS`] backtracking steps on `h²` and kept when `|h| ≤ tol`.
pub fn grid_roots(h: &FunctionSource, domain: &Domain, resolution: &[usize], tol: f64) -> Result<OracleReport> {
    let start = Instant::now();
    if h.arity() != domain.dim() {
        return Err(Error::Config(format!(
            "h takes {} inputs, domain is {}-D",
            h.arity(),
            domain.dim()
        )));
    }
    let grid = sample_domain(domain, &Sampling::Grid(resolution.to_vec()))?;
    let values = h.evaluate_batch(&grid)?;
    let mut found: Vec<Vec<f64>> = Vec::new();

    if domain.dim() == 1 {
        for i in 0..values.len() {
            let (x0, f0) = (grid[(i, 0)], values[i]);
            if f0 == 0.0 {
                found.push(vec![x0]);
                continue;
            }
            if i + 1 < values.len() {
                let f1 = values[i + 1];
                if f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
                    found.push(vec![bisect(h, x0, grid[(i + 1, 0)], f0)]);
                }
            }
        }
    } else {
        let spacing = domain.spacing(resolution);
        let half_diag = 0.5 * spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
        for (i, x) in grid.iter_rows().enumerate() {
            let grad = h.gradient_or_fd(x);
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if values[i].abs() > gnorm * half_diag {
                continue;
            }
            let refined = descend(h, domain, x.to_vec());
            if h.evaluate(&refined).abs() <= tol {
                found.push(refined);
            }
        }
    }

    finish("grid_roots", resolution, found, domain.dim(), start, |p| h.evaluate(p).abs())
}

/// Backtracking gradient descent on `h²`, clamped to the box.
fn descend(h: &FunctionSource, domain: &Domain, mut x: Vec<f64>) -> Vec<f64> {
    for _ in 0..DESCENT_STEPS {
        let v = h.evaluate(&x);
        if v == 0.0 {
            break;
        }
        let g = h.gradient_or_fd(&x);
        let gg: f64 = g.iter().map(|a| a * a).sum();
        if gg == 0.0 {
            break;
        }
        // Newton step length along the gradient, halved until h² decreases
        let mut t = v / gg;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .zip(domain.bounds())
                .map(|((xi, gi), &(lo, hi))| (xi - t * gi).clamp(lo, hi))
                .collect();
            if h.evaluate(&trial).powi(2) < v * v {
                x = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

fn finish(
    method: &'static str,
    resolution: &[usize],
    found: Vec<Vec<f64>>,
    dim: usize,
    start: Instant,
    residual: impl Fn(&[f64]) -> f64,
) -> Result<OracleReport> {
    let residuals = found.iter().map(|p| residual(p)).collect();
    let points = Matrix::from_vec(found.len(), dim, found.into_iter().flatten().collect())?;
    Ok(OracleReport {
        method,
        resolution: resolution.to_vec(),
        points,
        residuals,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Points on both implicit surfaces `f = 0` and `g = 0`.
///
/// Grid points inside both Lipschitz bands take one damped Gauss-Newton step
/// on `(f, g)` and are kept when both `|f|` and `|g|` are within `tol`.
pub fn surface_intersection_oracle(
    f: &FunctionSource,
    g: &FunctionSource,
    domain: &Domain,
    resolution: &[usize],
    tol: f64,
) -> Result<OracleReport> {
    let start = Instant::now();
    if f.arity() != domain.dim() || g.arity() != domain.dim() {
        return Err(Error::Config("surface arity does not match the domain".into()));
    }
    let grid = sample_domain(domain, &Sampling::Grid(resolution.to_vec()))?;
    let spacing = domain.spacing(resolution);
    let diag = spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut found = Vec::new();
    for x in grid.iter_rows() {
        let (fv, gv) = (f.evaluate(x), g.evaluate(x));
        let (df, dg) = (f.gradient_or_fd(x), g.gradient_or_fd(x));
        if fv.abs() > norm(&df) * diag || gv.abs() > norm(&dg) * diag {
            continue;
        }
        let refined = gauss_newton_step(x, [fv, gv], [&df, &dg]);
        if domain.contains(&refined) && f.evaluate(&refined).abs() <= tol && g.evaluate(&refined).abs() <= tol {
            found.push(refined);
        }
    }
    finish("surface_intersection", resolution, found, domain.dim(), start, |p| {
        f.evaluate(p).abs().max(g.evaluate(p).abs())
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x - Jᵀ (J Jᵀ + μI)⁻¹ r` for two residuals; μ keeps rank-deficient
/// (tangent or identical) surfaces solvable.
fn gauss_newton_step(x: &[f64], r: [f64; 2], j: [&[f64]; 2]) -> Vec<f64> {
    let (a, b, d) = (dot(j[0], j[0]), dot(j[0], j[1]), dot(j[1], j[1]));
    let mu = 1e-10 * (a + d).max(f64::MIN_POSITIVE);
    let (a, d) = (a + mu, d + mu);
    let det = a * d - b * b;
    if det == 0.0 {
        return x.to_vec();
    }
    let y0 = (d * r[0] - b * r[1]) / det;
    let y1 = (a * r[1] - b * r[0]) / det;
    x.iter()
        .enumerate()
        .map(|(k, &xk)| xk - (j[0][k] * y0 + j[1][k] * y1))
        .collect()
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// O(N²) reference non-dominated mask.
pub fn non_dominated_naive(values: &Matrix) -> Vec<bool> {
    let n = values.rows();
    (0..n)
        .map(|i| !(0..n).any(|j| j != i && dominates(values.row(j), values.row(i))))
        .collect()
}

/// Sort-and-sweep non-dominated mask for two objectives.
pub fn non_dominated_2d(values: &Matrix) -> Vec<bool> {
    debug_assert_eq!(values.cols(), 2);
    let n = values.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match values[(a, 0)].total_cmp(&values[(b, 0)]) {
        Ordering::Equal => values[(a, 1)].total_cmp(&values[(b, 1)]),
        o => o,
    });
    let mut keep = vec![false; n];
    let mut best_prev = f64::INFINITY;
    let mut start = 0;
    while start < n {
        let f1 = values[(order[start], 0)];
        let mut end = start;
        while end < n && values[(order[end], 0)] == f1 {
            end += 1;
        }
        // group sorted by f2, so its minimum comes first
        let group_min = values[(order[start], 1)];
        if group_min < best_prev {
            for &i in &order[start..end] {
                if values[(i, 1)] == group_min {
                    keep[i] = true;
                }
            }
        }
        best_prev = best_prev.min(group_min);
        start = end;
    }
    keep
}

/// `true` for every row not dominated by another row.
pub fn non_dominated(values: &Matrix) -> Result<Vec<bool>> {
    match values.cols() {
        0 | 1 => Err(Error::Config(format!(
            "non-domination needs at least two objectives, got {}",
            values.cols()
        ))),
        2 => Ok(non_dominated_2d(values)),
        _ => Ok(non_dominated_naive(values)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn src(e: &str, n: usize) -> FunctionSource {
        FunctionSource::analytic("h", e, n).unwrap()
    }

    #[test]
    fn parabola_line_roots() {
        let r = grid_roots(&src("x^2 - x - 0.5", 1), &Domain::new(vec![(-2.0, 2.0)]).unwrap(), &[401], 1e-8).unwrap();
        assert_eq!(r.len(), 2);
        let s3 = 3f64.sqrt();
        assert!((r.points[(0, 0)] - (1.0 - s3) / 2.0).abs() < 1e-9);
        assert!((r.points[(1, 0)] - (1.0 + s3) / 2.0).abs() < 1e-9);
        assert!(r.residuals.iter().all(|&v| v < 1e-8));
    }

    #[test]
    fn parabola_cosh_symmetric_roots() {
        let r = grid_roots(&src("x^2 - cosh(x)", 1), &Domain::new(vec![(-2.0, 2.0)]).unwrap(), &[401], 1e-8).unwrap();
        assert_eq!(r.len(), 2);
        let (a, b) = (r.points[(0, 0)], r.points[(1, 0)]);
        assert!((a + b).abs() < 1e-8);
        // brute-force cross-check by dense bisection-free scan
        let scan = (0..400_001)
            .map(|i| 2.0 * i as f64 / 400_000.0)
            .min_by(|p, q| (p * p - p.cosh()).abs().total_cmp(&(q * q - q.cosh()).abs()))
            .unwrap();
        assert!((b - scan).abs() < 1e-5, "{b} vs {scan}");
        assert!((b - 1.62).abs() < 0.01);
        // the wider box also crosses the outer pair near ±2.594
        let wide = grid_roots(&src("x^2 - cosh(x)", 1), &Domain::new(vec![(-3.0, 3.0)]).unwrap(), &[601], 1e-8).unwrap();
        assert_eq!(wide.len(), 4);
    }

    #[test]
    fn no_sign_change_no_roots() {
        let r = grid_roots(&src("x^2 + 1", 1), &Domain::new(vec![(-2.0, 2.0)]).unwrap(), &[401], 1e-8).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn circle_roots_in_2d() {
        let r = grid_roots(&src("x1^2 + x2^2 - 1", 2), &Domain::cube(-1.5, 1.5, 2).unwrap(), &[61, 61], 1e-8).unwrap();
        assert!(r.len() > 50);
        assert!(r.residuals.iter().all(|&v| v <= 1e-8));
    }

    #[test]
    fn sphere_cylinder_curve() {
        let f = src("x^2 + y^2 + z^2 - 4", 3);
        let g = src("(x - 1)^2 + y^2 - 1", 3);
        let d = Domain::new(vec![(-0.5, 2.5), (-1.5, 1.5), (-2.5, 2.5)]).unwrap();
        let r = surface_intersection_oracle(&f, &g, &d, &[61, 61, 61], 5e-4).unwrap();
        assert!(r.len() > 100, "{}", r.len());
        for p in r.points.iter_rows() {
            // eliminating y² between the two surfaces: z² = 4 - 2x
            assert!((p[2] * p[2] - (4.0 - 2.0 * p[0])).abs() <= 1e-3);
        }
    }

    #[test]
    fn two_spheres_touch_once() {
        let f = src("x^2 + y^2 + z^2 - 4", 3);
        let g = src("(x - 1)^2 + y^2 + z^2 - 1", 3);
        let d = Domain::cube(-2.5, 2.5, 3).unwrap();
        let r = surface_intersection_oracle(&f, &g, &d, &[101, 101, 101], 1e-3).unwrap();
        assert!(!r.is_empty());
        let step = 0.05;
        for p in r.points.iter_rows() {
            let dist = ((p[0] - 2.0).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!(dist <= step, "{p:?}");
        }
    }

    #[test]
    fn identical_surfaces_give_shell() {
        let f = src("x^2 + y^2 + z^2 - 1", 3);
        let d = Domain::cube(-1.2, 1.2, 3).unwrap();
        let r = surface_intersection_oracle(&f, &f, &d, &[25, 25, 25], 1e-3).unwrap();
        assert!(r.len() > 100);
        // samples in every octant
        let mut octants = [false; 8];
        for p in r.points.iter_rows() {
            let k = (p[0] > 0.0) as usize | ((p[1] > 0.0) as usize) << 1 | ((p[2] > 0.0) as usize) << 2;
            octants[k] = true;
        }
        assert!(octants.iter().all(|&o| o));
    }

    #[test]
    fn dominance_examples() {
        let v = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(non_dominated(&v).unwrap(), vec![true, true, false]);
        let same = Matrix::filled(4, 2, 0.3);
        assert_eq!(non_dominated(&same).unwrap(), vec![true; 4]);
        assert!(non_dominated(&Matrix::zeros(3, 1)).is_err());
        let three = Matrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]]).unwrap();
        assert_eq!(non_dominated(&three).unwrap(), vec![true, false]);
    }

    #[test]
    fn fast_path_agrees_with_reference() {
        let mut rng = Rng::new(2024);
        for _ in 0..1000 {
            let n = 1 + rng.index(40);
            // coarse values force ties
            let v = Matrix::from_fn(n, 2, |_, _| (rng.uniform(0.0, 5.0)).floor());
            assert_eq!(non_dominated_2d(&v), non_dominated_naive(&v), "{v:?}");
        }
    }
}
