//! Browser bindings for the three interactive demos: roots of `f = g` on an
//! interval, a Pareto front on a built-in problem, and synthetic unmixing.
//!
//! Each export returns a JSON string. The plain Rust functions behind the
//! exports hold the logic and are tested natively.

use neuropt::approximator::{sample_domain, Domain, Sampling};
use neuropt::intersect::{cluster_points, extract_indicator, train_manifold, ProblemSpec};
use neuropt::net::{Activation, NetConfig};
use neuropt::pareto::{builtin, extract_front, oracle_front, score_field, train_pareto_classifier};
use neuropt::source::{build_h, FunctionSource, HForm};
use neuropt::train::TrainConfig;
use neuropt::unmix::{synthetic_dataset, unmix_train_with, UnmixOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Grid resolution of the 1-D roots demo.
pub const ROOTS_GRID: usize = 401;

#[derive(Debug, Serialize)]
pub struct RootsDemo {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub extracted: Vec<f64>,
    pub roots: Vec<f64>,
    pub final_loss: f64,
}

/// Trains `h̃ ≈ f - g` on `[lo, hi]` and clusters the grid points with
/// `|h̃| ≤ tolerance` into root estimates.
pub fn roots(f: &str, g: &str, lo: f64, hi: f64, tolerance: f64, epochs: usize, seed: u64) -> Result<RootsDemo, String> {
    let run = || -> neuropt::error::Result<RootsDemo> {
        let f = FunctionSource::analytic("f", f, 1)?;
        let g = FunctionSource::analytic("g", g, 1)?;
        let h = build_h(&f, &g, HForm::Difference)?;
        let spec = ProblemSpec::new(vec![], vec![], vec![], Domain::new(vec![(lo, hi)])?)?;
        let tc = TrainConfig {
            epochs,
            loss_tolerance: 1e-6,
            ..TrainConfig::with_seed(seed)
        };
        let m = train_manifold(&h, &spec, &NetConfig::new(1, 4, 4, 1, seed), &tc)?;
        let r = extract_indicator(&m.net, &h, &spec, &[ROOTS_GRID], tolerance)?;
        let step = (hi - lo) / (ROOTS_GRID - 1) as f64;
        let roots = cluster_points(&r.points, 2.0 * step)?.into_iter().map(|c| c[0]).collect();
        Ok(RootsDemo {
            x: r.grid.column(0),
            h: h.evaluate_batch(&r.grid)?,
            h_tilde: r.h_tilde_grid,
            extracted: r.points.column(0),
            roots,
            final_loss: m.record.final_loss,
        })
    };
    run().map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct ParetoDemo {
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    /// Normalized `|s|` on the `n × n` grid, row-major in grid order.
    pub score: Vec<f64>,
    /// `(f1, f2)` of the predicted front.
    pub front: Vec<(f64, f64)>,
    /// `(f1, f2)` of the brute-force non-dominated set.
    pub oracle: Vec<(f64, f64)>,
}

/// Scores an `n × n` grid of a built-in problem, trains the classifier and
/// returns the predicted front next to the brute-force one.
pub fn pareto(name: &str, n: usize, epsilon: f64, epochs: usize, seed: u64) -> Result<ParetoDemo, String> {
    let run = || -> neuropt::error::Result<ParetoDemo> {
        let problem = builtin(name)?;
        let grid = sample_domain(&problem.domain, &Sampling::Grid(vec![n, n]))?;
        let field = score_field(&problem, &grid)?;
        let net_cfg = NetConfig::new(2, 8, 4, 2, seed).with_output(Activation::Softmax);
        let tc = TrainConfig {
            epochs,
            ..TrainConfig::with_seed(seed)
        };
        let classifier = train_pareto_classifier(&problem, &grid, &field, epsilon, &net_cfg, &tc)?;
        let front = extract_front(&classifier.net, &problem, &grid, &field, epsilon, true)?;
        let pairs = |m: &neuropt::matrix::Matrix| m.iter_rows().map(|r| (r[0], r[1])).collect::<Vec<_>>();
        let oracle = problem.objective_matrix(&grid.select_rows(&oracle_front(&problem, &grid)?));
        Ok(ParetoDemo {
            n,
            bounds: problem.domain.bounds().to_vec(),
            score: (0..field.len()).map(|i| field.normalized(i)).collect(),
            front: pairs(&front.objectives),
            oracle: pairs(&oracle),
        })
    };
    run().map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct UnmixDemo {
    pub bands: usize,
    /// True end-members, one list of `bands` values per end-member.
    pub truth: Vec<Vec<f64>>,
    /// Estimated end-members aligned to `truth`.
    pub estimate: Vec<Vec<f64>>,
    pub mse: f64,
    pub sad: f64,
    pub reconstruction: f64,
}

/// Unmixes a noiseless synthetic scene and aligns the estimate to the truth.
pub fn unmix(k: usize, bands: usize, pixels: usize, lambda: f64, epochs: usize, seed: u64) -> Result<UnmixDemo, String> {
    let run = || -> neuropt::error::Result<UnmixDemo> {
        let data = synthetic_dataset(k, bands, pixels, seed)?;
        let tc = TrainConfig {
            epochs,
            loss_tolerance: 1e-12,
            ..TrainConfig::with_seed(seed)
        };
        let r = unmix_train_with(&data, &UnmixOptions::new(k).with_lambda(lambda), &tc)?;
        let truth = data.a_true.as_ref().expect("synthetic data has ground truth");
        let m = r.metrics.as_ref().expect("ground truth yields metrics");
        Ok(UnmixDemo {
            bands,
            truth: (0..k).map(|j| truth.column(j)).collect(),
            estimate: m.permutation.iter().map(|&j| r.a_hat.column(j)).collect(),
            mse: m.mse,
            sad: m.sad,
            reconstruction: r.final_reconstruction,
        })
    };
    run().map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = rootsDemo)]
pub fn roots_demo(f: &str, g: &str, lo: f64, hi: f64, tolerance: f64, epochs: usize, seed: u32) -> Result<String, JsValue> {
    to_json(roots(f, g, lo, hi, tolerance, epochs, seed.into()))
}

#[wasm_bindgen(js_name = paretoDemo)]
pub fn pareto_demo(name: &str, n: usize, epsilon: f64, epochs: usize, seed: u32) -> Result<String, JsValue> {
    to_json(pareto(name, n, epsilon, epochs, seed.into()))
}

#[wasm_bindgen(js_name = unmixDemo)]
pub fn unmix_demo(k: usize, bands: usize, pixels: usize, lambda: f64, epochs: usize, seed: u32) -> Result<String, JsValue> {
    to_json(unmix(k, bands, pixels, lambda, epochs, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_line_roots() {
        let d = roots("x^2", "x + 0.5", -2.0, 2.0, 1e-2, 10, 1).unwrap();
        assert_eq!(d.x.len(), ROOTS_GRID);
        assert_eq!(d.roots.len(), 2, "{:?}", d.roots);
        let exact = [(1.0 - 3f64.sqrt()) / 2.0, (1.0 + 3f64.sqrt()) / 2.0];
        for (r, e) in d.roots.iter().zip(exact) {
            assert!((r - e).abs() <= 2e-2, "{r} vs {e}");
        }
    }

    #[test]
    fn bad_expression_is_reported() {
        let e = roots("x^", "x", -1.0, 1.0, 1e-2, 1, 0).unwrap_err();
        assert!(!e.is_empty());
    }

    #[test]
    fn ghane3_front_is_close_to_the_oracle() {
        let d = pareto("ghane3", 120, 1e-3, 2, 0).unwrap();
        assert_eq!(d.score.len(), 120 * 120);
        assert!(!d.front.is_empty() && !d.oracle.is_empty());
        // every predicted front point lies near some oracle point
        let step = std::f64::consts::PI / 119.0;
        for &(a, b) in &d.front {
            let near = d.oracle.iter().any(|&(p, q)| (a - p).abs() <= 3.0 * step && (b - q).abs() <= 3.0 * step);
            assert!(near, "({a}, {b}) is far from the oracle front");
        }
    }

    #[test]
    fn unknown_pareto_problem_is_an_error() {
        assert!(pareto("nope", 10, 1e-3, 1, 0).is_err());
    }

    #[test]
    fn synthetic_unmix_recovers_endmembers() {
        let d = unmix(3, 20, 400, 1e-3, 3, 2).unwrap();
        assert_eq!(d.truth.len(), 3);
        assert!(d.estimate.iter().all(|c| c.len() == 20));
        assert!(d.sad <= 0.1, "{}", d.sad);
    }

    #[test]
    fn json_export_is_well_formed() {
        let s = to_json(unmix(2, 6, 50, 0.0, 1, 0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["bands"], 6);
    }
}
