//! Training-run properties of the fit, intersect and unmix solvers.

use neuropt::approximator::{fit_function, sample_domain, split_every_nth, sup_error, Domain, Sampling};
use neuropt::intersect::{builtin, cluster_points, extract_indicator, train_manifold};
use neuropt::matrix::Matrix;
use neuropt::net::NetConfig;
use neuropt::oracle::grid_roots;
use neuropt::source::FunctionSource;
use neuropt::train::TrainConfig;
use neuropt::unmix::{unmix_train, unmix_train_with, HsiDataset, UnmixOptions};

fn fitted_mse(f: &FunctionSource) -> f64 {
    match f {
        FunctionSource::Fitted(fit) => fit.train_mse,
        _ => panic!("expected a fitted source"),
    }
}

fn record(f: &FunctionSource) -> &neuropt::train::TrainRecord {
    match f {
        FunctionSource::Fitted(fit) => &fit.record,
        _ => panic!("expected a fitted source"),
    }
}

#[test]
fn fit_parabola_to_tolerance() {
    let d = Domain::new(vec![(-2.0, 2.0)]).unwrap();
    let x = sample_domain(&d, &Sampling::UniformRandom { count: 400, seed: 1 }).unwrap();
    let y = x.map(|v| v * v);
    let fit = fit_function(&x, &y, &NetConfig::new(1, 4, 4, 1, 1), &TrainConfig::with_seed(1)).unwrap();
    assert!(fitted_mse(&fit) <= 1e-3, "{}", fitted_mse(&fit));
}

#[test]
fn fit_is_deterministic() {
    let x = Matrix::from_fn(50, 1, |i, _| i as f64 / 25.0 - 1.0);
    let y = x.map(f64::sin);
    let tc = TrainConfig {
        epochs: 1,
        steps_per_epoch: 300,
        ..TrainConfig::with_seed(4)
    };
    let a = fit_function(&x, &y, &NetConfig::new(1, 4, 2, 1, 4), &tc).unwrap();
    let b = fit_function(&x, &y, &NetConfig::new(1, 4, 2, 1, 4), &tc).unwrap();
    assert_eq!(record(&a).loss_trace, record(&b).loss_trace);
}

#[test]
fn constant_data_is_reproduced() {
    let x = Matrix::from_fn(200, 1, |i, _| -2.0 + 4.0 * i as f64 / 199.0);
    let y = Matrix::filled(200, 1, 0.7);
    let tc = TrainConfig {
        loss_tolerance: 1e-8,
        ..TrainConfig::with_seed(2)
    };
    let fit = fit_function(&x, &y, &NetConfig::new(1, 4, 4, 1, 2), &tc).unwrap();
    let worst = x.iter_rows().map(|r| (fit.evaluate(r) - 0.7).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

/// Early stop fires exactly when a window's running loss reaches ε.
#[test]
fn early_stop_iff_running_loss_reaches_tolerance() {
    let x = Matrix::from_fn(100, 1, |i, _| i as f64 / 50.0 - 1.0);
    let y = x.map(|v| 0.5 * v + 0.25);
    for (tol, epochs) in [(1e-3, 5), (1e-300, 1)] {
        let tc = TrainConfig {
            loss_tolerance: tol,
            epochs,
            ..TrainConfig::with_seed(3)
        };
        let fit = fit_function(&x, &y, &NetConfig::new(1, 4, 2, 1, 3), &tc).unwrap();
        let r = record(&fit);
        let reached = r.loss_trace.iter().position(|&(_, l)| l <= tol);
        match reached {
            Some(i) => {
                assert!(r.stopped_early);
                assert_eq!(i + 1, r.loss_trace.len(), "kept training after reaching ε");
                assert!(r.steps < tc.total_steps());
            }
            None => {
                assert!(!r.stopped_early);
                assert_eq!(r.steps, tc.total_steps());
            }
        }
        assert_eq!(r.stopped_early, tol == 1e-3);
    }
}

#[test]
fn held_out_sup_error_is_reported() {
    let d = Domain::new(vec![(-2.0, 2.0)]).unwrap();
    let truth = FunctionSource::analytic("f", "x^2", 1).unwrap();
    let x = sample_domain(&d, &Sampling::Grid(vec![401])).unwrap();
    let y = Matrix::column_vector(&truth.evaluate_batch(&x).unwrap());
    let ((xt, yt), (xe, _)) = split_every_nth(&x, &y, 10).unwrap();
    let fit = fit_function(&xt, &yt, &NetConfig::new(1, 4, 4, 1, 0), &TrainConfig::with_seed(0)).unwrap();
    let sup = sup_error(&fit, &truth, &xe).unwrap();
    assert!(sup.is_finite() && sup < 0.2, "{sup}");
}

fn case1_run(seed: u64) -> (neuropt::intersect::ManifoldResult, FunctionSource, f64) {
    let p = builtin("parabola-line").unwrap();
    let h = p.h().unwrap();
    let tc = TrainConfig {
        loss_tolerance: 1e-6,
        ..TrainConfig::with_seed(seed)
    };
    let m = train_manifold(&h, &p.spec, &NetConfig::new(1, 4, 4, 1, seed), &tc).unwrap();
    let loss = m.record.final_loss;
    (extract_indicator(&m.net, &h, &p.spec, &[401], 1e-2).unwrap(), h, loss)
}

#[test]
fn case1_loss_soundness_and_completeness() {
    let (r, h, loss) = case1_run(5);
    assert!(loss <= 1e-3, "{loss}");
    // soundness: |h| ≤ ε + max grid error at every extracted point
    for &res in &r.residuals {
        assert!(res <= r.tolerance + r.max_grid_error);
    }
    // completeness: every oracle root has an extracted point within one step
    let p = builtin("parabola-line").unwrap();
    let roots = grid_roots(&h, &p.spec.domain, &[401], 1e-2).unwrap();
    assert_eq!(roots.len(), 2);
    for root in roots.points.iter_rows() {
        let near = r.points.iter_rows().any(|x| (x[0] - root[0]).abs() <= 0.01 + 1e-12);
        assert!(near, "no extracted point near {root:?}");
    }
    let c = cluster_points(&r.points, 0.02).unwrap();
    assert_eq!(c.len(), 2);
}

#[test]
fn constrained_case1_has_one_cluster() {
    let p = builtin("parabola-line").unwrap();
    let h = p.h().unwrap();
    let lo = FunctionSource::analytic("lo", "-1 - x", 1).unwrap();
    let hi = FunctionSource::analytic("hi", "x", 1).unwrap();
    let spec = neuropt::intersect::ProblemSpec::new(vec![], vec![], vec![lo, hi], p.spec.domain.clone()).unwrap();
    let tc = TrainConfig {
        loss_tolerance: 1e-6,
        ..TrainConfig::with_seed(2)
    };
    let m = train_manifold(&h, &spec, &NetConfig::new(1, 4, 4, 1, 2), &tc).unwrap();
    let r = extract_indicator(&m.net, &h, &spec, &[401], 1e-2).unwrap();
    assert!(r.points.iter_rows().all(|x| (-1.0..=0.0).contains(&x[0])));
    let c = cluster_points(&r.points, 0.02).unwrap();
    assert_eq!(c.len(), 1);
    assert!((c[0][0] - (1.0 - 3f64.sqrt()) / 2.0).abs() <= 5e-3, "{c:?}");
}

#[test]
fn sphere_cylinder_trains_below_tolerance() {
    let p = builtin("sphere-cylinder").unwrap();
    let h = p.h().unwrap();
    let m = train_manifold(&h, &p.spec, &NetConfig::new(3, 8, 4, 1, 0), &TrainConfig::with_seed(0)).unwrap();
    assert!(m.record.final_loss <= 1e-3, "{}", m.record.final_loss);
}

#[test]
fn pure_pixels_reconstruct_and_span_the_truth() {
    let a = Matrix::from_fn(20, 3, |r, c| 0.1 + 0.8 * (((r + 1) * (c + 2)) % 7) as f64 / 7.0);
    let y = a.transpose();
    let data = HsiDataset::new(y, Some(a.clone()), Some(Matrix::identity(3)), vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let tc = TrainConfig {
        loss_tolerance: 1e-12,
        ..TrainConfig::with_seed(1)
    };
    let r = unmix_train(&data, 3, 0.0, &tc).unwrap();
    assert!(r.final_reconstruction <= 1e-3, "{}", r.final_reconstruction);
    assert!(r.final_reconstruction <= r.initial_reconstruction);
    // each true column is nearly a combination of the estimated ones
    let q = orthonormal_columns(&r.a_hat);
    for j in 0..3 {
        let col = a.column(j);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rest = col.clone();
        for qk in &q {
            let dot: f64 = qk.iter().zip(&col).map(|(p, v)| p * v).sum();
            for (x, p) in rest.iter_mut().zip(qk) {
                *x -= dot * p;
            }
        }
        let off = rest.iter().map(|v| v * v).sum::<f64>().sqrt() / norm;
        assert!(off <= 5e-2, "column {j} is {off} outside span(A_hat)");
    }
}

fn orthonormal_columns(m: &Matrix) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for j in 0..m.cols() {
        let mut v = m.column(j);
        for b in &q {
            let dot: f64 = b.iter().zip(&v).map(|(p, x)| p * x).sum();
            for (x, p) in v.iter_mut().zip(b) {
                *x -= dot * p;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

#[test]
fn synthetic_unmix_respects_invariants() {
    let data = neuropt::unmix::synthetic_dataset(3, 20, 400, 8).unwrap();
    let tc = TrainConfig {
        epochs: 2,
        loss_tolerance: 1e-12,
        ..TrainConfig::with_seed(8)
    };
    let r = unmix_train_with(&data, &UnmixOptions::new(3), &tc).unwrap();
    assert_eq!(r.model.param_count(), 2 * 3 * 20);
    assert!(r.model.decoder.as_slice().iter().all(|&v| v >= 0.0));
    assert!(r.a_hat.as_slice().iter().all(|&v| v >= 0.0));
    for row in r.b_hat.iter_rows() {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert!(r.final_reconstruction <= r.initial_reconstruction);
    assert!(r.biorthogonality.is_finite());
    assert!(r.metrics.is_some());
}

#[test]
fn more_endmembers_than_bands_is_rejected() {
    let data = neuropt::unmix::synthetic_dataset(3, 4, 50, 0).unwrap();
    let opts = UnmixOptions::new(5);
    assert!(unmix_train_with(&data, &opts, &TrainConfig::with_seed(0)).is_err());
}
