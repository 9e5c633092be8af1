//! Executes a [`RunConfig`] and writes its artifacts into the output
//! directory.
//!
//! Every run writes `config.echo`, `metrics.txt` (deterministic given the
//! config) and `timing.txt` (wall-clock seconds). Solvers add their point
//! sets and traces; see [`run`] for the file list of each command.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::approximator::{fit_function, mse, sample_domain, split_every_nth, sup_error, Domain, Sampling};
use crate::autodiff::{op_suite, OP_NAMES};
use crate::config::{format_grid, Command, RunConfig};
use crate::error::{Error, Result};
use crate::expr::Constraint;
use crate::intersect::{self, cluster_points, extract_indicator, train_manifold, ProblemSpec};
use crate::io::{load_matrix, output_path, read_function_file, save_matrix, write_csv, FunctionLine};
use crate::matrix::Matrix;
use crate::net::NetConfig;
use crate::oracle::{grid_roots, surface_intersection_oracle};
use crate::pareto::{self, extract_front, f1_score, is_antichain, oracle_front, score_field, train_pareto_classifier, MooProblem};
use crate::source::{build_h, FunctionSource};
use crate::train::TrainRecord;
use crate::unmix::{synthetic_dataset, unmix_train_with, HsiDataset, UnmixOptions};

/// Largest per-op relative error accepted by `grad-check`.
pub const GRAD_CHECK_LIMIT: f64 = 1e-5;

/// Rows held out by `fit`: every `FIT_HOLDOUT`-th sample.
pub const FIT_HOLDOUT: usize = 10;

/// Files written and the metrics text of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub metrics: String,
}

/// Ordered `key = value` lines.
#[derive(Default)]
struct Metrics(String);

impl Metrics {
    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key} = {value}");
    }

    fn num(&mut self, key: &str, value: f64) {
        self.put(key, format!("{value:?}"));
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = output_path(&self.dir, name)?;
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], m: &Matrix) -> Result<()> {
        let path = output_path(&self.dir, name)?;
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(&path, Some(&h), m)?;
        self.files.push(path);
        Ok(())
    }

    fn bin(&mut self, name: &str, m: &Matrix) -> Result<()> {
        let path = output_path(&self.dir, name)?;
        save_matrix(&path, m)?;
        self.files.push(path);
        Ok(())
    }

    fn loss_trace(&mut self, record: &TrainRecord) -> Result<()> {
        let rows: Vec<Vec<f64>> = record.loss_trace.iter().map(|&(s, l)| vec![s as f64, l]).collect();
        self.csv("loss_trace.csv", &names(&["step", "loss"]), &rows_or_empty(&rows, 2)?)
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn rows_or_empty(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.is_empty() {
        Ok(Matrix::zeros(0, cols))
    } else {
        Matrix::from_rows(rows)
    }
}

fn with_columns(base: &Matrix, extra: &[&[f64]]) -> Result<Matrix> {
    let mut m = base.clone();
    for col in extra {
        m = m.hstack(&Matrix::column_vector(col))?;
    }
    Ok(m)
}

fn record_metrics(m: &mut Metrics, record: &TrainRecord) {
    m.num("final_loss", record.final_loss);
    m.put("train_steps", record.steps);
    m.put("stopped_early", record.stopped_early);
}

fn net_config(cfg: &RunConfig, n_in: usize, n_out: usize) -> NetConfig {
    let mut nc = NetConfig::new(n_in, cfg.net.width, cfg.net.depth, n_out, cfg.train.seed);
    nc.hidden_activation = cfg.net.hidden;
    nc.output_activation = cfg.net.output;
    nc.use_biases = cfg.net.biases;
    nc
}

fn load_functions(path: &Path) -> Result<Vec<FunctionSource>> {
    read_function_file(path)?
        .into_iter()
        .map(|FunctionLine { name, arity, expr, line }| {
            FunctionSource::analytic(&name, &expr, arity).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn function_name(f: &FunctionSource) -> &str {
    match f {
        FunctionSource::Analytic { name, .. } => name,
        _ => "",
    }
}

fn domain_of(cfg: &RunConfig, fallback: Option<&Domain>) -> Result<Domain> {
    match (&cfg.problem.domain, fallback) {
        (Some(b), _) => Domain::new(b.clone()),
        (None, Some(d)) => Ok(d.clone()),
        (None, None) => Err(Error::Config("a custom problem needs --domain".into())),
    }
}

/// User constraints split into inequalities `q ≤ 0` and equalities `p = 0`.
fn parse_constraints(cfg: &RunConfig, dim: usize) -> Result<(Vec<FunctionSource>, Vec<FunctionSource>)> {
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    for (i, text) in cfg.problem.constraints.iter().enumerate() {
        let name = format!("c{}", i + 1);
        match Constraint::parse(text, dim)? {
            Constraint::Inequality(expr) => ineq.push(FunctionSource::Analytic { name, expr }),
            Constraint::Equality(expr) => eq.push(FunctionSource::Analytic { name, expr }),
        }
    }
    Ok((ineq, eq))
}

/// `f`, `g` and the extraction spec for `intersect` and its oracle.
struct Intersection {
    name: String,
    f: FunctionSource,
    g: FunctionSource,
    spec: ProblemSpec,
}

fn intersection_problem(cfg: &RunConfig) -> Result<Intersection> {
    let (name, f, g, base_eq, base_ineq, domain) = match (&cfg.problem.builtin, &cfg.problem.file) {
        (Some(b), None) => {
            let p = intersect::builtin(b)?;
            let domain = domain_of(cfg, Some(&p.spec.domain))?;
            (p.name.to_string(), p.f, p.g, p.spec.equalities, p.spec.inequalities, domain)
        }
        (None, Some(path)) => {
            let funcs = load_functions(path)?;
            let pick = |n: &str| {
                funcs
                    .iter()
                    .find(|s| function_name(s) == n)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("{} defines no function named '{n}'", path.display())))
            };
            let (f, g) = (pick("f")?, pick("g")?);
            // extra functions: p* are equalities, q* are inequalities
            let eq = funcs.iter().filter(|s| function_name(s).starts_with('p')).cloned().collect();
            let ineq = funcs.iter().filter(|s| function_name(s).starts_with('q')).cloned().collect();
            (format!("file:{}", path.display()), f, g, eq, ineq, domain_of(cfg, None)?)
        }
        _ => return Err(Error::Config("choose exactly one of --builtin or --file".into())),
    };
    let (mut ineq, mut eq) = parse_constraints(cfg, domain.dim())?;
    ineq.splice(0..0, base_ineq);
    eq.splice(0..0, base_eq);
    let spec = ProblemSpec::new(vec![f.clone(), g.clone()], eq, ineq, domain)?;
    Ok(Intersection { name, f, g, spec })
}

fn pareto_problem(cfg: &RunConfig) -> Result<MooProblem> {
    let base = match (&cfg.problem.builtin, &cfg.problem.file) {
        (Some(b), None) => pareto::builtin(b)?,
        (None, Some(path)) => {
            let funcs = load_functions(path)?;
            let objectives: Vec<_> = funcs.iter().filter(|s| function_name(s).starts_with('f')).cloned().collect();
            let constraints: Vec<_> = funcs.iter().filter(|s| function_name(s).starts_with('g')).cloned().collect();
            let domain = domain_of(cfg, None)?;
            let grid = cfg.extract.grid.clone();
            MooProblem::new(&format!("file:{}", path.display()), objectives, constraints, domain, grid)?
        }
        _ => return Err(Error::Config("choose exactly one of --builtin or --file".into())),
    };
    let domain = domain_of(cfg, Some(&base.domain))?;
    let (ineq, eq) = parse_constraints(cfg, domain.dim())?;
    if !eq.is_empty() {
        return Err(Error::Config("pareto accepts inequality constraints only".into()));
    }
    let mut constraints = base.constraints;
    constraints.extend(ineq);
    MooProblem::new(&base.name, base.objectives, constraints, domain, cfg.extract.grid.clone())
}

/// Runs `cfg`, writing every artifact under `cfg.output_dir`.
///
/// * `fit`: `points.csv` (inputs, target, prediction), `net.bin`, `loss_trace.csv`.
/// * `intersect`: `points.csv` (x, h̃, |h|), `clusters.csv`, `manifold_grid.bin`
///   (columns h̃ and h over the grid in row-major order), `loss_trace.csv`.
/// * `pareto`: `points.csv` (x, F(x), s(x), class probability),
///   `manifold_grid.bin` (columns raw s and class probability), `loss_trace.csv`.
/// * `unmix`: `A_hat.csv`, `B_hat.csv`, `loss_trace.csv`, `terms.csv`.
/// * `oracle`: `points.csv`, plus `clusters.csv` for intersection problems.
/// * `grad-check`: per-op errors in `metrics.txt`; fails when any exceeds
///   [`GRAD_CHECK_LIMIT`].
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.train.validate()?;
    let start = Instant::now();
    let mut w = Writer::new(&cfg.output_dir)?;
    w.text("config.echo", &cfg.to_echo())?;
    let mut m = Metrics::default();
    m.put("command", cfg.command);
    let check = match cfg.command {
        Command::Fit => run_fit(cfg, &mut w, &mut m),
        Command::Intersect => run_intersect(cfg, &mut w, &mut m),
        Command::Pareto => run_pareto(cfg, &mut w, &mut m),
        Command::Unmix => run_unmix(cfg, &mut w, &mut m),
        Command::Oracle => run_oracle(cfg, &mut w, &mut m),
        Command::GradCheck => run_grad_check(cfg, &mut m),
    };
    // metrics are written even when a check fails so the failure is inspectable
    let written = w.text("metrics.txt", &m.0);
    check?;
    written?;
    w.text("timing.txt", &format!("runtime_seconds = {:?}\n", start.elapsed().as_secs_f64()))?;
    Ok(RunOutcome {
        dir: cfg.output_dir.clone(),
        files: w.files,
        metrics: m.0,
    })
}

fn run_fit(cfg: &RunConfig, w: &mut Writer, m: &mut Metrics) -> Result<()> {
    let (x, y, truth) = match (&cfg.problem.data, &cfg.problem.file) {
        (Some(path), None) => {
            let data = load_matrix(path)?;
            if data.cols() < 2 {
                return Err(Error::Data(format!("{}: need input columns plus one target column", path.display())));
            }
            let n_in = data.cols() - 1;
            let x = data.select_columns(&(0..n_in).collect::<Vec<_>>());
            let y = data.select_columns(&[n_in]);
            m.put("source", path.display());
            (x, y, None)
        }
        (None, Some(path)) => {
            let funcs = load_functions(path)?;
            let f = funcs
                .iter()
                .find(|s| function_name(s) == "f")
                .cloned()
                .ok_or_else(|| Error::Config(format!("{} defines no function named 'f'", path.display())))?;
            let domain = domain_of(cfg, None)?;
            let x = sample_domain(&domain, &Sampling::Grid(cfg.extract.grid.clone()))?;
            let y = Matrix::column_vector(&f.evaluate_batch(&x)?);
            m.put("source", f.describe());
            (x, y, Some(f))
        }
        _ => return Err(Error::Config("fit needs exactly one of --data or --file".into())),
    };
    let ((x_train, y_train), (x_eval, y_eval)) = split_every_nth(&x, &y, FIT_HOLDOUT)?;
    let nc = net_config(cfg, x.cols(), 1);
    let fitted = fit_function(&x_train, &y_train, &nc, &cfg.train)?;
    let FunctionSource::Fitted(fit) = &fitted else {
        return Err(Error::Contract("fit_function returned a non-fitted source".into()));
    };
    m.put("samples", x.rows());
    m.put("train_samples", x_train.rows());
    m.put("holdout_samples", x_eval.rows());
    m.put("param_count", fit.net.param_count());
    m.num("train_mse", fit.train_mse);
    if x_eval.rows() > 0 {
        m.num("holdout_mse", mse(&fit.net, &x_eval, &y_eval)?);
        let sup = match &truth {
            Some(f) => sup_error(&fitted, f, &x_eval)?,
            None => {
                let pred = fit.net.forward(&x_eval)?;
                pred.zip_map(&y_eval, "sup", |a, b| (a - b).abs())?.max_abs()
            }
        };
        m.num("holdout_sup_error", sup);
    }
    record_metrics(m, &fit.record);
    let pred = fit.net.forward(&x)?;
    let mut header = axis_names("x", x.cols());
    header.extend(names(&["y", "y_hat"]));
    w.csv("points.csv", &header, &x.hstack(&y)?.hstack(&pred)?)?;
    let net_path = output_path(&w.dir, "net.bin")?;
    fit.net.save(&net_path)?;
    w.files.push(net_path);
    w.loss_trace(&fit.record)
}

fn write_clusters(w: &mut Writer, m: &mut Metrics, points: &Matrix, radius: f64) -> Result<()> {
    let clusters = cluster_points(points, radius)?;
    m.put("clusters", clusters.len());
    for (i, c) in clusters.iter().enumerate() {
        let coords: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
        m.put(&format!("cluster_{}", i + 1), coords.join(","));
    }
    w.csv("clusters.csv", &axis_names("x", points.cols()), &rows_or_empty(&clusters, points.cols())?)
}

fn run_intersect(cfg: &RunConfig, w: &mut Writer, m: &mut Metrics) -> Result<()> {
    let p = intersection_problem(cfg)?;
    let h = build_h(&p.f, &p.g, cfg.problem.form)?;
    let dim = p.spec.dim();
    let trained = train_manifold(&h, &p.spec, &net_config(cfg, dim, 1), &cfg.train)?;
    let r = extract_indicator(&trained.net, &h, &p.spec, &cfg.extract.grid, cfg.extract.tolerance)?;
    m.put("problem", &p.name);
    m.put("grid", format_grid(&r.resolution));
    m.put("grid_points", r.grid.rows());
    m.put("extracted_points", r.points.rows());
    m.put("status", format!("{:?}", r.status).to_lowercase());
    m.num("max_residual", r.residuals.iter().fold(0.0, |a: f64, &b| a.max(b)));
    m.num("max_grid_error", r.max_grid_error);
    m.num("closeness", r.closeness);
    record_metrics(m, &trained.record);
    write_clusters(w, m, &r.points, cfg.extract.cluster_radius)?;
    let mut header = axis_names("x", dim);
    header.extend(names(&["h_tilde", "residual"]));
    w.csv("points.csv", &header, &with_columns(&r.points, &[&r.h_tilde, &r.residuals])?)?;
    let h_true = h.evaluate_batch(&r.grid)?;
    let dump = Matrix::column_vector(&r.h_tilde_grid).hstack(&Matrix::column_vector(&h_true))?;
    w.bin("manifold_grid.bin", &dump)?;
    w.loss_trace(&trained.record)
}

fn run_pareto(cfg: &RunConfig, w: &mut Writer, m: &mut Metrics) -> Result<()> {
    let problem = pareto_problem(cfg)?;
    let grid = problem.grid()?;
    let field = score_field(&problem, &grid)?;
    let nc = net_config(cfg, problem.dim(), 2);
    let classifier = train_pareto_classifier(&problem, &grid, &field, cfg.extract.epsilon, &nc, &cfg.train)?;
    let front = extract_front(
        &classifier.net,
        &problem,
        &grid,
        &field,
        cfg.extract.epsilon,
        cfg.extract.domination_filter,
    )?;
    let truth = oracle_front(&problem, &grid)?;
    m.put("problem", &problem.name);
    m.put("grid", format_grid(&problem.resolution));
    m.put("grid_points", front.grid_points);
    m.num("score_scale", front.score_scale);
    m.put("labelled_positive", classifier.positives);
    m.put("labelled_negative", classifier.negatives);
    m.put("front_points", front.len());
    m.put("status", format!("{:?}", front.status).to_lowercase());
    m.put("oracle_points", truth.len());
    m.num("f1_vs_oracle", f1_score(&front.indices, &truth));
    m.put("antichain", is_antichain(&front.objectives));
    if problem.name == "gobbi1" {
        let (mean, count) = pareto::case1_residual(&front.objectives);
        m.num("analytic_mean_residual", mean);
        m.put("analytic_residual_points", count);
    }
    record_metrics(m, &classifier.record);
    let mut header = axis_names("x", problem.dim());
    header.extend(axis_names("f", problem.k()));
    header.extend(names(&["score", "prob"]));
    let body = with_columns(&front.points.hstack(&front.objectives)?, &[&front.scores, &front.probs])?;
    w.csv("points.csv", &header, &body)?;
    let dump = Matrix::column_vector(&field.raw).hstack(&Matrix::column_vector(&front.class_prob))?;
    w.bin("manifold_grid.bin", &dump)?;
    w.loss_trace(&classifier.record)
}

fn unmix_dataset(cfg: &RunConfig) -> Result<HsiDataset> {
    match (cfg.unmix.synthetic, &cfg.problem.data) {
        (Some((f, n)), None) => synthetic_dataset(cfg.unmix.k, f, n, cfg.train.seed),
        (None, Some(path)) => {
            let y = load_matrix(path)?;
            let a = cfg.problem.truth.as_deref().map(load_matrix).transpose()?;
            let k = a.as_ref().map_or(cfg.unmix.k, Matrix::cols);
            HsiDataset::new(y, a, None, axis_names("em", k))
        }
        _ => Err(Error::Config("unmix needs exactly one of --data or --synthetic".into())),
    }
}

fn run_unmix(cfg: &RunConfig, w: &mut Writer, m: &mut Metrics) -> Result<()> {
    let data = unmix_dataset(cfg)?;
    if let Some(k) = data.k() {
        if k != cfg.unmix.k {
            return Err(Error::Config(format!("ground truth has {k} end-members but --k is {}", cfg.unmix.k)));
        }
    }
    let opts = UnmixOptions {
        k: cfg.unmix.k,
        lambda: cfg.unmix.lambda,
        target_max: cfg.unmix.rescale_max,
        restarts: cfg.unmix.restarts,
    };
    let r = unmix_train_with(&data, &opts, &cfg.train)?;
    let simplex_dev = r
        .b_hat
        .iter_rows()
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs().max(-row.iter().fold(0.0, |a: f64, &b| a.min(b))))
        .fold(0.0, f64::max);
    m.put("pixels", data.pixels());
    m.put("bands", data.bands());
    m.put("k", opts.k);
    m.put("param_count", r.model.param_count());
    m.num("lambda", opts.lambda);
    m.num("scale", r.scale);
    m.num("initial_reconstruction", r.initial_reconstruction);
    m.num("final_reconstruction", r.final_reconstruction);
    m.num("biorthogonality", r.biorthogonality);
    m.num("simplex_max_deviation", simplex_dev);
    if let Some(mt) = &r.metrics {
        m.put("permutation", mt.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","));
        m.num("mse", mt.mse);
        m.num("sad", mt.sad);
        m.num("mse_rescaled", mt.mse_rescaled);
        m.num("sad_rescaled", mt.sad_rescaled);
    }
    record_metrics(m, &r.record);
    let em = axis_names("em", opts.k);
    w.csv("A_hat.csv", &em, &r.a_hat)?;
    w.csv("B_hat.csv", &em, &r.b_hat)?;
    let terms: Vec<Vec<f64>> = r.term_trace.iter().map(|&(s, a, b)| vec![s as f64, a, b]).collect();
    w.csv("terms.csv", &names(&["step", "reconstruction", "volume"]), &rows_or_empty(&terms, 3)?)?;
    w.loss_trace(&r.record)
}

fn run_oracle(cfg: &RunConfig, w: &mut Writer, m: &mut Metrics) -> Result<()> {
    let is_pareto = match (&cfg.problem.builtin, &cfg.problem.file) {
        (Some(b), _) => pareto::BUILTIN_NAMES.contains(&b.as_str()),
        (None, Some(path)) => !load_functions(path)?.iter().any(|f| function_name(f) == "g"),
        (None, None) => false,
    };
    if is_pareto {
        let problem = pareto_problem(cfg)?;
        let grid = problem.grid()?;
        let idx = oracle_front(&problem, &grid)?;
        let points = grid.select_rows(&idx);
        let objectives = problem.objective_matrix(&points);
        m.put("problem", &problem.name);
        m.put("method", "non-dominated-sort");
        m.put("grid", format_grid(&problem.resolution));
        m.put("front_points", idx.len());
        m.put("antichain", is_antichain(&objectives));
        if problem.name == "gobbi1" {
            let (mean, count) = pareto::case1_residual(&objectives);
            m.num("analytic_mean_residual", mean);
            m.put("analytic_residual_points", count);
        }
        let mut header = axis_names("x", problem.dim());
        header.extend(axis_names("f", problem.k()));
        return w.csv("points.csv", &header, &points.hstack(&objectives)?);
    }
    let p = intersection_problem(cfg)?;
    let grid = &cfg.extract.grid;
    let tol = cfg.extract.tolerance;
    let report = if p.spec.equalities.len() >= 2 && p.spec.dim() == 3 {
        surface_intersection_oracle(&p.f, &p.g, &p.spec.domain, grid, tol)?
    } else {
        grid_roots(&build_h(&p.f, &p.g, cfg.problem.form)?, &p.spec.domain, grid, tol)?
    };
    let keep: Vec<usize> = (0..report.len())
        .filter(|&i| p.spec.satisfies_inequalities(report.points.row(i)))
        .collect();
    let points = report.points.select_rows(&keep);
    let residuals: Vec<f64> = keep.iter().map(|&i| report.residuals[i]).collect();
    m.put("problem", &p.name);
    m.put("method", report.method);
    m.put("grid", format_grid(grid));
    m.put("points", points.rows());
    m.num("max_residual", residuals.iter().fold(0.0, |a: f64, &b| a.max(b)));
    write_clusters(w, m, &points, cfg.extract.cluster_radius)?;
    let mut header = axis_names("x", p.spec.dim());
    header.push("residual".into());
    w.csv("points.csv", &header, &with_columns(&points, &[&residuals])?)
}

fn run_grad_check(cfg: &RunConfig, m: &mut Metrics) -> Result<()> {
    let report = op_suite(cfg.train.seed, cfg.gradcheck_points)?;
    m.put("points", cfg.gradcheck_points);
    m.num("limit", GRAD_CHECK_LIMIT);
    let mut failed = Vec::new();
    for r in &report {
        m.num(&format!("op.{}", r.op), r.max_relative_error);
        if !(r.max_relative_error <= GRAD_CHECK_LIMIT) {
            failed.push(r.op);
        }
    }
    let worst = report.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    m.num("max_relative_error", worst);
    m.put("ops_checked", format!("{}/{}", report.len(), OP_NAMES.len()));
    m.put("pass", failed.is_empty());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("gradient check above {GRAD_CHECK_LIMIT:e} for: {}", failed.join(", "))))
    }
}
