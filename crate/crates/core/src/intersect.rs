//! Representation-driven block: learn `h̃ ≈ h` over a box and read off the
//! indicator set `{x : |h̃(x)| ≤ ε}` under the problem's constraints.

use crate::approximator::{sample_domain, Domain, Sampling};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{DenseNet, NetConfig};
use crate::rng::Rng;
use crate::source::{build_h, FunctionSource, HForm};
use crate::train::{optimize, TrainConfig, TrainRecord};

/// Grid evaluation is chunked so that huge grids never sit on one tape.
const EVAL_CHUNK: usize = 65_536;

/// Objectives, equality constraints `p_j(x) = 0`, inequality constraints
/// `q_k(x) ≤ 0` and a bounded box.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub objectives: Vec<FunctionSource>,
    pub equalities: Vec<FunctionSource>,
    pub inequalities: Vec<FunctionSource>,
    pub domain: Domain,
}

impl ProblemSpec {
    pub fn new(
        objectives: Vec<FunctionSource>,
        equalities: Vec<FunctionSource>,
        inequalities: Vec<FunctionSource>,
        domain: Domain,
    ) -> Result<Self> {
        let n = domain.dim();
        for f in objectives.iter().chain(&equalities).chain(&inequalities) {
            if f.arity() != n {
                return Err(Error::Config(format!(
                    "function '{}' takes {} inputs but the domain is {n}-D",
                    f.describe(),
                    f.arity()
                )));
            }
        }
        Ok(Self {
            objectives,
            equalities,
            inequalities,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Inside the box and every `q_k(x) ≤ 0`.
    pub fn satisfies_inequalities(&self, x: &[f64]) -> bool {
        self.domain.contains(x) && self.inequalities.iter().all(|q| q.evaluate(x) <= 0.0)
    }

    pub fn satisfies_equalities(&self, x: &[f64], tol: f64) -> bool {
        self.equalities.iter().all(|p| p.evaluate(x).abs() <= tol)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedManifold {
    pub net: DenseNet,
    pub record: TrainRecord,
}

/// Fits `h̃` by minimizing the mean of `(h̃(x) - h(x))²` over fresh uniform
/// samples of the domain at every step.
pub fn train_manifold(h: &FunctionSource, spec: &ProblemSpec, net_cfg: &NetConfig, train_cfg: &TrainConfig) -> Result<TrainedManifold> {
    if h.arity() != spec.dim() || net_cfg.n_in != spec.dim() || net_cfg.n_out != 1 {
        return Err(Error::Config(format!(
            "h takes {} inputs, network is {}->{}, domain is {}-D",
            h.arity(),
            net_cfg.n_in,
            net_cfg.n_out,
            spec.dim()
        )));
    }
    let mut net = DenseNet::new(*net_cfg)?;
    let template = net.clone();
    let mut rng = Rng::new(train_cfg.seed);
    let bounds = spec.domain.bounds().to_vec();
    let batch = train_cfg.batch_size;
    let record = optimize(
        net.params_mut(),
        train_cfg,
        &mut rng,
        |tape, params, rng| {
            let xb = Matrix::from_fn(batch, bounds.len(), |_, j| rng.uniform(bounds[j].0, bounds[j].1));
            let target: Vec<f64> = xb.iter_rows().map(|r| h.evaluate(r)).collect();
            let xv = tape.leaf(xb);
            let yv = tape.leaf(Matrix::column_vector(&target));
            let out = template.forward_vars(tape, xv, params)?;
            let diff = tape.sub(out, yv)?;
            let sq = tape.square(diff);
            Ok(tape.mean(sq))
        },
        |_| {},
    )?;
    Ok(TrainedManifold { net, record })
}

/// Network output for every row, evaluated in chunks.
pub fn evaluate_net(net: &DenseNet, points: &Matrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(points.rows());
    let idx: Vec<usize> = (0..points.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let block = points.select_rows(chunk);
        out.extend(net.forward(&block)?.column(0));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractionStatus {
    Ok,
    /// Nothing passed the indicator and constraint masks.
    Empty,
}

#[derive(Clone, Debug)]
pub struct ManifoldResult {
    pub resolution: Vec<usize>,
    pub grid: Matrix,
    /// `h̃` at every grid point, in grid order.
    pub h_tilde_grid: Vec<f64>,
    /// Indices of the extracted points in `grid`.
    pub indices: Vec<usize>,
    pub points: Matrix,
    pub h_tilde: Vec<f64>,
    /// `|h(x)|` recomputed from the sources at each extracted point.
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    /// Largest `|h̃ - h|` over the grid.
    pub max_grid_error: f64,
    /// Empirical `mean((h - h̃)²) / ε` over the extracted points.
    pub closeness: f64,
    pub status: ExtractionStatus,
}

/// Keeps grid points with `|h̃| ≤ ε`, every `q_k ≤ 0` and every `|p_j| ≤ ε`.
pub fn extract_indicator(net: &DenseNet, h: &FunctionSource, spec: &ProblemSpec, resolution: &[usize], tolerance: f64) -> Result<ManifoldResult> {
    if !(tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let grid = sample_domain(&spec.domain, &Sampling::Grid(resolution.to_vec()))?;
    let h_tilde_grid = evaluate_net(net, &grid)?;
    let h_true = h.evaluate_batch(&grid)?;
    let max_grid_error = h_tilde_grid
        .iter()
        .zip(&h_true)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));

    let indices: Vec<usize> = (0..grid.rows())
        .filter(|&i| {
            let x = grid.row(i);
            h_tilde_grid[i].abs() <= tolerance
                && spec.satisfies_inequalities(x)
                && spec.satisfies_equalities(x, tolerance)
        })
        .collect();
    let points = grid.select_rows(&indices);
    let h_tilde: Vec<f64> = indices.iter().map(|&i| h_tilde_grid[i]).collect();
    let residuals: Vec<f64> = indices.iter().map(|&i| h_true[i].abs()).collect();
    let closeness = if indices.is_empty() {
        0.0
    } else {
        indices
            .iter()
            .map(|&i| (h_true[i] - h_tilde_grid[i]).powi(2))
            .sum::<f64>()
            / indices.len() as f64
            / tolerance
    };
    let status = if indices.is_empty() {
        ExtractionStatus::Empty
    } else {
        ExtractionStatus::Ok
    };
    Ok(ManifoldResult {
        resolution: resolution.to_vec(),
        grid,
        h_tilde_grid,
        indices,
        points,
        h_tilde,
        residuals,
        tolerance,
        max_grid_error,
        closeness,
        status,
    })
}

/// Single-linkage clusters within `radius`; returns one centroid per cluster,
/// ordered by the cluster's first point.
pub fn cluster_points(points: &Matrix, radius: f64) -> Result<Vec<Vec<f64>>> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("cluster radius must be positive, got {radius}")));
    }
    let n = points.rows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    // sweep along the first coordinate so only nearby pairs are compared
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[(a, 0)].total_cmp(&points[(b, 0)]));
    let r2 = radius * radius;
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            if points[(j, 0)] - points[(i, 0)] > radius {
                break;
            }
            let d2: f64 = points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let slot = match roots.iter().position(|&x| x == r) {
            Some(s) => s,
            None => {
                roots.push(r);
                sums.push((vec![0.0; points.cols()], 0));
                roots.len() - 1
            }
        };
        for (s, v) in sums[slot].0.iter_mut().zip(points.row(i)) {
            *s += v;
        }
        sums[slot].1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect())
}

/// Named intersection problems.
#[derive(Clone, Debug)]
pub struct IntersectProblem {
    pub name: &'static str,
    pub f: FunctionSource,
    pub g: FunctionSource,
    pub form: HForm,
    pub spec: ProblemSpec,
    /// Default `(w, d)`.
    pub net_shape: (usize, usize),
    pub resolution: Vec<usize>,
}

impl IntersectProblem {
    pub fn h(&self) -> Result<FunctionSource> {
        build_h(&self.f, &self.g, self.form)
    }
}

pub const BUILTIN_NAMES: &[&str] = &[
    "parabola-line",
    "parabola-cosh",
    "plane-parabola",
    "sphere-cylinder",
    "two-spheres",
];

pub fn builtin(name: &str) -> Result<IntersectProblem> {
    let a = FunctionSource::analytic;
    let (f, g, domain, net_shape, resolution, surfaces) = match name {
        "parabola-line" => (
            a("f", "x^2", 1)?,
            a("g", "x + 0.5", 1)?,
            Domain::new(vec![(-2.0, 2.0)])?,
            (4, 4),
            vec![401],
            false,
        ),
        "parabola-cosh" => (
            a("f", "x^2", 1)?,
            a("g", "cosh(x)", 1)?,
            Domain::new(vec![(-2.0, 2.0)])?,
            (4, 4),
            vec![401],
            false,
        ),
        "plane-parabola" => (
            a("f", "x2", 2)?,
            a("g", "x1^2 - 1", 2)?,
            Domain::cube(-2.0, 2.0, 2)?,
            (8, 4),
            vec![1001, 1001],
            false,
        ),
        "sphere-cylinder" => (
            a("sphere", "x^2 + y^2 + z^2 - 4", 3)?,
            a("cylinder", "(x - 1)^2 + y^2 - 1", 3)?,
            Domain::new(vec![(-0.5, 2.5), (-1.5, 1.5), (-2.5, 2.5)])?,
            (8, 4),
            vec![101, 101, 101],
            true,
        ),
        "two-spheres" => (
            a("sphere_a", "x^2 + y^2 + z^2 - 4", 3)?,
            a("sphere_b", "(x - 1)^2 + y^2 + z^2 - 1", 3)?,
            Domain::cube(-2.5, 2.5, 3)?,
            (8, 4),
            vec![101, 101, 101],
            true,
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown intersect problem '{other}' (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    // implicit surfaces: the curve lies on both level-0 sets
    let equalities = if surfaces { vec![f.clone(), g.clone()] } else { vec![] };
    let spec = ProblemSpec::new(vec![f.clone(), g.clone()], equalities, vec![], domain)?;
    Ok(IntersectProblem {
        name: BUILTIN_NAMES.iter().find(|n| **n == name).copied().unwrap_or("custom"),
        f,
        g,
        form: HForm::Difference,
        spec,
        net_shape,
        resolution,
    })
}
