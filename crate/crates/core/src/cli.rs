//! Command-line surface: parses flags into a fully resolved [`RunConfig`]
//! and maps results to exit codes (0 success, 1 solver error, 2 config
//! error).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::approximator::Domain;
use crate::config::{parse_domain, parse_grid, Command, ExtractConfig, NetSection, ProblemConfig, RunConfig, UnmixSection};
use crate::error::{Error, Result};
use crate::io::read_function_file;
use crate::net::Activation;
use crate::pareto;
use crate::run::run;
use crate::source::HForm;
use crate::train::TrainConfig;
use crate::{intersect, unmix};

pub const EXIT_SOLVER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Default indicator threshold for `intersect` and `oracle`.
pub const DEFAULT_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "neuropt", version, about = "Extract optimal sets with small neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit a network to samples or to a function from an expression file.
    Fit(FitArgs),
    /// Learn h = f - g and extract the set where it vanishes.
    Intersect(IntersectArgs),
    /// Minimum-volume simplex unmixing of a pixel matrix.
    Unmix(UnmixArgs),
    /// Fritz John classifier for the Pareto front of a multi-objective problem.
    Pareto(ParetoArgs),
    /// Brute-force reference solution, no network involved.
    Oracle(OracleArgs),
    /// Compare every tape gradient against central differences.
    GradCheck(GradCheckArgs),
    /// Re-run a configuration echoed by an earlier run.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Seed for initialization and batch order (required).
    #[arg(long)]
    seed: Option<u64>,
    /// AdaMax step size [default: 0.001].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Optimizer steps per epoch [default: 2000].
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    /// Upper bound on epochs [default: 10].
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch rows per step [default: 128].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Early-stop threshold on the running mean loss.
    #[arg(long)]
    loss_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Neurons per hidden layer.
    #[arg(long)]
    width: Option<usize>,
    /// Number of hidden layers.
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden-layer activation.
    #[arg(long, default_value = "tanh")]
    hidden: Activation,
    /// Output activation (ignored by pareto, which always uses softmax).
    #[arg(long)]
    output_activation: Option<Activation>,
    /// Drop the bias vectors from every layer.
    #[arg(long)]
    no_biases: bool,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Built-in problem name.
    #[arg(long)]
    builtin: Option<String>,
    /// Expression file: one `name, arity, expression` per line.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Box override, e.g. `-2:2,-1:1`; required with --file.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Extra constraint such as `x<=0` (repeatable).
    #[arg(long = "constraint", allow_hyphen_values = true)]
    constraints: Vec<String>,
    /// Grid resolution, e.g. `401` or `1000x1000`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Sample CSV or .bin: input columns followed by one target column.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct IntersectArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `difference` (f - g) or `squared-difference` ((f - g)^2).
    #[arg(long, default_value = "difference")]
    form: HForm,
    /// Indicator threshold on |h̃|.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Single-linkage radius for clustering extracted points.
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ParetoArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Threshold on the median-normalized score |s|.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Keep dominated points that pass the classifier.
    #[arg(long)]
    no_domination_filter: bool,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct UnmixArgs {
    /// Pixel matrix (rows = pixels, columns = bands), CSV or .bin.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground-truth end-members, bands x K.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Generate a noiseless dataset instead, e.g. `20x1000` (bands x pixels).
    #[arg(long)]
    synthetic: Option<String>,
    /// Number of end-members.
    #[arg(long)]
    k: usize,
    /// Weight of the volume term det(AᵀA).
    #[arg(long, default_value_t = unmix::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Largest reflectance after rescaling.
    #[arg(long, default_value_t = unmix::TARGET_MAX)]
    rescale_max: f64,
    #[arg(long, default_value_t = unmix::DEFAULT_RESTARTS)]
    restarts: usize,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `difference` (f - g) or `squared-difference` ((f - g)^2).
    #[arg(long, default_value = "difference")]
    form: HForm,
    /// Residual bound for accepted points.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Single-linkage radius for clustering accepted points.
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    /// Seed for the random evaluation points.
    #[arg(long)]
    seed: Option<u64>,
    /// Random points per op.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// A `config.echo` file.
    config: PathBuf,
    /// Write to this directory instead of the echoed one.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Default early-stop threshold per command. Intersection needs a tight fit
/// for the indicator to land on the right grid points; unmixing runs its
/// full budget.
pub fn default_loss_tolerance(command: Command) -> f64 {
    match command {
        Command::Intersect => 1e-6,
        Command::Unmix => 1e-12,
        _ => TrainConfig::default().loss_tolerance,
    }
}

/// Resolution used when neither the flag nor a built-in sets one.
pub fn default_grid(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![401],
        2 => vec![1001, 1001],
        d => vec![101; d],
    }
}

fn base_config(command: Command) -> RunConfig {
    RunConfig {
        command,
        problem: ProblemConfig {
            builtin: None,
            file: None,
            data: None,
            truth: None,
            constraints: Vec::new(),
            domain: None,
            form: HForm::Difference,
        },
        net: NetSection {
            width: 4,
            depth: 4,
            hidden: Activation::Tanh,
            output: Activation::Identity,
            biases: true,
        },
        train: TrainConfig {
            loss_tolerance: default_loss_tolerance(command),
            ..TrainConfig::default()
        },
        extract: ExtractConfig {
            grid: vec![401],
            tolerance: DEFAULT_TOLERANCE,
            epsilon: pareto::DEFAULT_EPSILON,
            domination_filter: true,
            cluster_radius: 0.02,
        },
        unmix: UnmixSection {
            k: 3,
            lambda: unmix::DEFAULT_LAMBDA,
            rescale_max: unmix::TARGET_MAX,
            restarts: unmix::DEFAULT_RESTARTS,
            synthetic: None,
        },
        gradcheck_points: 100,
        output_dir: PathBuf::from("out").join(command.name()),
    }
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs) -> Result<()> {
    let c = &mut cfg.train;
    match t.seed {
        Some(s) => c.seed = s,
        None => {
            return Err(Error::Config(format!(
                "{} requires --seed so that runs stay comparable",
                cfg.command
            )))
        }
    }
    c.learning_rate = t.learning_rate.unwrap_or(c.learning_rate);
    c.steps_per_epoch = t.steps_per_epoch.unwrap_or(c.steps_per_epoch);
    c.epochs = t.epochs.unwrap_or(c.epochs);
    c.batch_size = t.batch_size.unwrap_or(c.batch_size);
    c.loss_tolerance = t.loss_tolerance.unwrap_or(c.loss_tolerance);
    Ok(())
}

fn apply_net(cfg: &mut RunConfig, n: &NetArgs, default_shape: (usize, usize)) {
    cfg.net.width = n.width.unwrap_or(default_shape.0);
    cfg.net.depth = n.depth.unwrap_or(default_shape.1);
    cfg.net.hidden = n.hidden;
    if let Some(o) = n.output_activation {
        cfg.net.output = o;
    }
    cfg.net.biases = !n.no_biases;
}

fn apply_output(cfg: &mut RunConfig, o: &OutputArgs) {
    if let Some(dir) = &o.out {
        cfg.output_dir = dir.clone();
    }
}

/// Arity of the first function in an expression file.
fn file_dim(path: &Path) -> Result<usize> {
    Ok(read_function_file(path)?[0].arity)
}

/// Domain and grid defaults of whichever built-in family knows `name`.
fn builtin_defaults(name: &str) -> Result<(Domain, Vec<usize>, (usize, usize))> {
    if let Ok(p) = intersect::builtin(name) {
        return Ok((p.spec.domain, p.resolution, p.net_shape));
    }
    if let Ok(p) = pareto::builtin(name) {
        return Ok((p.domain, p.resolution, (8, 4)));
    }
    Err(Error::Config(format!(
        "unknown built-in '{name}' (known: {}, {})",
        intersect::BUILTIN_NAMES.join(", "),
        pareto::BUILTIN_NAMES.join(", ")
    )))
}

/// Fills problem, domain, grid and cluster radius; returns the default net shape.
fn apply_problem(cfg: &mut RunConfig, p: &ProblemArgs) -> Result<(usize, usize)> {
    cfg.problem.builtin = p.builtin.clone();
    cfg.problem.file = p.file.clone();
    cfg.problem.constraints = p.constraints.clone();
    cfg.problem.domain = p.domain.as_deref().map(parse_domain).transpose()?;
    let (domain, grid, shape) = match (&p.builtin, &p.file) {
        (Some(name), None) => {
            let (d, g, s) = builtin_defaults(name)?;
            let d = match &cfg.problem.domain {
                Some(b) => Domain::new(b.clone())?,
                None => d,
            };
            (d, g, s)
        }
        (None, Some(_)) => {
            let bounds = cfg
                .problem
                .domain
                .clone()
                .ok_or_else(|| Error::Config("--file needs --domain".into()))?;
            let d = Domain::new(bounds)?;
            let g = default_grid(d.dim());
            let s = if d.dim() == 1 { (4, 4) } else { (8, 4) };
            (d, g, s)
        }
        (None, None) if cfg.command == Command::Fit => return Ok((4, 4)),
        _ => return Err(Error::Config("choose exactly one of --builtin or --file".into())),
    };
    if let Some(path) = &p.file {
        let n = file_dim(path)?;
        if n != domain.dim() {
            return Err(Error::Config(format!("{} has arity {n} but the domain is {}-D", path.display(), domain.dim())));
        }
    }
    cfg.extract.grid = match &p.grid {
        Some(g) => parse_grid(g)?,
        None => grid,
    };
    if cfg.extract.grid.len() != domain.dim() {
        return Err(Error::Config(format!(
            "grid has {} axes but the domain is {}-D",
            cfg.extract.grid.len(),
            domain.dim()
        )));
    }
    // two grid steps along the coarsest axis
    let step = domain
        .spacing(&cfg.extract.grid)
        .into_iter()
        .fold(0.0, f64::max);
    cfg.extract.cluster_radius = if step > 0.0 { 2.0 * step } else { 1.0 };
    Ok(shape)
}

fn build_config(cmd: Cmd) -> Result<RunConfig> {
    Ok(match cmd {
        Cmd::Fit(a) => {
            let mut c = base_config(Command::Fit);
            c.problem.data = a.data.clone();
            let shape = apply_problem(&mut c, &a.problem)?;
            apply_net(&mut c, &a.net, shape);
            apply_train(&mut c, &a.train)?;
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::Intersect(a) => {
            let mut c = base_config(Command::Intersect);
            let shape = apply_problem(&mut c, &a.problem)?;
            c.problem.form = a.form;
            c.extract.tolerance = a.tolerance.unwrap_or(DEFAULT_TOLERANCE);
            if let Some(r) = a.cluster_radius {
                c.extract.cluster_radius = r;
            }
            apply_net(&mut c, &a.net, shape);
            apply_train(&mut c, &a.train)?;
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::Pareto(a) => {
            let mut c = base_config(Command::Pareto);
            let shape = apply_problem(&mut c, &a.problem)?;
            c.extract.epsilon = a.epsilon.unwrap_or(pareto::DEFAULT_EPSILON);
            c.extract.domination_filter = !a.no_domination_filter;
            apply_net(&mut c, &a.net, shape);
            c.net.output = Activation::Softmax;
            apply_train(&mut c, &a.train)?;
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::Unmix(a) => {
            let mut c = base_config(Command::Unmix);
            c.problem.data = a.data.clone();
            c.problem.truth = a.truth.clone();
            c.unmix = UnmixSection {
                k: a.k,
                lambda: a.lambda,
                rescale_max: a.rescale_max,
                restarts: a.restarts,
                synthetic: match a.synthetic.as_deref().map(parse_grid).transpose()?.as_deref() {
                    None => None,
                    Some([f, n]) => Some((*f, *n)),
                    Some(_) => return Err(Error::Config("--synthetic expects BANDSxPIXELS, e.g. 20x1000".into())),
                },
            };
            if c.unmix.synthetic.is_some() == c.problem.data.is_some() {
                return Err(Error::Config("unmix needs exactly one of --data or --synthetic".into()));
            }
            apply_train(&mut c, &a.train)?;
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::Oracle(a) => {
            let mut c = base_config(Command::Oracle);
            apply_problem(&mut c, &a.problem)?;
            c.problem.form = a.form;
            c.extract.tolerance = a.tolerance.unwrap_or(DEFAULT_TOLERANCE);
            if let Some(r) = a.cluster_radius {
                c.extract.cluster_radius = r;
            }
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::GradCheck(a) => {
            let mut c = base_config(Command::GradCheck);
            c.train.seed = a
                .seed
                .ok_or_else(|| Error::Config("grad-check requires --seed so that runs stay comparable".into()))?;
            c.gradcheck_points = a.points;
            apply_output(&mut c, &a.output);
            c
        }
        Cmd::Replay(a) => {
            let text = fs::read_to_string(&a.config)?;
            let mut c = RunConfig::from_echo(&text)?;
            if let Some(dir) = a.out {
                c.output_dir = dir;
            }
            c
        }
    })
}

/// Parses `args` (program name first) into a resolved configuration.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    build_config(cli.command)
}

fn exit_for(err: &Error) -> ExitCode {
    ExitCode::from(if err.is_config_error() { EXIT_CONFIG } else { EXIT_SOLVER })
}

/// Entry point shared by the binary: parse, run, report.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let cfg = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            print!("{}", out.metrics);
            println!("wrote {} files to {}", out.files.len(), out.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
