//! Run configuration and its echo format.
//!
//! The echo is a flat `key = value` text file, one knob per line, keys
//! prefixed by their section (`problem.`, `net.`, `train.`, `extract.`,
//! `unmix.`, `gradcheck.`, `output.`). Blank lines and `#` comments are
//! ignored. Floats are written in their shortest exact decimal form, absent
//! optional values as `none`, and repeated keys (`problem.constraint`) keep
//! their order. Every key except `problem.constraint` must appear exactly
//! once, so an echo fully determines a run.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::net::Activation;
use crate::source::HForm;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Fit,
    Intersect,
    Unmix,
    Pareto,
    Oracle,
    GradCheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Fit,
        Command::Intersect,
        Command::Unmix,
        Command::Pareto,
        Command::Oracle,
        Command::GradCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Intersect => "intersect",
            Command::Unmix => "unmix",
            Command::Pareto => "pareto",
            Command::Oracle => "oracle",
            Command::GradCheck => "grad-check",
        }
    }

    /// Commands whose output depends on a seed; these refuse a defaulted one.
    pub fn needs_seed(self) -> bool {
        !matches!(self, Command::Oracle)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

/// What to solve: a built-in, an expression file, or data files.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub builtin: Option<String>,
    /// Expression file, one `name, arity, expression` per line.
    pub file: Option<PathBuf>,
    /// Samples (`fit`) or pixel matrix (`unmix`).
    pub data: Option<PathBuf>,
    /// Ground-truth end-members for `unmix`, `F × K`.
    pub truth: Option<PathBuf>,
    /// Extra constraints such as `x<=0`, applied as extraction masks.
    pub constraints: Vec<String>,
    /// Box override, one `(lo, hi)` per input.
    pub domain: Option<Vec<(f64, f64)>>,
    pub form: HForm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetSection {
    pub width: usize,
    pub depth: usize,
    pub hidden: Activation,
    pub output: Activation,
    pub biases: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig {
    pub grid: Vec<usize>,
    /// Indicator threshold on `|h̃|` for `intersect`, residual bound for `oracle`.
    pub tolerance: f64,
    /// Threshold on the normalized Fritz John score for `pareto`.
    pub epsilon: f64,
    pub domination_filter: bool,
    pub cluster_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnmixSection {
    pub k: usize,
    pub lambda: f64,
    pub rescale_max: f64,
    pub restarts: usize,
    /// `(bands, pixels)` of a generated dataset used instead of `problem.data`.
    pub synthetic: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemConfig,
    pub net: NetSection,
    pub train: TrainConfig,
    pub extract: ExtractConfig,
    pub unmix: UnmixSection,
    pub gradcheck_points: usize,
    pub output_dir: PathBuf,
}

/// Every key of the echo, in output order.
pub const ECHO_KEYS: &[&str] = &[
    "command",
    "problem.builtin",
    "problem.file",
    "problem.data",
    "problem.truth",
    "problem.constraint",
    "problem.domain",
    "problem.form",
    "net.width",
    "net.depth",
    "net.hidden",
    "net.output",
    "net.biases",
    "train.learning_rate",
    "train.steps_per_epoch",
    "train.epochs",
    "train.batch_size",
    "train.seed",
    "train.loss_tolerance",
    "extract.grid",
    "extract.tolerance",
    "extract.epsilon",
    "extract.domination_filter",
    "extract.cluster_radius",
    "unmix.k",
    "unmix.lambda",
    "unmix.rescale_max",
    "unmix.restarts",
    "unmix.synthetic",
    "gradcheck.points",
    "output.dir",
];

const NONE: &str = "none";

/// `1000x1000` or `401`.
pub fn format_grid(grid: &[usize]) -> String {
    grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
}

pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let grid = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("bad grid '{s}', expected e.g. 401 or 1000x1000")))?;
    if grid.contains(&0) {
        return Err(Error::Config(format!("grid '{s}' has a zero axis")));
    }
    Ok(grid)
}

/// `-2:2,-1:1`.
pub fn format_domain(bounds: &[(f64, f64)]) -> String {
    bounds.iter().map(|(lo, hi)| format!("{lo:?}:{hi:?}")).collect::<Vec<_>>().join(",")
}

pub fn parse_domain(s: &str) -> Result<Vec<(f64, f64)>> {
    let bad = || Error::Config(format!("bad domain '{s}', expected e.g. -2:2,-1:1"));
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis.split_once(':').ok_or_else(bad)?;
            let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
            let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
            Ok((lo, hi))
        })
        .collect()
}

fn opt_str<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map_or_else(|| NONE.to_string(), f)
}

fn path_str(p: &Option<PathBuf>) -> String {
    opt_str(p, |p| p.display().to_string())
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_opt_path(v: &str) -> Option<PathBuf> {
    (v != NONE).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn to_echo(&self) -> String {
        let mut s = String::from("# neuropt run configuration\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let p = &self.problem;
        put("command", self.command.to_string());
        put("problem.builtin", opt_str(&p.builtin, Clone::clone));
        put("problem.file", path_str(&p.file));
        put("problem.data", path_str(&p.data));
        put("problem.truth", path_str(&p.truth));
        for c in &p.constraints {
            put("problem.constraint", c.clone());
        }
        put("problem.domain", opt_str(&p.domain, |d| format_domain(d)));
        put("problem.form", p.form.to_string());
        put("net.width", self.net.width.to_string());
        put("net.depth", self.net.depth.to_string());
        put("net.hidden", self.net.hidden.to_string());
        put("net.output", self.net.output.to_string());
        put("net.biases", self.net.biases.to_string());
        let t = &self.train;
        put("train.learning_rate", format!("{:?}", t.learning_rate));
        put("train.steps_per_epoch", t.steps_per_epoch.to_string());
        put("train.epochs", t.epochs.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.seed", t.seed.to_string());
        put("train.loss_tolerance", format!("{:?}", t.loss_tolerance));
        let e = &self.extract;
        put("extract.grid", format_grid(&e.grid));
        put("extract.tolerance", format!("{:?}", e.tolerance));
        put("extract.epsilon", format!("{:?}", e.epsilon));
        put("extract.domination_filter", e.domination_filter.to_string());
        put("extract.cluster_radius", format!("{:?}", e.cluster_radius));
        let u = &self.unmix;
        put("unmix.k", u.k.to_string());
        put("unmix.lambda", format!("{:?}", u.lambda));
        put("unmix.rescale_max", format!("{:?}", u.rescale_max));
        put("unmix.restarts", u.restarts.to_string());
        put("unmix.synthetic", opt_str(&u.synthetic, |(f, n)| format!("{f}x{n}")));
        put("gradcheck.points", self.gradcheck_points.to_string());
        put("output.dir", self.output_dir.display().to_string());
        s
    }

    pub fn from_echo(text: &str) -> Result<RunConfig> {
        let mut values: Vec<(&str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected 'key = value'", idx + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !ECHO_KEYS.contains(&k) {
                return Err(Error::Config(format!("config line {}: unknown key '{k}'", idx + 1)));
            }
            if k != "problem.constraint" && values.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::Config(format!("config line {}: duplicate key '{k}'", idx + 1)));
            }
            values.push((k, v));
        }
        let get = |key: &str| -> Result<&str> {
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("config is missing '{key}'")))
        };
        let num = |key: &str| -> Result<f64> { parse_num(key, get(key)?) };
        let count = |key: &str| -> Result<usize> { parse_num(key, get(key)?) };

        let builtin = get("problem.builtin")?;
        let domain = get("problem.domain")?;
        let synthetic = get("unmix.synthetic")?;
        let synthetic = if synthetic == NONE {
            None
        } else {
            match parse_grid(synthetic)?.as_slice() {
                [f, n] => Some((*f, *n)),
                _ => return Err(Error::Config(format!("unmix.synthetic: expected BANDSxPIXELS, got '{synthetic}'"))),
            }
        };
        Ok(RunConfig {
            command: get("command")?.parse()?,
            problem: ProblemConfig {
                builtin: (builtin != NONE).then(|| builtin.to_string()),
                file: parse_opt_path(get("problem.file")?),
                data: parse_opt_path(get("problem.data")?),
                truth: parse_opt_path(get("problem.truth")?),
                constraints: values
                    .iter()
                    .filter(|(k, _)| *k == "problem.constraint")
                    .map(|(_, v)| v.to_string())
                    .collect(),
                domain: if domain == NONE { None } else { Some(parse_domain(domain)?) },
                form: get("problem.form")?.parse()?,
            },
            net: NetSection {
                width: count("net.width")?,
                depth: count("net.depth")?,
                hidden: get("net.hidden")?.parse()?,
                output: get("net.output")?.parse()?,
                biases: parse_bool("net.biases", get("net.biases")?)?,
            },
            train: TrainConfig {
                learning_rate: num("train.learning_rate")?,
                steps_per_epoch: count("train.steps_per_epoch")?,
                epochs: count("train.epochs")?,
                batch_size: count("train.batch_size")?,
                seed: parse_num("train.seed", get("train.seed")?)?,
                loss_tolerance: num("train.loss_tolerance")?,
            },
            extract: ExtractConfig {
                grid: parse_grid(get("extract.grid")?)?,
                tolerance: num("extract.tolerance")?,
                epsilon: num("extract.epsilon")?,
                domination_filter: parse_bool("extract.domination_filter", get("extract.domination_filter")?)?,
                cluster_radius: num("extract.cluster_radius")?,
            },
            unmix: UnmixSection {
                k: count("unmix.k")?,
                lambda: num("unmix.lambda")?,
                rescale_max: num("unmix.rescale_max")?,
                restarts: count("unmix.restarts")?,
                synthetic,
            },
            gradcheck_points: count("gradcheck.points")?,
            output_dir: PathBuf::from(get("output.dir")?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> RunConfig {
        RunConfig {
            command: Command::Intersect,
            problem: ProblemConfig {
                builtin: Some("parabola-line".into()),
                file: None,
                data: None,
                truth: None,
                constraints: vec!["x<=0".into(), "x>=-1".into()],
                domain: Some(vec![(-2.0, 2.0)]),
                form: HForm::Difference,
            },
            net: NetSection {
                width: 4,
                depth: 4,
                hidden: Activation::Tanh,
                output: Activation::Identity,
                biases: true,
            },
            train: TrainConfig::with_seed(7),
            extract: ExtractConfig {
                grid: vec![401],
                tolerance: 1e-2,
                epsilon: 1e-3,
                domination_filter: true,
                cluster_radius: 0.02,
            },
            unmix: UnmixSection {
                k: 3,
                lambda: 1e-3,
                rescale_max: 0.2,
                restarts: 3,
                synthetic: None,
            },
            gradcheck_points: 100,
            output_dir: PathBuf::from("out"),
        }
    }

    #[test]
    fn echo_round_trip_example() {
        let c = sample();
        let echo = c.to_echo();
        assert!(echo.contains("problem.constraint = x<=0\nproblem.constraint = x>=-1\n"));
        assert!(echo.contains("extract.grid = 401\n"));
        assert_eq!(RunConfig::from_echo(&echo).unwrap(), c);
    }

    #[test]
    fn every_key_is_written() {
        let echo = sample().to_echo();
        for key in ECHO_KEYS {
            assert!(echo.contains(&format!("\n{key} = ")), "{key}");
        }
    }

    #[test]
    fn malformed_echoes_are_rejected() {
        let echo = sample().to_echo();
        assert!(RunConfig::from_echo(&echo.replace("net.width = 4\n", "")).is_err());
        assert!(RunConfig::from_echo(&format!("{echo}net.width = 5\n")).is_err());
        assert!(RunConfig::from_echo(&format!("{echo}net.colour = red\n")).is_err());
        assert!(RunConfig::from_echo(&echo.replace("train.epochs = 10", "train.epochs = ten")).is_err());
        assert!(RunConfig::from_echo(&echo.replace("command = intersect", "command = plot")).is_err());
        assert!(RunConfig::from_echo("command intersect").is_err());
    }

    #[test]
    fn grid_and_domain_syntax() {
        assert_eq!(parse_grid("1000x1000").unwrap(), vec![1000, 1000]);
        assert_eq!(parse_grid("401").unwrap(), vec![401]);
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("3x").is_err());
        assert_eq!(parse_domain("-2:2,-1:1.5").unwrap(), vec![(-2.0, 2.0), (-1.0, 1.5)]);
        assert!(parse_domain("-2..2").is_err());
        assert_eq!(format_domain(&[(-2.0, 2.0)]), "-2.0:2.0");
    }

    fn activation() -> impl Strategy<Value = Activation> {
        prop_oneof![
            Just(Activation::Identity),
            Just(Activation::Tanh),
            Just(Activation::Relu),
            Just(Activation::Softmax)
        ]
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, 1e-12..1.0f64, Just(0.1), Just(1e-300)]
    }

    fn path() -> impl Strategy<Value = Option<PathBuf>> {
        proptest::option::of("[a-z0-9_/.]{1,12}".prop_filter("not the none marker", |s| s != NONE).prop_map(PathBuf::from))
    }

    prop_compose! {
        fn config()(
            command in proptest::sample::select(Command::ALL.to_vec()),
            builtin in proptest::option::of("[a-z0-9-]{1,12}".prop_filter("not none", |s| s != NONE)),
            file in path(), data in path(), truth in path(),
            constraints in proptest::collection::vec("x[0-9]? ?(<=|>=) ?-?[0-9.]{1,4}", 0..4),
            domain in proptest::option::of(proptest::collection::vec((finite(), finite()), 1..4)),
            squared in any::<bool>(),
            width in 1usize..64, depth in 0usize..8,
            hidden in activation(), output in activation(), biases in any::<bool>(),
            lr in finite(), steps in 1usize..5000, epochs in 1usize..50, batch in 1usize..512,
            seed in any::<u64>(), loss_tol in finite(),
            grid in proptest::collection::vec(1usize..2000, 1..4),
            tolerance in finite(), epsilon in finite(), filter in any::<bool>(), radius in finite(),
            k in 1usize..8, lambda in finite(), rescale in finite(), restarts in 1usize..5,
            synthetic in proptest::option::of((1usize..300, 1usize..5000)),
            points in 1usize..500,
            dir in "[a-z0-9_/.]{1,16}",
        ) -> RunConfig {
            RunConfig {
                command,
                problem: ProblemConfig {
                    builtin, file, data, truth, constraints, domain,
                    form: if squared { HForm::SquaredDifference } else { HForm::Difference },
                },
                net: NetSection { width, depth, hidden, output, biases },
                train: TrainConfig {
                    learning_rate: lr, steps_per_epoch: steps, epochs, batch_size: batch, seed, loss_tolerance: loss_tol,
                },
                extract: ExtractConfig { grid, tolerance, epsilon, domination_filter: filter, cluster_radius: radius },
                unmix: UnmixSection { k, lambda, rescale_max: rescale, restarts, synthetic },
                gradcheck_points: points,
                output_dir: PathBuf::from(dir),
            }
        }
    }

    /// Mutations touching each field in turn; every one must show in the echo.
    fn mutations() -> Vec<(&'static str, fn(&mut RunConfig))> {
        vec![
            ("command", |c| c.command = if c.command == Command::Fit { Command::Pareto } else { Command::Fit }),
            ("builtin", |c| c.problem.builtin = Some(format!("{}z", c.problem.builtin.clone().unwrap_or_default()))),
            ("file", |c| c.problem.file = Some(PathBuf::from("changed.txt"))),
            ("data", |c| c.problem.data = Some(PathBuf::from("changed.csv"))),
            ("truth", |c| c.problem.truth = Some(PathBuf::from("changed_truth.csv"))),
            ("constraints", |c| c.problem.constraints.push("x<=9".into())),
            ("domain", |c| c.problem.domain = Some(vec![(-123.0, 321.0)])),
            ("form", |c| {
                c.problem.form = match c.problem.form {
                    HForm::Difference => HForm::SquaredDifference,
                    HForm::SquaredDifference => HForm::Difference,
                }
            }),
            ("width", |c| c.net.width += 1),
            ("depth", |c| c.net.depth += 1),
            ("hidden", |c| c.net.hidden = if c.net.hidden == Activation::Tanh { Activation::Relu } else { Activation::Tanh }),
            ("output", |c| c.net.output = if c.net.output == Activation::Tanh { Activation::Relu } else { Activation::Tanh }),
            ("biases", |c| c.net.biases = !c.net.biases),
            ("learning_rate", |c| c.train.learning_rate = c.train.learning_rate * 2.0 + 1.0),
            ("steps_per_epoch", |c| c.train.steps_per_epoch += 1),
            ("epochs", |c| c.train.epochs += 1),
            ("batch_size", |c| c.train.batch_size += 1),
            ("seed", |c| c.train.seed = c.train.seed.wrapping_add(1)),
            ("loss_tolerance", |c| c.train.loss_tolerance = c.train.loss_tolerance * 2.0 + 1.0),
            ("grid", |c| c.extract.grid.push(3)),
            ("tolerance", |c| c.extract.tolerance = c.extract.tolerance * 2.0 + 1.0),
            ("epsilon", |c| c.extract.epsilon = c.extract.epsilon * 2.0 + 1.0),
            ("domination_filter", |c| c.extract.domination_filter = !c.extract.domination_filter),
            ("cluster_radius", |c| c.extract.cluster_radius = c.extract.cluster_radius * 2.0 + 1.0),
            ("k", |c| c.unmix.k += 1),
            ("lambda", |c| c.unmix.lambda = c.unmix.lambda * 2.0 + 1.0),
            ("rescale_max", |c| c.unmix.rescale_max = c.unmix.rescale_max * 2.0 + 1.0),
            ("restarts", |c| c.unmix.restarts += 1),
            ("synthetic", |c| c.unmix.synthetic = Some(c.unmix.synthetic.map_or((7, 7), |(f, n)| (f + 1, n)))),
            ("gradcheck_points", |c| c.gradcheck_points += 1),
            ("output_dir", |c| c.output_dir.push("sub")),
        ]
    }

    proptest! {
        #[test]
        fn echo_round_trips_exactly(c in config()) {
            let echo = c.to_echo();
            let back = RunConfig::from_echo(&echo).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_echo(), echo);
        }

        #[test]
        fn every_knob_changes_the_echo(c in config()) {
            let echo = c.to_echo();
            for (name, mutate) in mutations() {
                let mut m = c.clone();
                mutate(&mut m);
                prop_assert!(m != c, "mutation {} was a no-op", name);
                prop_assert!(m.to_echo() != echo, "{} is missing from the echo", name);
            }
        }
    }
}
