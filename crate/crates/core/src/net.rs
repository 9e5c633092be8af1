//! Compact dense feed-forward networks sized by width `w` and depth `d`.
//!
//! There is deliberately no dropout, normalization or regularizer state:
//! a [`DenseNet`] is its config plus a flat list of weight matrices.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

const MAGIC: &[u8; 8] = b"NOPTNET\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    /// Row-wise softmax; only meaningful on the output layer.
    Softmax,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
            Activation::Softmax => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Relu,
            3 => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Softmax => tape.softmax_rows(x),
        }
    }

    fn apply_in_place(self, m: &mut Matrix) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => m.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => {
                for r in 0..m.rows() {
                    crate::autodiff::tape_softmax(m.row_mut(r));
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub n_in: usize,
    pub width: usize,
    pub depth: usize,
    pub n_out: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub use_biases: bool,
    pub seed: u64,
}

impl NetConfig {
    /// Tanh hidden layers, linear head, biases on.
    pub fn new(n_in: usize, width: usize, depth: usize, n_out: usize, seed: u64) -> Self {
        Self {
            n_in,
            width,
            depth,
            n_out,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
            use_biases: true,
            seed,
        }
    }

    pub fn with_output(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.width == 0 || self.depth == 0 || self.n_out == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive: n_in={}, w={}, d={}, n_out={}",
                self.n_in, self.width, self.depth, self.n_out
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.n_in, self.width)];
        shapes.extend(std::iter::repeat_n((self.width, self.width), self.depth - 1));
        shapes.push((self.width, self.n_out));
        shapes
    }

    pub fn param_count(&self) -> usize {
        let (n, w, d, o) = (self.n_in, self.width, self.depth, self.n_out);
        if self.use_biases {
            (n * w + w) + (d - 1) * (w * w + w) + (w * o + o)
        } else {
            n * w + (d - 1) * w * w + w * o
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    config: NetConfig,
    /// `[W0, b0, W1, b1, ...]`, biases omitted when disabled.
    params: Vec<Matrix>,
}

/// Tape handles for one forward pass.
#[derive(Clone, Debug)]
pub struct NetVars {
    pub params: Vec<Var>,
    pub output: Var,
}

impl DenseNet {
    /// Fresh network with scaled-uniform weights `U(±√(6/(fan_in+fan_out)))`
    /// and zero biases.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let mut params = Vec::new();
        for (fan_in, fan_out) in config.layer_shapes() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.push(Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform(-limit, limit)));
            if config.use_biases {
                params.push(Matrix::zeros(1, fan_out));
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let mut expected = Vec::new();
        for (fan_in, fan_out) in config.layer_shapes() {
            expected.push((fan_in, fan_out));
            if config.use_biases {
                expected.push((1, fan_out));
            }
        }
        if expected.len() != params.len() || expected.iter().zip(&params).any(|(s, p)| *s != p.shape()) {
            return Err(Error::shape(
                "DenseNet::from_params",
                format!(
                    "expected {expected:?}, got {:?}",
                    params.iter().map(Matrix::shape).collect::<Vec<_>>()
                ),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    fn stride(&self) -> usize {
        if self.config.use_biases {
            2
        } else {
            1
        }
    }

    fn n_layers(&self) -> usize {
        self.config.depth + 1
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.n_in {
            return Err(Error::shape(
                "DenseNet::forward",
                format!("input has {cols} columns, network expects {}", self.config.n_in),
            ));
        }
        Ok(())
    }

    /// Inference on a batch (rows = samples).
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch.cols())?;
        let stride = self.stride();
        let mut x = batch.clone();
        for l in 0..self.n_layers() {
            let mut y = x.matmul(&self.params[l * stride])?;
            if self.config.use_biases {
                let b = &self.params[l * stride + 1];
                for r in 0..y.rows() {
                    for (o, bv) in y.row_mut(r).iter_mut().zip(b.as_slice()) {
                        *o += bv;
                    }
                }
            }
            let act = if l + 1 == self.n_layers() {
                self.config.output_activation
            } else {
                self.config.hidden_activation
            };
            act.apply_in_place(&mut y);
            x = y;
        }
        Ok(x)
    }

    /// Forward pass recorded on `tape` with the weights as leaves.
    pub fn forward_tape(&self, tape: &mut Tape, input: Var) -> Result<NetVars> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let output = self.forward_vars(tape, input, &params)?;
        Ok(NetVars { params, output })
    }

    /// Forward pass using caller-supplied parameter nodes (same order as
    /// [`DenseNet::params`]).
    pub fn forward_vars(&self, tape: &mut Tape, input: Var, params: &[Var]) -> Result<Var> {
        self.check_input(tape.value(input).cols())?;
        if params.len() != self.params.len() {
            return Err(Error::shape(
                "DenseNet::forward_vars",
                format!("{} parameter nodes for {} tensors", params.len(), self.params.len()),
            ));
        }
        let stride = self.stride();
        let mut x = input;
        for l in 0..self.n_layers() {
            let mut y = tape.matmul(x, params[l * stride])?;
            if self.config.use_biases {
                y = tape.add_row(y, params[l * stride + 1])?;
            }
            let act = if l + 1 == self.n_layers() {
                self.config.output_activation
            } else {
                self.config.hidden_activation
            };
            x = act.apply_tape(tape, y);
        }
        Ok(x)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [c.n_in, c.width, c.depth, c.n_out] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&[
            c.hidden_activation.code(),
            c.output_activation.code(),
            c.use_biases as u8,
            0,
        ])?;
        w.write_all(&c.seed.to_le_bytes())?;
        for p in &self.params {
            for v in p.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::Data(format!("network file: {msg}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dims: Vec<usize> = (0..4).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<_>>()?;
        let mut flags = [0u8; 4];
        r.read_exact(&mut flags)?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let config = NetConfig {
            n_in: dims[0],
            width: dims[1],
            depth: dims[2],
            n_out: dims[3],
            hidden_activation: Activation::from_code(flags[0]).ok_or_else(|| bad("bad activation"))?,
            output_activation: Activation::from_code(flags[1]).ok_or_else(|| bad("bad activation"))?,
            use_biases: flags[2] != 0,
            seed: u64::from_le_bytes(seed),
        };
        let template = DenseNet::new(config)?;
        let mut params = Vec::with_capacity(template.params.len());
        let mut f64buf = [0u8; 8];
        for p in &template.params {
            let mut data = Vec::with_capacity(p.len());
            for _ in 0..p.len() {
                r.read_exact(&mut f64buf)?;
                data.push(f64::from_le_bytes(f64buf));
            }
            params.push(Matrix::from_vec(p.rows(), p.cols(), data)?);
        }
        DenseNet::from_params(config, params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}
