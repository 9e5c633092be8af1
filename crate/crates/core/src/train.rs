//! Shared mini-batch AdaMax loop used by every solver.

use crate::autodiff::{AdaMaxConfig, AdaMaxState, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Steps per running-loss window; the early-stop test runs at window ends.
pub const LOSS_WINDOW: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Training stops once the running mean loss falls to or below this.
    pub loss_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            steps_per_epoch: 2000,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            loss_tolerance: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_epoch == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "steps_per_epoch, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.loss_tolerance > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "loss tolerance and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.epochs
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainRecord {
    /// `(step, mean loss over the preceding window)`.
    pub loss_trace: Vec<(usize, f64)>,
    pub steps: usize,
    pub final_loss: f64,
    pub stopped_early: bool,
}

/// Runs AdaMax on `params` for up to `cfg.total_steps()` steps.
///
/// `loss_fn` records a scalar loss on a fresh tape given the parameter leaves;
/// `project` runs after every update (e.g. clipping to a feasible set).
pub fn optimize<L, P>(params: &mut [Matrix], cfg: &TrainConfig, rng: &mut Rng, mut loss_fn: L, mut project: P) -> Result<TrainRecord>
where
    L: FnMut(&mut Tape, &[Var], &mut Rng) -> Result<Var>,
    P: FnMut(&mut [Matrix]),
{
    cfg.validate()?;
    let mut state = AdaMaxState::new(AdaMaxConfig::with_learning_rate(cfg.learning_rate), params);
    let mut record = TrainRecord::default();
    let mut window_sum = 0.0;
    let mut window_len = 0usize;

    for step in 0..cfg.total_steps() {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = loss_fn(&mut tape, &vars, rng)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Diverged { step });
        }
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Matrix> = vars.iter().map(|&v| grads.take(v)).collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        state.step(params, &grads)?;
        project(params);

        window_sum += loss_value;
        window_len += 1;
        record.steps = step + 1;
        if window_len == LOSS_WINDOW || step + 1 == cfg.total_steps() {
            let mean = window_sum / window_len as f64;
            record.loss_trace.push((step + 1, mean));
            record.final_loss = mean;
            window_sum = 0.0;
            window_len = 0;
            if mean <= cfg.loss_tolerance {
                record.stopped_early = step + 1 < cfg.total_steps();
                break;
            }
        }
    }
    Ok(record)
}
