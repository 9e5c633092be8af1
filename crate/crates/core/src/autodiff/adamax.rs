use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaMaxConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Floor on the infinity-norm accumulator in the update denominator.
    pub epsilon_guard: f64,
}

impl Default for AdaMaxConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_guard: 1e-8,
        }
    }
}

impl AdaMaxConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// AdaMax moments for a list of parameter tensors.
///
/// `t` is a plain counter; overflow after `u64::MAX` steps is not handled.
#[derive(Clone, Debug)]
pub struct AdaMaxState {
    pub config: AdaMaxConfig,
    pub t: u64,
    pub m: Vec<Matrix>,
    pub u: Vec<Matrix>,
}

impl AdaMaxState {
    pub fn new(config: AdaMaxConfig, params: &[Matrix]) -> Self {
        Self {
            config,
            t: 0,
            m: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            u: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        }
    }

    /// One in-place update of every tensor in `params`.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adamax",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            p.check_same_shape(g, "adamax")?;
            p.check_same_shape(m, "adamax")?;
        }
        self.t += 1;
        let AdaMaxConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon_guard,
        } = self.config;
        let step_size = learning_rate / (1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32));
        for ((p, g), (m, u)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.u.iter_mut()))
        {
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(u.as_mut_slice()));
            for ((theta, &gi), (mi, ui)) in it {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *ui = (beta2 * *ui).max(gi.abs());
                *theta -= step_size * *mi / ui.max(epsilon_guard);
            }
        }
        Ok(())
    }
}

/// Functional single-tensor form of [`AdaMaxState::step`].
pub fn adamax_step(params: &Matrix, grads: &Matrix, state: &AdaMaxState) -> Result<(Matrix, AdaMaxState)> {
    let mut next = state.clone();
    let mut p = [params.clone()];
    next.step(&mut p, std::slice::from_ref(grads))?;
    let [p] = p;
    Ok((p, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> AdaMaxState {
        AdaMaxState::new(AdaMaxConfig::default(), &[Matrix::zeros(1, 1)])
    }

    #[test]
    fn single_step_hand_value() {
        let (p, s) = adamax_step(&Matrix::scalar(0.0), &Matrix::scalar(1.0), &fresh()).unwrap();
        assert!((p.item() - -0.001).abs() <= 1e-12);
        assert_eq!(s.t, 1);
        assert!((s.m[0].item() - 0.1).abs() < 1e-15);
        assert_eq!(s.u[0].item(), 1.0);
    }

    #[test]
    fn two_steps_hand_value() {
        let (p, s) = adamax_step(&Matrix::scalar(0.0), &Matrix::scalar(1.0), &fresh()).unwrap();
        let (p, s) = adamax_step(&p, &Matrix::scalar(1.0), &s).unwrap();
        let want = -0.001 - 0.001 * (1.0 / (1.0 - 0.81)) * 0.19 / 1.0;
        assert!((p.item() - want).abs() <= 1e-12);
        assert_eq!(s.t, 2);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let theta = Matrix::from_rows(&[vec![0.5, -2.0]]).unwrap();
        let state = AdaMaxState::new(AdaMaxConfig::default(), std::slice::from_ref(&theta));
        let (p, _) = adamax_step(&theta, &Matrix::zeros(1, 2), &state).unwrap();
        assert_eq!(p, theta);
    }

    #[test]
    fn infinity_norm_ignores_sign() {
        let s0 = fresh();
        let (_, a) = adamax_step(&Matrix::scalar(0.0), &Matrix::scalar(0.7), &s0).unwrap();
        let (_, b) = adamax_step(&Matrix::scalar(0.0), &Matrix::scalar(-0.7), &s0).unwrap();
        assert_eq!(a.u[0], b.u[0]);
    }

    #[test]
    fn shape_mismatch() {
        let s = fresh();
        assert!(adamax_step(&Matrix::zeros(2, 1), &Matrix::zeros(2, 1), &s).is_err());
        assert!(adamax_step(&Matrix::zeros(1, 1), &Matrix::zeros(2, 1), &s).is_err());
    }
}
