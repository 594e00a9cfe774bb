//! Differentiable goal-conditioned stochastic policies.

mod checkpoint;
mod mlp;
mod tabular;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::GaussianMlp;
pub use tabular::TabularSoftmax;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{entropy, Scalar};

/// Bounds applied to per-dimension log standard deviations.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Parameter layout, serialized in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Tabular {
        n_goals: usize,
        n_states: usize,
        n_actions: usize,
    },
    Mlp {
        state_dim: usize,
        goal_dim: usize,
        action_dim: usize,
        hidden: Vec<usize>,
        activation: String,
        input_scale: Vec<f64>,
    },
}

impl Architecture {
    pub fn num_params(&self) -> usize {
        match self {
            Architecture::Tabular {
                n_goals,
                n_states,
                n_actions,
            } => n_goals * n_states * n_actions,
            Architecture::Mlp {
                state_dim,
                goal_dim,
                action_dim,
                hidden,
                ..
            } => {
                let mut fan_in = state_dim + goal_dim;
                let mut n = 0;
                for &h in hidden.iter().chain(std::iter::once(action_dim)) {
                    n += fan_in * h + h;
                    fan_in = h;
                }
                n + action_dim
            }
        }
    }
}

/// `pi(. | s; g)` for one state.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution<T> {
    Categorical(Vec<T>),
    /// Gaussian before the `tanh` squash.
    SquashedGaussian {
        mean: Vec<T>,
        log_std: Vec<T>,
    },
}

impl<T: Scalar> ActionDistribution<T> {
    /// `KL(self || other)`. For squashed Gaussians the bijective squash leaves KL unchanged.
    pub fn kl(&self, other: &Self) -> Result<T> {
        match (self, other) {
            (ActionDistribution::Categorical(p), ActionDistribution::Categorical(q)) if p.len() == q.len() => Ok(p
                .iter()
                .zip(q)
                .filter(|(&pi, _)| pi > T::zero())
                .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(T::c(crate::scalar::LOG_FLOOR)).ln()))
                .sum()),
            (
                ActionDistribution::SquashedGaussian { mean: m1, log_std: s1 },
                ActionDistribution::SquashedGaussian { mean: m2, log_std: s2 },
            ) if m1.len() == m2.len() => {
                let half = T::c(0.5);
                Ok((0..m1.len())
                    .map(|i| {
                        let var1 = (T::c(2.0) * s1[i]).exp();
                        let var2 = (T::c(2.0) * s2[i]).exp();
                        let d = m1[i] - m2[i];
                        s2[i] - s1[i] + (var1 + d * d) / (T::c(2.0) * var2) - half
                    })
                    .sum())
            }
            _ => Err(Error::Shape("KL between incompatible action distributions".into())),
        }
    }

    /// Entropy of the categorical case, or of the pre-squash Gaussian.
    pub fn entropy(&self) -> T {
        match self {
            ActionDistribution::Categorical(p) => entropy(p),
            ActionDistribution::SquashedGaussian { log_std, .. } => {
                let c = T::c(0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln()));
                log_std.iter().map(|&s| c + s).sum()
            }
        }
    }
}

/// A stochastic policy `pi_theta(a | s; g)` over a flat parameter vector.
pub trait Policy<T: Scalar>: Clone + Send + Sync {
    type State;
    type Goal;
    type Action;

    fn architecture(&self) -> Architecture;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn distribution(&self, state: &Self::State, goal: &Self::Goal) -> Result<ActionDistribution<T>>;

    /// Samples an action and returns it with its exact log-probability.
    fn act<R: Rng + ?Sized>(&self, state: &Self::State, goal: &Self::Goal, rng: &mut R) -> Result<(Self::Action, T)>;

    fn log_prob(&self, state: &Self::State, goal: &Self::Goal, action: &Self::Action) -> Result<T>;

    /// Adds `scale * grad_theta log pi(a | s; g)` into `grad` and returns `log pi(a | s; g)`.
    fn accumulate_logprob_grad(
        &self,
        state: &Self::State,
        goal: &Self::Goal,
        action: &Self::Action,
        scale: T,
        grad: &mut [T],
    ) -> Result<T>;

    fn logprob_grad(&self, state: &Self::State, goal: &Self::Goal, action: &Self::Action) -> Result<Vec<T>> {
        let mut grad = vec![T::zero(); self.num_params()];
        self.accumulate_logprob_grad(state, goal, action, T::one(), &mut grad)?;
        Ok(grad)
    }

    fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        self.params_mut().copy_from_slice(params);
        Ok(())
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}
