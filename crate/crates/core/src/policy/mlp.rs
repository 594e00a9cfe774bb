use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActionDistribution, Architecture, Policy, LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Actions are kept strictly inside `(-1, 1)` so `atanh` stays finite.
const SQUASH_BOUND: f64 = 1.0 - 1e-6;

/// Tanh MLP producing the mean of a tanh-squashed diagonal Gaussian.
///
/// Input is `[state, goal] * input_scale`. The log standard deviation is a free
/// per-dimension parameter clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
///
/// Parameter layout: for each layer, weights `[out][in]` row-major then biases,
/// followed by the `action_dim` log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMlp<T> {
    state_dim: usize,
    goal_dim: usize,
    action_dim: usize,
    hidden: Vec<usize>,
    input_scale: Vec<T>,
    params: Vec<T>,
}

struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl<T: Scalar> GaussianMlp<T> {
    /// Orthogonal initialization with gain `sqrt(2)` on hidden layers and `0.01`
    /// on the output layer, zero biases and zero log standard deviations.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        goal_dim: usize,
        action_dim: usize,
        hidden: Vec<usize>,
        input_scale: Option<Vec<f64>>,
        rng: &mut R,
    ) -> Result<Self> {
        if state_dim + goal_dim == 0 || action_dim == 0 || hidden.contains(&0) {
            return Err(Error::Domain("MLP dimensions must be positive".into()));
        }
        let input_dim = state_dim + goal_dim;
        let input_scale = input_scale.unwrap_or_else(|| vec![1.0; input_dim]);
        if input_scale.len() != input_dim {
            return Err(Error::Shape(format!(
                "input scale has {} entries, expected {input_dim}",
                input_scale.len()
            )));
        }
        let arch = Architecture::Mlp {
            state_dim,
            goal_dim,
            action_dim,
            hidden: hidden.clone(),
            activation: "tanh".into(),
            input_scale: input_scale.clone(),
        };
        let mut mlp = Self {
            state_dim,
            goal_dim,
            action_dim,
            hidden,
            input_scale: input_scale.iter().map(|&x| T::c(x)).collect(),
            params: vec![T::zero(); arch.num_params()],
        };
        let layers = mlp.layers();
        let n_layers = layers.len();
        for (i, layer) in layers.iter().enumerate() {
            let gain = if i + 1 == n_layers {
                0.01
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal(layer.fan_out, layer.fan_in, gain, rng);
            for (dst, src) in mlp.params[layer.offset..layer.offset + w.len()].iter_mut().zip(w) {
                *dst = T::c(src);
            }
        }
        Ok(mlp)
    }

    /// Rebuilds a network from a checkpointed architecture.
    pub fn from_architecture(arch: &Architecture, params: Vec<T>) -> Result<Self> {
        let Architecture::Mlp {
            state_dim,
            goal_dim,
            action_dim,
            hidden,
            activation,
            input_scale,
        } = arch
        else {
            return Err(Error::Unsupported("not an MLP architecture".into()));
        };
        if activation != "tanh" {
            return Err(Error::Unsupported(format!("activation `{activation}`")));
        }
        if params.len() != arch.num_params() {
            return Err(Error::Shape("parameter count does not match architecture".into()));
        }
        Ok(Self {
            state_dim: *state_dim,
            goal_dim: *goal_dim,
            action_dim: *action_dim,
            hidden: hidden.clone(),
            input_scale: input_scale.iter().map(|&x| T::c(x)).collect(),
            params,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn layers(&self) -> Vec<Layer> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.state_dim + self.goal_dim;
        let mut offset = 0;
        for &fan_out in self.hidden.iter().chain(std::iter::once(&self.action_dim)) {
            out.push(Layer {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_in * fan_out + fan_out;
            fan_in = fan_out;
        }
        out
    }

    fn log_std_offset(&self) -> usize {
        self.params.len() - self.action_dim
    }

    fn input(&self, state: &[T], goal: &[T]) -> Result<Vec<T>> {
        if state.len() != self.state_dim || goal.len() != self.goal_dim {
            return Err(Error::Shape(format!(
                "MLP expects state/goal dims {}/{}, got {}/{}",
                self.state_dim,
                self.goal_dim,
                state.len(),
                goal.len()
            )));
        }
        Ok(state
            .iter()
            .chain(goal)
            .zip(&self.input_scale)
            .map(|(&x, &s)| x * s)
            .collect())
    }

    /// Activations of every layer; the last entry is the Gaussian mean.
    fn forward(&self, state: &[T], goal: &[T]) -> Result<Vec<Vec<T>>> {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(self.input(state, goal)?);
        for (i, layer) in layers.iter().enumerate() {
            let x = &acts[i];
            let w = &self.params[layer.offset..layer.offset + layer.fan_in * layer.fan_out];
            let b = &self.params[layer.offset + layer.fan_in * layer.fan_out..][..layer.fan_out];
            let last = i + 1 == layers.len();
            let y: Vec<T> = (0..layer.fan_out)
                .map(|j| {
                    let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                    let z = row.iter().zip(x).fold(b[j], |acc, (&wij, &xi)| acc + wij * xi);
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(y);
        }
        let mean = acts.last().expect("output layer");
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("non-finite MLP output".into()));
        }
        Ok(acts)
    }

    /// Backpropagates `d_mean` through the network into `grad`.
    fn backward(&self, acts: &[Vec<T>], d_mean: Vec<T>, grad: &mut [T]) {
        let layers = self.layers();
        let mut delta = d_mean;
        for (i, layer) in layers.iter().enumerate().rev() {
            let x = &acts[i];
            let (gw, rest) = grad[layer.offset..].split_at_mut(layer.fan_in * layer.fan_out);
            for j in 0..layer.fan_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                rest[j] += d;
                for (g, &xi) in gw[j * layer.fan_in..(j + 1) * layer.fan_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if i == 0 {
                break;
            }
            let w = &self.params[layer.offset..layer.offset + layer.fan_in * layer.fan_out];
            let mut prev = vec![T::zero(); layer.fan_in];
            for j in 0..layer.fan_out {
                let d = delta[j];
                if d == T::zero() {
                    continue;
                }
                for (p, &wij) in prev.iter_mut().zip(&w[j * layer.fan_in..(j + 1) * layer.fan_in]) {
                    *p += d * wij;
                }
            }
            // through tanh of the previous layer
            for (p, &a) in prev.iter_mut().zip(&acts[i]) {
                *p *= T::one() - a * a;
            }
            delta = prev;
        }
    }

    fn log_std(&self) -> Vec<T> {
        let (lo, hi) = (T::c(LOG_STD_MIN), T::c(LOG_STD_MAX));
        self.params[self.log_std_offset()..]
            .iter()
            .map(|&s| s.max(lo).min(hi))
            .collect()
    }

    fn squash_bound() -> T {
        T::c(SQUASH_BOUND)
    }

    /// `log pi(a)` given the pre-squash value `u` with `a = tanh(u)`.
    fn log_density(mean: &[T], log_std: &[T], u: &[T]) -> T {
        let half_log_2pi = T::c(0.5 * (2.0 * std::f64::consts::PI).ln());
        let two = T::c(2.0);
        let ln2 = T::LN_2();
        mean.iter()
            .zip(log_std)
            .zip(u)
            .map(|((&m, &s), &ui)| {
                let z = (ui - m) / s.exp();
                // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
                let log_jac = two * (ln2 - ui - softplus(-two * ui));
                -T::c(0.5) * z * z - s - half_log_2pi - log_jac
            })
            .sum()
    }

    fn unsquash(&self, action: &[T]) -> Result<Vec<T>> {
        if action.len() != self.action_dim {
            return Err(Error::Shape(format!(
                "action has {} dims, expected {}",
                action.len(),
                self.action_dim
            )));
        }
        let bound = Self::squash_bound();
        action
            .iter()
            .map(|&a| {
                if !a.is_finite() {
                    return Err(Error::Domain("non-finite action".into()));
                }
                Ok(a.max(-bound).min(bound).atanh())
            })
            .collect()
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is shorter), times `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let transpose = rows > cols;
    let (n, len) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let proj: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let vj = vecs[j].clone();
            vecs[i].iter_mut().zip(&vj).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = vecs[i].iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        vecs[i].iter_mut().for_each(|a| *a /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if transpose { vecs[c][r] } else { vecs[r][c] };
        }
    }
    out
}

impl<T: Scalar> Policy<T> for GaussianMlp<T> {
    type State = Vec<T>;
    type Goal = Vec<T>;
    type Action = Vec<T>;

    fn architecture(&self) -> Architecture {
        Architecture::Mlp {
            state_dim: self.state_dim,
            goal_dim: self.goal_dim,
            action_dim: self.action_dim,
            hidden: self.hidden.clone(),
            activation: "tanh".into(),
            input_scale: self.input_scale.iter().map(|x| x.as_f64()).collect(),
        }
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn distribution(&self, state: &Vec<T>, goal: &Vec<T>) -> Result<ActionDistribution<T>> {
        let acts = self.forward(state, goal)?;
        Ok(ActionDistribution::SquashedGaussian {
            mean: acts.last().cloned().unwrap_or_default(),
            log_std: self.log_std(),
        })
    }

    fn act<R: Rng + ?Sized>(&self, state: &Vec<T>, goal: &Vec<T>, rng: &mut R) -> Result<(Vec<T>, T)> {
        let acts = self.forward(state, goal)?;
        let mean = acts.last().expect("output");
        let log_std = self.log_std();
        let bound = Self::squash_bound();
        let mut u = Vec::with_capacity(self.action_dim);
        let mut action = Vec::with_capacity(self.action_dim);
        for (&m, &s) in mean.iter().zip(&log_std) {
            let xi = T::c(rng.sample::<f64, _>(StandardNormal));
            let a = (m + s.exp() * xi).tanh().max(-bound).min(bound);
            action.push(a);
            u.push(a.atanh());
        }
        let logp = Self::log_density(mean, &log_std, &u);
        if !logp.is_finite() {
            return Err(Error::Numeric("non-finite action log-probability".into()));
        }
        Ok((action, logp))
    }

    fn log_prob(&self, state: &Vec<T>, goal: &Vec<T>, action: &Vec<T>) -> Result<T> {
        let u = self.unsquash(action)?;
        let acts = self.forward(state, goal)?;
        Ok(Self::log_density(acts.last().expect("output"), &self.log_std(), &u))
    }

    fn accumulate_logprob_grad(
        &self,
        state: &Vec<T>,
        goal: &Vec<T>,
        action: &Vec<T>,
        scale: T,
        grad: &mut [T],
    ) -> Result<T> {
        let u = self.unsquash(action)?;
        let acts = self.forward(state, goal)?;
        let mean = acts.last().expect("output");
        let log_std = self.log_std();
        let (lo, hi) = (T::c(LOG_STD_MIN), T::c(LOG_STD_MAX));
        let raw_log_std = &self.params[self.log_std_offset()..];
        let mut d_mean = Vec::with_capacity(self.action_dim);
        let ls_off = self.log_std_offset();
        for i in 0..self.action_dim {
            let inv_var = (-T::c(2.0) * log_std[i]).exp();
            let diff = u[i] - mean[i];
            d_mean.push(scale * diff * inv_var);
            // clamped log-std has zero gradient outside its range
            if raw_log_std[i] > lo && raw_log_std[i] < hi {
                grad[ls_off + i] += scale * (diff * diff * inv_var - T::one());
            }
        }
        self.backward(&acts, d_mean, grad);
        Ok(Self::log_density(mean, &log_std, &u))
    }
}
