use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::Generator;
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::visitation::{GoalDensity, StatePoint, VisitationModel};

/// How per-state derivatives `f'(s_t)` become per-action weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SignalMode {
    /// Action `a_{t-1}` is weighted by `sum_{t'=t..T} gamma^t' f'(s_t')`.
    #[default]
    ReverseCumulative,
    /// Every action is weighted by the undiscounted trajectory sum.
    FullSum,
    /// Action `a_{t-1}` is weighted by `gamma^(t-1) sum_{t'=1..T} gamma^t' f'(s_t')`.
    DiscountedGrad,
}

impl std::str::FromStr for SignalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse-cumulative" => Ok(SignalMode::ReverseCumulative),
            "full-sum" => Ok(SignalMode::FullSum),
            "discounted-grad" => Ok(SignalMode::DiscountedGrad),
            other => Err(Error::Config(format!("unknown signal mode `{other}`"))),
        }
    }
}

/// `f'(exp(log_ratio))`, evaluated without forming the ratio where that would overflow.
pub fn signal_from_log_ratio<T: Scalar>(generator: Generator, log_ratio: T) -> T {
    let half = T::c(0.5);
    match generator {
        Generator::Fkl => T::one() + log_ratio,
        Generator::Rkl => -(-log_ratio).exp(),
        Generator::Js => {
            // ln(2u / (1 + u)) = ln 2 - softplus(-ln u)
            let x = -log_ratio;
            let softplus = if x > T::zero() {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            };
            T::LN_2() - softplus
        }
        Generator::ChiSq => log_ratio.exp() - T::one(),
        Generator::Tv => {
            if log_ratio > T::zero() {
                half
            } else if log_ratio < T::zero() {
                -half
            } else {
                T::zero()
            }
        }
    }
}

/// Fitted visitation models plus the model each trajectory is scored against.
#[derive(Debug, Clone)]
pub struct VisitationSet<T> {
    models: Vec<VisitationModel<T>>,
    assignment: Vec<usize>,
}

impl<T: Scalar> VisitationSet<T> {
    pub fn shared(model: VisitationModel<T>, n_trajectories: usize) -> Self {
        Self {
            models: vec![model],
            assignment: vec![0; n_trajectories],
        }
    }

    pub fn per_trajectory(models: Vec<VisitationModel<T>>) -> Self {
        let assignment = (0..models.len()).collect();
        Self { models, assignment }
    }

    pub fn new(models: Vec<VisitationModel<T>>, assignment: Vec<usize>) -> Result<Self> {
        if assignment.iter().any(|&m| m >= models.len()) {
            return Err(Error::Shape("trajectory assigned to a missing model".into()));
        }
        Ok(Self { models, assignment })
    }

    pub fn models(&self) -> &[VisitationModel<T>] {
        &self.models
    }

    pub fn model_for(&self, trajectory: usize) -> Result<&VisitationModel<T>> {
        self.assignment
            .get(trajectory)
            .map(|&m| &self.models[m])
            .ok_or_else(|| Error::Shape(format!("no visitation model for trajectory {trajectory}")))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// `(ln p_theta(s_t), ln p_g(s_t))` for `t = 1..=T` of every trajectory.
pub fn log_densities<S, G, A, T>(
    trajectories: &[Trajectory<S, G, A, T>],
    visitation: &VisitationSet<T>,
    goal_density: &GoalDensity<T>,
) -> Result<Vec<Vec<(T, T)>>>
where
    S: StatePoint<T> + Sync,
    G: StatePoint<T> + Sync,
    A: Sync,
    T: Scalar,
{
    if visitation.len() != trajectories.len() {
        return Err(Error::Shape(format!(
            "{} trajectories but {} visitation assignments",
            trajectories.len(),
            visitation.len()
        )));
    }
    trajectories
        .par_iter()
        .enumerate()
        .map(|(i, traj)| {
            let model = visitation.model_for(i)?;
            traj.visited()
                .iter()
                .map(|s| Ok((model.log_density(s)?, goal_density.log_density(s, &traj.goal)?)))
                .collect()
        })
        .collect()
}

/// `f'(p_theta(s_t) / p_g(s_t))` for `t = 1..=T` of every trajectory.
pub fn state_fprimes<S, G, A, T>(
    trajectories: &[Trajectory<S, G, A, T>],
    visitation: &VisitationSet<T>,
    goal_density: &GoalDensity<T>,
    generator: Generator,
) -> Result<Vec<Vec<T>>>
where
    S: StatePoint<T> + Sync + std::fmt::Debug,
    G: StatePoint<T> + Sync,
    A: Sync,
    T: Scalar,
{
    let logs = log_densities(trajectories, visitation, goal_density)?;
    fprimes_from_logs(trajectories, &logs, generator)
}

pub(crate) fn fprimes_from_logs<S, G, A, T>(
    trajectories: &[Trajectory<S, G, A, T>],
    logs: &[Vec<(T, T)>],
    generator: Generator,
) -> Result<Vec<Vec<T>>>
where
    S: std::fmt::Debug,
    T: Scalar,
{
    logs.iter()
        .zip(trajectories)
        .map(|(row, traj)| {
            row.iter()
                .zip(traj.visited())
                .map(|(&(lp, lq), s)| {
                    let v = signal_from_log_ratio(generator, lp - lq);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Signal {
                            state: format!("{s:?}"),
                            detail: format!("{generator} signal with ln p = {lp}, ln p_g = {lq}"),
                        })
                    }
                })
                .collect()
        })
        .collect()
}

/// Weights for the clipped surrogate, one per action, plus the per-state values they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch<S, G, A, T> {
    pub trajectories: Vec<Trajectory<S, G, A, T>>,
    /// Per-state signal at `s_1..s_T`.
    pub fprimes: Vec<Vec<T>>,
    /// `signals[i][t]` weights action `a_t` of trajectory `i`.
    pub signals: Vec<Vec<T>>,
    pub gamma: T,
    pub mode: SignalMode,
}

impl<S, G, A, T: Scalar> SignalBatch<S, G, A, T> {
    pub fn from_fprimes(
        trajectories: Vec<Trajectory<S, G, A, T>>,
        fprimes: Vec<Vec<T>>,
        gamma: T,
        mode: SignalMode,
    ) -> Result<Self> {
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(Error::Domain(format!("discount {gamma} outside [0, 1]")));
        }
        if fprimes.len() != trajectories.len() || fprimes.iter().zip(&trajectories).any(|(f, t)| f.len() != t.len()) {
            return Err(Error::Shape("one signal per visited state required".into()));
        }
        let signals = fprimes.iter().map(|f| accumulate(f, gamma, mode)).collect();
        Ok(Self {
            trajectories,
            fprimes,
            signals,
            gamma,
            mode,
        })
    }

    pub fn n_entries(&self) -> usize {
        self.signals.iter().map(Vec::len).sum()
    }

    /// Mean per-state signal over the batch.
    pub fn mean_fprime(&self) -> T {
        let n = self.fprimes.iter().map(Vec::len).sum::<usize>().max(1);
        self.fprimes.iter().flatten().copied().sum::<T>() / T::from_usize_lossy(n)
    }

    /// Largest deviation between stored weights and weights recomputed from `fprimes`.
    pub fn max_recompute_error(&self) -> T {
        self.fprimes
            .iter()
            .zip(&self.signals)
            .flat_map(|(f, s)| {
                accumulate(f, self.gamma, self.mode)
                    .into_iter()
                    .zip(s.iter().copied())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(T::zero(), T::max)
    }
}

fn accumulate<T: Scalar>(fprimes: &[T], gamma: T, mode: SignalMode) -> Vec<T> {
    let n = fprimes.len();
    // discount exponents are absolute times t' = 1..=T
    let discount = |t: usize| gamma.powi(t as i32);
    match mode {
        SignalMode::ReverseCumulative => {
            let mut out = vec![T::zero(); n];
            let mut acc = T::zero();
            for k in (0..n).rev() {
                acc += discount(k + 1) * fprimes[k];
                out[k] = acc;
            }
            out
        }
        SignalMode::FullSum => vec![fprimes.iter().copied().sum(); n],
        SignalMode::DiscountedGrad => {
            let total: T = fprimes.iter().enumerate().map(|(k, &f)| discount(k + 1) * f).sum();
            (0..n).map(|k| discount(k) * total).collect()
        }
    }
}

/// Computes per-state signals from the fitted densities and accumulates them into weights.
pub fn build_signal_batch<S, G, A, T>(
    trajectories: Vec<Trajectory<S, G, A, T>>,
    p_prev: &VisitationSet<T>,
    goal_density: &GoalDensity<T>,
    generator: Generator,
    gamma: T,
    mode: SignalMode,
) -> Result<SignalBatch<S, G, A, T>>
where
    S: StatePoint<T> + Sync + std::fmt::Debug,
    G: StatePoint<T> + Sync,
    A: Sync,
    T: Scalar,
{
    let fprimes = state_fprimes(&trajectories, p_prev, goal_density, generator)?;
    SignalBatch::from_fprimes(trajectories, fprimes, gamma, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize) -> Trajectory<usize, usize, usize, f64> {
        Trajectory {
            goal: 0,
            states: vec![0; n + 1],
            actions: vec![0; n],
            behavior_logprobs: vec![0.0; n],
            reached: true,
        }
    }

    #[test]
    fn log_ratio_form_matches_derivative() {
        for g in Generator::ALL {
            for &u in &[1e-3, 0.2, 0.9, 1.3, 7.0, 400.0] {
                let direct: f64 = g.derivative(u).unwrap();
                let stable = signal_from_log_ratio(g, f64::ln(u));
                assert!((direct - stable).abs() <= 1e-12 * direct.abs().max(1.0), "{g} {u}");
            }
        }
        // saturating tails stay finite
        assert!(signal_from_log_ratio(Generator::Js, 800.0f64).is_finite());
        assert!(signal_from_log_ratio(Generator::Rkl, 800.0f64).is_finite());
    }

    #[test]
    fn cumulative_examples() {
        let b =
            SignalBatch::from_fprimes(vec![traj(2)], vec![vec![2.0, 5.0]], 1.0, SignalMode::ReverseCumulative).unwrap();
        assert_eq!(b.signals[0], vec![7.0, 5.0]);
        let c = 1.5;
        let b = SignalBatch::from_fprimes(vec![traj(3)], vec![vec![c; 3]], 0.9, SignalMode::ReverseCumulative).unwrap();
        assert!((b.signals[0][0] - c * (0.9 + 0.81 + 0.729)).abs() < 1e-12);
        let b = SignalBatch::from_fprimes(
            vec![traj(3)],
            vec![vec![1.0, 2.0, 3.0]],
            0.0,
            SignalMode::ReverseCumulative,
        )
        .unwrap();
        // gamma^t' with t' >= 1 vanishes when gamma = 0
        assert_eq!(b.signals[0], vec![0.0; 3]);
        let b = SignalBatch::from_fprimes(vec![traj(3)], vec![vec![1.0, 2.0, 3.0]], 0.5, SignalMode::FullSum).unwrap();
        assert_eq!(b.signals[0], vec![6.0; 3]);
        let b =
            SignalBatch::from_fprimes(vec![traj(2)], vec![vec![1.0, 2.0]], 0.5, SignalMode::DiscountedGrad).unwrap();
        assert_eq!(b.signals[0], vec![1.0, 0.5]);
        assert_eq!(b.max_recompute_error(), 0.0);
    }

    #[test]
    fn shape_and_range_checks() {
        assert!(SignalBatch::from_fprimes(vec![traj(2)], vec![vec![1.0]], 0.5, SignalMode::FullSum).is_err());
        assert!(SignalBatch::from_fprimes(vec![traj(1)], vec![vec![1.0]], 1.5, SignalMode::FullSum).is_err());
    }

    #[test]
    fn unvisited_fkl_signal_is_reported() {
        use crate::visitation::histogram_from_counts;
        let model = histogram_from_counts::<f64>(vec![0, 4], 0.0).unwrap();
        let set = VisitationSet::shared(model, 1);
        let mut t = traj(1);
        t.states = vec![1, 0];
        let err = state_fprimes(&[t], &set, &GoalDensity::clipped_dirac(2), Generator::Fkl).unwrap_err();
        assert!(matches!(err, Error::Signal { ref state, .. } if state == "0"));
    }
}
