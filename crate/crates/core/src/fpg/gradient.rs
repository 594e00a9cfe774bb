use rayon::prelude::*;

use super::signal::{state_fprimes, SignalBatch, VisitationSet};
use crate::divergence::Generator;
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::visitation::{GoalDensity, StatePoint};

/// Log-ratio magnitude above which a batch counts as stale.
pub const MAX_LOG_RATIO: f64 = 20.0;

/// Sums per-trajectory gradients in a fixed order so results do not depend on scheduling.
fn ordered_sum<T: Scalar>(parts: Vec<Vec<T>>, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

fn normalized_weights<T: Scalar>(weights: Option<&[T]>, n: usize) -> Result<Vec<T>> {
    match weights {
        None => Ok(vec![T::one() / T::from_usize_lossy(n.max(1)); n]),
        Some(w) if w.len() == n => {
            let total: T = w.iter().copied().sum();
            if !(total > T::zero()) || w.iter().any(|&x| x < T::zero()) {
                return Err(Error::Domain(
                    "trajectory weights must be non-negative with positive sum".into(),
                ));
            }
            Ok(w.iter().map(|&x| x / total).collect())
        }
        Some(w) => Err(Error::Shape(format!("{} weights for {n} trajectories", w.len()))),
    }
}

/// `sum_i w_i / T (sum_t grad log pi(a_t | s_t; g)) (sum_t f'(s_t) - b)`.
///
/// With `weights = None` this is the on-policy Monte Carlo mean; with the exact
/// probabilities of an enumerated trajectory set it is the exact gradient.
/// `subtract_baseline` uses the weighted mean trajectory signal as `b`.
pub fn analytic_gradient_from_fprimes<P, T>(
    policy: &P,
    trajectories: &[Trajectory<P::State, P::Goal, P::Action, T>],
    fprimes: &[Vec<T>],
    weights: Option<&[T]>,
    subtract_baseline: bool,
) -> Result<Vec<T>>
where
    P: Policy<T>,
    P::State: Sync,
    P::Goal: Sync,
    P::Action: Sync,
    T: Scalar,
{
    if fprimes.len() != trajectories.len() {
        return Err(Error::Shape("one signal row per trajectory required".into()));
    }
    let w = normalized_weights(weights, trajectories.len())?;
    let sums: Vec<T> = fprimes.iter().map(|f| f.iter().copied().sum()).collect();
    let baseline = if subtract_baseline {
        sums.iter().zip(&w).map(|(&s, &wi)| s * wi).sum()
    } else {
        T::zero()
    };
    let n = policy.num_params();
    let parts = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, traj)| {
            let mut g = vec![T::zero(); n];
            if traj.is_empty() {
                return Ok(g);
            }
            let scale = w[i] * (sums[i] - baseline) / T::from_usize_lossy(traj.len());
            if scale != T::zero() {
                for t in 0..traj.len() {
                    policy.accumulate_logprob_grad(&traj.states[t], &traj.goal, &traj.actions[t], scale, &mut g)?;
                }
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_sum(parts, n))
}

/// Gradient of `D_f(p_theta || p_g)` from on-policy trajectories and a fitted (or exact) visitation.
pub fn analytic_gradient<P, T>(
    policy: &P,
    trajectories: &[Trajectory<P::State, P::Goal, P::Action, T>],
    weights: Option<&[T]>,
    p_theta: &VisitationSet<T>,
    goal_density: &GoalDensity<T>,
    generator: Generator,
    subtract_baseline: bool,
) -> Result<Vec<T>>
where
    P: Policy<T>,
    P::State: StatePoint<T> + Sync + std::fmt::Debug,
    P::Goal: StatePoint<T> + Sync,
    P::Action: Sync,
    T: Scalar,
{
    let fprimes = state_fprimes(trajectories, p_theta, goal_density, generator)?;
    analytic_gradient_from_fprimes(policy, trajectories, &fprimes, weights, subtract_baseline)
}

/// Gradient for a Dirac goal distribution:
/// `(f'(p_theta(g)) - f'(inf)) / T * mean_i eta_i(g) sum_t grad log pi`.
pub fn dirac_gradient<P, T>(
    policy: &P,
    trajectories: &[Trajectory<P::State, P::Goal, P::Action, T>],
    p_theta_at_goal: T,
    generator: Generator,
) -> Result<Vec<T>>
where
    P: Policy<T>,
    P::State: StatePoint<T> + Sync,
    P::Goal: StatePoint<T> + Sync,
    P::Action: Sync,
    T: Scalar,
{
    let slope = generator.fprime_at_infinity::<T>().ok_or_else(|| {
        Error::UndefinedDivergence(format!(
            "{generator} has no finite f'(inf); clip the goal distribution instead"
        ))
    })?;
    let lead = generator.derivative(p_theta_at_goal)? - slope;
    let n = policy.num_params();
    let n_traj = T::from_usize_lossy(trajectories.len().max(1));
    let parts = trajectories
        .par_iter()
        .map(|traj| {
            let mut g = vec![T::zero(); n];
            let goal = traj
                .goal
                .index()
                .ok_or_else(|| Error::Unsupported("Dirac gradient needs discrete goals".into()))?;
            let eta = traj.visited().iter().filter(|s| s.index() == Some(goal)).count();
            if eta == 0 || traj.is_empty() {
                return Ok(g);
            }
            let scale = lead * T::from_usize_lossy(eta) / (T::from_usize_lossy(traj.len()) * n_traj);
            for t in 0..traj.len() {
                policy.accumulate_logprob_grad(&traj.states[t], &traj.goal, &traj.actions[t], scale, &mut g)?;
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_sum(parts, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateOptions {
    pub clip_eps: f64,
    /// Subtract the batch-mean weight before forming advantages.
    pub subtract_baseline: bool,
    /// Divide advantages by their batch standard deviation.
    pub normalize: bool,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            subtract_baseline: true,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutcome<T> {
    /// Descent direction for the divergence.
    pub grad: Vec<T>,
    /// Mean clipped objective (to be maximized).
    pub objective: T,
    /// Fraction of entries whose clipped branch was selected.
    pub clip_fraction: T,
}

/// Advantages `A = -(F - b)`, optionally normalized; minimizing the weights maximizes `A`.
pub fn advantages<T: Scalar>(signals: &[Vec<T>], opts: &SurrogateOptions) -> Vec<Vec<T>> {
    let n = signals.iter().map(Vec::len).sum::<usize>().max(1);
    let nf = T::from_usize_lossy(n);
    let mean = if opts.subtract_baseline {
        signals.iter().flatten().copied().sum::<T>() / nf
    } else {
        T::zero()
    };
    let mut adv: Vec<Vec<T>> = signals
        .iter()
        .map(|row| row.iter().map(|&f| -(f - mean)).collect())
        .collect();
    if opts.normalize {
        let m = adv.iter().flatten().copied().sum::<T>() / nf;
        let var = adv.iter().flatten().map(|&a| (a - m) * (a - m)).sum::<T>() / nf;
        let scale = T::one() / (var.sqrt() + T::c(1e-8));
        adv.iter_mut().flatten().for_each(|a| *a *= scale);
    }
    adv
}

/// Gradient of the negated mean clipped objective `min(r A, clip(r, 1-eps, 1+eps) A)`,
/// where `r` is the ratio of the current to the behavior probability of each action.
pub fn clipped_surrogate_grad<P, T>(
    policy: &P,
    batch: &SignalBatch<P::State, P::Goal, P::Action, T>,
    opts: &SurrogateOptions,
) -> Result<SurrogateOutcome<T>>
where
    P: Policy<T>,
    P::State: Sync,
    P::Goal: Sync,
    P::Action: Sync,
    T: Scalar,
{
    if !(opts.clip_eps > 0.0 && opts.clip_eps < 1.0) {
        return Err(Error::Config(format!("clip epsilon {} outside (0, 1)", opts.clip_eps)));
    }
    let adv = advantages(&batch.signals, opts);
    let n_entries = T::from_usize_lossy(batch.n_entries().max(1));
    let (lo, hi) = (T::c(1.0 - opts.clip_eps), T::c(1.0 + opts.clip_eps));
    let n = policy.num_params();
    let limit = T::c(MAX_LOG_RATIO);
    let parts = batch
        .trajectories
        .par_iter()
        .zip(&adv)
        .map(|(traj, adv)| {
            let mut g = vec![T::zero(); n];
            let mut objective = T::zero();
            let mut clipped = 0usize;
            for t in 0..traj.len() {
                let lp = policy.log_prob(&traj.states[t], &traj.goal, &traj.actions[t])?;
                let d = lp - traj.behavior_logprobs[t];
                if !(d.abs() <= limit) {
                    return Err(Error::StalePolicy(format!(
                        "log-probability ratio {d} exceeds {MAX_LOG_RATIO}"
                    )));
                }
                let r = d.exp();
                let a = adv[t];
                let plain = r * a;
                let clip = r.max(lo).min(hi) * a;
                if plain <= clip {
                    objective += plain;
                    if plain != T::zero() {
                        policy.accumulate_logprob_grad(
                            &traj.states[t],
                            &traj.goal,
                            &traj.actions[t],
                            -plain / n_entries,
                            &mut g,
                        )?;
                    }
                } else {
                    objective += clip;
                    clipped += 1;
                }
            }
            Ok((g, objective, clipped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut objective = T::zero();
    let mut clipped = 0;
    let mut grads = Vec::with_capacity(parts.len());
    for (g, o, c) in parts {
        objective += o;
        clipped += c;
        grads.push(g);
    }
    Ok(SurrogateOutcome {
        grad: ordered_sum(grads, n),
        objective: objective / n_entries,
        clip_fraction: T::from_usize_lossy(clipped) / n_entries,
    })
}
