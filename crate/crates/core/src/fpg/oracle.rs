//! Exhaustive references for small tabular problems.

use super::gradient::analytic_gradient_from_fprimes;
use super::signal::signal_from_log_ratio;
use crate::divergence::{f_divergence, FiniteDistribution, Generator};
use crate::envs::{GoalEnv, TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{Policy, TabularSoftmax};
use crate::scalar::Scalar;
use crate::visitation::{exact_visitation, GoalDensity, VisitationModel};

pub type TabularTrajectory<T> = Trajectory<usize, usize, usize, T>;

/// Every positive-probability trajectory of length `mdp.horizon()` for `goal`, with its probability.
pub fn enumerate_trajectories<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &TabularSoftmax<T>,
    goal: usize,
) -> Result<Vec<(T, TabularTrajectory<T>)>> {
    let table = policy.state_probs(goal)?;
    let horizon = mdp.horizon();
    let mut out = Vec::new();
    let mut stack: Vec<(T, TabularTrajectory<T>)> = mdp
        .initial()
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > T::zero())
        .map(|(s, &p)| {
            (
                p,
                Trajectory {
                    goal,
                    states: vec![s],
                    actions: Vec::new(),
                    behavior_logprobs: Vec::new(),
                    reached: s == goal,
                },
            )
        })
        .collect();
    while let Some((w, traj)) = stack.pop() {
        if traj.actions.len() == horizon {
            out.push((w, traj));
            continue;
        }
        let s = *traj.states.last().expect("non-empty");
        for (a, &pa) in table[s].iter().enumerate() {
            if pa <= T::zero() {
                continue;
            }
            for (s2, &ps) in mdp.next_distribution(s, a).iter().enumerate() {
                if ps <= T::zero() {
                    continue;
                }
                let mut next = traj.clone();
                next.states.push(s2);
                next.actions.push(a);
                next.behavior_logprobs.push(policy.log_prob(&s, &goal, &a)?);
                next.reached |= s2 == goal;
                stack.push((w * pa * ps, next));
            }
        }
    }
    Ok(out)
}

/// Exact undiscounted visitation over `s_1..s_T` for `goal`.
pub fn policy_visitation<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &TabularSoftmax<T>,
    goal: usize,
) -> Result<VisitationModel<T>> {
    exact_visitation(mdp, &policy.state_probs(goal)?, mdp.horizon(), None, false)
}

/// `D_f(p_theta(.; g) || p_g(.; g))` with the exact visitation.
pub fn exact_divergence<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &TabularSoftmax<T>,
    goal: usize,
    goal_density: &GoalDensity<T>,
    generator: Generator,
) -> Result<T> {
    let p = policy_visitation(mdp, policy, goal)?.to_distribution()?;
    f_divergence(generator, &p, &goal_density.distribution(goal)?)
}

/// Exact `grad_theta D_f(p_theta || p_g)` for one goal, by trajectory enumeration.
pub fn exact_gradient<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &TabularSoftmax<T>,
    goal: usize,
    goal_density: &GoalDensity<T>,
    generator: Generator,
) -> Result<Vec<T>> {
    let p = policy_visitation(mdp, policy, goal)?;
    let q = goal_density.distribution(goal)?;
    let trajs = enumerate_trajectories(mdp, policy, goal)?;
    let (weights, trajs): (Vec<T>, Vec<_>) = trajs.into_iter().unzip();
    let probs = p.probs().expect("exact model");
    let fprimes = trajs
        .iter()
        .map(|traj| {
            traj.visited()
                .iter()
                .map(|&s| {
                    let lr = probs[s].ln() - q[s].ln();
                    let v = signal_from_log_ratio(generator, lr);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Signal {
                            state: s.to_string(),
                            detail: format!("{generator} signal with p = {}, p_g = {}", probs[s], q[s]),
                        })
                    }
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    analytic_gradient_from_fprimes(policy, &trajs, &fprimes, Some(&weights), false)
}

/// Exact `grad_theta D_f(p_theta || p_g)` by reverse-mode differentiation of the
/// forward occupancy recursion. Scales to MDPs far too large to enumerate.
pub fn exact_gradient_dp<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &TabularSoftmax<T>,
    goal: usize,
    goal_density: &GoalDensity<T>,
    generator: Generator,
) -> Result<Vec<T>> {
    let table = policy.state_probs(goal)?;
    let horizon = mdp.horizon();
    let model = exact_visitation(mdp, &table, horizon, None, false)?;
    let VisitationModel::Exact { probs, occupancy } = &model else {
        unreachable!("exact_visitation returns an exact model")
    };
    let q = goal_density.distribution(goal)?;
    let (n, n_actions) = (mdp.n_states(), mdp.n_actions());
    let inv_t = T::one() / T::from_usize_lossy(horizon);
    // dD/dp(s); unreachable states never feed back into the gradient
    let c: Vec<T> = (0..n)
        .map(|s| {
            if probs[s] > T::zero() {
                signal_from_log_ratio(generator, probs[s].ln() - q[s].ln()) * inv_t
            } else {
                T::zero()
            }
        })
        .collect();
    // lambda[s] = dD/d occ_t(s), swept backwards from t = T
    let mut lambda = c.clone();
    let mut d_pi = vec![vec![T::zero(); n_actions]; n];
    for t in (0..horizon).rev() {
        let occ = &occupancy[t];
        let mut next_lambda = if t >= 1 { c.clone() } else { vec![T::zero(); n] };
        for s in 0..n {
            for a in 0..n_actions {
                let cont: T = mdp
                    .next_distribution(s, a)
                    .iter()
                    .zip(&lambda)
                    .filter(|(&p, _)| p > T::zero())
                    .map(|(&p, &l)| p * l)
                    .sum();
                d_pi[s][a] += occ[s] * cont;
                next_lambda[s] += table[s][a] * cont;
            }
        }
        lambda = next_lambda;
    }
    let mut grad = vec![T::zero(); policy.num_params()];
    for s in 0..n {
        let mean: T = (0..n_actions).map(|a| table[s][a] * d_pi[s][a]).sum();
        for b in 0..n_actions {
            grad[policy.logit_index(goal, s, b)?] = table[s][b] * (d_pi[s][b] - mean);
        }
    }
    Ok(grad)
}

/// Central finite differences of `objective` with respect to every parameter.
pub fn finite_difference<P, T, F>(policy: &P, step: T, mut objective: F) -> Result<Vec<T>>
where
    P: Policy<T>,
    T: Scalar,
    F: FnMut(&P) -> Result<T>,
{
    let mut probe = policy.clone();
    let n = policy.num_params();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = objective(&probe)?;
        probe.params_mut()[i] = orig - step;
        let down = objective(&probe)?;
        probe.params_mut()[i] = orig;
        out.push((up - down) / (T::c(2.0) * step));
    }
    Ok(out)
}

/// Best value of `objective(visitation)` over all two-action tabular policies whose
/// first-action probabilities lie on the grid `{0, r, 2r, ..., 1}` in every state.
pub fn grid_search<T: Scalar, F>(mdp: &TabularMdp<T>, resolution: f64, mut objective: F) -> Result<(T, Vec<Vec<T>>)>
where
    F: FnMut(&FiniteDistribution<T>) -> T,
{
    if mdp.n_actions() != 2 {
        return Err(Error::Unsupported("grid search covers two-action MDPs".into()));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Domain(format!("grid resolution {resolution} outside (0, 1]")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let n = mdp.n_states();
    let levels = steps + 1;
    let total = levels
        .checked_pow(n as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| Error::Domain("grid too large".into()))?;
    let mut best: Option<(T, Vec<Vec<T>>)> = None;
    let mut table = vec![vec![T::zero(); 2]; n];
    for code in 0..total {
        let mut c = code;
        for row in table.iter_mut() {
            let p0 = T::c((c % levels) as f64 / steps as f64);
            c /= levels;
            row[0] = p0;
            row[1] = T::one() - p0;
        }
        let v = exact_visitation(mdp, &table, mdp.horizon(), None, false)?.to_distribution()?;
        let value = objective(&v);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, table.clone()));
        }
    }
    best.ok_or_else(|| Error::Domain("empty grid".into()))
}
