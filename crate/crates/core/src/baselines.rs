//! Comparison learners: reward-driven clipped policy gradient and tabular soft Q-learning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::Generator;
use crate::envs::{sparse_reward, EnvTrajectory, GoalEnv, Positions, TabularMdp};
use crate::error::{Error, Result};
use crate::fpg::{
    batch_stats, log_densities, optimize, signal_from_log_ratio, Control, IterationMetrics, OptimConfig, SignalBatch,
    SignalMode, TrainingLog, VisitationEstimator,
};
use crate::policy::Policy;
use crate::scalar::{entropy, log_sum_exp, Scalar};
use crate::seeding::{self, stream};
use crate::visitation::{exact_visitation, GoalDensity, StatePoint};

/// Shaping term added (with a weight) to the sparse task reward.
#[derive(Debug, Clone)]
pub enum RewardSpec<T> {
    Sparse,
    /// `-||s - g||^2` on environment positions.
    L2,
    /// `ln p_g(s)`.
    LogGoalDensity(GoalDensity<T>),
    /// `-f'(p(s) / p_g(s))` with `p` fitted on the current batch and held fixed during its updates.
    FklSignal,
}

impl<T> RewardSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            RewardSpec::Sparse => "sparse",
            RewardSpec::L2 => "l2",
            RewardSpec::LogGoalDensity(_) => "log-goal-density",
            RewardSpec::FklSignal => "fkl-signal",
        }
    }
}

/// The shaping term alone for a static reward; `Sparse` returns the task reward.
/// `FklSignal` depends on a fitted density and is computed inside training.
pub fn shaped_reward<E, T>(spec: &RewardSpec<T>, env: &E, next: &E::State, goal: &E::Goal) -> Result<T>
where
    E: Positions<T>,
    E::State: StatePoint<T>,
    E::Goal: StatePoint<T>,
    T: Scalar,
{
    match spec {
        RewardSpec::Sparse => Ok(sparse_reward(env, next, goal)),
        RewardSpec::L2 => {
            let (s, g) = (env.state_position(next), env.goal_position(goal));
            Ok(-s.iter().zip(&g).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>())
        }
        RewardSpec::LogGoalDensity(density) => {
            if density.is_discrete() {
                density.log_density(next, goal)
            } else {
                density.log_density(&env.state_position(next), &env.goal_position(goal))
            }
        }
        RewardSpec::FklSignal => Err(Error::Unsupported(
            "the f-signal reward needs a fitted visitation; use it through ppo_baseline_train".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    /// Weight of the shaping term relative to the sparse reward.
    pub shaping_weight: f64,
    #[serde(flatten)]
    pub optim: OptimConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            shaping_weight: 1.0,
            optim: OptimConfig::default(),
        }
    }
}

/// Clipped policy gradient on reward-to-go `sum_{k>=t} gamma^(k-t) r_k` with
/// `r_t = sparse(s_{t+1}) + w * shaping(s_{t+1})`.
///
/// `estimator` and `goal_density` provide the visitation metrics (and the
/// density for `FklSignal`); they do not affect the other rewards.
pub fn ppo_baseline_train<E, P, T, V, C>(
    env: &E,
    policy: &mut P,
    reward: &RewardSpec<T>,
    config: &PpoConfig,
    estimator: &V,
    goal_density: &GoalDensity<T>,
    seed: u64,
    callback: C,
) -> Result<TrainingLog>
where
    E: Positions<T>,
    E::State: StatePoint<T>,
    E::Goal: StatePoint<T>,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
    V: VisitationEstimator<E::State, E::Goal, E::Action, T>,
    C: FnMut(&IterationMetrics, &P) -> Result<Control>,
{
    if !(config.gamma >= 0.0 && config.gamma <= 1.0) {
        return Err(Error::Config(format!("gamma {} outside [0, 1]", config.gamma)));
    }
    let gamma = T::c(config.gamma);
    let weight = T::c(config.shaping_weight);
    let make_batch = |trajs: Vec<EnvTrajectory<E, T>>| {
        let set = estimator.fit(&trajs)?;
        let logs = log_densities(&trajs, &set, goal_density)?;
        let stats = batch_stats(&trajs, &set, &logs, goal_density, Generator::Fkl);
        let rewards = trajs
            .iter()
            .zip(&logs)
            .map(|(traj, row)| {
                traj.visited()
                    .iter()
                    .zip(row)
                    .map(|(s, &(lp, lq))| {
                        let task = sparse_reward::<T, E>(env, s, &traj.goal);
                        let shaping = match reward {
                            RewardSpec::Sparse => T::zero(),
                            RewardSpec::FklSignal => -signal_from_log_ratio(Generator::Fkl, lp - lq),
                            other => shaped_reward(other, env, s, &traj.goal)?,
                        };
                        let r = task + weight * shaping;
                        if r.is_finite() {
                            Ok(r)
                        } else {
                            Err(Error::Signal {
                                state: format!("{s:?}"),
                                detail: format!("non-finite {} reward", reward.name()),
                            })
                        }
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let signals = rewards
            .iter()
            .map(|r| {
                let mut out = vec![T::zero(); r.len()];
                let mut acc = T::zero();
                for k in (0..r.len()).rev() {
                    acc = r[k] + gamma * acc;
                    out[k] = -acc;
                }
                out
            })
            .collect();
        let per_state = rewards
            .into_iter()
            .map(|r| r.into_iter().map(|x| -x).collect())
            .collect();
        let batch = SignalBatch {
            trajectories: trajs,
            fprimes: per_state,
            signals,
            gamma,
            mode: SignalMode::ReverseCumulative,
        };
        Ok((batch, stats))
    };
    optimize(env, policy, &config.optim, seed, make_batch, callback)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftQConfig {
    pub temperature: f64,
    pub gamma: f64,
    pub lr: f64,
    pub episodes: usize,
    /// Record metrics and a visitation snapshot every this many episodes.
    pub snapshot_every: usize,
}

impl Default for SoftQConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            gamma: 0.99,
            lr: 0.5,
            episodes: 2000,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftQRecord {
    pub episode: usize,
    pub updates: usize,
    pub success_rate: f64,
    pub visitation_entropy: f64,
    pub bellman_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftQResult<T> {
    /// `q[s][a]`.
    pub q: Vec<Vec<T>>,
    pub records: Vec<SoftQRecord>,
    /// `(episode, exact visitation of the Boltzmann policy)`.
    pub snapshots: Vec<(usize, Vec<T>)>,
}

/// Boltzmann policy `pi(a | s) ∝ exp(Q(s, a) / temperature)`.
pub fn boltzmann<T: Scalar>(q: &[Vec<T>], temperature: T) -> Vec<Vec<T>> {
    q.iter()
        .map(|row| {
            let logits: Vec<T> = row.iter().map(|&x| x / temperature).collect();
            let z = log_sum_exp(&logits);
            logits.into_iter().map(|l| (l - z).exp()).collect()
        })
        .collect()
}

fn soft_value<T: Scalar>(row: &[T], temperature: T) -> T {
    let logits: Vec<T> = row.iter().map(|&x| x / temperature).collect();
    temperature * log_sum_exp(&logits)
}

/// Largest soft Bellman residual `|E[r] + gamma E[V(s')] - Q(s, a)|`, with
/// the sparse reward averaged over the goal distribution.
pub fn soft_bellman_residual<T: Scalar>(mdp: &TabularMdp<T>, q: &[Vec<T>], temperature: T, gamma: T) -> T {
    let values: Vec<T> = q.iter().map(|row| soft_value(row, temperature)).collect();
    let goals = mdp.goals().probs();
    let mut worst = T::zero();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let target: T = mdp
                .next_distribution(s, a)
                .iter()
                .enumerate()
                .map(|(s2, &p)| p * (goals[s2] + gamma * values[s2]))
                .sum();
            worst = worst.max((target - q[s][a]).abs());
        }
    }
    worst
}

/// Tabular soft Q-learning on the sparse reward, acting with the Boltzmann policy.
/// The Q table is not goal-conditioned, so this suits single-goal tasks.
pub fn soft_q_train<T: Scalar>(mdp: &TabularMdp<T>, config: &SoftQConfig, seed: u64) -> Result<SoftQResult<T>> {
    if !(config.temperature > 0.0) || !(config.gamma >= 0.0 && config.gamma < 1.0) || !(config.lr > 0.0) {
        return Err(Error::Config(
            "soft-Q needs temperature > 0, gamma in [0, 1), lr > 0".into(),
        ));
    }
    if config.snapshot_every == 0 {
        return Err(Error::Config("snapshot_every must be positive".into()));
    }
    let (alpha, gamma, lr) = (T::c(config.temperature), T::c(config.gamma), T::c(config.lr));
    let mut q = vec![vec![T::zero(); mdp.n_actions()]; mdp.n_states()];
    let mut result = SoftQResult {
        q: Vec::new(),
        records: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut updates = 0usize;
    let mut reached = 0usize;
    let mut window = 0usize;
    for episode in 0..config.episodes {
        let mut rng = seeding::rng(seed, stream::SOFT_Q, episode as u64);
        let goal = mdp.sample_goal(&mut rng);
        let mut s = mdp.sample_initial(&mut rng);
        let mut hit = s == goal;
        for _ in 0..mdp.horizon() {
            let pi = boltzmann(std::slice::from_ref(&q[s]), alpha).remove(0);
            let a = sample_index(&pi, &mut rng);
            let s2 = mdp.step(&s, &a, &mut rng)?;
            let r = sparse_reward::<T, _>(mdp, &s2, &goal);
            let target = r + gamma * soft_value(&q[s2], alpha);
            let old = q[s][a];
            q[s][a] = old + lr * (target - old);
            updates += 1;
            hit |= s2 == goal;
            s = s2;
        }
        reached += usize::from(hit);
        window += 1;
        if (episode + 1) % config.snapshot_every == 0 || episode + 1 == config.episodes {
            let pi = boltzmann(&q, alpha);
            let visit = exact_visitation(mdp, &pi, mdp.horizon(), None, false)?;
            let probs = visit.probs().expect("exact").to_vec();
            result.records.push(SoftQRecord {
                episode: episode + 1,
                updates,
                success_rate: reached as f64 / window as f64,
                visitation_entropy: entropy(&probs).as_f64(),
                bellman_residual: soft_bellman_residual(mdp, &q, alpha, gamma).as_f64(),
            });
            result.snapshots.push((episode + 1, probs));
            reached = 0;
            window = 0;
        }
    }
    result.q = q;
    Ok(result)
}

/// Exact soft value iteration, the fixed point soft Q-learning approaches.
pub fn soft_value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    temperature: T,
    gamma: T,
    tolerance: T,
    max_sweeps: usize,
) -> Result<Vec<Vec<T>>> {
    let mut q = vec![vec![T::zero(); mdp.n_actions()]; mdp.n_states()];
    let goals = mdp.goals().probs().to_vec();
    for _ in 0..max_sweeps {
        let values: Vec<T> = q.iter().map(|row| soft_value(row, temperature)).collect();
        let mut delta = T::zero();
        for (s, row) in q.iter_mut().enumerate() {
            for (a, qa) in row.iter_mut().enumerate() {
                let target: T = mdp
                    .next_distribution(s, a)
                    .iter()
                    .enumerate()
                    .map(|(s2, &p)| p * (goals[s2] + gamma * values[s2]))
                    .sum();
                delta = delta.max((target - *qa).abs());
                *qa = target;
            }
        }
        if delta < tolerance {
            return Ok(q);
        }
    }
    Err(Error::Numeric("soft value iteration did not converge".into()))
}

fn sample_index<T: Scalar, R: Rng + ?Sized>(p: &[T], rng: &mut R) -> usize {
    let mut u = T::c(rng.random::<f64>());
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            return i;
        }
        u -= pi;
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::FiniteDistribution;
    use crate::envs::GridworldRoom;

    fn dirac(i: usize, n: usize) -> FiniteDistribution<f64> {
        FiniteDistribution::dirac(i, n).unwrap()
    }

    #[test]
    fn shaping_examples() {
        let room = GridworldRoom::room(10);
        let g = room.goal_state();
        assert_eq!(shaped_reward::<_, f64>(&RewardSpec::L2, &room, &g, &g).unwrap(), 0.0);
        let other = room.index((g % 20 + 1, g / 20));
        assert_eq!(
            shaped_reward::<_, f64>(&RewardSpec::L2, &room, &other, &g).unwrap(),
            -1.0
        );
        assert_eq!(
            shaped_reward::<_, f64>(&RewardSpec::Sparse, &room, &other, &g).unwrap(),
            0.0
        );
        assert_eq!(
            shaped_reward::<_, f64>(&RewardSpec::Sparse, &room, &g, &g).unwrap(),
            1.0
        );
        let gauss = RewardSpec::LogGoalDensity(GoalDensity::Gaussian { sigma: 2.0 });
        let a = shaped_reward::<_, f64>(&gauss, &room, &other, &g).unwrap();
        let b = shaped_reward::<_, f64>(&gauss, &room, &g, &g).unwrap();
        assert!((a - b + 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_limits() {
        let q = vec![vec![1.0f64, 0.0, -2.0]];
        let hot = boltzmann(&q, 1e6);
        assert!(hot[0].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-5));
        let cold = boltzmann(&q, 1e-3);
        assert!(cold[0][0] > 1.0 - 1e-9);
    }

    #[test]
    fn one_state_fixed_point() {
        // every step lands on the goal: r = 1
        let mdp = TabularMdp::<f64>::deterministic(&[vec![0]], dirac(0, 1), dirac(0, 1), 10).unwrap();
        let q = soft_value_iteration(&mdp, 0.5, 0.9, 1e-12, 10_000).unwrap();
        assert!((q[0][0] - 1.0 / (1.0 - 0.9)).abs() < 1e-9);
        let cfg = SoftQConfig {
            temperature: 0.5,
            gamma: 0.9,
            lr: 0.5,
            episodes: 200,
            snapshot_every: 200,
        };
        let learned = soft_q_train(&mdp, &cfg, 0).unwrap();
        assert!((learned.q[0][0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn residual_vanishes_on_two_state_chain() {
        let mdp = TabularMdp::<f64>::deterministic(&[vec![0, 1], vec![1, 0]], dirac(0, 2), dirac(1, 2), 10).unwrap();
        let cfg = SoftQConfig {
            // warm enough that every state-action pair keeps being tried
            temperature: 5.0,
            gamma: 0.9,
            lr: 0.5,
            episodes: 1000,
            snapshot_every: 100,
        };
        let out = soft_q_train(&mdp, &cfg, 1).unwrap();
        let last = out.records.last().unwrap();
        assert!(last.updates <= 10_000);
        let exact = soft_value_iteration(&mdp, 5.0, 0.9, 1e-12, 10_000).unwrap();
        assert!(last.bellman_residual < 1e-6, "{last:?} {:?} {:?}", out.q, exact);
        assert_eq!(out.snapshots.len(), 10);
    }
}
