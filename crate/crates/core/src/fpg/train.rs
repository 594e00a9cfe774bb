use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gradient::{clipped_surrogate_grad, SurrogateOptions};
use super::oracle::exact_gradient_dp;
use super::signal::{fprimes_from_logs, log_densities, SignalBatch, SignalMode, VisitationSet};
use crate::divergence::{f_divergence, Generator};
use crate::envs::{collect_rollouts, EnvTrajectory, GoalEnv, TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::policy::{ActionDistribution, Policy, TabularSoftmax};
use crate::scalar::Scalar;
use crate::seeding::{self, stream};
use crate::visitation::{fit_histogram, BandwidthRule, GoalDensity, Kde, StatePoint, VisitationModel};

/// Optimizer and batching settings shared by every surrogate-based learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Linearly decay the learning rate to zero over `iterations`.
    pub anneal_lr: bool,
    pub clip_eps: f64,
    /// Surrogate gradient steps per batch.
    pub epochs: usize,
    pub trajectories_per_iter: usize,
    pub iterations: usize,
    /// Stop once this many gradient steps have been applied.
    pub max_updates: Option<usize>,
    pub subtract_baseline: bool,
    pub normalize_advantages: bool,
    /// Reject a step whose mean `KL(pi_old || pi_new)` over batch states exceeds this.
    pub kl_limit: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 3e-4,
            anneal_lr: false,
            clip_eps: 0.2,
            epochs: 10,
            trajectories_per_iter: 32,
            iterations: 100,
            max_updates: None,
            subtract_baseline: true,
            normalize_advantages: false,
            kl_limit: Some(0.05),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip_eps {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.trajectories_per_iter == 0 || self.iterations == 0 {
            return Err(Error::Config(
                "epochs, trajectories and iterations must be positive".into(),
            ));
        }
        if self.kl_limit.is_some_and(|k| !(k > 0.0)) {
            return Err(Error::Config("kl_limit must be positive".into()));
        }
        Ok(())
    }

    fn surrogate(&self) -> SurrogateOptions {
        SurrogateOptions {
            clip_eps: self.clip_eps,
            subtract_baseline: self.subtract_baseline,
            normalize: self.normalize_advantages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpgConfig {
    pub generator: Generator,
    pub gamma: f64,
    pub signal_mode: SignalMode,
    #[serde(flatten)]
    pub optim: OptimConfig,
}

impl Default for FpgConfig {
    fn default() -> Self {
        Self {
            generator: Generator::Fkl,
            gamma: 0.99,
            signal_mode: SignalMode::ReverseCumulative,
            optim: OptimConfig::default(),
        }
    }
}

impl FpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) && !(self.gamma == 1.0 && self.signal_mode == SignalMode::FullSum) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        self.optim.validate()
    }
}

/// One record per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Gradient steps applied so far, including this iteration's.
    pub policy_updates: usize,
    /// Fraction of this iteration's batch that reached its goal.
    pub success_rate: f64,
    pub fdiv_estimate: f64,
    pub visitation_entropy: f64,
    pub mean_signal: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    /// Set when a step was rejected by the KL guard or a stale-ratio check.
    pub early_stop: bool,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<IterationMetrics>,
    pub policy_updates: usize,
}

/// Per-batch statistics reported alongside the signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub fdiv_estimate: f64,
    pub visitation_entropy: f64,
}

/// Continue or stop after an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

type Batch<E, T> = SignalBatch<<E as GoalEnv>::State, <E as GoalEnv>::Goal, <E as GoalEnv>::Action, T>;

/// Collect, score, then take up to `epochs` clipped-surrogate steps, once per iteration.
pub(crate) fn optimize<E, P, T, B, C>(
    env: &E,
    policy: &mut P,
    optim: &OptimConfig,
    seed: u64,
    mut make_batch: B,
    mut callback: C,
) -> Result<TrainingLog>
where
    E: GoalEnv,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
    B: FnMut(Vec<EnvTrajectory<E, T>>) -> Result<(Batch<E, T>, BatchStats)>,
    C: FnMut(&IterationMetrics, &P) -> Result<Control>,
{
    optim.validate()?;
    let start = Instant::now();
    let mut opt = Optimizer::new(optim.optimizer, T::c(optim.lr), policy.num_params());
    let surrogate = optim.surrogate();
    let mut log = TrainingLog::default();
    for iteration in 0..optim.iterations {
        if optim.anneal_lr {
            let frac = 1.0 - iteration as f64 / optim.iterations as f64;
            opt.set_lr(T::c(optim.lr * frac));
        }
        let batch_seed = seeding::derive(seed, stream::ROLLOUT, iteration as u64);
        let trajs = collect_rollouts(env, &*policy, optim.trajectories_per_iter, batch_seed, stream::ROLLOUT)?;
        let success = trajs.iter().filter(|t| t.reached).count() as f64 / trajs.len() as f64;
        let (batch, stats) = make_batch(trajs)?;
        let old = behavior_distributions(&*policy, &batch)?;
        let mut mean_kl = 0.0;
        let mut clip_fraction = 0.0;
        let mut early_stop = false;
        for _ in 0..optim.epochs {
            if optim.max_updates.is_some_and(|m| log.policy_updates >= m) {
                break;
            }
            let out = match clipped_surrogate_grad(&*policy, &batch, &surrogate) {
                Ok(out) => out,
                Err(Error::StalePolicy(_)) => {
                    early_stop = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if !out.objective.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite surrogate at iteration {iteration}: mean signal {}, parameter norm {}",
                    batch.mean_fprime(),
                    crate::scalar::norm(policy.params())
                )));
            }
            let saved = policy.params().to_vec();
            opt.step(policy.params_mut(), &out.grad)?;
            let kl = mean_kl_from(&*policy, &batch, &old)?;
            if optim.kl_limit.is_some_and(|limit| kl > limit) {
                policy.params_mut().copy_from_slice(&saved);
                early_stop = true;
                break;
            }
            mean_kl = kl;
            clip_fraction = out.clip_fraction.as_f64();
            log.policy_updates += 1;
        }
        let record = IterationMetrics {
            iteration,
            policy_updates: log.policy_updates,
            success_rate: success,
            fdiv_estimate: stats.fdiv_estimate,
            visitation_entropy: stats.visitation_entropy,
            mean_signal: batch.mean_fprime().as_f64(),
            mean_kl,
            clip_fraction,
            early_stop,
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        let control = callback(&record, &*policy)?;
        log.records.push(record);
        if control == Control::Stop || optim.max_updates.is_some_and(|m| log.policy_updates >= m) {
            break;
        }
    }
    Ok(log)
}

fn behavior_distributions<P, T>(
    policy: &P,
    batch: &SignalBatch<P::State, P::Goal, P::Action, T>,
) -> Result<Vec<Vec<ActionDistribution<T>>>>
where
    P: Policy<T>,
    T: Scalar,
{
    batch
        .trajectories
        .iter()
        .map(|traj| {
            (0..traj.len())
                .map(|t| policy.distribution(&traj.states[t], &traj.goal))
                .collect()
        })
        .collect()
}

fn mean_kl_from<P, T>(
    policy: &P,
    batch: &SignalBatch<P::State, P::Goal, P::Action, T>,
    old: &[Vec<ActionDistribution<T>>],
) -> Result<f64>
where
    P: Policy<T>,
    T: Scalar,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for (traj, old_row) in batch.trajectories.iter().zip(old) {
        for (t, o) in old_row.iter().enumerate() {
            total += o.kl(&policy.distribution(&traj.states[t], &traj.goal)?)?.as_f64();
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Fits `p_theta` from one batch of trajectories.
pub trait VisitationEstimator<S, G, A, T>: Sync {
    fn fit(&self, trajectories: &[Trajectory<S, G, A, T>]) -> Result<VisitationSet<T>>;
}

/// Smoothed visit counts over `n_states`, shared by the batch or grouped by goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEstimator {
    pub n_states: usize,
    pub smoothing: f64,
    pub include_initial: bool,
    pub by_goal: bool,
}

impl HistogramEstimator {
    pub fn new(n_states: usize) -> Self {
        Self {
            n_states,
            smoothing: 0.0,
            include_initial: false,
            by_goal: false,
        }
    }
}

impl<G, A, T> VisitationEstimator<usize, G, A, T> for HistogramEstimator
where
    G: StatePoint<T> + Sync,
    A: Sync,
    T: Scalar,
{
    fn fit(&self, trajectories: &[Trajectory<usize, G, A, T>]) -> Result<VisitationSet<T>> {
        let smoothing = T::c(self.smoothing);
        if !self.by_goal {
            let model = fit_histogram(trajectories, self.n_states, smoothing, self.include_initial)?;
            return Ok(VisitationSet::shared(model, trajectories.len()));
        }
        let mut groups: Vec<usize> = Vec::new();
        let mut assignment = Vec::with_capacity(trajectories.len());
        for traj in trajectories {
            let g = traj
                .goal
                .index()
                .ok_or_else(|| Error::Unsupported("grouping by goal needs discrete goals".into()))?;
            let slot = groups.iter().position(|&x| x == g).unwrap_or_else(|| {
                groups.push(g);
                groups.len() - 1
            });
            assignment.push(slot);
        }
        let models = (0..groups.len())
            .map(|k| {
                let members = trajectories
                    .iter()
                    .zip(&assignment)
                    .filter(|(_, &a)| a == k)
                    .map(|(t, _)| t);
                fit_histogram(members, self.n_states, smoothing, self.include_initial)
            })
            .collect::<Result<Vec<_>>>()?;
        VisitationSet::new(models, assignment)
    }
}

/// Gaussian KDE over the first `dims` state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimator {
    pub dims: usize,
    pub rule: BandwidthRule,
    pub include_initial: bool,
    /// One density per trajectory (each trajectory has its own goal) instead of one per batch.
    pub per_trajectory: bool,
}

impl<G, A, T> VisitationEstimator<Vec<T>, G, A, T> for KdeEstimator
where
    G: Sync,
    A: Sync,
    T: Scalar,
{
    fn fit(&self, trajectories: &[Trajectory<Vec<T>, G, A, T>]) -> Result<VisitationSet<T>> {
        let points = |traj: &Trajectory<Vec<T>, G, A, T>| -> Vec<Vec<T>> {
            let states = if self.include_initial {
                &traj.states[..]
            } else {
                traj.visited()
            };
            states.to_vec()
        };
        if self.per_trajectory {
            use rayon::prelude::*;
            let models = trajectories
                .par_iter()
                .map(|traj| {
                    let pts = points(traj);
                    Kde::fit(pts.iter().map(Vec::as_slice), self.dims, &self.rule).map(VisitationModel::Kde)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VisitationSet::per_trajectory(models))
        } else {
            let pts: Vec<Vec<T>> = trajectories.iter().flat_map(points).collect();
            let kde = Kde::fit(pts.iter().map(Vec::as_slice), self.dims, &self.rule)?;
            Ok(VisitationSet::shared(VisitationModel::Kde(kde), trajectories.len()))
        }
    }
}

/// Entropy and divergence summaries of a fitted batch.
///
/// Discrete models report exact values against the discrete goal table; densities
/// use sample averages `-E[ln p]` and `E_p[f(u) / u]` with `u = p / p_g`.
pub(crate) fn batch_stats<S, G, A, T>(
    trajectories: &[Trajectory<S, G, A, T>],
    set: &VisitationSet<T>,
    logs: &[Vec<(T, T)>],
    goal_density: &GoalDensity<T>,
    generator: Generator,
) -> BatchStats
where
    G: StatePoint<T>,
    T: Scalar,
{
    let n = trajectories.len().max(1) as f64;
    let mut entropy = 0.0;
    let mut fdiv = 0.0;
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let model = set.model_for(i).expect("assignment checked by log_densities");
        let exact = match (model.to_distribution(), traj.goal.index()) {
            (Ok(p), Some(g)) => {
                let key = (model as *const _ as usize, g);
                let value = match cache.get(&key) {
                    Some(&v) => Some(v),
                    None => goal_density
                        .distribution(g)
                        .and_then(|q| f_divergence(generator, &p, &q))
                        .ok()
                        .map(|v| v.as_f64()),
                };
                value.map(|v| {
                    cache.insert(key, v);
                    (p.entropy().as_f64(), v)
                })
            }
            _ => None,
        };
        let (h, d) = exact.unwrap_or_else(|| {
            let row = &logs[i];
            let m = row.len().max(1) as f64;
            let h = -row.iter().map(|(lp, _)| lp.as_f64()).sum::<f64>() / m;
            let d = row
                .iter()
                .map(|&(lp, lq)| {
                    let lr = (lp - lq).as_f64().min(700.0);
                    let u = lr.exp();
                    generator.value_unchecked(u) / u
                })
                .sum::<f64>()
                / m;
            (h, d)
        });
        entropy += h;
        fdiv += d;
    }
    BatchStats {
        fdiv_estimate: fdiv / n,
        visitation_entropy: entropy / n,
    }
}

/// Runs f-PG: per iteration, fit `p_theta`, store `f'(p_theta / p_g)`, then take
/// clipped-surrogate steps. `callback` sees every iteration and may stop training.
pub fn train<E, P, T, V, C>(
    env: &E,
    policy: &mut P,
    config: &FpgConfig,
    estimator: &V,
    goal_density: &GoalDensity<T>,
    seed: u64,
    callback: C,
) -> Result<TrainingLog>
where
    E: GoalEnv,
    E::State: StatePoint<T>,
    E::Goal: StatePoint<T>,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
    V: VisitationEstimator<E::State, E::Goal, E::Action, T>,
    C: FnMut(&IterationMetrics, &P) -> Result<Control>,
{
    config.validate()?;
    let gamma = T::c(config.gamma);
    let make_batch = |trajs: Vec<EnvTrajectory<E, T>>| {
        let set = estimator.fit(&trajs)?;
        let logs = log_densities(&trajs, &set, goal_density)?;
        let stats = batch_stats(&trajs, &set, &logs, goal_density, config.generator);
        let fprimes = fprimes_from_logs(&trajs, &logs, config.generator)?;
        let batch = SignalBatch::from_fprimes(trajs, fprimes, gamma, config.signal_mode)?;
        Ok((batch, stats))
    };
    optimize(env, policy, &config.optim, seed, make_batch, callback)
}

/// Gradient descent on the exact divergence of a tabular problem (no sampling).
/// Returns the divergence before each step and after the last one.
pub fn train_exact<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &mut TabularSoftmax<T>,
    goal: usize,
    goal_density: &GoalDensity<T>,
    generator: Generator,
    optimizer: OptimizerKind,
    lr: f64,
    steps: usize,
) -> Result<Vec<T>> {
    let mut opt = Optimizer::new(optimizer, T::c(lr), policy.num_params());
    let mut history = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        history.push(super::oracle::exact_divergence(
            mdp,
            policy,
            goal,
            goal_density,
            generator,
        )?);
        let g = exact_gradient_dp(mdp, policy, goal, goal_density, generator)?;
        opt.step(policy.params_mut(), &g)?;
    }
    history.push(super::oracle::exact_divergence(
        mdp,
        policy,
        goal,
        goal_density,
        generator,
    )?);
    Ok(history)
}
