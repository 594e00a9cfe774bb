//! Goal-conditioned environments.
//!
//! Episodes always run for exactly `horizon()` steps; reaching the goal does
//! not terminate an episode.

mod gridworld;
mod layout;
mod maze;
mod tabular;

pub use gridworld::{GridAction, GridworldRoom};
pub use layout::{Cell, Layout};
pub use maze::{MazeVariant, PointMaze, POINT_MAZE_GOAL_RADIUS};
pub use tabular::TabularMdp;

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::policy::Policy;
use crate::scalar::Scalar;

/// A goal-conditioned MDP with fixed horizon, initial-state sampler and goal sampler.
pub trait GoalEnv: Sync {
    type State: Clone + Debug + PartialEq + Send + Sync;
    type Goal: Clone + Debug + PartialEq + Send + Sync;
    type Action: Clone + Debug + PartialEq + Send + Sync;

    fn horizon(&self) -> usize;
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Goal;
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: &Self::Action, rng: &mut R) -> Result<Self::State>;
    fn goal_reached(&self, state: &Self::State, goal: &Self::Goal) -> bool;
}

/// Environments whose states and goals live in a Euclidean space (for metric shaping).
pub trait Positions<T>: GoalEnv {
    fn state_position(&self, state: &Self::State) -> Vec<T>;
    fn goal_position(&self, goal: &Self::Goal) -> Vec<T>;
}

/// `1` when `next` satisfies the goal predicate, else `0`.
pub fn sparse_reward<T: Scalar, E: GoalEnv>(env: &E, next: &E::State, goal: &E::Goal) -> T {
    if env.goal_reached(next, goal) {
        T::one()
    } else {
        T::zero()
    }
}

/// One fixed-length episode: `states` has `T + 1` entries, the rest `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, G, A, T> {
    pub goal: G,
    pub states: Vec<S>,
    pub actions: Vec<A>,
    pub behavior_logprobs: Vec<T>,
    pub reached: bool,
}

pub type EnvTrajectory<E, T> = Trajectory<<E as GoalEnv>::State, <E as GoalEnv>::Goal, <E as GoalEnv>::Action, T>;

impl<S, G, A, T> Trajectory<S, G, A, T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// States `s_1..s_T`, the ones counted by visitation estimates.
    pub fn visited(&self) -> &[S] {
        &self.states[1..]
    }
}

/// Runs `policy` from `initial` for exactly `env.horizon()` steps.
pub fn rollout_from<E, P, T, R>(
    env: &E,
    policy: &P,
    initial: E::State,
    goal: E::Goal,
    rng: &mut R,
) -> Result<EnvTrajectory<E, T>>
where
    E: GoalEnv,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
    R: Rng + ?Sized,
{
    let horizon = env.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut logps = Vec::with_capacity(horizon);
    let mut reached = env.goal_reached(&initial, &goal);
    states.push(initial);
    for t in 0..horizon {
        let (action, logp) = policy.act(&states[t], &goal, rng)?;
        let next = env.step(&states[t], &action, rng)?;
        reached |= env.goal_reached(&next, &goal);
        states.push(next);
        actions.push(action);
        logps.push(logp);
    }
    Ok(Trajectory {
        goal,
        states,
        actions,
        behavior_logprobs: logps,
        reached,
    })
}

/// Seeded rollout: the initial state and every action/transition draw come from `seed`.
pub fn rollout<E, P, T>(env: &E, policy: &P, goal: E::Goal, seed: u64) -> Result<EnvTrajectory<E, T>>
where
    E: GoalEnv,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0 = env.sample_initial(&mut rng);
    rollout_from(env, policy, s0, goal, &mut rng)
}

/// `n` independent episodes. Episode `i` draws its initial state, goal, actions and
/// transitions from `seeding::rng(seed, stream, i)`, so results do not depend on
/// thread scheduling.
pub fn collect_rollouts<E, P, T>(
    env: &E,
    policy: &P,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<EnvTrajectory<E, T>>>
where
    E: GoalEnv,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::seeding::rng(seed, stream, i as u64);
            let s0 = env.sample_initial(&mut rng);
            let goal = env.sample_goal(&mut rng);
            rollout_from(env, policy, s0, goal, &mut rng)
        })
        .collect()
}

/// Fraction of `episodes` fresh rollouts that reach their goal.
pub fn success_rate<E, P, T>(env: &E, policy: &P, episodes: usize, seed: u64) -> Result<f64>
where
    E: GoalEnv,
    P: Policy<T, State = E::State, Goal = E::Goal, Action = E::Action>,
    T: Scalar,
{
    if episodes == 0 {
        return Err(crate::error::Error::Domain("need at least one episode".into()));
    }
    let trajs = collect_rollouts(env, policy, episodes, seed, crate::seeding::stream::EVAL)?;
    Ok(trajs.iter().filter(|t| t.reached).count() as f64 / episodes as f64)
}

/// Draws an index from unnormalized non-negative weights.
pub(crate) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w.as_f64();
        if u < 0.0 {
            return i;
        }
    }
    // rounding: fall back to the last index with mass
    weights
        .iter()
        .rposition(|w| *w > T::zero())
        .unwrap_or(weights.len() - 1)
}
