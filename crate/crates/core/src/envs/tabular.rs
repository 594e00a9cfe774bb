use rand::Rng;

use super::{sample_categorical, GoalEnv, Positions};
use crate::divergence::{sum_tolerance, FiniteDistribution};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Finite MDP with an explicit transition tensor `P[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<T>,
    initial: FiniteDistribution<T>,
    goals: FiniteDistribution<T>,
    horizon: usize,
}

impl<T: Scalar> TabularMdp<T> {
    /// `transitions` is row-major `[s][a][s']`; each `(s, a)` row must sum to 1.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<T>,
        initial: FiniteDistribution<T>,
        goals: FiniteDistribution<T>,
        horizon: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Domain("state and action spaces must be non-empty".into()));
        }
        if horizon == 0 {
            return Err(Error::Domain("horizon must be >= 1".into()));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if initial.support_size() != n_states || goals.support_size() != n_states {
            return Err(Error::Shape(
                "initial/goal distributions must cover the state space".into(),
            ));
        }
        let tol = sum_tolerance::<T>(n_states);
        for (i, row) in transitions.chunks(n_states).enumerate() {
            let total: T = row.iter().copied().sum();
            if row.iter().any(|p| !(*p >= T::zero())) || (total - T::one()).abs() > tol {
                return Err(Error::Domain(format!(
                    "transition row (s={}, a={}) is not a distribution",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            initial,
            goals,
            horizon,
        })
    }

    /// Deterministic dynamics from a successor table `next[s][a]`.
    pub fn deterministic(
        next: &[Vec<usize>],
        initial: FiniteDistribution<T>,
        goals: FiniteDistribution<T>,
        horizon: usize,
    ) -> Result<Self> {
        let n_states = next.len();
        let n_actions = next.first().map_or(0, Vec::len);
        let mut transitions = vec![T::zero(); n_states * n_actions * n_states];
        for (s, row) in next.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Shape("ragged successor table".into()));
            }
            for (a, &s2) in row.iter().enumerate() {
                if s2 >= n_states {
                    return Err(Error::Domain(format!("successor {s2} out of range")));
                }
                transitions[(s * n_actions + a) * n_states + s2] = T::one();
            }
        }
        Self::new(n_states, n_actions, transitions, initial, goals, horizon)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `P(. | s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn transition(&self, s: usize, a: usize, s2: usize) -> T {
        self.next_distribution(s, a)[s2]
    }

    pub fn initial(&self) -> &FiniteDistribution<T> {
        &self.initial
    }

    pub fn goals(&self) -> &FiniteDistribution<T> {
        &self.goals
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be >= 1".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Random MDP with Dirichlet(1)-like rows; the oracle suites draw from this family.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        goal: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut simplex = |n: usize| -> Vec<T> {
            let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| T::c(x / total)).collect()
        };
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            transitions.extend(simplex(n_states));
        }
        let initial = FiniteDistribution::from_weights(simplex(n_states))?;
        let mut goal_mass = vec![T::zero(); n_states];
        goal_mass[goal] = T::one();
        let goals = FiniteDistribution::new(goal_mass)?;
        // renormalize rows to absorb f32 rounding
        for row in transitions.chunks_mut(n_states) {
            let total: T = row.iter().copied().sum();
            row.iter_mut().for_each(|p| *p /= total);
        }
        Self::new(n_states, n_actions, transitions, initial, goals, horizon)
    }
}

/// States are points on a line at their index.
impl<T: Scalar> Positions<T> for TabularMdp<T> {
    fn state_position(&self, state: &usize) -> Vec<T> {
        vec![T::from_usize_lossy(*state)]
    }

    fn goal_position(&self, goal: &usize) -> Vec<T> {
        vec![T::from_usize_lossy(*goal)]
    }
}

impl<T: Scalar> GoalEnv for TabularMdp<T> {
    type State = usize;
    type Goal = usize;
    type Action = usize;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(self.initial.probs(), rng)
    }

    fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(self.goals.probs(), rng)
    }

    fn step<R: Rng + ?Sized>(&self, state: &usize, action: &usize, rng: &mut R) -> Result<usize> {
        if *state >= self.n_states {
            return Err(Error::Domain(format!("state {state} out of range")));
        }
        if *action >= self.n_actions {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        Ok(sample_categorical(self.next_distribution(*state, *action), rng))
    }

    fn goal_reached(&self, state: &usize, goal: &usize) -> bool {
        state == goal
    }
}
