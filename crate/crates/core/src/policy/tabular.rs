use rand::Rng;

use super::{softmax_in_place, ActionDistribution, Architecture, Policy};
use crate::envs::sample_categorical;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Softmax over per-(goal, state) logits.
///
/// With a single goal slot the goal argument is ignored; otherwise the goal
/// index selects the logit table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftmax<T> {
    n_goals: usize,
    n_states: usize,
    n_actions: usize,
    logits: Vec<T>,
}

impl<T: Scalar> TabularSoftmax<T> {
    /// Zero logits, i.e. the uniform policy.
    pub fn new(n_goals: usize, n_states: usize, n_actions: usize) -> Result<Self> {
        if n_goals == 0 || n_states == 0 || n_actions == 0 {
            return Err(Error::Domain("tabular policy dimensions must be positive".into()));
        }
        Ok(Self {
            n_goals,
            n_states,
            n_actions,
            logits: vec![T::zero(); n_goals * n_states * n_actions],
        })
    }

    pub fn from_logits(n_goals: usize, n_states: usize, n_actions: usize, logits: Vec<T>) -> Result<Self> {
        let mut p = Self::new(n_goals, n_states, n_actions)?;
        p.set_params(&logits)?;
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn slot(&self, goal: usize) -> Result<usize> {
        if self.n_goals == 1 {
            Ok(0)
        } else if goal < self.n_goals {
            Ok(goal)
        } else {
            Err(Error::Domain(format!(
                "goal {goal} outside {} goal slots",
                self.n_goals
            )))
        }
    }

    fn offset(&self, state: usize, goal: usize) -> Result<usize> {
        if state >= self.n_states {
            return Err(Error::Domain(format!("state {state} out of range")));
        }
        Ok((self.slot(goal)? * self.n_states + state) * self.n_actions)
    }

    /// Parameter index of the logit for `(goal, state, action)`.
    pub fn logit_index(&self, goal: usize, state: usize, action: usize) -> Result<usize> {
        Ok(self.offset(state, goal)? + action)
    }

    pub fn probs(&self, state: usize, goal: usize) -> Result<Vec<T>> {
        let o = self.offset(state, goal)?;
        let mut p = self.logits[o..o + self.n_actions].to_vec();
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits at state {state}")));
        }
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Full `|S| x |A|` table of `pi(a | s; g)`.
    pub fn state_probs(&self, goal: usize) -> Result<Vec<Vec<T>>> {
        (0..self.n_states).map(|s| self.probs(s, goal)).collect()
    }
}

impl<T: Scalar> Policy<T> for TabularSoftmax<T> {
    type State = usize;
    type Goal = usize;
    type Action = usize;

    fn architecture(&self) -> Architecture {
        Architecture::Tabular {
            n_goals: self.n_goals,
            n_states: self.n_states,
            n_actions: self.n_actions,
        }
    }

    fn params(&self) -> &[T] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.logits
    }

    fn distribution(&self, state: &usize, goal: &usize) -> Result<ActionDistribution<T>> {
        Ok(ActionDistribution::Categorical(self.probs(*state, *goal)?))
    }

    fn act<R: Rng + ?Sized>(&self, state: &usize, goal: &usize, rng: &mut R) -> Result<(usize, T)> {
        let p = self.probs(*state, *goal)?;
        let a = sample_categorical(&p, rng);
        // same expression as log_prob so on-policy ratios are exactly one
        Ok((a, self.log_prob(state, goal, &a)?))
    }

    fn log_prob(&self, state: &usize, goal: &usize, action: &usize) -> Result<T> {
        if *action >= self.n_actions {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        let o = self.offset(*state, *goal)?;
        let row = &self.logits[o..o + self.n_actions];
        Ok(row[*action] - crate::scalar::log_sum_exp(row))
    }

    fn accumulate_logprob_grad(
        &self,
        state: &usize,
        goal: &usize,
        action: &usize,
        scale: T,
        grad: &mut [T],
    ) -> Result<T> {
        if *action >= self.n_actions {
            return Err(Error::Domain(format!("action {action} out of range")));
        }
        let o = self.offset(*state, *goal)?;
        let p = self.probs(*state, *goal)?;
        for (b, &pb) in p.iter().enumerate() {
            let indicator = if b == *action { T::one() } else { T::zero() };
            grad[o + b] += scale * (indicator - pb);
        }
        Ok(p[*action].ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits() {
        let p = TabularSoftmax::<f64>::new(1, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, lp) = p.act(&0, &0, &mut rng).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        let g = p.logprob_grad(&1, &0, &2).unwrap();
        let o = p.logit_index(0, 1, 0).unwrap();
        for b in 0..4 {
            let expected = if b == 2 { 0.75 } else { -0.25 };
            assert!((g[o + b] - expected).abs() < 1e-12);
        }
        assert_eq!(g.iter().filter(|x| **x != 0.0).count(), 4);
        for row in p.state_probs(0).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logit_dominates() {
        let mut p = TabularSoftmax::<f64>::new(1, 1, 4).unwrap();
        p.params_mut()[2] = 20.0;
        assert!(p.probs(0, 0).unwrap()[2] > 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hits = (0..1000).filter(|_| p.act(&0, &0, &mut rng).unwrap().0 == 2).count();
        assert!(hits >= 998);
    }

    #[test]
    fn goal_slots() {
        let p = TabularSoftmax::<f64>::new(3, 3, 2).unwrap();
        assert!(p.probs(0, 2).is_ok());
        assert!(p.probs(0, 3).is_err());
        let shared = TabularSoftmax::<f64>::new(1, 3, 2).unwrap();
        assert!(shared.probs(0, 17).is_ok());
    }
}
