//! First-order optimizers. Every step descends: `theta <- theta - lr * update(grad)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Adam(Adam<T>),
    Sgd { lr: T },
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, n_params)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
        }
    }

    pub fn lr(&self) -> T {
        match self {
            Optimizer::Adam(a) => a.lr,
            Optimizer::Sgd { lr } => *lr,
        }
    }

    pub fn set_lr(&mut self, lr: T) {
        match self {
            Optimizer::Adam(a) => a.lr = lr,
            Optimizer::Sgd { lr: l } => *l = lr,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradient entries",
                params.len(),
                grad.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        match self {
            Optimizer::Adam(a) => a.step(params, grad),
            Optimizer::Sgd { lr } => params.iter_mut().zip(grad).for_each(|(p, &g)| *p -= *lr * g),
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, n_params: usize) -> Self {
        Self {
            lr,
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            eps: T::c(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_has_magnitude_lr() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1f64, 2);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[5.0, -0.01]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn minimizes_a_quadratic() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(kind, 0.05f64, 2);
            let mut p = vec![3.0, -2.0];
            for _ in 0..2000 {
                let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
                opt.step(&mut p, &g).unwrap();
            }
            assert!(
                (p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3,
                "{kind:?}: {p:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1f64, 1);
        let mut p = vec![0.0];
        assert!(opt.step(&mut p, &[f64::NAN]).is_err());
        assert!(opt.step(&mut p, &[1.0, 2.0]).is_err());
        assert_eq!(p, vec![0.0]);
    }
}
