//! Goal-conditioned reinforcement learning by minimizing an f-divergence between
//! the agent's state visitation distribution and a goal distribution.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod baselines;
pub mod divergence;
pub mod envs;
pub mod error;
pub mod fpg;
pub mod optim;
pub mod policy;
pub mod scalar;
pub mod seeding;
pub mod visitation;

pub use divergence::{clip_dirac, f_divergence, FiniteDistribution, Generator};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Distribution = FiniteDistribution<f64>;
pub type Distribution32 = FiniteDistribution<f32>;
pub type Tabular = policy::TabularSoftmax<f64>;
pub type Tabular32 = policy::TabularSoftmax<f32>;
pub type Mlp = policy::GaussianMlp<f64>;
pub type Mlp32 = policy::GaussianMlp<f32>;
pub type Maze = envs::PointMaze<f64>;
pub type Mdp = envs::TabularMdp<f64>;
