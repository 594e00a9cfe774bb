//! Policy optimization by descending `grad D_f(p_theta || p_g)`.
//!
//! Signals are per-state derivatives `f'(p_theta(s) / p_g(s))`. Action `a_{t-1}`,
//! taken in `s_{t-1}`, is paired with the signal accumulated from `s_t` onward.

mod gradient;
pub mod oracle;
mod signal;
mod train;

pub use gradient::{
    advantages, analytic_gradient, analytic_gradient_from_fprimes, clipped_surrogate_grad, dirac_gradient,
    SurrogateOptions, SurrogateOutcome, MAX_LOG_RATIO,
};
pub use signal::{
    build_signal_batch, log_densities, signal_from_log_ratio, state_fprimes, SignalBatch, SignalMode, VisitationSet,
};
pub(crate) use train::{batch_stats, optimize};
pub use train::{
    train, train_exact, BatchStats, Control, FpgConfig, HistogramEstimator, IterationMetrics, KdeEstimator,
    OptimConfig, TrainingLog, VisitationEstimator,
};
