//! State-visitation distributions `p_theta(s; g)` and goal densities `p_g`.

use std::fmt;
use std::sync::Arc;

use crate::divergence::{clip_dirac, FiniteDistribution};
use crate::envs::{TabularMdp, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::{entropy, log_sum_exp, Scalar, LOG_FLOOR};

/// Anything a density can be queried at: a discrete index or a point.
pub trait StatePoint<T> {
    fn index(&self) -> Option<usize> {
        None
    }
    fn point(&self) -> Option<&[T]> {
        None
    }
}

impl<T> StatePoint<T> for usize {
    fn index(&self) -> Option<usize> {
        Some(*self)
    }
}

impl<T> StatePoint<T> for Vec<T> {
    fn point(&self) -> Option<&[T]> {
        Some(self)
    }
}

impl<T> StatePoint<T> for [T] {
    fn point(&self) -> Option<&[T]> {
        Some(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitationKind {
    Exact,
    Histogram,
    Kde,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisitationModel<T> {
    /// Forward dynamic programming; `occupancy[t][s] = P(s_t = s)` for `t = 0..=T`.
    Exact {
        probs: Vec<T>,
        occupancy: Vec<Vec<T>>,
    },
    Histogram {
        probs: Vec<T>,
        counts: Vec<usize>,
        smoothing: T,
    },
    Kde(Kde<T>),
}

impl<T: Scalar> VisitationModel<T> {
    pub fn kind(&self) -> VisitationKind {
        match self {
            VisitationModel::Exact { .. } => VisitationKind::Exact,
            VisitationModel::Histogram { .. } => VisitationKind::Histogram,
            VisitationModel::Kde(_) => VisitationKind::Kde,
        }
    }

    /// The probability vector of a discrete model.
    pub fn probs(&self) -> Option<&[T]> {
        match self {
            VisitationModel::Exact { probs, .. } | VisitationModel::Histogram { probs, .. } => Some(probs),
            VisitationModel::Kde(_) => None,
        }
    }

    pub fn to_distribution(&self) -> Result<FiniteDistribution<T>> {
        let probs = self
            .probs()
            .ok_or_else(|| Error::Unsupported("a KDE has no finite support".into()))?;
        FiniteDistribution::new(probs.to_vec())
    }

    /// Shannon entropy in nats of a discrete model.
    pub fn entropy(&self) -> Option<T> {
        self.probs().map(entropy)
    }

    /// Probability (discrete) or density (KDE) at `s`.
    pub fn density<S: StatePoint<T> + ?Sized>(&self, s: &S) -> Result<T> {
        match self {
            VisitationModel::Kde(kde) => kde.density(point_of(s)?),
            _ => {
                let probs = self.probs().expect("discrete model");
                let i = index_of(s)?;
                probs
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Domain(format!("state {i} outside support of size {}", probs.len())))
            }
        }
    }

    /// `ln` of [`density`](Self::density), computed without underflow for KDEs.
    pub fn log_density<S: StatePoint<T> + ?Sized>(&self, s: &S) -> Result<T> {
        match self {
            VisitationModel::Kde(kde) => kde.log_density(point_of(s)?),
            _ => Ok(self.density(s)?.max(T::zero()).ln()),
        }
    }
}

fn index_of<T, S: StatePoint<T> + ?Sized>(s: &S) -> Result<usize> {
    s.index()
        .ok_or_else(|| Error::Unsupported("discrete density queried at a continuous state".into()))
}

fn point_of<T, S: StatePoint<T> + ?Sized>(s: &S) -> Result<&[T]> {
    s.point()
        .ok_or_else(|| Error::Unsupported("continuous density queried at a discrete state".into()))
}

/// Exact visitation of a tabular MDP under `policy[s][a]`.
///
/// Weights are `1` or `gamma^t` over `t = 1..=horizon` (`t = 0..=horizon` when
/// `include_initial`), normalized to sum to one.
pub fn exact_visitation<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &[Vec<T>],
    horizon: usize,
    gamma: Option<T>,
    include_initial: bool,
) -> Result<VisitationModel<T>> {
    let n = mdp.n_states();
    if policy.len() != n || policy.iter().any(|row| row.len() != mdp.n_actions()) {
        return Err(Error::Shape(format!("policy table must be {n} x {}", mdp.n_actions())));
    }
    if horizon == 0 {
        return Err(Error::Domain("horizon must be >= 1".into()));
    }
    let mut occupancy = Vec::with_capacity(horizon + 1);
    occupancy.push(mdp.initial().probs().to_vec());
    for t in 0..horizon {
        let prev = &occupancy[t];
        let mut next = vec![T::zero(); n];
        for s in 0..n {
            if prev[s] == T::zero() {
                continue;
            }
            for (a, &pa) in policy[s].iter().enumerate() {
                let w = prev[s] * pa;
                if w == T::zero() {
                    continue;
                }
                for (dst, &p) in next.iter_mut().zip(mdp.next_distribution(s, a)) {
                    *dst += w * p;
                }
            }
        }
        occupancy.push(next);
    }
    let first = if include_initial { 0 } else { 1 };
    let mut probs = vec![T::zero(); n];
    let mut total = T::zero();
    for (t, occ) in occupancy.iter().enumerate().skip(first) {
        let w = gamma.map_or(T::one(), |g| g.powi(t as i32));
        total += w;
        for (p, &o) in probs.iter_mut().zip(occ) {
            *p += w * o;
        }
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(VisitationModel::Exact { probs, occupancy })
}

/// Smoothed visit counts: `p(s) = (count(s) + eps) / (total + eps |S|)`.
pub fn fit_histogram<'a, G: 'a, A: 'a, T: Scalar>(
    trajectories: impl IntoIterator<Item = &'a Trajectory<usize, G, A, T>>,
    n_states: usize,
    smoothing: T,
    include_initial: bool,
) -> Result<VisitationModel<T>> {
    let mut counts = vec![0usize; n_states];
    let mut seen = 0usize;
    for traj in trajectories {
        seen += 1;
        let states = if include_initial {
            &traj.states[..]
        } else {
            traj.visited()
        };
        for &s in states {
            *counts
                .get_mut(s)
                .ok_or_else(|| Error::Domain(format!("state {s} outside support of size {n_states}")))? += 1;
        }
    }
    histogram_from_counts(counts, smoothing).and_then(|m| {
        if seen == 0 {
            Err(Error::Domain("histogram needs at least one trajectory".into()))
        } else {
            Ok(m)
        }
    })
}

pub fn histogram_from_counts<T: Scalar>(counts: Vec<usize>, smoothing: T) -> Result<VisitationModel<T>> {
    if smoothing < T::zero() {
        return Err(Error::Domain("smoothing must be non-negative".into()));
    }
    let total: usize = counts.iter().sum();
    let denom = T::from_usize_lossy(total) + smoothing * T::from_usize_lossy(counts.len());
    if !(denom > T::zero()) {
        return Err(Error::Domain("histogram has no samples".into()));
    }
    let probs = counts
        .iter()
        .map(|&c| (T::from_usize_lossy(c) + smoothing) / denom)
        .collect();
    Ok(VisitationModel::Histogram {
        probs,
        counts,
        smoothing,
    })
}

/// Lower bound on any KDE bandwidth.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// `h_d = n^(-1/(d+4)) sigma_d` per dimension.
    Scott,
    Fixed(Vec<f64>),
}

/// Product-Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde<T> {
    dims: usize,
    samples: Vec<T>,
    bandwidth: Vec<T>,
    floored: bool,
}

impl<T: Scalar> Kde<T> {
    /// Fits on the first `dims` coordinates of every point.
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a [T]>, dims: usize, rule: &BandwidthRule) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Domain("KDE needs at least one dimension".into()));
        }
        let mut samples = Vec::new();
        for p in points {
            if p.len() < dims {
                return Err(Error::Shape(format!("point has {} dims, KDE uses {dims}", p.len())));
            }
            samples.extend_from_slice(&p[..dims]);
        }
        let n = samples.len() / dims;
        if n == 0 {
            return Err(Error::Domain("KDE needs at least one sample".into()));
        }
        let raw: Vec<T> = match rule {
            BandwidthRule::Fixed(h) if h.len() == dims => h.iter().map(|&x| T::c(x)).collect(),
            BandwidthRule::Fixed(h) => {
                return Err(Error::Shape(format!("{} bandwidths for {dims} dims", h.len())));
            }
            BandwidthRule::Scott => {
                let factor = T::from_usize_lossy(n).powf(-T::one() / T::from_usize_lossy(dims + 4));
                (0..dims)
                    .map(|d| factor * sample_std(samples.iter().skip(d).step_by(dims).copied(), n))
                    .collect()
            }
        };
        let floor = T::c(BANDWIDTH_FLOOR);
        let floored = raw.iter().any(|&h| !(h >= floor));
        let bandwidth = raw.into_iter().map(|h| if h >= floor { h } else { floor }).collect();
        Ok(Self {
            dims,
            samples,
            bandwidth,
            floored,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bandwidth(&self) -> &[T] {
        &self.bandwidth
    }

    /// Set when some bandwidth hit [`BANDWIDTH_FLOOR`] (e.g. identical samples).
    pub fn bandwidth_floored(&self) -> bool {
        self.floored
    }

    pub fn with_bandwidth(mut self, bandwidth: Vec<T>) -> Result<Self> {
        if bandwidth.len() != self.dims || bandwidth.iter().any(|&h| !(h > T::zero())) {
            return Err(Error::Domain("bandwidths must be positive, one per dimension".into()));
        }
        self.bandwidth = bandwidth;
        Ok(self)
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        if x.len() < self.dims {
            return Err(Error::Shape(format!(
                "query has {} dims, KDE uses {}",
                x.len(),
                self.dims
            )));
        }
        let half = T::c(0.5);
        let log_norm = -T::c(0.5 * self.dims as f64 * (2.0 * std::f64::consts::PI).ln())
            - self.bandwidth.iter().map(|h| h.ln()).sum::<T>()
            - T::from_usize_lossy(self.len()).ln();
        let terms: Vec<T> = self
            .samples
            .chunks_exact(self.dims)
            .map(|s| {
                -half
                    * s.iter()
                        .zip(x)
                        .zip(&self.bandwidth)
                        .map(|((&si, &xi), &h)| {
                            let z = (xi - si) / h;
                            z * z
                        })
                        .sum::<T>()
            })
            .collect();
        Ok(log_sum_exp(&terms) + log_norm)
    }

    pub fn density(&self, x: &[T]) -> Result<T> {
        Ok(self.log_density(x)?.exp())
    }
}

fn sample_std<T: Scalar>(xs: impl Iterator<Item = T> + Clone, n: usize) -> T {
    if n < 2 {
        return T::zero();
    }
    let nf = T::from_usize_lossy(n);
    let mean = xs.clone().sum::<T>() / nf;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / (nf - T::one());
    var.sqrt()
}

/// KDE over the visited states `s_1..s_T` (optionally `s_0`) of `trajectories`.
pub fn fit_kde<'a, G: 'a, A: 'a, T: Scalar>(
    trajectories: impl IntoIterator<Item = &'a Trajectory<Vec<T>, G, A, T>>,
    dims: usize,
    rule: &BandwidthRule,
    include_initial: bool,
) -> Result<VisitationModel<T>> {
    let points = trajectories.into_iter().flat_map(|traj| {
        let states = if include_initial {
            &traj.states[..]
        } else {
            traj.visited()
        };
        states.iter().map(|s| s.as_slice())
    });
    Kde::fit(points, dims, rule).map(VisitationModel::Kde)
}

/// Default clipping mass for a discrete Dirac goal over `n` states.
pub fn default_dirac_epsilon(n_states: usize) -> f64 {
    1e-3 / n_states as f64
}

/// Log-density of a goal distribution as a function of state and goal.
pub type MetricFn<T> = Arc<dyn Fn(&[T], &[T]) -> T + Send + Sync>;

/// Goal distribution `p_g(s)`. Continuous kinds compare the first `goal.len()` state coordinates.
#[derive(Clone)]
pub enum GoalDensity<T> {
    /// Dirac at the goal index with every other state floored at `epsilon`.
    ClippedDirac {
        n_states: usize,
        epsilon: T,
    },
    /// One finite distribution per discrete goal index.
    Table(Vec<FiniteDistribution<T>>),
    Gaussian {
        sigma: T,
    },
    Laplacian {
        scale: T,
    },
    /// `p_g(s) = exp(metric(s, g))`, not necessarily normalized.
    CustomMetric(MetricFn<T>),
}

impl<T: fmt::Debug> fmt::Debug for GoalDensity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalDensity::ClippedDirac { n_states, epsilon } => f
                .debug_struct("ClippedDirac")
                .field("n_states", n_states)
                .field("epsilon", epsilon)
                .finish(),
            GoalDensity::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            GoalDensity::Gaussian { sigma } => f.debug_struct("Gaussian").field("sigma", sigma).finish(),
            GoalDensity::Laplacian { scale } => f.debug_struct("Laplacian").field("scale", scale).finish(),
            GoalDensity::CustomMetric(_) => f.write_str("CustomMetric(..)"),
        }
    }
}

impl<T: Scalar> GoalDensity<T> {
    pub fn clipped_dirac(n_states: usize) -> Self {
        GoalDensity::ClippedDirac {
            n_states,
            epsilon: T::c(default_dirac_epsilon(n_states)),
        }
    }

    /// Per-goal tables `p_g(s) ∝ exp(log_weights[g][s])`.
    pub fn from_log_weights(log_weights: Vec<Vec<T>>) -> Result<Self> {
        let tables = log_weights
            .into_iter()
            .map(|w| {
                let z = log_sum_exp(&w);
                FiniteDistribution::from_weights(w.into_iter().map(|x| (x - z).exp()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GoalDensity::Table(tables))
    }

    /// Discrete kinds are indexed by state and goal ids rather than positions.
    pub fn is_discrete(&self) -> bool {
        matches!(self, GoalDensity::ClippedDirac { .. } | GoalDensity::Table(_))
    }

    /// False only for custom metrics, whose exponential need not integrate to one.
    pub fn is_normalized(&self) -> bool {
        !matches!(self, GoalDensity::CustomMetric(_))
    }

    /// The discrete distribution for goal `goal` (discrete kinds only).
    pub fn distribution(&self, goal: usize) -> Result<FiniteDistribution<T>> {
        match self {
            GoalDensity::ClippedDirac { n_states, epsilon } => clip_dirac(goal, *n_states, *epsilon),
            GoalDensity::Table(t) => t
                .get(goal)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("no goal table for goal {goal}"))),
            _ => Err(Error::Unsupported("continuous goal density has no finite table".into())),
        }
    }

    pub fn log_density<S, G>(&self, s: &S, goal: &G) -> Result<T>
    where
        S: StatePoint<T> + ?Sized,
        G: StatePoint<T> + ?Sized,
    {
        match self {
            GoalDensity::ClippedDirac { n_states, epsilon } => {
                let (s, g) = (index_of(s)?, index_of(goal)?);
                if s >= *n_states || g >= *n_states {
                    return Err(Error::Domain(format!(
                        "state {s} or goal {g} outside {n_states} states"
                    )));
                }
                Ok(if s == g {
                    (T::one() - T::from_usize_lossy(n_states - 1) * *epsilon).ln()
                } else {
                    epsilon.ln()
                })
            }
            GoalDensity::Table(t) => {
                let (s, g) = (index_of(s)?, index_of(goal)?);
                let table = t
                    .get(g)
                    .ok_or_else(|| Error::Domain(format!("no goal table for goal {g}")))?;
                let p = table
                    .probs()
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::Domain(format!("state {s} outside goal table")))?;
                Ok(p.max(T::c(LOG_FLOOR)).ln())
            }
            GoalDensity::Gaussian { sigma } => {
                let (x, g) = aligned(s, goal)?;
                let d = T::from_usize_lossy(g.len());
                let sq: T = x.iter().zip(g).map(|(&a, &b)| (a - b) * (a - b)).sum();
                Ok(-sq / (T::c(2.0) * *sigma * *sigma) - d * T::c(0.5) * (T::c(2.0) * T::PI() * *sigma * *sigma).ln())
            }
            GoalDensity::Laplacian { scale } => {
                let (x, g) = aligned(s, goal)?;
                let d = T::from_usize_lossy(g.len());
                let l1: T = x.iter().zip(g).map(|(&a, &b)| (a - b).abs()).sum();
                Ok(-l1 / *scale - d * (T::c(2.0) * *scale).ln())
            }
            GoalDensity::CustomMetric(metric) => {
                let (x, g) = aligned(s, goal)?;
                Ok(metric(x, g))
            }
        }
    }

    pub fn density<S, G>(&self, s: &S, goal: &G) -> Result<T>
    where
        S: StatePoint<T> + ?Sized,
        G: StatePoint<T> + ?Sized,
    {
        Ok(self.log_density(s, goal)?.exp())
    }
}

fn aligned<'a, T, S, G>(s: &'a S, goal: &'a G) -> Result<(&'a [T], &'a [T])>
where
    S: StatePoint<T> + ?Sized,
    G: StatePoint<T> + ?Sized,
{
    let (x, g) = (point_of(s)?, point_of(goal)?);
    if x.len() < g.len() {
        return Err(Error::Shape(format!("state has {} dims, goal {}", x.len(), g.len())));
    }
    Ok((&x[..g.len()], g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dirac(i: usize, n: usize) -> FiniteDistribution<f64> {
        FiniteDistribution::dirac(i, n).unwrap()
    }

    fn traj(states: Vec<usize>) -> Trajectory<usize, usize, usize, f64> {
        let n = states.len() - 1;
        Trajectory {
            goal: 0,
            states,
            actions: vec![0; n],
            behavior_logprobs: vec![0.0; n],
            reached: false,
        }
    }

    #[test]
    fn one_state_mdp_is_certain() {
        let mdp = TabularMdp::<f64>::deterministic(&[vec![0, 0]], dirac(0, 1), dirac(0, 1), 5).unwrap();
        let v = exact_visitation(&mdp, &[vec![0.3, 0.7]], 5, None, false).unwrap();
        assert_eq!(v.probs().unwrap(), &[1.0]);
    }

    #[test]
    fn chain_occupancy() {
        // s0 -a0-> s0, s0 -a1-> s1, s1 absorbing; uniform policy, T = 2
        let mdp = TabularMdp::<f64>::deterministic(&[vec![0, 1], vec![1, 1]], dirac(0, 2), dirac(1, 2), 2).unwrap();
        let pi = vec![vec![0.5, 0.5]; 2];
        let v = exact_visitation(&mdp, &pi, 2, None, false).unwrap();
        // P(s1=s0) = 1/2, P(s2=s0) = 1/4
        let p = v.probs().unwrap();
        assert_relative_eq!(p[0], (0.5 + 0.25) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], (0.5 + 0.75) / 2.0, epsilon = 1e-15);
        let with_s0 = exact_visitation(&mdp, &pi, 2, None, true).unwrap();
        assert_relative_eq!(with_s0.probs().unwrap()[0], (1.0 + 0.5 + 0.25) / 3.0, epsilon = 1e-15);
        let disc = exact_visitation(&mdp, &pi, 2, Some(0.5), false).unwrap();
        assert_relative_eq!(
            disc.probs().unwrap()[0],
            (0.5 * 0.5 + 0.25 * 0.25) / 0.75,
            epsilon = 1e-15
        );
    }

    #[test]
    fn histogram_examples() {
        let v = fit_histogram(&[traj(vec![0, 3, 3, 3, 3])], 4, 0.0, false).unwrap();
        assert_eq!(v.probs().unwrap(), &[0.0, 0.0, 0.0, 1.0]);
        let v = fit_histogram(&[traj(vec![1, 0, 1])], 2, 0.0, false).unwrap();
        assert_eq!(v.probs().unwrap(), &[0.5, 0.5]);
        let v = histogram_from_counts(vec![2, 0, 0, 2], 1.0).unwrap();
        assert_eq!(v.probs().unwrap(), &[3.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 3.0 / 8.0]);
        let empty: [Trajectory<usize, usize, usize, f64>; 0] = [];
        assert!(matches!(fit_histogram(&empty, 4, 0.0, false), Err(Error::Domain(_))));
        assert!(fit_histogram(&[traj(vec![0, 7])], 4, 0.0, false).is_err());
    }

    #[test]
    fn kde_basic_properties() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.1, -0.1], vec![-0.1, 0.05]];
        let kde = Kde::fit(pts.iter().map(|p| p.as_slice()), 2, &BandwidthRule::Scott).unwrap();
        assert!(!kde.bandwidth_floored());
        let h = kde.bandwidth()[0];
        let center = kde.density(&[0.0, 0.0]).unwrap();
        assert!(center >= kde.density(&[3.0 * h, 0.0]).unwrap());
        let narrow = kde
            .clone()
            .with_bandwidth(vec![h / 2.0, kde.bandwidth()[1] / 2.0])
            .unwrap();
        assert!(narrow.density(&[0.1, -0.1]).unwrap() > kde.density(&[0.1, -0.1]).unwrap());
    }

    #[test]
    fn identical_samples_hit_the_floor() {
        let pts = vec![vec![1.0f64, 2.0]; 5];
        let kde = Kde::fit(pts.iter().map(|p| p.as_slice()), 2, &BandwidthRule::Scott).unwrap();
        assert!(kde.bandwidth_floored());
        assert_eq!(kde.bandwidth(), &[BANDWIDTH_FLOOR, BANDWIDTH_FLOOR]);
        assert!(kde.log_density(&[1.0, 2.0]).unwrap().is_finite());
        // far queries stay finite in log space
        assert!(kde.log_density(&[100.0, 2.0]).unwrap().is_finite());
    }

    #[test]
    fn goal_density_closed_forms() {
        let g = GoalDensity::<f64>::Gaussian { sigma: 1.0 };
        let at = |x: f64| g.density(&vec![x], &vec![0.0]).unwrap();
        assert_relative_eq!(at(1.0) / at(0.0), (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(at(0.0), 1.0 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        let l = GoalDensity::<f64>::Laplacian { scale: 1.0 };
        let a = l.log_density(&vec![1.0, 2.0], &vec![0.0, 0.0]).unwrap();
        let b = l.log_density(&vec![0.0, 0.0], &vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(a - b, -3.0, epsilon = 1e-12);
        let dirac = GoalDensity::<f64>::ClippedDirac {
            n_states: 4,
            epsilon: 0.05,
        };
        let table = dirac.distribution(2).unwrap();
        for s in 0..4usize {
            assert_relative_eq!(dirac.density(&s, &2usize).unwrap(), table[s], epsilon = 1e-15);
        }
        let custom = GoalDensity::<f64>::CustomMetric(Arc::new(|s, g| -(s[0] - g[0]).powi(2)));
        assert!(!custom.is_normalized());
        assert_relative_eq!(custom.log_density(&vec![2.0, 9.0], &vec![0.0]).unwrap(), -4.0);
    }

    #[test]
    fn discrete_and_continuous_queries_do_not_mix() {
        let v = histogram_from_counts::<f64>(vec![1, 1], 0.0).unwrap();
        assert!(v.density(&vec![0.0]).is_err());
        let g = GoalDensity::<f64>::Gaussian { sigma: 1.0 };
        assert!(g.log_density(&0usize, &vec![0.0]).is_err());
    }
}
