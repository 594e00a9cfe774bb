//! f-divergence generators and divergence evaluation on finite supports.
//!
//! All divergences are in nats and follow the orientation used by the
//! optimizer: `D_f(p || q) = sum_{q>0} q f(p/q) + f'(inf) * p[q = 0]`, where `p` is
//! the agent's visitation and `q` the goal distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, LOG_FLOOR};

/// Generator catalog. Each variant fixes `f`, `f'` and the slope at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Forward KL, `f(u) = u log u`.
    Fkl,
    /// Reverse KL, `f(u) = -log u`.
    Rkl,
    /// Jensen-Shannon, `f(u) = u log u - (1 + u) log((1 + u) / 2)`.
    Js,
    /// Pearson chi-squared, `f(u) = (u - 1)^2 / 2`.
    #[serde(rename = "chi2")]
    ChiSq,
    /// Total variation, `f(u) = |u - 1| / 2`.
    Tv,
}

impl Generator {
    pub const ALL: [Generator; 5] = [
        Generator::Fkl,
        Generator::Rkl,
        Generator::Js,
        Generator::ChiSq,
        Generator::Tv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Fkl => "fkl",
            Generator::Rkl => "rkl",
            Generator::Js => "js",
            Generator::ChiSq => "chi2",
            Generator::Tv => "tv",
        }
    }

    /// `f'(inf)`; `None` where the slope diverges.
    pub fn fprime_at_infinity<T: Scalar>(self) -> Option<T> {
        match self {
            Generator::Fkl | Generator::ChiSq => None,
            Generator::Rkl => Some(T::zero()),
            Generator::Js => Some(T::LN_2()),
            Generator::Tv => Some(T::c(0.5)),
        }
    }

    /// `f(u)` for `u > 0`.
    pub fn value<T: Scalar>(self, u: T) -> Result<T> {
        check_positive(u)?;
        Ok(self.value_unchecked(u))
    }

    /// `f'(u)` for `u > 0`. Total variation uses the sign subgradient.
    pub fn derivative<T: Scalar>(self, u: T) -> Result<T> {
        check_positive(u)?;
        Ok(self.derivative_unchecked(u))
    }

    pub(crate) fn value_unchecked<T: Scalar>(self, u: T) -> T {
        let one = T::one();
        let half = T::c(0.5);
        match self {
            Generator::Fkl => u * u.ln(),
            Generator::Rkl => -u.ln(),
            Generator::Js => {
                let two = T::c(2.0);
                u * u.ln() - (one + u) * ((one + u) / two).ln()
            }
            Generator::ChiSq => half * (u - one) * (u - one),
            Generator::Tv => half * (u - one).abs(),
        }
    }

    pub(crate) fn derivative_unchecked<T: Scalar>(self, u: T) -> T {
        let one = T::one();
        match self {
            Generator::Fkl => one + u.ln(),
            Generator::Rkl => -one / u,
            Generator::Js => (T::c(2.0) * u / (one + u)).ln(),
            Generator::ChiSq => u - one,
            Generator::Tv => {
                let half = T::c(0.5);
                if u > one {
                    half
                } else if u < one {
                    -half
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `lim_{u -> 0+} f(u)`, used for states the goal covers but the agent never visits.
    pub fn value_at_zero<T: Scalar>(self) -> T {
        match self {
            Generator::Fkl => T::zero(),
            Generator::Rkl => T::infinity(),
            Generator::Js => T::LN_2(),
            Generator::ChiSq | Generator::Tv => T::c(0.5),
        }
    }
}

fn check_positive<T: Scalar>(u: T) -> Result<()> {
    if u > T::zero() && !u.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("generator argument must be > 0, got {u}")))
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fkl" => Ok(Generator::Fkl),
            "rkl" => Ok(Generator::Rkl),
            "js" => Ok(Generator::Js),
            "chi2" | "chisq" => Ok(Generator::ChiSq),
            "tv" => Ok(Generator::Tv),
            other => Err(Error::Config(format!(
                "unknown divergence `{other}` (expected fkl, rkl, js, chi2 or tv)"
            ))),
        }
    }
}

/// Probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> FiniteDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty support".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(**p >= T::zero()) || !p.is_finite()) {
            return Err(Error::Domain(format!("invalid probability {bad}")));
        }
        let total: T = probs.iter().copied().sum();
        let tol = sum_tolerance::<T>(probs.len());
        if (total - T::one()).abs() > tol {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::Domain("weights must have positive finite mass".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("empty support".into()));
        }
        Self::new(vec![T::one() / T::from_usize_lossy(n); n])
    }

    /// All mass on `index`.
    pub fn dirac(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::Domain(format!("index {index} outside support of size {n}")));
        }
        let mut probs = vec![T::zero(); n];
        probs[index] = T::one();
        Self::new(probs)
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<T> {
        self.probs
    }

    pub fn entropy(&self) -> T {
        crate::scalar::entropy(&self.probs)
    }

    /// Total-variation distance `0.5 * sum |p - q|`.
    pub fn total_variation(&self, other: &Self) -> Result<T> {
        same_support(self, other)?;
        Ok(T::c(0.5)
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(&a, &b)| (a - b).abs())
                .sum::<T>())
    }
}

impl<T> std::ops::Index<usize> for FiniteDistribution<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.probs[i]
    }
}

pub(crate) fn sum_tolerance<T: Scalar>(n: usize) -> T {
    T::c(1e-9).max(T::epsilon() * T::from_usize_lossy(4 * n.max(1)))
}

fn same_support<T: Scalar>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> Result<()> {
    if p.support_size() != q.support_size() {
        return Err(Error::Shape(format!(
            "support sizes differ: {} vs {}",
            p.support_size(),
            q.support_size()
        )));
    }
    Ok(())
}

/// `D_f(p || q)`, with `p` the agent distribution and `q` the target.
///
/// States with `q = 0 < p` are charged `f'(inf) * p`, states with `p = 0 < q`
/// are charged `q * f(0+)`, and states where both vanish contribute nothing.
pub fn f_divergence<T: Scalar>(
    generator: Generator,
    p: &FiniteDistribution<T>,
    q: &FiniteDistribution<T>,
) -> Result<T> {
    same_support(p, q)?;
    let floor = T::c(LOG_FLOOR);
    let mut total = T::zero();
    let mut uncovered = T::zero();
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if qi > T::zero() {
            if pi > T::zero() {
                total += qi * generator.value_unchecked((pi / qi).max(floor));
            } else {
                total += qi * generator.value_at_zero::<T>();
            }
        } else if pi > T::zero() {
            uncovered += pi;
        }
    }
    if uncovered > T::zero() {
        let slope = generator.fprime_at_infinity::<T>().ok_or_else(|| {
            Error::UndefinedDivergence(format!(
                "{generator} needs f'(inf) but the target has zero mass where p = {uncovered}"
            ))
        })?;
        total += slope * uncovered;
    }
    Ok(total)
}

/// Dirac mass at `goal_index` with every other state floored at `epsilon`.
pub fn clip_dirac<T: Scalar>(goal_index: usize, support_size: usize, epsilon: T) -> Result<FiniteDistribution<T>> {
    if goal_index >= support_size {
        return Err(Error::Domain(format!(
            "goal {goal_index} outside support of size {support_size}"
        )));
    }
    let n = T::from_usize_lossy(support_size);
    if !(epsilon > T::zero() && epsilon < T::one() / n) {
        return Err(Error::Domain(format!(
            "clipping epsilon {epsilon} must lie in (0, 1/{support_size})"
        )));
    }
    let mut probs = vec![epsilon; support_size];
    probs[goal_index] = T::one() - T::from_usize_lossy(support_size - 1) * epsilon;
    FiniteDistribution::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Vec<f64> {
        // log-spaced over [1e-3, 1e3]
        (0..=600).map(|i| 10f64.powf(-3.0 + i as f64 * 0.01)).collect()
    }

    #[test]
    fn catalog_values() {
        assert_eq!(Generator::Fkl.value(1.0f64).unwrap(), 0.0);
        assert_relative_eq!(Generator::Rkl.value(2.0f64).unwrap(), -(2f64.ln()));
        assert_relative_eq!(Generator::ChiSq.value(3.0f64).unwrap(), 2.0);
        assert_relative_eq!(Generator::Fkl.derivative(1.0f64).unwrap(), 1.0);
        assert_relative_eq!(Generator::Js.derivative(1.0f64).unwrap(), 0.0);
        assert_relative_eq!(Generator::ChiSq.derivative(0.5f64).unwrap(), -0.5);
        assert!(Generator::Fkl.value(0.0f64).is_err());
        assert!(Generator::Tv.derivative(-1.0f64).is_err());
    }

    #[test]
    fn unit_is_zero_and_convex() {
        for g in Generator::ALL {
            assert!(g.value(1.0f64).unwrap().abs() < 1e-12, "{g}");
            let us = grid();
            for w in us.windows(3) {
                let (a, b) = (w[0], w[2]);
                let mid = g.value(0.5 * (a + b)).unwrap();
                let chord = 0.5 * (g.value(a).unwrap() + g.value(b).unwrap());
                assert!(mid <= chord + 1e-9, "{g} not convex at {a},{b}");
            }
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        for g in Generator::ALL {
            for u in grid() {
                let h = 1e-5 * u;
                if g == Generator::Tv && (u - 1.0).abs() <= 2.0 * h {
                    continue;
                }
                let fd = (g.value(u + h).unwrap() - g.value(u - h).unwrap()) / (2.0 * h);
                let an = g.derivative(u).unwrap();
                let err = (fd - an).abs() / an.abs().max(1e-8);
                assert!(err < 1e-6 || (fd - an).abs() < 1e-9, "{g} at {u}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn derivative_is_monotone() {
        for g in Generator::ALL {
            let d: Vec<f64> = grid().into_iter().map(|u| g.derivative(u).unwrap()).collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{g}");
        }
    }

    #[test]
    fn slope_at_infinity_matches_catalog() {
        assert_eq!(Generator::Rkl.fprime_at_infinity::<f64>(), Some(0.0));
        assert_relative_eq!(Generator::Js.fprime_at_infinity::<f64>().unwrap(), 2f64.ln());
        assert_eq!(Generator::Tv.fprime_at_infinity::<f64>(), Some(0.5));
        assert!(Generator::Fkl.fprime_at_infinity::<f64>().is_none());
        assert!(Generator::ChiSq.fprime_at_infinity::<f64>().is_none());
        // the derivative approaches the finite slopes
        for g in [Generator::Rkl, Generator::Js, Generator::Tv] {
            let far = g.derivative(1e9f64).unwrap();
            assert!((far - g.fprime_at_infinity::<f64>().unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn names_round_trip() {
        for g in Generator::ALL {
            assert_eq!(g.name().parse::<Generator>().unwrap(), g);
        }
        assert!("hellinger".parse::<Generator>().is_err());
    }

    fn dist(v: &[f64]) -> FiniteDistribution<f64> {
        FiniteDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let p = dist(&[0.5, 0.5]);
        for g in Generator::ALL {
            assert!(f_divergence(g, &p, &p).unwrap().abs() < 1e-12);
        }
        let q = dist(&[0.25, 0.75]);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_relative_eq!(f_divergence(Generator::Fkl, &p, &q).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn zero_mass_handling() {
        // target misses state 1: rkl charges f'(inf) = 0, so only 1 * f(0.5) = log 2 remains
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[1.0, 0.0]);
        assert_relative_eq!(
            f_divergence(Generator::Rkl, &p, &q).unwrap(),
            2f64.ln(),
            epsilon = 1e-12
        );
        // js: f(0.5) + log2 * 0.5
        let js = Generator::Js.value(0.5).unwrap() + 2f64.ln() * 0.5;
        assert_relative_eq!(f_divergence(Generator::Js, &p, &q).unwrap(), js, epsilon = 1e-12);
        assert!(matches!(
            f_divergence(Generator::Fkl, &p, &q),
            Err(Error::UndefinedDivergence(_))
        ));
        // agent misses a state the target covers: rkl is infinite, fkl finite
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.5, 0.5]);
        assert!(f_divergence(Generator::Rkl, &p, &q).unwrap().is_infinite());
        assert_relative_eq!(
            f_divergence(Generator::Fkl, &p, &q).unwrap(),
            2f64.ln(),
            epsilon = 1e-12
        );
        // both zero contributes nothing
        let p = dist(&[1.0, 0.0]);
        assert_eq!(f_divergence(Generator::Fkl, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.2, 0.3, 0.5]);
        assert!(matches!(f_divergence(Generator::Fkl, &p, &q), Err(Error::Shape(_))));
    }

    #[test]
    fn clip_dirac_examples() {
        let d = clip_dirac(0, 2, 0.1f64).unwrap();
        assert_relative_eq!(d[0], 0.9);
        assert_relative_eq!(d[1], 0.1);
        let d = clip_dirac(2, 4, 0.05f64).unwrap();
        let expected = [0.05, 0.05, 0.85, 0.05];
        for (a, b) in d.probs().iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(clip_dirac(0, 2, 0.6f64).is_err());
        assert!(clip_dirac(0, 2, 0.0f64).is_err());
        assert!(clip_dirac(5, 2, 0.1f64).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = FiniteDistribution::new(vec![0.5f32, 0.5]).unwrap();
        let q = FiniteDistribution::new(vec![0.25f32, 0.75]).unwrap();
        let d = f_divergence(Generator::Fkl, &p, &q).unwrap();
        assert!((d - 0.143_841).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(FiniteDistribution::new(vec![0.5f64, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![-0.1f64, 1.1]).is_err());
        assert!(FiniteDistribution::<f64>::new(vec![]).is_err());
    }
}
