use fpg_core::divergence::{FiniteDistribution, Generator};
use fpg_core::envs::{collect_rollouts, TabularMdp};
use fpg_core::fpg::{state_fprimes, VisitationSet};
use fpg_core::policy::TabularSoftmax;
use fpg_core::visitation::{exact_visitation, fit_histogram, BandwidthRule, GoalDensity, Kde};
use proptest::prelude::*;

/// Two states; action 0 stays, action 1 switches.
fn chain(horizon: usize) -> TabularMdp<f64> {
    TabularMdp::deterministic(
        &[vec![0, 1], vec![1, 0]],
        FiniteDistribution::new(vec![1.0, 0.0]).unwrap(),
        FiniteDistribution::dirac(1, 2).unwrap(),
        horizon,
    )
    .unwrap()
}

#[test]
fn histogram_converges_to_exact_visitation() {
    let mdp = chain(2);
    let pi = TabularSoftmax::from_logits(2, 2, 2, vec![0.3, -0.4, 1.0, 0.2, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let exact = exact_visitation(&mdp, &pi.state_probs(1).unwrap(), 2, None, false)
        .unwrap()
        .to_distribution()
        .unwrap();
    // 100k episodes of two steps: 200k visited states
    let trajs = collect_rollouts(&mdp, &pi, 100_000, 3, 0).unwrap();
    let fitted = fit_histogram(&trajs, 2, 0.0, false).unwrap().to_distribution().unwrap();
    let tv = exact.total_variation(&fitted).unwrap();
    assert!(tv <= 0.02, "tv = {tv}");
}

fn integrate_2d(kde: &Kde<f64>, lo: f64, hi: f64, cells: usize) -> f64 {
    let h = (hi - lo) / cells as f64;
    let mut total = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            total += kde.density(&x).unwrap() * h * h;
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kde_mass_inside_a_box_is_at_most_one(
        points in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..30),
    ) {
        let kde = Kde::fit(points.iter().map(Vec::as_slice), 2, &BandwidthRule::Scott).unwrap();
        // the midpoint rule needs kernels several cells wide
        prop_assume!(kde.bandwidth().iter().all(|&h| h > 0.1));
        let inner = integrate_2d(&kde, -1.5, 1.5, 120);
        prop_assert!(inner <= 1.0 + 1e-6, "mass {inner}");
        // a wide box holds nearly everything
        let h = kde.bandwidth().iter().copied().fold(0.0, f64::max);
        let wide = integrate_2d(&kde, -1.0 - 8.0 * h, 1.0 + 8.0 * h, 400);
        prop_assert!(wide > 0.99, "mass {wide}");
    }

    #[test]
    fn single_sample_kde_is_a_normal_density(
        mu in -3.0f64..3.0,
        h in 0.05f64..2.0,
        x in -5.0f64..5.0,
    ) {
        let kde = Kde::fit([[mu].as_slice()], 1, &BandwidthRule::Fixed(vec![h])).unwrap();
        let z = (x - mu) / h;
        let pdf = (-0.5 * z * z).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
        let got = kde.density(&[x]).unwrap();
        prop_assert!((got - pdf).abs() <= 1e-12 * pdf.max(1.0));
    }
}

#[test]
fn frequently_visited_states_get_larger_signals() {
    // flat goal density away from the goal, so f' only sees p_theta
    let n: usize = 6;
    let next: Vec<Vec<usize>> = (0..n).map(|s| vec![s.saturating_sub(1), (s + 1).min(n - 1)]).collect();
    let mdp = TabularMdp::<f64>::deterministic(
        &next,
        FiniteDistribution::dirac(0, n).unwrap(),
        FiniteDistribution::dirac(n - 1, n).unwrap(),
        8,
    )
    .unwrap();
    let pi = TabularSoftmax::from_logits(n, n, 2, vec![0.4; n * n * 2]).unwrap();
    let trajs = collect_rollouts(&mdp, &pi, 2000, 9, 0).unwrap();
    let model = fit_histogram(&trajs, n, 0.0, false).unwrap();
    let p = model.probs().unwrap().to_vec();
    let set = VisitationSet::shared(model, trajs.len());
    let q = GoalDensity::clipped_dirac(n);
    for g in Generator::ALL {
        let fp = state_fprimes(&trajs, &set, &q, g).unwrap();
        let mut seen: Vec<(f64, f64)> = Vec::new();
        for (traj, row) in trajs.iter().zip(&fp) {
            for (&s, &f) in traj.visited().iter().zip(row) {
                if s != n - 1 {
                    seen.push((p[s], f));
                }
            }
        }
        for &(pa, fa) in &seen {
            for &(pb, fb) in &seen {
                if pa > pb {
                    assert!(fa >= fb - 1e-12, "{g}: p {pa} > {pb} but f' {fa} < {fb}");
                }
            }
        }
    }
}
