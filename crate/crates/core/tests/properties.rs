use fpg_core::divergence::{f_divergence, FiniteDistribution, Generator};
use fpg_core::envs::TabularMdp;
use fpg_core::fpg::oracle::enumerate_trajectories;
use fpg_core::policy::{GaussianMlp, Policy, TabularSoftmax};
use fpg_core::visitation::exact_visitation;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_len).prop_flat_map(|n| prop::collection::vec(0.0f64..1.0, n))
}

fn pair(positive: bool) -> impl Strategy<Value = (FiniteDistribution<f64>, FiniteDistribution<f64>)> {
    let floor = if positive { 1e-3 } else { 0.0 };
    (2usize..=16).prop_flat_map(move |n| {
        let w = prop::collection::vec(floor..1.0, n);
        (w.clone(), w).prop_filter_map("all-zero weights", |(a, b)| {
            Some((
                FiniteDistribution::from_weights(a).ok()?,
                FiniteDistribution::from_weights(b).ok()?,
            ))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn divergences_are_non_negative((p, q) in pair(false)) {
        for g in Generator::ALL {
            match f_divergence(g, &p, &q) {
                Ok(d) => prop_assert!(d >= -1e-9, "{g}: {d}"),
                // only generators without a finite slope at infinity may refuse
                Err(_) => prop_assert!(g.fprime_at_infinity::<f64>().is_none()),
            }
        }
    }

    #[test]
    fn divergence_from_itself_vanishes(w in distribution(16)) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let p = FiniteDistribution::from_weights(w).unwrap();
        for g in Generator::ALL {
            let d = f_divergence(g, &p, &p).unwrap();
            prop_assert!(d.abs() <= 1e-9, "{g}: {d}");
        }
    }

    #[test]
    fn chi_square_bounds_forward_kl((p, q) in pair(true)) {
        // with f(u) = (u - 1)^2, twice the catalog's halved generator
        let chi2 = 2.0 * f_divergence(Generator::ChiSq, &p, &q).unwrap();
        let fkl = f_divergence(Generator::Fkl, &p, &q).unwrap();
        prop_assert!(chi2 >= fkl - 1.0 - 1e-9, "chi2 {chi2}, fkl {fkl}");
    }
}

fn central_difference<P: Policy<f64>>(policy: &P, i: usize, h: f64, f: impl Fn(&P) -> f64) -> f64 {
    let mut probe = policy.clone();
    probe.params_mut()[i] += h;
    let up = f(&probe);
    probe.params_mut()[i] -= 2.0 * h;
    let down = f(&probe);
    (up - down) / (2.0 * h)
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tabular_logprob_gradient_matches_finite_differences(
        logits in prop::collection::vec(-3.0f64..3.0, 2 * 3 * 4),
        goal in 0usize..2,
        state in 0usize..3,
        action in 0usize..4,
    ) {
        let pi = TabularSoftmax::from_logits(2, 3, 4, logits).unwrap();
        let grad = pi.logprob_grad(&state, &goal, &action).unwrap();
        let numeric: Vec<f64> = (0..pi.num_params())
            .map(|i| central_difference(&pi, i, 1e-5, |p| p.log_prob(&state, &goal, &action).unwrap()))
            .collect();
        prop_assert!(max_relative_error(&grad, &numeric) <= 1e-7);
    }

    #[test]
    fn mlp_logprob_gradient_matches_finite_differences(
        seed in any::<u64>(),
        state in prop::collection::vec(-2.0f64..2.0, 3),
        goal in prop::collection::vec(-2.0f64..2.0, 2),
        action in prop::collection::vec(-0.95f64..0.95, 2),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pi = GaussianMlp::<f64>::new(3, 2, 2, vec![8, 8], None, &mut rng).unwrap();
        // move away from the near-constant initial head so every weight matters
        for (i, w) in pi.params_mut().iter_mut().enumerate() {
            *w += 0.3 * ((i as f64 + seed as f64 % 97.0) * 0.77).sin();
        }
        let grad = pi.logprob_grad(&state, &goal, &action).unwrap();
        let numeric: Vec<f64> = (0..pi.num_params())
            .map(|i| central_difference(&pi, i, 1e-6, |p| p.log_prob(&state, &goal, &action).unwrap()))
            .collect();
        prop_assert!(max_relative_error(&grad, &numeric) <= 1e-4);
    }

    #[test]
    fn shifting_one_state_logits_keeps_its_distribution(
        logits in prop::collection::vec(-5.0f64..5.0, 3 * 4),
        state in 0usize..3,
        shift in -50.0f64..50.0,
    ) {
        let pi = TabularSoftmax::from_logits(1, 3, 4, logits.clone()).unwrap();
        let mut shifted = logits;
        for a in 0..4 {
            shifted[pi.logit_index(0, state, a).unwrap()] += shift;
        }
        let moved = TabularSoftmax::from_logits(1, 3, 4, shifted).unwrap();
        for s in 0..3 {
            let (a, b) = (pi.probs(s, 0).unwrap(), moved.probs(s, 0).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn exact_visitation_matches_enumeration(
        seed in any::<u64>(),
        n_states in 1usize..=4,
        n_actions in 1usize..=3,
        horizon in 1usize..=4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::<f64>::random(n_states, n_actions, horizon, 0, &mut rng).unwrap();
        let logits: Vec<f64> = (0..n_states * n_actions).map(|i| (i as f64 * 1.7 + seed as f64 % 13.0).sin()).collect();
        let pi = TabularSoftmax::from_logits(1, n_states, n_actions, logits).unwrap();
        let dp = exact_visitation(&mdp, &pi.state_probs(0).unwrap(), horizon, None, false).unwrap();
        let mut counted = vec![0.0; n_states];
        for (w, traj) in enumerate_trajectories(&mdp, &pi, 0).unwrap() {
            for &s in traj.visited() {
                counted[s] += w / horizon as f64;
            }
        }
        for (a, b) in dp.probs().unwrap().iter().zip(&counted) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn generator_derivatives_are_non_decreasing() {
    for g in Generator::ALL {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=2000 {
            let d = g.derivative(k as f64 * 0.005).unwrap();
            assert!(d >= prev - 1e-12, "{g} at u = {}", k as f64 * 0.005);
            prev = d;
        }
    }
}

#[test]
fn sampled_actions_follow_state_probabilities() {
    let pi = TabularSoftmax::from_logits(1, 2, 3, vec![0.5, -1.0, 1.2, 0.0, 0.0, 2.0]).unwrap();
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in 0..2 {
        let probs = pi.probs(s, 0).unwrap();
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[pi.act(&s, &0, &mut rng).unwrap().0] += 1;
        }
        for a in 0..3 {
            let sigma = (probs[a] * (1.0 - probs[a]) / n as f64).sqrt();
            let freq = counts[a] as f64 / n as f64;
            assert!(
                (freq - probs[a]).abs() <= 3.0 * sigma,
                "state {s} action {a}: {freq} vs {}",
                probs[a]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // with a fixed start, counting s_0 only adds mass at the start state, so the
    // ranking of every other state (and hence its f' ordering) is unchanged
    #[test]
    fn initial_state_convention_keeps_the_ranking_of_other_states(
        rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 4 * 2),
        policy_rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 2), 4),
        start in 0usize..4,
        horizon in 1usize..6,
    ) {
        let transitions: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                let total: f64 = r.iter().sum();
                r.iter().map(move |x| x / total)
            })
            .collect();
        let pi: Vec<Vec<f64>> = policy_rows
            .iter()
            .map(|r| {
                let total: f64 = r.iter().sum();
                r.iter().map(|x| x / total).collect()
            })
            .collect();
        let initial = FiniteDistribution::dirac(start, 4).unwrap();
        let goals = FiniteDistribution::dirac(0, 4).unwrap();
        let mdp = TabularMdp::new(4, 2, transitions, initial, goals, horizon).unwrap();
        let without = exact_visitation(&mdp, &pi, horizon, None, false).unwrap();
        let with = exact_visitation(&mdp, &pi, horizon, None, true).unwrap();
        let (a, b) = (without.probs().unwrap(), with.probs().unwrap());
        for i in (0..4).filter(|&i| i != start) {
            for j in (0..4).filter(|&j| j != start) {
                if (a[i] - a[j]).abs() > 1e-12 {
                    prop_assert_eq!(a[i] > a[j], b[i] > b[j]);
                }
            }
        }
    }
}
