use fpg_core::divergence::Generator;
use fpg_core::envs::{collect_rollouts, TabularMdp, Trajectory};
use fpg_core::fpg::oracle::{
    enumerate_trajectories, exact_divergence, exact_gradient, finite_difference, policy_visitation,
};
use fpg_core::fpg::{
    analytic_gradient, analytic_gradient_from_fprimes, clipped_surrogate_grad, dirac_gradient, SignalBatch, SignalMode,
    SurrogateOptions, VisitationSet,
};
use fpg_core::policy::{Policy, TabularSoftmax};
use fpg_core::scalar::cosine;
use fpg_core::visitation::{GoalDensity, VisitationModel};
use fpg_core::{Error, FiniteDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(seed: u64) -> (TabularMdp<f64>, TabularSoftmax<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.random_range(2..=4);
    let n_actions = rng.random_range(1..=2);
    let horizon = rng.random_range(1..=3);
    let goal = rng.random_range(0..n_states);
    let mdp = TabularMdp::random(n_states, n_actions, horizon, goal, &mut rng).unwrap();
    let logits = (0..n_states * n_actions).map(|_| rng.random_range(-1.5..1.5)).collect();
    (
        mdp,
        TabularSoftmax::from_logits(1, n_states, n_actions, logits).unwrap(),
        goal,
    )
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            if scale < 1e-4 {
                // absolute criterion for tiny entries, mapped onto the relative scale
                (x - y).abs() / 1e-6 * 1e-3
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn exact_gradient_matches_finite_differences() {
    for seed in 0..12 {
        let (mdp, policy, goal) = random_problem(seed);
        let q = GoalDensity::clipped_dirac(mdp.n_states());
        for g in Generator::ALL {
            let analytic = exact_gradient(&mdp, &policy, goal, &q, g).unwrap();
            let fd = finite_difference(&policy, 1e-5, |p| exact_divergence(&mdp, p, goal, &q, g)).unwrap();
            let err = relative_error(&analytic, &fd);
            assert!(err <= 1e-3, "seed {seed} {g}: {analytic:?} vs {fd:?}");
        }
    }
}

#[test]
fn full_sum_surrogate_equals_analytic_on_policy() {
    let (mdp, policy, goal) = random_problem(5);
    let mdp = mdp.with_horizon(3).unwrap();
    let trajs = collect_rollouts(&mdp, &policy, 400, 11, 0).unwrap();
    let model = policy_visitation(&mdp, &policy, goal).unwrap();
    let set = VisitationSet::shared(model, trajs.len());
    let q = GoalDensity::clipped_dirac(mdp.n_states());
    let fprimes = fpg_core::fpg::state_fprimes(&trajs, &set, &q, Generator::Js).unwrap();
    let analytic = analytic_gradient_from_fprimes(&policy, &trajs, &fprimes, None, false).unwrap();
    let batch = SignalBatch::from_fprimes(trajs, fprimes, 1.0, SignalMode::FullSum).unwrap();
    let opts = SurrogateOptions {
        clip_eps: 0.2,
        subtract_baseline: false,
        normalize: false,
    };
    let surrogate = clipped_surrogate_grad(&policy, &batch, &opts).unwrap();
    for (a, b) in analytic.iter().zip(&surrogate.grad) {
        assert!((a - b).abs() < 1e-12, "{analytic:?} vs {:?}", surrogate.grad);
    }
    assert_eq!(surrogate.clip_fraction, 0.0);
}

#[test]
fn matched_distributions_give_vanishing_fkl_gradient() {
    let (mdp, policy, goal) = (8..).map(random_problem).find(|(m, _, _)| m.n_actions() == 2).unwrap();
    let exact = policy_visitation(&mdp, &policy, goal).unwrap();
    let table = GoalDensity::Table(vec![exact.to_distribution().unwrap(); mdp.n_states()]);
    let set_for = |n| VisitationSet::shared(exact.clone(), n);
    let norm = |n: usize, seed| {
        let trajs = collect_rollouts(&mdp, &policy, n, seed, 0).unwrap();
        let g = analytic_gradient(&policy, &trajs, None, &set_for(n), &table, Generator::Fkl, false).unwrap();
        g.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let small: f64 = (0..5).map(|s| norm(50, s)).sum::<f64>() / 5.0;
    let large: f64 = (0..5).map(|s| norm(20_000, s)).sum::<f64>() / 5.0;
    assert!(large < small / 5.0, "{small} -> {large}");
    // exact enumeration: zero up to rounding
    let trajs = enumerate_trajectories(&mdp, &policy, goal).unwrap();
    let (w, t): (Vec<f64>, Vec<_>) = trajs.into_iter().unzip();
    let g = analytic_gradient(&policy, &t, Some(&w), &set_for(t.len()), &table, Generator::Fkl, false).unwrap();
    assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
}

#[test]
fn identical_trajectories_give_score_direction() {
    let policy = TabularSoftmax::<f64>::from_logits(1, 2, 2, vec![0.3, -0.2, 0.1, 0.4]).unwrap();
    let traj = Trajectory {
        goal: 1usize,
        states: vec![0usize, 1, 1],
        actions: vec![1usize, 0],
        behavior_logprobs: vec![0.0; 2],
        reached: true,
    };
    let trajs = vec![traj.clone(); 3];
    let fprimes = vec![vec![0.7, 0.7]; 3];
    let g = analytic_gradient_from_fprimes(&policy, &trajs, &fprimes, None, false).unwrap();
    let mut score = vec![0.0; 4];
    for t in 0..2 {
        policy
            .accumulate_logprob_grad(&traj.states[t], &1, &traj.actions[t], 1.0, &mut score)
            .unwrap();
    }
    assert!((cosine(&g, &score) - 1.0).abs() < 1e-12);
}

/// Two states; action 1 moves from the start to the goal, which is absorbing.
fn two_state() -> TabularMdp<f64> {
    TabularMdp::deterministic(
        &[vec![0, 1], vec![1, 1]],
        FiniteDistribution::dirac(0, 2).unwrap(),
        FiniteDistribution::dirac(1, 2).unwrap(),
        3,
    )
    .unwrap()
}

#[test]
fn dirac_gradient_properties() {
    let mdp = two_state();
    let mut policy = TabularSoftmax::<f64>::from_logits(1, 2, 2, vec![2.0, -2.0, 0.0, 0.0]).unwrap();
    // nobody reaches the goal: exact zero
    let stay = Trajectory {
        goal: 1usize,
        states: vec![0usize; 4],
        actions: vec![0usize; 3],
        behavior_logprobs: vec![0.0; 3],
        reached: false,
    };
    let g = dirac_gradient(&policy, &[stay.clone(), stay], 0.3, Generator::Rkl).unwrap();
    assert!(g.iter().all(|&x| x == 0.0));
    assert!(matches!(
        dirac_gradient(&policy, &[], 0.3, Generator::Fkl),
        Err(Error::UndefinedDivergence(_))
    ));
    // leading factor f'(p) - f'(inf) is negative for every generator with a finite slope
    for gen in [Generator::Rkl, Generator::Js, Generator::Tv] {
        for &p in &[0.01, 0.3, 0.7, 0.99] {
            let lead = gen.derivative(p).unwrap() - gen.fprime_at_infinity::<f64>().unwrap();
            assert!(lead <= 0.0, "{gen} at {p}");
        }
    }
    // descent raises the expected goal visits monotonically
    let eta = |p: &TabularSoftmax<f64>| policy_visitation(&mdp, p, 1).unwrap().probs().unwrap()[1];
    let mut last = eta(&policy);
    for _ in 0..50 {
        let trajs = enumerate_trajectories(&mdp, &policy, 1).unwrap();
        let (w, t): (Vec<f64>, Vec<_>) = trajs.into_iter().unzip();
        // weight by enumeration probabilities by replicating the weighted mean
        let mut grad = vec![0.0; 4];
        for (wi, ti) in w.iter().zip(&t) {
            let gi = dirac_gradient(&policy, std::slice::from_ref(ti), last, Generator::Rkl).unwrap();
            grad.iter_mut().zip(gi).for_each(|(a, b)| *a += wi * b);
        }
        for (p, g) in policy.params_mut().iter_mut().zip(&grad) {
            *p -= 1e-2 * g;
        }
        let now = eta(&policy);
        assert!(now > last, "{now} <= {last}");
        last = now;
    }
    // the goal-reaching logit went up
    assert!(policy.params()[1] > -2.0);
}

#[test]
fn clipping_selects_the_pessimistic_branch() {
    let policy = TabularSoftmax::<f64>::new(1, 1, 2).unwrap();
    let opts = SurrogateOptions {
        clip_eps: 0.2,
        subtract_baseline: false,
        normalize: false,
    };
    let batch_with = |ratio: f64, signal: f64| {
        let traj = Trajectory {
            goal: 0usize,
            states: vec![0usize, 0],
            actions: vec![0usize],
            // current probability 1/2, so the behavior log-probability fixes the ratio
            behavior_logprobs: vec![(0.5f64 / ratio).ln()],
            reached: true,
        };
        SignalBatch::from_fprimes(vec![traj], vec![vec![signal]], 1.0, SignalMode::FullSum).unwrap()
    };
    // positive signal is being pushed down: growing the ratio past 1 + eps is never clipped
    let g = clipped_surrogate_grad(&policy, &batch_with(1.5, 1.0), &opts).unwrap();
    assert_eq!(g.clip_fraction, 0.0);
    assert!(g.grad[0] > 0.0);
    // ...but shrinking it below 1 - eps is
    let g = clipped_surrogate_grad(&policy, &batch_with(0.5, 1.0), &opts).unwrap();
    assert_eq!(g.clip_fraction, 1.0);
    assert!(g.grad.iter().all(|&x| x == 0.0));
    // the mirror case for negative signals
    let g = clipped_surrogate_grad(&policy, &batch_with(1.5, -1.0), &opts).unwrap();
    assert_eq!(g.clip_fraction, 1.0);
    assert!(g.grad.iter().all(|&x| x == 0.0));
    // inside the trust region both branches agree
    let g = clipped_surrogate_grad(&policy, &batch_with(1.1, -1.0), &opts).unwrap();
    assert_eq!(g.clip_fraction, 0.0);
    // far-off ratios reject the batch
    let err = clipped_surrogate_grad(&policy, &batch_with((25.0f64).exp(), 1.0), &opts).unwrap_err();
    assert!(matches!(err, Error::StalePolicy(_)));
}

#[test]
fn surrogate_direction_agrees_with_exact_gradient() {
    let mut worst: f64 = 1.0;
    for seed in 0..6 {
        let (mdp, policy, goal) = random_problem(100 + seed);
        if mdp.n_actions() < 2 {
            continue;
        }
        let q = GoalDensity::clipped_dirac(mdp.n_states());
        let exact = exact_gradient(&mdp, &policy, goal, &q, Generator::Fkl).unwrap();
        let model: VisitationModel<f64> = policy_visitation(&mdp, &policy, goal).unwrap();
        let trajs = collect_rollouts(&mdp, &policy, 10_000, seed, 0).unwrap();
        let set = VisitationSet::shared(model, trajs.len());
        let fprimes = fpg_core::fpg::state_fprimes(&trajs, &set, &q, Generator::Fkl).unwrap();
        let batch = SignalBatch::from_fprimes(trajs, fprimes, 1.0, SignalMode::ReverseCumulative).unwrap();
        let g = clipped_surrogate_grad(&policy, &batch, &SurrogateOptions::default()).unwrap();
        worst = worst.min(cosine(&g.grad, &exact));
    }
    assert!(worst >= 0.95, "cosine {worst}");
}
