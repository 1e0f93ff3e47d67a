mod common;

use common::*;
use meanpayoff::expectation::{self, QueryError};
use meanpayoff::fixtures::{random_mdp, RandomShape};
use meanpayoff::graph::{max_reach_probabilities, maximal_end_components, restrict};
use meanpayoff::model::{int, ratio, Rational};
use meanpayoff::satisfaction::{
    approximate_pareto, build_phase_schedule, decide_achievable, decide_pareto_point, good_mecs, is_good_mec,
    synthesize_strategy, uniform_frequencies, PhaseConfig, SatQuery,
};
use meanpayoff::verify::exact_satisfaction_probability;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn achievable(
    mdp: &meanpayoff::model::Mdp,
    rewards: &meanpayoff::model::RewardModel,
    nu: &Rational,
    v: &[Rational],
) -> bool {
    *nu <= Rational::one() && decide_achievable(mdp, rewards, 0, &SatQuery::new(nu.clone(), v.to_vec())).unwrap()
}

/// A threshold that some MEC meets exactly on its boundary, and the best ν for it.
fn boundary_query(
    rng: &mut ChaCha8Rng,
    mdp: &meanpayoff::model::Mdp,
    rewards: &meanpayoff::model::RewardModel,
) -> (Rational, Vec<Rational>) {
    let mecs = maximal_end_components(mdp);
    let mec = &mecs[rng.random_range(0..mecs.len())];
    let sub = restrict(mdp, mec).unwrap();
    let local = rewards.select(&sub.action_map);
    let v = boundary_vector(rng, &sub.mdp, &local, 0);
    let mut union: Vec<usize> = good_mecs(mdp, rewards, &v)
        .iter()
        .flat_map(|(c, _)| c.states.clone())
        .collect();
    union.sort_unstable();
    assert!(!union.is_empty());
    let nu = max_reach_probabilities(mdp, &union).values[0].clone();
    (nu, v)
}

#[test]
fn strongly_connected_expectation_and_almost_sure_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..20 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(2 + i % 5, 2).strongly_connected());
        let (low, high) = (rewards.min_vector(), vec![rewards.max_abs(); 2]);
        for _ in 0..10 {
            let v = meanpayoff::fixtures::random_vector(&mut rng, &low, &high);
            let exp = expectation::decide_achievable(&mdp, &rewards, 0, &v).unwrap().0;
            assert_eq!(exp, achievable(&mdp, &rewards, &int(1), &v));
        }
    }
}

#[test]
fn epsilon_strategies_meet_the_relaxed_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let epsilon = ratio(1, 100);
    for i in 0..25 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(3 + i % 5, 2));
        let (nu, v) = boundary_query(&mut rng, &mdp, &rewards);
        let query = SatQuery::new(nu.clone(), v.clone()).with_epsilon(epsilon.clone());
        assert!(decide_achievable(&mdp, &rewards, 0, &query).unwrap());
        let sigma = synthesize_strategy(&mdp, &rewards, 0, &query).unwrap();
        assert!(sigma.validate(&mdp).is_empty());
        let relaxed: Vec<Rational> = v.iter().map(|x| x - &epsilon).collect();
        let p = exact_satisfaction_probability(&mdp, &rewards, &sigma.to_stochastic_update(), 0, &relaxed);
        assert!(p >= &nu - &epsilon, "model {i}: {p} < {nu} - eps");
    }
}

#[test]
fn pareto_membership_matches_perturbation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let delta = ratio(1, 1 << 20);
    for i in 0..25 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(2 + i % 6, 2));
        let (nu, v) = boundary_query(&mut rng, &mdp, &rewards);
        for (nu, v) in [(nu.clone(), v.clone()), (&nu / int(2), v.clone())] {
            let expected = achievable(&mdp, &rewards, &nu, &v)
                && !achievable(&mdp, &rewards, &(&nu + &delta), &v)
                && (0..2).all(|d| {
                    let mut up = v.clone();
                    up[d] += &delta;
                    !achievable(&mdp, &rewards, &nu, &up)
                });
            let found = decide_pareto_point(&mdp, &rewards, 0, &SatQuery::new(nu.clone(), v.clone())).unwrap();
            assert_eq!(found, expected, "model {i}");
        }
    }
}

#[test]
fn grid_pairs_are_achievable_and_incomparable() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for i in 0..6 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(2 + i % 4, 2));
        let sample = approximate_pareto(&mdp, &rewards, 0, &ratio(1, 4), 1_000_000).unwrap();
        assert!(!sample.points.is_empty());
        for (nu, v) in &sample.points {
            assert!(*nu > Rational::zero() && *nu <= Rational::one());
            assert!(achievable(&mdp, &rewards, nu, v));
            for (nu2, v2) in &sample.points {
                let dominated = nu2 >= nu && v2.iter().zip(v).all(|(a, b)| a >= b);
                assert!((nu2, v2) == (nu, v) || !dominated);
            }
        }
    }
}

#[test]
fn good_mec_checks() {
    let (mdp, rewards) = running();
    let mecs = maximal_end_components(&mdp);
    let goods: Vec<bool> = mecs
        .iter()
        .map(|c| is_good_mec(&mdp, &rewards, c, &v(&[(0, 1), (2, 1)])).unwrap())
        .collect();
    assert_eq!(goods.iter().filter(|g| **g).count(), 1);
    let mut not_maximal = mecs[1].clone();
    not_maximal.actions.retain(|&a| mdp.action_name(a) != "a5");
    assert_eq!(
        is_good_mec(&mdp, &rewards, &not_maximal, &v(&[(0, 1), (0, 1)])).unwrap_err(),
        QueryError::NotAMec
    );
}

#[test]
fn query_errors() {
    let (mdp, rewards) = running();
    let q = SatQuery::new(ratio(3, 2), v(&[(0, 1), (0, 1)]));
    assert_eq!(
        decide_achievable(&mdp, &rewards, 0, &q).unwrap_err(),
        QueryError::ProbabilityOutOfRange
    );
    let q = SatQuery::new(int(1), v(&[(0, 1), (0, 1)])).with_epsilon(int(0));
    assert_eq!(
        synthesize_strategy(&mdp, &rewards, 0, &q).unwrap_err(),
        QueryError::NonPositiveEpsilon
    );
}

#[test]
fn uniform_frequencies_are_positive_and_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for n in 1..8 {
        let (mdp, _) = random_mdp(&mut rng, RandomShape::new(n, 1).strongly_connected());
        let f = uniform_frequencies(&mdp);
        assert!(f.iter().all(|x| *x > Rational::zero()));
        assert_eq!(f.iter().cloned().sum::<Rational>(), int(1));
        assert_eq!(meanpayoff::strategy::first_violated_invariance(&mdp, &f), None);
    }
}

#[test]
fn phase_schedules_meet_their_length_conditions() {
    let (mdp, rewards) = infinite_memory();
    let x = v(&[(1, 2), (0, 1), (1, 2), (0, 1)]);
    let config = PhaseConfig {
        runs: 200,
        ..PhaseConfig::default()
    };
    let schedule = build_phase_schedule(&mdp, &rewards, &x, 4, &config).unwrap();
    assert_eq!(schedule.phases.len(), 4);
    assert!(schedule.invariant_violations().is_empty());
    for phase in &schedule.phases {
        assert!(phase.strategy.validate(&mdp).is_empty());
        assert!(phase
            .strategy
            .choices
            .iter()
            .flatten()
            .all(|(_, p)| *p > Rational::zero()));
    }
    assert_eq!(build_phase_schedule(&mdp, &rewards, &x, 4, &config).unwrap(), schedule);

    let bad = v(&[(1, 1), (0, 1), (1, 2), (0, 1)]);
    assert_eq!(
        build_phase_schedule(&mdp, &rewards, &bad, 2, &config).unwrap_err(),
        QueryError::BadFrequencies
    );
    let (running_mdp, running_rewards) = running();
    let uniform = vec![ratio(1, 6); 6];
    assert_eq!(
        build_phase_schedule(&running_mdp, &running_rewards, &uniform, 2, &config).unwrap_err(),
        QueryError::NotStronglyConnected
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn monotone_in_probability_and_threshold(seed in any::<u64>(), n in 1usize..7, x in -8i64..8, y in -8i64..8, a in 0i64..=4, b in 0i64..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(n, 2));
        let v = vec![ratio(x, 4), ratio(y, 4)];
        let (lo, hi) = (ratio(a.min(b), 4), ratio(a.max(b), 4));
        prop_assert!(achievable(&mdp, &rewards, &int(0), &v));
        if achievable(&mdp, &rewards, &hi, &v) {
            prop_assert!(achievable(&mdp, &rewards, &lo, &v));
            let lower: Vec<Rational> = v.iter().map(|t| t - ratio(1, 8)).collect();
            prop_assert!(achievable(&mdp, &rewards, &hi, &lower));
        }
        // Almost-sure achievability implies achievability in expectation.
        if achievable(&mdp, &rewards, &int(1), &v) {
            prop_assert!(expectation::decide_achievable(&mdp, &rewards, 0, &v).unwrap().0);
        }
    }
}
