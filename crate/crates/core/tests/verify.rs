mod common;

use common::*;
use meanpayoff::fixtures::{random_mdp, random_memoryless, RandomShape, RUNNING_STRATEGY};
use meanpayoff::model::{int, to_f64, Rational};
use meanpayoff::strategy::{parse_strategy, MemorylessStrategy};
use meanpayoff::verify::{
    exact_expected_mean_payoff, exact_satisfaction_probability, reach_probability, simulate, used_actions,
    SimulatedStrategy, SimulationConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reports_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..40 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(1 + i % 8, 2));
        let sigma = random_memoryless(&mut rng, &mdp).to_stochastic_update();
        let report = exact_expected_mean_payoff(&mdp, &rewards, &sigma, 0);
        let total: Rational = report.bsccs.iter().map(|b| b.reach_probability.clone()).sum();
        assert_eq!(total, int(1));
        let mut weighted = vec![int(0); 2];
        for b in &report.bsccs {
            let rows: Vec<Vec<(usize, Rational)>> = b
                .locations
                .iter()
                .map(|l| {
                    report.play.chain.transitions[*l]
                        .iter()
                        .map(|(t, p)| (b.locations.binary_search(t).unwrap(), p.clone()))
                        .collect()
                })
                .collect();
            assert!(stationary_check(&rows, &b.stationary));
            for (w, m) in weighted.iter_mut().zip(&b.mean_payoff) {
                *w += &b.reach_probability * m;
            }
        }
        assert_eq!(weighted, report.expected);
        // Expected vector equals Σ_a freq(a)·r(a).
        assert_eq!(
            rewards.weighted_sum(&report.action_frequencies(mdp.num_actions())),
            report.expected
        );
        assert_eq!(
            exact_satisfaction_probability(&mdp, &rewards, &sigma, 0, &rewards.min_vector()),
            int(1)
        );
        assert!(used_actions(&report).iter().all(|&a| a < mdp.num_actions()));
    }
}

#[test]
fn bscc_reach_matches_reachability_of_its_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..30 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(2 + i % 6, 1));
        // With a pure strategy, locations and states coincide.
        let choice: Vec<usize> = (0..mdp.num_states()).map(|s| mdp.enabled(s)[0]).collect();
        let sigma = MemorylessStrategy::pure(&choice).to_stochastic_update();
        let report = exact_expected_mean_payoff(&mdp, &rewards, &sigma, 0);
        for b in &report.bsccs {
            let states: Vec<usize> = b.locations.iter().map(|l| report.play.labels[*l].state).collect();
            assert_eq!(reach_probability(&mdp, &sigma, 0, &states), b.reach_probability);
            assert_eq!(reach_under_pure(&mdp, &choice, &states)[0], b.reach_probability);
        }
    }
}

#[test]
fn running_strategy_monte_carlo() {
    let (mdp, rewards) = running();
    let sigma = parse_strategy(&mdp, RUNNING_STRATEGY).unwrap();
    let exact = exact_expected_mean_payoff(&mdp, &rewards, &sigma, 0).expected;
    let config = SimulationConfig::new(20_000, 2_000, 9);
    let stats = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), 0, &config);
    for (m, e) in stats.empirical_mean().iter().zip(&exact) {
        assert!((m - to_f64(e)).abs() < 0.05, "{m} vs {e}");
    }
    // Runs ending in the r2 = 2 loop never reach 2 in finite prefixes, so use a
    // threshold strictly inside both BSCC values.
    let p = exact_satisfaction_probability(&mdp, &rewards, &sigma, 0, &v(&[(0, 1), (3, 2)]));
    assert_eq!(p, meanpayoff::model::ratio(3, 4));
    let freq = stats.threshold_frequency(&[-0.5, 1.5]);
    assert!((freq - 0.75).abs() < 0.05, "{freq}");
}

#[test]
fn empirical_means_bracket_the_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(4, 2).strongly_connected());
    let sigma = random_memoryless(&mut rng, &mdp).to_stochastic_update();
    let exact: Vec<f64> = exact_expected_mean_payoff(&mdp, &rewards, &sigma, 0)
        .expected
        .iter()
        .map(to_f64)
        .collect();
    let runs = 400;
    for seed in 0..5 {
        let stats = simulate(
            &mdp,
            &rewards,
            SimulatedStrategy::FiniteMemory(&sigma),
            0,
            &SimulationConfig::new(5_000, runs, seed),
        );
        for d in 0..2 {
            let xs: Vec<f64> = stats.averages.iter().map(|r| r.last().unwrap()[d]).collect();
            let mean = xs.iter().sum::<f64>() / runs as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
            let sigma_mean = (var / runs as f64).sqrt();
            // Slack covers the O(1/horizon) start-up bias.
            assert!(
                (mean - exact[d]).abs() <= 3.0 * sigma_mean + 2e-3,
                "seed {seed} dim {d}"
            );
        }
    }
}

#[test]
fn checkpoints_and_csv() {
    let (mdp, rewards) = running();
    let sigma = parse_strategy(&mdp, RUNNING_STRATEGY).unwrap();
    let mut config = SimulationConfig::new(100, 3, 1);
    config.checkpoints = vec![50, 10, 10, 0, 500];
    let stats = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), 0, &config);
    assert_eq!(stats.checkpoints, vec![10, 50, 100]);
    let csv = stats.to_csv(rewards.names());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run,step,r1,r2");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(lines[1].starts_with("0,10,"));
    // The first step uses a1 or a2, both unrewarded, so averages stay below 2.
    for run in &stats.averages {
        for row in run {
            assert!(row[1] < 2.0 && row[0] >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_deterministic_per_seed(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(n, 2));
        let sigma = random_memoryless(&mut rng, &mdp).to_stochastic_update();
        let config = SimulationConfig::new(2_000, 8, seed);
        let a = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), 0, &config);
        let b = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), 0, &config);
        prop_assert_eq!(a, b);
    }

    // Prefix averages stay inside the reward range.
    #[test]
    fn averages_are_bounded(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(n, 2));
        let sigma = random_memoryless(&mut rng, &mdp).to_stochastic_update();
        let mut config = SimulationConfig::new(1_000, 4, seed);
        config.checkpoints = vec![1, 7, 100];
        let stats = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), 0, &config);
        let bound = to_f64(&rewards.max_abs()) + 1e-9;
        for run in &stats.averages {
            for row in run {
                prop_assert!(row.iter().all(|x| x.abs() <= bound));
            }
        }
    }
}
