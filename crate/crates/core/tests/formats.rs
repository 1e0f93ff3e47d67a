mod common;

use meanpayoff::expectation::synthesize_strategy;
use meanpayoff::fixtures::{random_mdp, random_memoryless, RandomShape};
use meanpayoff::model::{format_rational, parse_model, parse_rational, parse_vector, serialize_model, Rational};
use meanpayoff::strategy::{parse_strategy, serialize_strategy};
use num_bigint::BigInt;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn rationals_round_trip(n in any::<i64>(), d in 1i64..i64::MAX) {
        let r = Rational::new(BigInt::from(n), BigInt::from(d));
        prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
    }

    #[test]
    fn decimals_are_rejected(a in 0u32..1000, b in 0u32..1000) {
        let text = format!("{a}.{b}");
        prop_assert!(parse_rational(&text).is_err());
    }

    #[test]
    fn models_round_trip(seed in any::<u64>(), n in 1usize..8, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(n, k));
        let text = serialize_model(&mdp, &rewards);
        let (mdp2, rewards2) = parse_model(&text).unwrap();
        prop_assert_eq!(mdp2, mdp);
        prop_assert_eq!(rewards2, rewards);
    }

    #[test]
    fn memoryless_strategies_round_trip(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mdp, _) = random_mdp(&mut rng, RandomShape::new(n, 1));
        let sigma = random_memoryless(&mut rng, &mdp).to_stochastic_update();
        let back = parse_strategy(&mdp, &serialize_strategy(&mdp, &sigma)).unwrap();
        prop_assert_eq!(back, sigma);
    }
}

#[test]
fn two_memory_strategies_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for n in 2..8 {
        let (mdp, rewards) = random_mdp(&mut rng, RandomShape::new(n, 2));
        let target = common::boundary_vector(&mut rng, &mdp, &rewards, 0);
        let sigma = synthesize_strategy(&mdp, &rewards, 0, &target).unwrap().strategy;
        let back = parse_strategy(&mdp, &serialize_strategy(&mdp, &sigma)).unwrap();
        assert_eq!(back, sigma);
    }
}

#[test]
fn vectors_parse_with_signs_and_fractions() {
    let parsed = parse_vector("-1/2,3,0/5").unwrap();
    assert_eq!(
        parsed.iter().map(format_rational).collect::<Vec<_>>(),
        ["-1/2", "3", "0"]
    );
    assert!(parse_vector("1,,2").is_err());
    assert!(parse_vector("1/0").is_err());
}

#[test]
fn model_errors_are_collected() {
    let text = r#"{
        "states": ["s", "t"],
        "initial": "u",
        "rewardNames": ["r"],
        "actions": [
            {"name": "a", "from": "s", "to": {"t": "1/2"}, "rewards": ["1"]},
            {"name": "b", "from": "x", "to": {"s": "1"}, "rewards": ["1", "2"]}
        ]
    }"#;
    let message = parse_model(text).unwrap_err().to_string();
    for needle in ["\"u\"", "\"x\"", "sum", "t"] {
        assert!(message.contains(needle), "{message}");
    }
}
