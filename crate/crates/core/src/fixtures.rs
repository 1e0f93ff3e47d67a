//! Bundled example models and random model generators for tests.

use crate::model::{int, parse_model, ratio, Action, Mdp, Rational, RewardModel};
use crate::strategy::MemorylessStrategy;
use num_traits::Zero;
use rand::seq::index::sample;
use rand::Rng;

pub const RUNNING_EXAMPLE: &str = include_str!("../fixtures/running_example.json");
/// One state with a rewarding loop and an exit to a second rewarding loop.
pub const TWO_LOOPS: &str = include_str!("../fixtures/two_loops.json");
/// Two states, each with a rewarding self-loop, linked by unrewarded moves.
pub const INFINITE_MEMORY: &str = include_str!("../fixtures/infinite_memory.json");
/// Two-memory strategy for [`RUNNING_EXAMPLE`].
pub const RUNNING_STRATEGY: &str = include_str!("../fixtures/running_strategy.json");

pub fn load(text: &str) -> (Mdp, RewardModel) {
    parse_model(text).expect("bundled model is valid")
}

/// Shape parameters for [`random_mdp`].
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub states: usize,
    pub dimension: usize,
    pub max_actions: usize,
    pub max_successors: usize,
    /// Largest absolute reward numerator; rewards are multiples of 1/2.
    pub reward_bound: i64,
    /// Adds a successor `s + 1 mod n` to the first action of every state.
    pub strongly_connected: bool,
}

impl RandomShape {
    pub fn new(states: usize, dimension: usize) -> Self {
        RandomShape {
            states,
            dimension,
            max_actions: 3,
            max_successors: 3,
            reward_bound: 4,
            strongly_connected: false,
        }
    }

    pub fn strongly_connected(mut self) -> Self {
        self.strongly_connected = true;
        self
    }
}

fn random_distribution<R: Rng>(rng: &mut R, targets: &[usize]) -> Vec<(usize, Rational)> {
    let weights: Vec<i64> = targets.iter().map(|_| rng.random_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    targets
        .iter()
        .zip(weights)
        .map(|(&t, w)| (t, ratio(w, total)))
        .collect()
}

/// A random valid MDP with rewards in `{j/2 : |j| ≤ reward_bound}`.
pub fn random_mdp<R: Rng>(rng: &mut R, shape: RandomShape) -> (Mdp, RewardModel) {
    let n = shape.states;
    let states = (0..n).map(|s| format!("s{s}")).collect();
    let mut actions = Vec::new();
    let mut values = Vec::new();
    for s in 0..n {
        let count = rng.random_range(1..=shape.max_actions);
        for j in 0..count {
            let fan_out = rng.random_range(1..=shape.max_successors.min(n));
            let mut targets = sample(rng, n, fan_out).into_vec();
            if shape.strongly_connected && j == 0 && !targets.contains(&((s + 1) % n)) {
                targets[0] = (s + 1) % n;
            }
            targets.sort_unstable();
            targets.dedup();
            actions.push(Action {
                name: format!("a{}", actions.len()),
                source: s,
                distribution: random_distribution(rng, &targets),
            });
            values.push(
                (0..shape.dimension)
                    .map(|_| ratio(rng.random_range(-shape.reward_bound..=shape.reward_bound), 2))
                    .collect(),
            );
        }
    }
    let names = (1..=shape.dimension).map(|i| format!("r{i}")).collect();
    (Mdp::new(states, actions, 0), RewardModel::new(names, values))
}

/// A random memoryless strategy with random support and weights.
pub fn random_memoryless<R: Rng>(rng: &mut R, mdp: &Mdp) -> MemorylessStrategy {
    let choices = (0..mdp.num_states())
        .map(|s| {
            let enabled = mdp.enabled(s);
            let size = rng.random_range(1..=enabled.len());
            let mut picked: Vec<usize> = sample(rng, enabled.len(), size)
                .into_iter()
                .map(|i| enabled[i])
                .collect();
            picked.sort_unstable();
            random_distribution(rng, &picked)
        })
        .collect();
    MemorylessStrategy { choices }
}

/// A random vector with entries `j/4` between the given bounds.
pub fn random_vector<R: Rng>(rng: &mut R, low: &[Rational], high: &[Rational]) -> Vec<Rational> {
    low.iter()
        .zip(high)
        .map(|(lo, hi)| {
            let a = (lo * int(4)).floor().to_integer();
            let b = (hi * int(4)).ceil().to_integer();
            let lo_i: i64 = a.try_into().unwrap_or(0);
            let hi_i: i64 = b.try_into().unwrap_or(0);
            if hi_i <= lo_i {
                return ratio(lo_i, 4);
            }
            ratio(rng.random_range(lo_i..=hi_i), 4)
        })
        .collect()
}

/// All-zero reward vector of dimension `k`.
pub fn zeros(k: usize) -> Vec<Rational> {
    vec![Rational::zero(); k]
}
