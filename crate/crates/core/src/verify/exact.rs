//! Exact evaluation of finite-memory strategies through their play chain.

use crate::graph::bsccs;
use crate::linalg;
use crate::model::{ActionId, Mdp, Rational, RewardModel, StateId};
use crate::strategy::{product_chain, PlayChain, StochasticUpdateStrategy};
use num_traits::{One, Zero};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsccReport {
    /// Chain locations of the BSCC, sorted.
    pub locations: Vec<usize>,
    pub reach_probability: Rational,
    /// Stationary distribution, aligned with `locations`.
    pub stationary: Vec<Rational>,
    /// Almost-sure limit average inside the BSCC.
    pub mean_payoff: Vec<Rational>,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub play: PlayChain,
    pub bsccs: Vec<BsccReport>,
    /// Expected number of visits to each transient location (zero on BSCCs).
    pub visits: Vec<Rational>,
    pub expected: Vec<Rational>,
}

impl EvaluationReport {
    /// `Pr[lr_inf ≥ v]`: mass of the BSCCs whose limit average dominates `v`.
    pub fn satisfaction_probability(&self, v: &[Rational]) -> Rational {
        self.bsccs
            .iter()
            .filter(|b| b.mean_payoff.iter().zip(v).all(|(m, t)| m >= t))
            .map(|b| b.reach_probability.clone())
            .sum()
    }

    /// Expected long-run frequency of every action.
    pub fn action_frequencies(&self, num_actions: usize) -> Vec<Rational> {
        let mut freq = vec![Rational::zero(); num_actions];
        for b in &self.bsccs {
            for (l, pi) in b.locations.iter().zip(&b.stationary) {
                freq[self.play.labels[*l].action] += &b.reach_probability * pi;
            }
        }
        freq
    }

    /// Probability, per state, that the memory moves from `from` to `to`
    /// on arrival at that state (the initial memory choice counts as an
    /// arrival at the initial state).
    pub fn switch_probabilities(
        &self,
        mdp: &Mdp,
        strategy: &StochasticUpdateStrategy,
        s0: StateId,
        from: usize,
        to: usize,
    ) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); mdp.num_states()];
        for (m, p) in &strategy.initial {
            if *m == to {
                out[s0] += p;
            }
        }
        for (l, visits) in self.visits.iter().enumerate() {
            let loc = self.play.labels[l];
            if visits.is_zero() || loc.memory != from {
                continue;
            }
            for (t, p) in mdp.successors(loc.action) {
                for (m2, q) in strategy.update(loc.action, *t, from) {
                    if m2 == to {
                        out[*t] += visits * p * q;
                    }
                }
            }
        }
        out
    }
}

fn stationary_distribution(play: &PlayChain, locations: &[usize]) -> Vec<Rational> {
    let n = locations.len();
    if n == 1 {
        return vec![Rational::one()];
    }
    let mut local = std::collections::HashMap::with_capacity(n);
    for (i, &l) in locations.iter().enumerate() {
        local.insert(l, i);
    }
    // Row j (j ≥ 1): Σ_i π_i P_ij − π_j = 0; row 0: Σ π = 1.
    let mut a = vec![vec![Rational::zero(); n]; n];
    for (i, &l) in locations.iter().enumerate() {
        for (t, p) in &play.chain.transitions[l] {
            let j = local[t];
            if j != 0 {
                a[j][i] += p;
            }
        }
    }
    for (j, row) in a.iter_mut().enumerate().skip(1) {
        row[j] -= Rational::one();
    }
    a[0] = vec![Rational::one(); n];
    let mut rhs = vec![Rational::zero(); n];
    rhs[0] = Rational::one();
    linalg::solve(a, vec![rhs])
        .expect("stationary system of an irreducible chain is nonsingular")
        .remove(0)
}

/// Expected visits to transient locations: solves `(I − Q)ᵀ v = μ_T`.
fn expected_visits(play: &PlayChain, in_bscc: &[bool]) -> Vec<Rational> {
    let n = play.chain.num_locations();
    let transient: Vec<usize> = (0..n).filter(|&l| !in_bscc[l]).collect();
    let mut visits = vec![Rational::zero(); n];
    if transient.is_empty() {
        return visits;
    }
    let mut local = vec![usize::MAX; n];
    for (i, &l) in transient.iter().enumerate() {
        local[l] = i;
    }
    let m = transient.len();
    let mut a = vec![vec![Rational::zero(); m]; m];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = Rational::one();
    }
    for (i, &l) in transient.iter().enumerate() {
        for (t, p) in &play.chain.transitions[l] {
            if !in_bscc[*t] {
                a[local[*t]][i] -= p;
            }
        }
    }
    let mut mu = vec![Rational::zero(); m];
    for (l, p) in &play.chain.initial {
        if !in_bscc[*l] {
            mu[local[*l]] += p;
        }
    }
    let solution = linalg::solve(a, vec![mu])
        .expect("transient part of a finite chain has nonsingular I - Q")
        .remove(0);
    for (i, v) in solution.into_iter().enumerate() {
        visits[transient[i]] = v;
    }
    visits
}

/// Exact BSCC analysis of the play of `strategy` from `s0`.
pub fn exact_expected_mean_payoff(
    mdp: &Mdp,
    rewards: &RewardModel,
    strategy: &StochasticUpdateStrategy,
    s0: StateId,
) -> EvaluationReport {
    let play = product_chain(mdp, strategy, s0);
    evaluate_play(play, rewards)
}

pub(crate) fn evaluate_play(play: PlayChain, rewards: &RewardModel) -> EvaluationReport {
    let n = play.chain.num_locations();
    let bottom = bsccs(&play.chain);
    let mut component = vec![usize::MAX; n];
    for (c, b) in bottom.iter().enumerate() {
        for &l in b {
            component[l] = c;
        }
    }
    let in_bscc: Vec<bool> = component.iter().map(|&c| c != usize::MAX).collect();
    let visits = expected_visits(&play, &in_bscc);

    let mut reach = vec![Rational::zero(); bottom.len()];
    for (l, p) in &play.chain.initial {
        if in_bscc[*l] {
            reach[component[*l]] += p;
        }
    }
    for (l, v) in visits.iter().enumerate() {
        if v.is_zero() {
            continue;
        }
        for (t, p) in &play.chain.transitions[l] {
            if in_bscc[*t] {
                reach[component[*t]] += v * p;
            }
        }
    }

    let k = rewards.dimension();
    let mut expected = vec![Rational::zero(); k];
    let reports = bottom
        .into_iter()
        .zip(reach)
        .map(|(locations, reach_probability)| {
            let stationary = stationary_distribution(&play, &locations);
            let mut mean_payoff = vec![Rational::zero(); k];
            for (l, pi) in locations.iter().zip(&stationary) {
                for (i, r) in rewards.vector(play.labels[*l].action).iter().enumerate() {
                    mean_payoff[i] += pi * r;
                }
            }
            for (e, m) in expected.iter_mut().zip(&mean_payoff) {
                *e += &reach_probability * m;
            }
            BsccReport {
                locations,
                reach_probability,
                stationary,
                mean_payoff,
            }
        })
        .collect();
    EvaluationReport {
        play,
        bsccs: reports,
        visits,
        expected,
    }
}

/// `Pr[lr_inf ≥ v]` under a finite-memory strategy, exactly.
pub fn exact_satisfaction_probability(
    mdp: &Mdp,
    rewards: &RewardModel,
    strategy: &StochasticUpdateStrategy,
    s0: StateId,
    v: &[Rational],
) -> Rational {
    exact_expected_mean_payoff(mdp, rewards, strategy, s0).satisfaction_probability(v)
}

/// Probability that the play from `s0` ever visits a state in `target`.
pub fn reach_probability(mdp: &Mdp, strategy: &StochasticUpdateStrategy, s0: StateId, target: &[StateId]) -> Rational {
    let play = product_chain(mdp, strategy, s0);
    let n = play.chain.num_locations();
    let mut is_target = vec![false; mdp.num_states()];
    for &t in target {
        is_target[t] = true;
    }
    let hit: Vec<bool> = play.labels.iter().map(|l| is_target[l.state]).collect();
    let mut predecessors = vec![Vec::new(); n];
    for (l, row) in play.chain.transitions.iter().enumerate() {
        for (t, _) in row {
            predecessors[*t].push(l);
        }
    }
    let mut reaches = hit.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&l| hit[l]).collect();
    while let Some(t) = queue.pop_front() {
        for &l in &predecessors[t] {
            if !reaches[l] {
                reaches[l] = true;
                queue.push_back(l);
            }
        }
    }
    let maybe: Vec<usize> = (0..n).filter(|&l| reaches[l] && !hit[l]).collect();
    let mut value: Vec<Rational> = hit
        .iter()
        .map(|&h| if h { Rational::one() } else { Rational::zero() })
        .collect();
    if !maybe.is_empty() {
        let mut local = vec![usize::MAX; n];
        for (i, &l) in maybe.iter().enumerate() {
            local[l] = i;
        }
        let m = maybe.len();
        let mut a = vec![vec![Rational::zero(); m]; m];
        let mut b = vec![Rational::zero(); m];
        for (i, &l) in maybe.iter().enumerate() {
            a[i][i] += Rational::one();
            for (t, p) in &play.chain.transitions[l] {
                if hit[*t] {
                    b[i] += p;
                } else if local[*t] != usize::MAX {
                    a[i][local[*t]] -= p;
                }
            }
        }
        let x = linalg::solve(a, vec![b])
            .expect("locations that can reach the target give a nonsingular system")
            .remove(0);
        for (i, xi) in x.into_iter().enumerate() {
            value[maybe[i]] = xi;
        }
    }
    play.chain.initial.iter().map(|(l, p)| p * &value[*l]).sum()
}

/// Actions chosen with positive probability somewhere in the play.
pub fn used_actions(report: &EvaluationReport) -> Vec<ActionId> {
    let mut used: Vec<ActionId> = report.play.labels.iter().map(|l| l.action).collect();
    used.sort_unstable();
    used.dedup();
    used
}
