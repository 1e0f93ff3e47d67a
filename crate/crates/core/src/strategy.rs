//! Finite-memory stochastic-update strategies and the induced play chain.

use crate::graph::MarkovChain;
use crate::model::{format_rational, parse_rational, ActionId, Mdp, ModelError, Rational, StateId};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

pub type MemoryId = usize;

/// A finite distribution as `(outcome, probability)` pairs sorted by outcome.
pub type Distribution = Vec<(usize, Rational)>;

fn check_distribution(dist: &[(usize, Rational)], what: &str, out: &mut Vec<String>) {
    let mut sum = Rational::zero();
    for (_, p) in dist {
        if !p.is_positive() {
            out.push(format!("{what}: non-positive probability {}", format_rational(p)));
        }
        sum += p;
    }
    if !sum.is_one() {
        out.push(format!("{what}: probabilities sum to {}", format_rational(&sum)));
    }
    if dist.windows(2).any(|w| w[0].0 >= w[1].0) {
        out.push(format!("{what}: outcomes not strictly increasing"));
    }
}

/// `(σ_u, σ_n, α)` over a finite memory set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StochasticUpdateStrategy {
    pub memory: Vec<String>,
    pub initial: Distribution,
    /// `next_move[s][m]`, a distribution over actions enabled at `s`.
    pub next_move: Vec<Vec<Distribution>>,
    /// `σ_u(a, t, m)`; absent entries keep the memory unchanged.
    pub update: BTreeMap<(ActionId, StateId, MemoryId), Distribution>,
}

impl StochasticUpdateStrategy {
    pub fn memory_size(&self) -> usize {
        self.memory.len()
    }

    pub fn next_move(&self, s: StateId, m: MemoryId) -> &[(ActionId, Rational)] {
        &self.next_move[s][m]
    }

    /// Memory distribution after playing `a` and arriving at `t` with memory `m`.
    pub fn update(&self, a: ActionId, t: StateId, m: MemoryId) -> Distribution {
        self.update
            .get(&(a, t, m))
            .cloned()
            .unwrap_or_else(|| vec![(m, Rational::one())])
    }

    pub fn validate(&self, mdp: &Mdp) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.memory.len();
        if k == 0 {
            out.push("empty memory set".to_string());
        }
        check_distribution(&self.initial, "initial memory", &mut out);
        if self.initial.iter().any(|(m, _)| *m >= k) {
            out.push("initial memory references unknown element".to_string());
        }
        if self.next_move.len() != mdp.num_states() {
            out.push(format!(
                "next-move function covers {} states, model has {}",
                self.next_move.len(),
                mdp.num_states()
            ));
            return out;
        }
        for (s, per_memory) in self.next_move.iter().enumerate() {
            if per_memory.len() != k {
                out.push(format!(
                    "state {}: next move missing for some memory",
                    mdp.state_name(s)
                ));
                continue;
            }
            for (m, dist) in per_memory.iter().enumerate() {
                let what = format!("next move at ({}, {})", mdp.state_name(s), self.memory[m]);
                check_distribution(dist, &what, &mut out);
                for (a, _) in dist {
                    if *a >= mdp.num_actions() || mdp.source(*a) != s {
                        out.push(format!("{what}: action not enabled"));
                    }
                }
            }
        }
        for ((a, t, m), dist) in &self.update {
            let what = format!("memory update at ({a}, {t}, {m})");
            if *a >= mdp.num_actions() || *t >= mdp.num_states() || *m >= k {
                out.push(format!("{what}: unknown action, state or memory"));
            }
            check_distribution(dist, &what, &mut out);
            if dist.iter().any(|(m2, _)| *m2 >= k) {
                out.push(format!("{what}: unknown memory element"));
            }
        }
        out
    }
}

/// Memoryless randomized strategy: one action distribution per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemorylessStrategy {
    pub choices: Vec<Distribution>,
}

impl MemorylessStrategy {
    pub fn pure(choices: &[ActionId]) -> Self {
        MemorylessStrategy {
            choices: choices.iter().map(|&a| vec![(a, Rational::one())]).collect(),
        }
    }

    pub fn uniform(mdp: &Mdp) -> Self {
        MemorylessStrategy {
            choices: (0..mdp.num_states()).map(|s| uniform_over(mdp.enabled(s))).collect(),
        }
    }

    pub fn to_stochastic_update(&self) -> StochasticUpdateStrategy {
        StochasticUpdateStrategy {
            memory: vec!["m".to_string()],
            initial: vec![(0, Rational::one())],
            next_move: self.choices.iter().map(|d| vec![d.clone()]).collect(),
            update: BTreeMap::new(),
        }
    }

    pub fn validate(&self, mdp: &Mdp) -> Vec<String> {
        self.to_stochastic_update().validate(mdp)
    }
}

pub(crate) fn uniform_over(actions: &[ActionId]) -> Distribution {
    let p = Rational::new(1.into(), (actions.len() as i64).into());
    actions.iter().map(|&a| (a, p.clone())).collect()
}

/// A location `(s, m, a)` of the play chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    pub state: StateId,
    pub memory: MemoryId,
    pub action: ActionId,
}

/// The Markov chain of a play together with the label of every location.
#[derive(Debug, Clone)]
pub struct PlayChain {
    pub chain: MarkovChain,
    pub labels: Vec<Location>,
}

impl PlayChain {
    pub fn index_of(&self, location: Location) -> Option<usize> {
        self.labels.iter().position(|l| *l == location)
    }
}

/// Builds the reachable part of the play chain started in `s0`.
pub fn product_chain(mdp: &Mdp, strategy: &StochasticUpdateStrategy, s0: StateId) -> PlayChain {
    let mut index: HashMap<Location, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |loc: Location, labels: &mut Vec<Location>, queue: &mut VecDeque<usize>| {
        *index.entry(loc).or_insert_with(|| {
            labels.push(loc);
            queue.push_back(labels.len() - 1);
            labels.len() - 1
        })
    };
    let mut initial = Vec::new();
    for (m, pm) in &strategy.initial {
        for (a, pa) in strategy.next_move(s0, *m) {
            let loc = Location {
                state: s0,
                memory: *m,
                action: *a,
            };
            initial.push((intern(loc, &mut labels, &mut queue), pm * pa));
        }
    }
    let mut transitions: Vec<Vec<(usize, Rational)>> = Vec::new();
    while let Some(l) = queue.pop_front() {
        let Location { memory, action, .. } = labels[l];
        let mut row = Vec::new();
        for (t, p) in mdp.successors(action) {
            for (m2, q) in strategy.update(action, *t, memory) {
                let pq = p * &q;
                for (a2, r) in strategy.next_move(*t, m2) {
                    let loc = Location {
                        state: *t,
                        memory: m2,
                        action: *a2,
                    };
                    row.push((intern(loc, &mut labels, &mut queue), &pq * r));
                }
            }
        }
        if transitions.len() <= l {
            transitions.resize(l + 1, Vec::new());
        }
        transitions[l] = row;
    }
    transitions.resize(labels.len(), Vec::new());
    PlayChain {
        chain: MarkovChain { transitions, initial },
        labels,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("frequencies violate the invariance equation at state {0}")]
    NotInvariant(String),
    #[error("negative frequency for action {0}")]
    Negative(String),
}

/// Checks `Σ_a x_a δ(a)(s) = Σ_{a∈Act(s)} x_a` for every state `s`.
pub fn first_violated_invariance(mdp: &Mdp, x: &[Rational]) -> Option<StateId> {
    let mut inflow = vec![Rational::zero(); mdp.num_states()];
    let mut outflow = vec![Rational::zero(); mdp.num_states()];
    for (a, xa) in x.iter().enumerate() {
        if xa.is_zero() {
            continue;
        }
        outflow[mdp.source(a)] += xa;
        for (t, p) in mdp.successors(a) {
            inflow[*t] += xa * p;
        }
    }
    (0..mdp.num_states()).find(|&s| inflow[s] != outflow[s])
}

/// Normalizes invariant action frequencies per state; uniform where all are zero.
pub fn memoryless_from_frequencies(mdp: &Mdp, x: &[Rational]) -> Result<MemorylessStrategy, StrategyError> {
    if let Some(a) = x.iter().position(Signed::is_negative) {
        return Err(StrategyError::Negative(mdp.action_name(a).to_string()));
    }
    if let Some(s) = first_violated_invariance(mdp, x) {
        return Err(StrategyError::NotInvariant(mdp.state_name(s).to_string()));
    }
    Ok(normalize_per_state(mdp, x))
}

/// `ξ(s)(a) = x_a / Σ_{b∈Act(s)} x_b`, uniform where the denominator is zero.
pub(crate) fn normalize_per_state(mdp: &Mdp, x: &[Rational]) -> MemorylessStrategy {
    let choices = (0..mdp.num_states())
        .map(|s| normalized_choice(mdp.enabled(s), x))
        .collect();
    MemorylessStrategy { choices }
}

pub(crate) fn normalized_choice(actions: &[ActionId], x: &[Rational]) -> Distribution {
    let total: Rational = actions.iter().map(|&a| x[a].clone()).sum();
    if total.is_zero() {
        return uniform_over(actions);
    }
    actions
        .iter()
        .filter(|&&a| !x[a].is_zero())
        .map(|&a| (a, &x[a] / &total))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFile {
    memory: Vec<String>,
    initial: BTreeMap<String, String>,
    #[serde(rename = "nextMove")]
    next_move: Vec<NextMoveEntry>,
    #[serde(default)]
    update: Vec<UpdateEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NextMoveEntry {
    state: String,
    memory: String,
    actions: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateEntry {
    action: String,
    state: String,
    memory: String,
    to: BTreeMap<String, String>,
}

fn lookup(kind: &str, name: &str, index: Option<usize>, errors: &mut Vec<String>) -> usize {
    index.unwrap_or_else(|| {
        errors.push(format!("unknown {kind} {name:?}"));
        0
    })
}

fn parse_dist(
    map: &BTreeMap<String, String>,
    kind: &str,
    resolve: impl Fn(&str) -> Option<usize>,
    errors: &mut Vec<String>,
) -> Result<Distribution, ModelError> {
    let mut dist = Vec::new();
    for (name, p) in map {
        let idx = lookup(kind, name, resolve(name), errors);
        dist.push((idx, parse_rational(p)?));
    }
    dist.sort_by_key(|(i, _)| *i);
    Ok(dist)
}

/// Parses the strategy JSON format against a model.
pub fn parse_strategy(mdp: &Mdp, text: &str) -> Result<StochasticUpdateStrategy, ModelError> {
    let file: StrategyFile = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut errors = Vec::new();
    let memory_index = |name: &str| file.memory.iter().position(|m| m == name);
    let initial = parse_dist(&file.initial, "memory element", memory_index, &mut errors)?;
    let k = file.memory.len();
    let mut next_move: Vec<Vec<Option<Distribution>>> = vec![vec![None; k]; mdp.num_states()];
    for entry in &file.next_move {
        let s = lookup("state", &entry.state, mdp.state_index(&entry.state), &mut errors);
        let m = lookup(
            "memory element",
            &entry.memory,
            memory_index(&entry.memory),
            &mut errors,
        );
        let dist = parse_dist(&entry.actions, "action", |a| mdp.action_index(a), &mut errors)?;
        if let Some(slot) = next_move.get_mut(s).and_then(|row| row.get_mut(m)) {
            if slot.replace(dist).is_some() {
                errors.push(format!("duplicate next move for ({}, {})", entry.state, entry.memory));
            }
        }
    }
    let mut update = BTreeMap::new();
    for entry in &file.update {
        let a = lookup("action", &entry.action, mdp.action_index(&entry.action), &mut errors);
        let t = lookup("state", &entry.state, mdp.state_index(&entry.state), &mut errors);
        let m = lookup(
            "memory element",
            &entry.memory,
            memory_index(&entry.memory),
            &mut errors,
        );
        let dist = parse_dist(&entry.to, "memory element", memory_index, &mut errors)?;
        update.insert((a, t, m), dist);
    }
    let mut complete = Vec::with_capacity(mdp.num_states());
    for (s, row) in next_move.into_iter().enumerate() {
        let mut out = Vec::with_capacity(k);
        for (m, d) in row.into_iter().enumerate() {
            match d {
                Some(d) => out.push(d),
                None => {
                    errors.push(format!(
                        "missing next move for ({}, {})",
                        mdp.state_name(s),
                        file.memory[m]
                    ));
                    out.push(Vec::new());
                }
            }
        }
        complete.push(out);
    }
    if !errors.is_empty() {
        return Err(ModelError::Invalid(errors));
    }
    let strategy = StochasticUpdateStrategy {
        memory: file.memory,
        initial,
        next_move: complete,
        update,
    };
    let violations = strategy.validate(mdp);
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations));
    }
    Ok(strategy)
}

/// Writes the strategy JSON format with rational-string probabilities.
pub fn serialize_strategy(mdp: &Mdp, strategy: &StochasticUpdateStrategy) -> String {
    let memory_name = |m: usize| strategy.memory[m].clone();
    let names = |dist: &Distribution, name: &dyn Fn(usize) -> String| {
        dist.iter()
            .map(|(i, p)| (name(*i), format_rational(p)))
            .collect::<BTreeMap<_, _>>()
    };
    let file = StrategyFile {
        memory: strategy.memory.clone(),
        initial: names(&strategy.initial, &memory_name),
        next_move: strategy
            .next_move
            .iter()
            .enumerate()
            .flat_map(|(s, row)| {
                row.iter().enumerate().map(move |(m, dist)| NextMoveEntry {
                    state: mdp.state_name(s).to_string(),
                    memory: strategy.memory[m].clone(),
                    actions: names(dist, &|a| mdp.action_name(a).to_string()),
                })
            })
            .collect(),
        update: strategy
            .update
            .iter()
            .map(|((a, t, m), dist)| UpdateEntry {
                action: mdp.action_name(*a).to_string(),
                state: mdp.state_name(*t).to_string(),
                memory: strategy.memory[*m].clone(),
                to: names(dist, &memory_name),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("strategy serialization cannot fail")
}
