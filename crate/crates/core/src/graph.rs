//! End components, MEC decomposition, BSCCs and maximal reachability.

use crate::lp::{self, Direction, LinearProgram, Relation};
use crate::model::{int, Action, ActionId, Mdp, Rational, StateId};
use num_traits::{One, Zero};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("end-component enumeration limited to {limit} actions, model has {actual}")]
    TooManyActions { limit: usize, actual: usize },
    #[error("not an end component")]
    NotEndComponent,
}

/// A state set with an action set, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndComponent {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
}

impl EndComponent {
    pub fn contains_state(&self, s: StateId) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    pub fn contains_action(&self, a: ActionId) -> bool {
        self.actions.binary_search(&a).is_ok()
    }
}

/// Strongly connected components of a directed graph, each sorted, in an
/// order where every component comes after all components it can reach.
pub fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut counter = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if let Some(&w) = adjacency[v].get(*next) {
                *next += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components
}

/// Checks closure, strong connectivity and that every state has an action.
pub fn is_end_component(mdp: &Mdp, states: &[StateId], actions: &[ActionId]) -> bool {
    if states.is_empty() || actions.is_empty() {
        return false;
    }
    let mut in_t = vec![false; mdp.num_states()];
    for &s in states {
        in_t[s] = true;
    }
    let mut has_action = vec![false; mdp.num_states()];
    for &a in actions {
        let src = mdp.source(a);
        if !in_t[src] || mdp.successors(a).iter().any(|(t, _)| !in_t[*t]) {
            return false;
        }
        has_action[src] = true;
    }
    if states.iter().any(|&s| !has_action[s]) {
        return false;
    }
    let local: Vec<usize> = {
        let mut map = vec![usize::MAX; mdp.num_states()];
        for (i, &s) in states.iter().enumerate() {
            map[s] = i;
        }
        map
    };
    let mut adjacency = vec![Vec::new(); states.len()];
    for &a in actions {
        for (t, _) in mdp.successors(a) {
            adjacency[local[mdp.source(a)]].push(local[*t]);
        }
    }
    strongly_connected_components(&adjacency).len() == 1
}

/// MECs of the MDP.
pub fn maximal_end_components(mdp: &Mdp) -> Vec<EndComponent> {
    maximal_end_components_within(mdp, &vec![true; mdp.num_actions()])
}

/// MECs of the sub-MDP using only actions with `allowed[a]`.
pub fn maximal_end_components_within(mdp: &Mdp, allowed: &[bool]) -> Vec<EndComponent> {
    let n = mdp.num_states();
    let mut allowed = allowed.to_vec();
    loop {
        let mut adjacency = vec![Vec::new(); n];
        for (a, action) in mdp.actions().iter().enumerate() {
            if allowed[a] {
                adjacency[action.source].extend(action.distribution.iter().map(|(t, _)| *t));
            }
        }
        let sccs = strongly_connected_components(&adjacency);
        let mut component_of = vec![0; n];
        for (c, scc) in sccs.iter().enumerate() {
            for &s in scc {
                component_of[s] = c;
            }
        }
        let mut changed = false;
        for (a, action) in mdp.actions().iter().enumerate() {
            if allowed[a]
                && action
                    .distribution
                    .iter()
                    .any(|(t, _)| component_of[*t] != component_of[action.source])
            {
                allowed[a] = false;
                changed = true;
            }
        }
        // A state left without actions cannot be in a MEC; actions entering
        // it are removed in the next round because it forms its own SCC.
        if changed {
            continue;
        }
        let mut components: Vec<EndComponent> = sccs
            .into_iter()
            .filter_map(|states| {
                let actions: Vec<ActionId> = states
                    .iter()
                    .flat_map(|&s| mdp.enabled(s).iter().copied())
                    .filter(|&a| allowed[a])
                    .collect();
                let every_state_acts = states.iter().all(|&s| mdp.enabled(s).iter().any(|&a| allowed[a]));
                if actions.is_empty() || !every_state_acts {
                    return None;
                }
                let mut actions = actions;
                actions.sort_unstable();
                Some(EndComponent { states, actions })
            })
            .collect();
        components.sort();
        return components;
    }
}

/// Every end component, by brute force over action subsets.
pub fn enumerate_end_components(mdp: &Mdp, max_actions: usize) -> Result<Vec<EndComponent>, GraphError> {
    let m = mdp.num_actions();
    if m > max_actions || m >= usize::BITS as usize {
        return Err(GraphError::TooManyActions {
            limit: max_actions,
            actual: m,
        });
    }
    let mut found = Vec::new();
    for mask in 1usize..(1 << m) {
        let actions: Vec<ActionId> = (0..m).filter(|a| mask >> a & 1 == 1).collect();
        let mut states: Vec<StateId> = actions.iter().map(|&a| mdp.source(a)).collect();
        states.sort_unstable();
        states.dedup();
        if is_end_component(mdp, &states, &actions) {
            found.push(EndComponent { states, actions });
        }
    }
    found.sort();
    Ok(found)
}

/// A finite Markov chain with exact transition probabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    pub transitions: Vec<Vec<(usize, Rational)>>,
    pub initial: Vec<(usize, Rational)>,
}

impl MarkovChain {
    pub fn num_locations(&self) -> usize {
        self.transitions.len()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        self.transitions
            .iter()
            .map(|row| row.iter().map(|(t, _)| *t).collect())
            .collect()
    }
}

/// Bottom SCCs, each sorted, ordered by least member.
pub fn bsccs(chain: &MarkovChain) -> Vec<Vec<usize>> {
    let adjacency = chain.adjacency();
    let sccs = strongly_connected_components(&adjacency);
    let mut component_of = vec![0; adjacency.len()];
    for (c, scc) in sccs.iter().enumerate() {
        for &l in scc {
            component_of[l] = c;
        }
    }
    let mut bottom: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| scc.iter().all(|&l| adjacency[l].iter().all(|&t| component_of[t] == *c)))
        .map(|(_, scc)| scc.clone())
        .collect();
    bottom.sort();
    bottom
}

/// An MDP restricted to an end component, with index maps back to the parent.
#[derive(Debug, Clone)]
pub struct SubMdp {
    pub mdp: Mdp,
    pub state_map: Vec<StateId>,
    pub action_map: Vec<ActionId>,
}

/// Restricts the MDP to an end component; the initial state is the least member.
pub fn restrict(mdp: &Mdp, component: &EndComponent) -> Result<SubMdp, GraphError> {
    if !is_end_component(mdp, &component.states, &component.actions) {
        return Err(GraphError::NotEndComponent);
    }
    let mut local = vec![usize::MAX; mdp.num_states()];
    for (i, &s) in component.states.iter().enumerate() {
        local[s] = i;
    }
    let states = component
        .states
        .iter()
        .map(|&s| mdp.state_name(s).to_string())
        .collect();
    let actions = component
        .actions
        .iter()
        .map(|&a| {
            let action = mdp.action(a);
            Action {
                name: action.name.clone(),
                source: local[action.source],
                distribution: action
                    .distribution
                    .iter()
                    .map(|(t, p)| (local[*t], p.clone()))
                    .collect(),
            }
        })
        .collect();
    Ok(SubMdp {
        mdp: Mdp::new(states, actions, 0),
        state_map: component.states.clone(),
        action_map: component.actions.clone(),
    })
}

/// Maximal reachability probabilities with a memoryless deterministic witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachResult {
    pub values: Vec<Rational>,
    /// Chosen action per state.
    pub strategy: Vec<ActionId>,
}

/// States from which the target is reachable in the underlying graph.
fn can_reach(mdp: &Mdp, target: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut predecessors = vec![Vec::new(); n];
    for action in mdp.actions() {
        for (t, _) in &action.distribution {
            predecessors[*t].push(action.source);
        }
    }
    let mut reach = target.to_vec();
    let mut queue: VecDeque<StateId> = (0..n).filter(|&s| target[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &predecessors[t] {
            if !reach[s] {
                reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    reach
}

fn expected_value(mdp: &Mdp, a: ActionId, values: &[Rational]) -> Rational {
    mdp.successors(a).iter().map(|(t, p)| p * &values[*t]).sum()
}

/// Supremum probability of reaching `target` from every state.
pub fn max_reach_probabilities(mdp: &Mdp, target: &[StateId]) -> ReachResult {
    let n = mdp.num_states();
    let mut is_target = vec![false; n];
    for &t in target {
        is_target[t] = true;
    }
    let positive = can_reach(mdp, &is_target);
    let maybe: Vec<StateId> = (0..n).filter(|&s| positive[s] && !is_target[s]).collect();

    let mut values: Vec<Rational> = (0..n)
        .map(|s| {
            if is_target[s] {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect();
    if !maybe.is_empty() {
        let mut program = LinearProgram::new();
        let mut var_of = vec![None; n];
        for &s in &maybe {
            var_of[s] = Some(program.add_variable(format!("val_{s}"), true));
        }
        for &s in &maybe {
            let own = var_of[s].expect("maybe state has a variable");
            for &a in mdp.enabled(s) {
                // val_s - Σ δ(a)(t)·val_t ≥ Σ_{t ∈ target} δ(a)(t)
                let mut coefficients = vec![(own, Rational::one())];
                let mut rhs = Rational::zero();
                for (t, p) in mdp.successors(a) {
                    if is_target[*t] {
                        rhs += p;
                    } else if let Some(v) = var_of[*t] {
                        coefficients.push((v, -p.clone()));
                    }
                }
                program.add_constraint(format!("bellman_{s}_{a}"), coefficients, Relation::Ge, rhs);
            }
        }
        program.set_objective(
            Direction::Minimize,
            maybe.iter().map(|&s| (var_of[s].unwrap(), int(1))).collect(),
        );
        let outcome = lp::solve_optimize(&program).expect("reachability program is well formed");
        assert!(outcome.is_feasible(), "reachability program is bounded and feasible");
        for &s in &maybe {
            values[s] = outcome.value(var_of[s].unwrap()).clone();
        }
    }

    // Among value-preserving actions pick one that shortens the distance to the target.
    const FAR: usize = usize::MAX;
    let mut distance = vec![FAR; n];
    let mut strategy: Vec<ActionId> = (0..n).map(|s| mdp.enabled(s).first().copied().unwrap_or(0)).collect();
    for s in 0..n {
        if is_target[s] {
            distance[s] = 0;
        }
    }
    let optimal: Vec<Vec<ActionId>> = (0..n)
        .map(|s| {
            if is_target[s] || values[s].is_zero() {
                return Vec::new();
            }
            mdp.enabled(s)
                .iter()
                .copied()
                .filter(|&a| expected_value(mdp, a, &values) == values[s])
                .collect()
        })
        .collect();
    let mut round = 0;
    loop {
        round += 1;
        let mut updates = Vec::new();
        for s in 0..n {
            if distance[s] != FAR {
                continue;
            }
            if let Some(&a) = optimal[s]
                .iter()
                .find(|&&a| mdp.successors(a).iter().any(|(t, _)| distance[*t] < round))
            {
                updates.push((s, a));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (s, a) in updates {
            distance[s] = round;
            strategy[s] = a;
        }
    }
    ReachResult { values, strategy }
}
