//! Expectation objectives: the frequency LP, achievability, 2-memory
//! witness strategies, Pareto membership and grid approximation.

use crate::graph::{maximal_end_components, maximal_end_components_within, EndComponent};
use crate::lp::{self, Direction, LinearProgram, LpOutcome, Relation, Var};
use crate::model::{format_rational, to_f64, Mdp, Rational, RewardModel, StateId};
use crate::strategy::{normalized_choice, StochasticUpdateStrategy};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("vector has {actual} entries, the reward model has dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("the query is not achievable")]
    NotAchievable,
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("probability threshold must lie in [0, 1]")]
    ProbabilityOutOfRange,
    #[error("grid has {size} points, budget is {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
    #[error("not a maximal end component of the model")]
    NotAMec,
    #[error("model is not strongly connected")]
    NotStronglyConnected,
    #[error("target frequencies violate the invariance equations or do not sum to 1")]
    BadFrequencies,
    #[error("{0}")]
    Simulation(String),
}

pub(crate) fn check_dimension(rewards: &RewardModel, v: &[Rational]) -> Result<(), QueryError> {
    if v.len() != rewards.dimension() {
        return Err(QueryError::DimensionMismatch {
            expected: rewards.dimension(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// The frequency system with handles to its variable groups.
#[derive(Debug, Clone)]
pub struct FrequencySystem {
    pub program: LinearProgram,
    pub y_state: Vec<Var>,
    pub y_action: Vec<Var>,
    pub x_action: Vec<Var>,
    pub mecs: Vec<EndComponent>,
}

impl FrequencySystem {
    pub fn frequencies(&self, outcome: &LpOutcome) -> Vec<Rational> {
        self.x_action.iter().map(|&x| outcome.value(x).clone()).collect()
    }
}

/// Adds the flow equations
/// `1_{s0}(s) + Σ_a y_a δ(a)(s) = Σ_{a∈Act(s)} y_a + y_s` for every state.
fn add_flow_equations(program: &mut LinearProgram, mdp: &Mdp, s0: StateId, y_state: &[Var], y_action: &[Var]) {
    for s in 0..mdp.num_states() {
        let mut terms: BTreeMap<Var, Rational> = BTreeMap::new();
        for &a in mdp.enabled(s) {
            *terms.entry(y_action[a]).or_insert_with(Rational::zero) += Rational::one();
        }
        *terms.entry(y_state[s]).or_insert_with(Rational::zero) += Rational::one();
        for (a, action) in mdp.actions().iter().enumerate() {
            if let Some((_, p)) = action.distribution.iter().find(|(t, _)| *t == s) {
                *terms.entry(y_action[a]).or_insert_with(Rational::zero) -= p;
            }
        }
        let rhs = if s == s0 { Rational::one() } else { Rational::zero() };
        program.add_constraint(
            format!("flow_{}", mdp.state_name(s)),
            terms.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
            Relation::Eq,
            rhs,
        );
    }
}

/// Adds `Σ_a x_a δ(a)(s) = Σ_{a∈Act(s)} x_a` for every state.
pub(crate) fn add_invariance_equations(program: &mut LinearProgram, mdp: &Mdp, x_action: &[Option<Var>], label: &str) {
    for s in 0..mdp.num_states() {
        let mut terms: BTreeMap<Var, Rational> = BTreeMap::new();
        for &a in mdp.enabled(s) {
            if let Some(x) = x_action[a] {
                *terms.entry(x).or_insert_with(Rational::zero) -= Rational::one();
            }
        }
        for (a, action) in mdp.actions().iter().enumerate() {
            let Some(x) = x_action[a] else { continue };
            if let Some((_, p)) = action.distribution.iter().find(|(t, _)| *t == s) {
                *terms.entry(x).or_insert_with(Rational::zero) += p;
            }
        }
        let terms: Vec<(Var, Rational)> = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        if terms.is_empty() && x_action.iter().all(Option::is_none) {
            continue;
        }
        program.add_constraint(
            format!("{label}_{}", mdp.state_name(s)),
            terms,
            Relation::Eq,
            Rational::zero(),
        );
    }
}

/// Builds the frequency system for threshold `v`; `mecs` defaults to the MEC decomposition.
pub fn build_frequency_system(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    v: &[Rational],
) -> Result<FrequencySystem, QueryError> {
    check_dimension(rewards, v)?;
    let mecs = maximal_end_components(mdp);
    Ok(build_with_mecs(mdp, rewards, s0, v, mecs))
}

fn build_with_mecs(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    v: &[Rational],
    mecs: Vec<EndComponent>,
) -> FrequencySystem {
    let mut program = LinearProgram::new();
    let y_state: Vec<Var> = (0..mdp.num_states())
        .map(|s| program.add_variable(format!("y_{}", mdp.state_name(s)), true))
        .collect();
    let y_action: Vec<Var> = (0..mdp.num_actions())
        .map(|a| program.add_variable(format!("y_{}", mdp.action_name(a)), true))
        .collect();
    let x_action: Vec<Var> = (0..mdp.num_actions())
        .map(|a| program.add_variable(format!("x_{}", mdp.action_name(a)), true))
        .collect();

    add_flow_equations(&mut program, mdp, s0, &y_state, &y_action);

    // The switching mass must end up inside MECs. Summing the flow equations
    // already forces Σ_s y_s = 1, so this also rules out y_s > 0 outside MECs.
    let in_mec: Vec<StateId> = {
        let mut states: Vec<StateId> = mecs.iter().flat_map(|c| c.states.iter().copied()).collect();
        states.sort_unstable();
        states
    };
    program.add_constraint(
        "normalization",
        in_mec.iter().map(|&s| (y_state[s], Rational::one())).collect(),
        Relation::Eq,
        Rational::one(),
    );

    for (i, mec) in mecs.iter().enumerate() {
        let mut terms: Vec<(Var, Rational)> = mec.states.iter().map(|&s| (y_state[s], Rational::one())).collect();
        terms.extend(mec.actions.iter().map(|&a| (x_action[a], -Rational::one())));
        program.add_constraint(format!("mec_mass_{i}"), terms, Relation::Eq, Rational::zero());
    }

    let optional: Vec<Option<Var>> = x_action.iter().copied().map(Some).collect();
    add_invariance_equations(&mut program, mdp, &optional, "invariance");

    for (i, vi) in v.iter().enumerate() {
        let terms = (0..mdp.num_actions())
            .filter(|&a| !rewards.reward(a, i).is_zero())
            .map(|a| (x_action[a], rewards.reward(a, i).clone()))
            .collect();
        program.add_constraint(
            format!("reward_{}", rewards.names()[i]),
            terms,
            Relation::Ge,
            vi.clone(),
        );
    }

    FrequencySystem {
        program,
        y_state,
        y_action,
        x_action,
        mecs,
    }
}

/// Whether `v` is achievable for the expectation objective; the LP witness when it is.
pub fn decide_achievable(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    v: &[Rational],
) -> Result<(bool, Option<LpOutcome>), QueryError> {
    let system = build_frequency_system(mdp, rewards, s0, v)?;
    let outcome = lp::solve_feasible(&system.program).expect("frequency system is well formed");
    Ok(if outcome.is_feasible() {
        (true, Some(outcome))
    } else {
        (false, None)
    })
}

/// A 2-memory witness together with the LP data it was assembled from.
#[derive(Debug, Clone)]
pub struct ExpectationStrategy {
    pub strategy: StochasticUpdateStrategy,
    /// Solution `x̄` of the frequency system.
    pub frequencies: Vec<Rational>,
    /// Solution `ŷ_s` of the second system: switching mass per state.
    pub switching: Vec<Rational>,
    /// Solution `ŷ_a` of the second system.
    pub transient_flow: Vec<Rational>,
    /// End components of the support of `x̄`.
    pub components: Vec<EndComponent>,
}

pub const FIRST_MEMORY: usize = 0;
pub const SECOND_MEMORY: usize = 1;

/// Assembles the 2-memory witness for an achievable `v`.
pub fn synthesize_strategy(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    v: &[Rational],
) -> Result<ExpectationStrategy, QueryError> {
    let system = build_frequency_system(mdp, rewards, s0, v)?;
    let outcome = lp::solve_feasible(&system.program).expect("frequency system is well formed");
    if !outcome.is_feasible() {
        return Err(QueryError::NotAchievable);
    }
    let x_bar = system.frequencies(&outcome);
    Ok(assemble(mdp, s0, x_bar))
}

/// Builds the witness strategy from a solution `x̄` of the frequency system.
pub fn assemble(mdp: &Mdp, s0: StateId, x_bar: Vec<Rational>) -> ExpectationStrategy {
    let support: Vec<bool> = x_bar.iter().map(Signed::is_positive).collect();
    let components = maximal_end_components_within(mdp, &support);

    let mut program = LinearProgram::new();
    let y_state: Vec<Var> = (0..mdp.num_states())
        .map(|s| program.add_variable(format!("y_{}", mdp.state_name(s)), true))
        .collect();
    let y_action: Vec<Var> = (0..mdp.num_actions())
        .map(|a| program.add_variable(format!("y_{}", mdp.action_name(a)), true))
        .collect();
    add_flow_equations(&mut program, mdp, s0, &y_state, &y_action);
    for (i, component) in components.iter().enumerate() {
        let mass: Rational = component
            .states
            .iter()
            .flat_map(|&s| mdp.enabled(s).iter())
            .map(|&a| x_bar[a].clone())
            .sum();
        program.add_constraint(
            format!("switch_mass_{i}"),
            component
                .states
                .iter()
                .map(|&s| (y_state[s], Rational::one()))
                .collect(),
            Relation::Eq,
            mass,
        );
    }
    let outcome = lp::solve_feasible(&program).expect("switching system is well formed");
    assert!(
        outcome.is_feasible(),
        "switching system is feasible whenever the frequency system is"
    );
    let y_hat_state: Vec<Rational> = y_state.iter().map(|&v| outcome.value(v).clone()).collect();
    let y_hat_action: Vec<Rational> = y_action.iter().map(|&v| outcome.value(v).clone()).collect();

    let next_move = (0..mdp.num_states())
        .map(|s| {
            vec![
                normalized_choice(mdp.enabled(s), &y_hat_action),
                normalized_choice(mdp.enabled(s), &x_bar),
            ]
        })
        .collect();

    let switch_probability = |t: StateId| -> Rational {
        let outflow: Rational = mdp.enabled(t).iter().map(|&a| y_hat_action[a].clone()).sum();
        let total = &outflow + &y_hat_state[t];
        if total.is_zero() {
            Rational::zero()
        } else {
            &y_hat_state[t] / total
        }
    };
    let split = |p: Rational| -> Vec<(usize, Rational)> {
        let stay = Rational::one() - &p;
        let mut dist = Vec::new();
        if !stay.is_zero() {
            dist.push((FIRST_MEMORY, stay));
        }
        if !p.is_zero() {
            dist.push((SECOND_MEMORY, p));
        }
        dist
    };

    let switch: Vec<Rational> = (0..mdp.num_states()).map(switch_probability).collect();
    let mut update = BTreeMap::new();
    for (a, action) in mdp.actions().iter().enumerate() {
        for (t, _) in &action.distribution {
            if switch[*t].is_positive() {
                update.insert((a, *t, FIRST_MEMORY), split(switch[*t].clone()));
            }
        }
    }
    let strategy = StochasticUpdateStrategy {
        memory: vec!["m1".to_string(), "m2".to_string()],
        initial: split(switch[s0].clone()),
        next_move,
        update,
    };
    ExpectationStrategy {
        strategy,
        frequencies: x_bar,
        switching: y_hat_state,
        transient_flow: y_hat_action,
        components,
    }
}

/// Whether `v` is achievable and no achievable vector exceeds its coordinate sum.
pub fn decide_pareto_point(mdp: &Mdp, rewards: &RewardModel, s0: StateId, v: &[Rational]) -> Result<bool, QueryError> {
    let mut system = build_frequency_system(mdp, rewards, s0, v)?;
    let objective = (0..mdp.num_actions())
        .filter_map(|a| {
            let total: Rational = rewards.vector(a).iter().cloned().sum();
            (!total.is_zero()).then(|| (system.x_action[a], total))
        })
        .collect();
    system.program.set_objective(Direction::Maximize, objective);
    let outcome = lp::solve_optimize(&system.program).expect("frequency system is well formed");
    let target: Rational = v.iter().cloned().sum();
    Ok(outcome.objective_value == Some(target))
}

/// Grid `{ℓε : −M ≤ ℓε ≤ M}`, ascending.
pub(crate) fn grid_axis(m_r: &Rational, epsilon: &Rational) -> Vec<Rational> {
    let ratio = m_r / epsilon;
    let top: BigInt = ratio.numer().div_floor(ratio.denom());
    let mut axis = Vec::new();
    let mut l = -top.clone();
    while l <= top {
        axis.push(Rational::from_integer(l.clone()) * epsilon);
        l += 1;
    }
    axis
}

pub(crate) fn check_grid(axis_len: usize, k: usize, budget: u128) -> Result<(), QueryError> {
    let size = (axis_len as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if size > budget {
        return Err(QueryError::BudgetExceeded { size, budget });
    }
    Ok(())
}

/// Sequence of every index vector over `len^(k-1)` prefixes.
pub(crate) fn prefixes(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 1..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..len).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Largest index in `0..len` with `holds(index)`, for a predicate that is
/// downward closed; `None` if it fails everywhere.
pub(crate) fn last_true(len: usize, holds: impl Fn(usize) -> bool) -> Option<usize> {
    if len == 0 || !holds(0) {
        return None;
    }
    let (mut lo, mut hi) = (0, len);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

pub(crate) fn dominates(a: &[Rational], b: &[Rational]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Achievable grid points that are maximal among achievable grid points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParetoSample {
    pub points: Vec<Vec<Rational>>,
    pub epsilon: Rational,
    pub m_r: Rational,
}

impl ParetoSample {
    /// One point per row: exact values followed by decimal approximations.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::new();
        let header: Vec<String> = names
            .iter()
            .cloned()
            .chain(names.iter().map(|n| format!("{n}_approx")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for p in &self.points {
            out.push_str(&csv_row(p));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_row(values: &[Rational]) -> String {
    values
        .iter()
        .map(format_rational)
        .chain(values.iter().map(|x| format!("{:.6}", to_f64(x))))
        .collect::<Vec<_>>()
        .join(",")
}

pub const DEFAULT_GRID_BUDGET: u128 = 1_000_000;

/// ε-grid approximation of the expectation Pareto curve.
///
/// Achievability is downward closed, so for every assignment of the first
/// `k − 1` coordinates only the largest achievable last coordinate can be
/// maximal; it is found by binary search.
pub fn approximate_pareto(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    epsilon: &Rational,
    budget: u128,
) -> Result<ParetoSample, QueryError> {
    if !epsilon.is_positive() {
        return Err(QueryError::NonPositiveEpsilon);
    }
    let m_r = rewards.max_abs();
    let axis = grid_axis(&m_r, epsilon);
    let k = rewards.dimension();
    check_grid(axis.len(), k, budget)?;
    let mecs = maximal_end_components(mdp);
    let achievable = |v: &[Rational]| {
        let system = build_with_mecs(mdp, rewards, s0, v, mecs.clone());
        lp::solve_feasible(&system.program)
            .expect("frequency system is well formed")
            .is_feasible()
    };
    let candidates: Vec<Vec<Rational>> = prefixes(axis.len(), k)
        .into_par_iter()
        .filter_map(|prefix| {
            let mut v: Vec<Rational> = prefix.iter().map(|&i| axis[i].clone()).collect();
            let last = last_true(axis.len(), |i| {
                let mut w = v.clone();
                w.push(axis[i].clone());
                achievable(&w)
            })?;
            v.push(axis[last].clone());
            Some(v)
        })
        .collect();
    let points = maximal_points(candidates);
    Ok(ParetoSample {
        points,
        epsilon: epsilon.clone(),
        m_r,
    })
}

pub(crate) fn maximal_points(mut candidates: Vec<Vec<Rational>>) -> Vec<Vec<Rational>> {
    candidates.sort();
    candidates.dedup();
    let keep: Vec<bool> = candidates
        .iter()
        .map(|p| !candidates.iter().any(|q| q != p && dominates(q, p)))
        .collect();
    candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}
