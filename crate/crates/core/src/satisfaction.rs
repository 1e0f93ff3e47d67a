//! Satisfaction objectives: good MECs, achievability, memoryless
//! ε-strategies, Pareto membership, grid approximation and the
//! infinite-memory phase schedule.

use crate::expectation::{
    add_invariance_equations, check_dimension, check_grid, csv_row, dominates, grid_axis, last_true, prefixes,
    QueryError,
};
use crate::graph::{is_end_component, max_reach_probabilities, maximal_end_components, restrict, EndComponent};
use crate::lp::{self, Direction, LinearProgram, Relation, Var};
use crate::model::{int, to_f64, ActionId, Mdp, Rational, RewardModel, StateId};
use crate::strategy::{first_violated_invariance, normalize_per_state, normalized_choice, MemorylessStrategy};
use crate::verify::{evaluate_play, run_rng, BandTracker, Program};
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use std::collections::HashMap;

/// `(ν, v)` with an optional slack ε.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatQuery {
    pub nu: Rational,
    pub v: Vec<Rational>,
    pub epsilon: Option<Rational>,
}

impl SatQuery {
    pub fn new(nu: Rational, v: Vec<Rational>) -> Self {
        SatQuery { nu, v, epsilon: None }
    }

    pub fn with_epsilon(mut self, epsilon: Rational) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    fn check(&self, rewards: &RewardModel) -> Result<(), QueryError> {
        check_dimension(rewards, &self.v)?;
        if self.nu.is_negative() || self.nu > Rational::one() {
            return Err(QueryError::ProbabilityOutOfRange);
        }
        Ok(())
    }
}

/// Flow program over the actions of `mec`: invariance inside the MEC and `Σ x = 1`.
fn mec_flow_program(mdp: &Mdp, mec: &EndComponent) -> (LinearProgram, Vec<Option<Var>>) {
    let mut program = LinearProgram::new();
    let mut x: Vec<Option<Var>> = vec![None; mdp.num_actions()];
    for &a in &mec.actions {
        x[a] = Some(program.add_variable(format!("x_{}", mdp.action_name(a)), true));
    }
    let sub = restrict(mdp, mec).expect("MEC restricts to a strongly connected sub-MDP");
    let local: Vec<Option<Var>> = sub.action_map.iter().map(|&a| x[a]).collect();
    add_invariance_equations(&mut program, &sub.mdp, &local, "invariance");
    program.add_constraint(
        "total",
        mec.actions.iter().map(|&a| (x[a].unwrap(), Rational::one())).collect(),
        Relation::Eq,
        Rational::one(),
    );
    (program, x)
}

fn reward_terms(rewards: &RewardModel, mec: &EndComponent, x: &[Option<Var>], i: usize) -> Vec<(Var, Rational)> {
    mec.actions
        .iter()
        .filter(|&&a| !rewards.reward(a, i).is_zero())
        .map(|&a| (x[a].unwrap(), rewards.reward(a, i).clone()))
        .collect()
}

/// Frequencies inside `mec` meeting `v`, as a full-length action vector.
fn good_frequencies(mdp: &Mdp, rewards: &RewardModel, mec: &EndComponent, v: &[Rational]) -> Option<Vec<Rational>> {
    let (mut program, x) = mec_flow_program(mdp, mec);
    for (i, vi) in v.iter().enumerate() {
        program.add_constraint(
            format!("reward_{i}"),
            reward_terms(rewards, mec, &x, i),
            Relation::Ge,
            vi.clone(),
        );
    }
    let outcome = lp::solve_feasible(&program).expect("MEC flow program is well formed");
    outcome.is_feasible().then(|| {
        x.iter()
            .map(|v| v.map_or_else(Rational::zero, |v| outcome.value(v).clone()))
            .collect()
    })
}

/// Whether some strategy staying in `mec` achieves `lr_inf ≥ v` almost surely.
pub fn is_good_mec(mdp: &Mdp, rewards: &RewardModel, mec: &EndComponent, v: &[Rational]) -> Result<bool, QueryError> {
    check_dimension(rewards, v)?;
    if !maximal_end_components(mdp).contains(mec) {
        return Err(QueryError::NotAMec);
    }
    Ok(good_frequencies(mdp, rewards, mec, v).is_some())
}

/// Good MECs for `v` together with witnessing frequencies.
pub fn good_mecs(mdp: &Mdp, rewards: &RewardModel, v: &[Rational]) -> Vec<(EndComponent, Vec<Rational>)> {
    maximal_end_components(mdp)
        .into_iter()
        .filter_map(|mec| good_frequencies(mdp, rewards, &mec, v).map(|x| (mec, x)))
        .collect()
}

fn union_states<'a>(mecs: impl Iterator<Item = &'a EndComponent>) -> Vec<StateId> {
    let mut states: Vec<StateId> = mecs.flat_map(|c| c.states.iter().copied()).collect();
    states.sort_unstable();
    states
}

fn reach_value(mdp: &Mdp, s0: StateId, target: &[StateId]) -> Rational {
    if target.is_empty() {
        Rational::zero()
    } else {
        max_reach_probabilities(mdp, target).values[s0].clone()
    }
}

/// `(ν, v) ∈ AcSt` iff the good-MEC union is reachable with probability ≥ ν.
pub fn decide_achievable(mdp: &Mdp, rewards: &RewardModel, s0: StateId, query: &SatQuery) -> Result<bool, QueryError> {
    query.check(rewards)?;
    let good = good_mecs(mdp, rewards, &query.v);
    let target = union_states(good.iter().map(|(c, _)| c));
    Ok(reach_value(mdp, s0, &target) >= query.nu)
}

/// Exact stationary action frequencies of the uniform strategy on a
/// strongly connected MDP; strictly positive and summing to 1.
pub fn uniform_frequencies(mdp: &Mdp) -> Vec<Rational> {
    let uniform = MemorylessStrategy::uniform(mdp);
    let play = crate::strategy::product_chain(mdp, &uniform.to_stochastic_update(), mdp.initial());
    let report = evaluate_play(play, &RewardModel::new(Vec::new(), vec![Vec::new(); mdp.num_actions()]));
    report.action_frequencies(mdp.num_actions())
}

/// Memoryless strategy with `Pr[lr_inf ≥ v − ε] ≥ ν − ε`.
pub fn synthesize_strategy(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    query: &SatQuery,
) -> Result<MemorylessStrategy, QueryError> {
    query.check(rewards)?;
    let epsilon = query.epsilon.clone().ok_or(QueryError::NonPositiveEpsilon)?;
    if !epsilon.is_positive() {
        return Err(QueryError::NonPositiveEpsilon);
    }
    let good = good_mecs(mdp, rewards, &query.v);
    let target = union_states(good.iter().map(|(c, _)| c));
    let mut choices: Vec<Vec<(ActionId, Rational)>> = if target.is_empty() {
        if !query.nu.is_zero() {
            return Err(QueryError::NotAchievable);
        }
        MemorylessStrategy::uniform(mdp).choices
    } else {
        let reach = max_reach_probabilities(mdp, &target);
        if reach.values[s0] < query.nu {
            return Err(QueryError::NotAchievable);
        }
        MemorylessStrategy::pure(&reach.strategy).choices
    };

    let m_r = rewards.max_abs();
    let scale = if m_r.is_zero() {
        &epsilon / int(2)
    } else {
        &epsilon / (int(2) * &m_r)
    };
    for (mec, x_bar) in &good {
        let sub = restrict(mdp, mec).expect("MEC restricts to a strongly connected sub-MDP");
        let positive = uniform_frequencies(&sub.mdp);
        let mut z = x_bar.clone();
        for (local, &a) in sub.action_map.iter().enumerate() {
            z[a] += &scale * &positive[local];
        }
        for &s in &mec.states {
            let inside: Vec<ActionId> = mdp
                .enabled(s)
                .iter()
                .copied()
                .filter(|&a| mec.contains_action(a))
                .collect();
            choices[s] = normalized_choice(&inside, &z);
        }
    }
    Ok(MemorylessStrategy { choices })
}

/// Whether `(ν, v)` is a Pareto point of the satisfaction objective.
pub fn decide_pareto_point(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    query: &SatQuery,
) -> Result<bool, QueryError> {
    if !decide_achievable(mdp, rewards, s0, query)? {
        return Ok(false);
    }
    let good = good_mecs(mdp, rewards, &query.v);
    let target = union_states(good.iter().map(|(c, _)| c));
    if reach_value(mdp, s0, &target) > query.nu {
        return Ok(false);
    }
    for i in 0..rewards.dimension() {
        let improved: Vec<&EndComponent> = good
            .iter()
            .map(|(c, _)| c)
            .filter(|c| improvable(mdp, rewards, c, &query.v, i))
            .collect();
        let target = union_states(improved.into_iter());
        if reach_value(mdp, s0, &target) >= query.nu {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `mec` stays good when `v_i` is raised slightly.
fn improvable(mdp: &Mdp, rewards: &RewardModel, mec: &EndComponent, v: &[Rational], i: usize) -> bool {
    let (mut program, x) = mec_flow_program(mdp, mec);
    for (j, vj) in v.iter().enumerate() {
        if j != i {
            program.add_constraint(
                format!("reward_{j}"),
                reward_terms(rewards, mec, &x, j),
                Relation::Ge,
                vj.clone(),
            );
        }
    }
    program.set_objective(Direction::Maximize, reward_terms(rewards, mec, &x, i));
    let outcome = lp::solve_optimize(&program).expect("MEC flow program is well formed");
    outcome.objective_value.is_some_and(|best| best > v[i])
}

/// Dominance-maximal `(ν, v)` grid pairs with `ν > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatParetoSample {
    pub points: Vec<(Rational, Vec<Rational>)>,
    pub epsilon: Rational,
    pub m_r: Rational,
}

impl SatParetoSample {
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut header = vec!["nu".to_string()];
        header.extend(names.iter().cloned());
        header.push("nu_approx".to_string());
        header.extend(names.iter().map(|n| format!("{n}_approx")));
        let mut out = header.join(",");
        out.push('\n');
        for (nu, v) in &self.points {
            let mut row = vec![nu.clone()];
            row.extend(v.iter().cloned());
            out.push_str(&csv_row(&row));
            out.push('\n');
        }
        out
    }
}

/// ε-grid approximation of the satisfaction Pareto curve.
///
/// Goodness of a MEC is downward closed in `v`, so per MEC and per prefix of
/// the first `k − 1` coordinates only the largest good last coordinate is
/// needed. The maximal ν for a set of good MECs is computed once per set.
pub fn approximate_pareto(
    mdp: &Mdp,
    rewards: &RewardModel,
    s0: StateId,
    epsilon: &Rational,
    budget: u128,
) -> Result<SatParetoSample, QueryError> {
    if !epsilon.is_positive() {
        return Err(QueryError::NonPositiveEpsilon);
    }
    let m_r = rewards.max_abs();
    let axis = grid_axis(&m_r, epsilon);
    let k = rewards.dimension();
    check_grid(axis.len(), k, budget)?;
    let mecs = maximal_end_components(mdp);

    // For every prefix: per MEC, the index of the largest good last coordinate.
    let per_prefix: Vec<(Vec<usize>, Vec<Option<usize>>)> = prefixes(axis.len(), k)
        .into_par_iter()
        .map(|prefix| {
            let base: Vec<Rational> = prefix.iter().map(|&i| axis[i].clone()).collect();
            let tops = mecs
                .iter()
                .map(|mec| {
                    last_true(axis.len(), |i| {
                        let mut v = base.clone();
                        v.push(axis[i].clone());
                        good_frequencies(mdp, rewards, mec, &v).is_some()
                    })
                })
                .collect();
            (prefix, tops)
        })
        .collect();

    let mut nu_cache: HashMap<Vec<usize>, Rational> = HashMap::new();
    let mut candidates = Vec::new();
    for (prefix, tops) in per_prefix {
        let mut levels: Vec<usize> = tops.iter().flatten().copied().collect();
        levels.sort_unstable();
        levels.dedup();
        for last in levels {
            let good: Vec<usize> = (0..mecs.len())
                .filter(|&c| tops[c].is_some_and(|t| t >= last))
                .collect();
            let nu = nu_cache
                .entry(good.clone())
                .or_insert_with(|| reach_value(mdp, s0, &union_states(good.iter().map(|&c| &mecs[c]))))
                .clone();
            if nu.is_positive() {
                let mut v: Vec<Rational> = prefix.iter().map(|&i| axis[i].clone()).collect();
                v.push(axis[last].clone());
                candidates.push((nu, v));
            }
        }
    }
    candidates.sort();
    candidates.dedup();
    let points = candidates
        .iter()
        .filter(|(nu, v)| {
            !candidates
                .iter()
                .any(|(mu, w)| (mu, w) != (nu, v) && mu >= nu && dominates(w, v))
        })
        .cloned()
        .collect();
    Ok(SatParetoSample {
        points,
        epsilon: epsilon.clone(),
        m_r,
    })
}

/// One phase of an infinite-memory schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub strategy: MemorylessStrategy,
    /// Weight `c` of the uniform-strategy frequencies mixed into the target.
    pub perturbation: Rational,
    pub length: u64,
    pub stabilization: u64,
}

/// Memoryless strategies played for rapidly growing numbers of steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
    /// `offsets[i]` = number of steps before phase `i` starts.
    pub offsets: Vec<u64>,
    pub target: Vec<Rational>,
}

impl PhaseSchedule {
    pub fn total_length(&self) -> u64 {
        self.offsets.last().copied().unwrap_or(0) + self.phases.last().map_or(0, |p| p.length)
    }

    /// Violations of `n_i ≥ κ_i`, `N_i ≤ 2^{-i} n_i` and `κ_{i+1} ≤ 2^{-i} n_i`.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, phase) in self.phases.iter().enumerate() {
            let n = phase.length as u128;
            let scale = 1u128 << i;
            if phase.length < phase.stabilization {
                out.push(format!("phase {i}: length below stabilization"));
            }
            if self.offsets[i] as u128 * scale > n {
                out.push(format!("phase {i}: preceding steps exceed 2^-{i} of the length"));
            }
            if let Some(next) = self.phases.get(i + 1) {
                if next.stabilization as u128 * scale > n {
                    out.push(format!("phase {i}: next stabilization exceeds 2^-{i} of the length"));
                }
            }
        }
        out
    }

    pub(crate) fn program(&self, mdp: &Mdp, rewards: &RewardModel, s0: StateId) -> Program {
        let regimes: Vec<&MemorylessStrategy> = self.phases.iter().map(|p| &p.strategy).collect();
        Program::memoryless(mdp, rewards, &regimes, self.offsets[1..].to_vec(), s0)
    }
}

/// Monte Carlo settings for estimating stabilization times.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    /// Runs per start state and horizon.
    pub runs: usize,
    pub seed: u64,
    /// Confidence parameter δ of the quantile estimate.
    pub delta: f64,
    pub initial_horizon: u64,
    pub max_horizon: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            runs: 1000,
            seed: 0,
            delta: 0.05,
            initial_horizon: 1 << 10,
            max_horizon: 1 << 34,
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Largest `c = 2^{-j}` with `c·|f_a − x̄_a|/(1 + c) ≤ bound` for all actions.
fn perturbation_weight(x_bar: &[Rational], positive: &[Rational], bound: &Rational) -> Rational {
    let gap = x_bar
        .iter()
        .zip(positive)
        .map(|(x, f)| (f - x).abs())
        .max()
        .unwrap_or_else(Rational::zero);
    let mut c = Rational::one();
    while &c * &gap / (Rational::one() + &c) > *bound {
        c /= int(2);
    }
    c
}

/// Estimated step count after which, with probability `level`, no action
/// frequency drops below `lower` again.
fn stabilization_time(
    mdp: &Mdp,
    rewards: &RewardModel,
    strategy: &MemorylessStrategy,
    lower: &[f64],
    level: f64,
    config: &PhaseConfig,
    phase: usize,
) -> Result<u64, QueryError> {
    let margin = ((2.0 / config.delta).ln() / (2.0 * config.runs as f64)).sqrt();
    let level = level + margin;
    let mut worst = 0;
    for s in 0..mdp.num_states() {
        let program = Program::memoryless(mdp, rewards, &[strategy], Vec::new(), s);
        let mut horizon = config.initial_horizon.max(4);
        let mut attempt = 0;
        loop {
            let seed = mix(config.seed, phase as u64, ((s as u64) << 32) | attempt);
            let mut exits: Vec<u64> = (0..config.runs)
                .into_par_iter()
                .map(|run| {
                    let mut rng = run_rng(seed, run as u64);
                    let mut tracker = BandTracker::new(lower, &program.actions);
                    program.walk(&mut rng, horizon, &[horizon], &mut tracker);
                    tracker.last_exit
                })
                .collect();
            exits.sort_unstable();
            let index = if level >= 1.0 {
                exits.len() - 1
            } else {
                ((level * exits.len() as f64).ceil() as usize).clamp(1, exits.len()) - 1
            };
            let kappa = exits[index];
            if kappa <= horizon / 4 {
                worst = worst.max(kappa);
                break;
            }
            if horizon >= config.max_horizon {
                return Err(QueryError::Simulation(format!(
                    "phase {phase}: frequencies did not stabilize within {horizon} steps"
                )));
            }
            horizon = horizon.saturating_mul(2);
            attempt += 1;
        }
    }
    Ok(worst.max(1))
}

/// Builds a `phases`-phase schedule whose action frequencies approach `x_bar`.
pub fn build_phase_schedule(
    mdp: &Mdp,
    rewards: &RewardModel,
    x_bar: &[Rational],
    phases: usize,
    config: &PhaseConfig,
) -> Result<PhaseSchedule, QueryError> {
    let all_states: Vec<StateId> = (0..mdp.num_states()).collect();
    let all_actions: Vec<ActionId> = (0..mdp.num_actions()).collect();
    if !is_end_component(mdp, &all_states, &all_actions) {
        return Err(QueryError::NotStronglyConnected);
    }
    let total: Rational = x_bar.iter().cloned().sum();
    if x_bar.len() != mdp.num_actions()
        || x_bar.iter().any(Signed::is_negative)
        || !total.is_one()
        || first_violated_invariance(mdp, x_bar).is_some()
    {
        return Err(QueryError::BadFrequencies);
    }
    let positive = uniform_frequencies(mdp);
    let mut built = Vec::with_capacity(phases);
    for i in 0..phases {
        let bound = Rational::new(1.into(), num_bigint::BigInt::from(2u8).pow(i as u32 + 1));
        let c = perturbation_weight(x_bar, &positive, &bound);
        let z: Vec<Rational> = x_bar.iter().zip(&positive).map(|(x, f)| x + &c * f).collect();
        let strategy = normalize_per_state(mdp, &z);
        let width = 0.5f64.powi(i as i32);
        let lower: Vec<f64> = x_bar.iter().map(|x| to_f64(x) - width).collect();
        let stabilization = stabilization_time(mdp, rewards, &strategy, &lower, 1.0 - width, config, i)?;
        built.push(Phase {
            strategy,
            perturbation: c,
            length: 0,
            stabilization,
        });
    }
    let mut offsets = Vec::with_capacity(phases);
    let mut elapsed: u64 = 0;
    for i in 0..phases {
        let scale = 1u64 << i;
        let mut length = built[i].stabilization.max(elapsed.saturating_mul(scale)).max(1);
        if let Some(next) = built.get(i + 1) {
            length = length.max(next.stabilization.saturating_mul(scale));
        }
        built[i].length = length;
        offsets.push(elapsed);
        elapsed = elapsed.saturating_add(length);
    }
    Ok(PhaseSchedule {
        phases: built,
        offsets,
        target: x_bar.to_vec(),
    })
}
