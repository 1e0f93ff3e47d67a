//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use meanpayoff::fixtures;
use meanpayoff::model::{int, Mdp, Rational, RewardModel, StateId};
use num_traits::{One, Zero};
use std::collections::BTreeSet;

pub fn running() -> (Mdp, RewardModel) {
    fixtures::load(fixtures::RUNNING_EXAMPLE)
}

pub fn two_loops() -> (Mdp, RewardModel) {
    fixtures::load(fixtures::TWO_LOOPS)
}

pub fn infinite_memory() -> (Mdp, RewardModel) {
    fixtures::load(fixtures::INFINITE_MEMORY)
}

pub fn v(values: &[(i64, i64)]) -> Vec<Rational> {
    values.iter().map(|&(n, d)| meanpayoff::model::ratio(n, d)).collect()
}

/// Plain Gauss–Jordan elimination; `None` when singular.
pub fn gauss(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = Rational::one() / &a[col][col];
        for j in col..n {
            a[col][j] = &a[col][j] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in col..n {
                    let d = &f * &a[col][j];
                    a[r][j] -= d;
                }
                let d = &f * &b[col];
                b[r] -= d;
            }
        }
    }
    Some(b)
}

/// `reach[i][j]`: j reachable from i in zero or more steps.
pub fn closure(adjacency: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let n = adjacency.len();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in adjacency.iter().enumerate() {
        reach[i][i] = true;
        for &j in row {
            reach[i][j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// SCCs as sorted vectors, sorted, via mutual reachability.
pub fn sccs_by_closure(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let reach = closure(adjacency);
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        out.push(class);
    }
    out.sort();
    out
}

pub fn bsccs_by_closure(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let reach = closure(adjacency);
    sccs_by_closure(adjacency)
        .into_iter()
        .filter(|c| (0..adjacency.len()).all(|j| !reach[c[0]][j] || c.contains(&j)))
        .collect()
}

/// Direct check of the end-component definition on an action set.
pub fn is_ec_by_definition(mdp: &Mdp, actions: &[usize]) -> bool {
    if actions.is_empty() {
        return false;
    }
    let states: BTreeSet<StateId> = actions.iter().map(|&a| mdp.source(a)).collect();
    for &a in actions {
        if mdp.successors(a).iter().any(|(t, _)| !states.contains(t)) {
            return false;
        }
    }
    let index: Vec<StateId> = states.iter().copied().collect();
    let mut adjacency = vec![Vec::new(); index.len()];
    for &a in actions {
        let i = index.binary_search(&mdp.source(a)).unwrap();
        for (t, _) in mdp.successors(a) {
            adjacency[i].push(index.binary_search(t).unwrap());
        }
    }
    let reach = closure(&adjacency);
    reach.iter().all(|row| row.iter().all(|&r| r))
}

/// All end components as (states, actions), by exhaustive action subsets.
pub fn all_end_components(mdp: &Mdp) -> Vec<(Vec<usize>, Vec<usize>)> {
    let m = mdp.num_actions();
    assert!(m <= 16, "brute force is exponential");
    let mut out = Vec::new();
    for mask in 1u32..(1 << m) {
        let actions: Vec<usize> = (0..m).filter(|&a| mask >> a & 1 == 1).collect();
        if is_ec_by_definition(mdp, &actions) {
            let mut states: Vec<usize> = actions.iter().map(|&a| mdp.source(a)).collect();
            states.sort_unstable();
            states.dedup();
            out.push((states, actions));
        }
    }
    out.sort();
    out
}

pub fn maximal_by_inclusion(ecs: &[(Vec<usize>, Vec<usize>)]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let subset = |a: &[usize], b: &[usize]| a.iter().all(|x| b.contains(x));
    ecs.iter()
        .filter(|(s, a)| {
            !ecs.iter()
                .any(|(s2, a2)| (s2, a2) != (s, a) && subset(s, s2) && subset(a, a2))
        })
        .cloned()
        .collect()
}

/// Every pure memoryless choice function.
pub fn pure_strategies(mdp: &Mdp) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for s in 0..mdp.num_states() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                mdp.enabled(s).iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// Reach probabilities of `target` from every state under a pure strategy.
pub fn reach_under_pure(mdp: &Mdp, choice: &[usize], target: &[StateId]) -> Vec<Rational> {
    let n = mdp.num_states();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|s| mdp.successors(choice[s]).iter().map(|(t, _)| *t).collect())
        .collect();
    let reach = closure(&adjacency);
    let can: Vec<bool> = (0..n).map(|s| target.iter().any(|&t| reach[s][t])).collect();
    let mut a = vec![vec![Rational::zero(); n]; n];
    let mut b = vec![Rational::zero(); n];
    for s in 0..n {
        a[s][s] = Rational::one();
        if target.contains(&s) {
            b[s] = Rational::one();
        } else if can[s] {
            for (t, p) in mdp.successors(choice[s]) {
                a[s][*t] -= p;
            }
        }
    }
    gauss(a, b).expect("reach system is nonsingular")
}

/// Whether `pi` is a distribution invariant under the chain `rows`.
pub fn stationary_check(rows: &[Vec<(usize, Rational)>], pi: &[Rational]) -> bool {
    let n = rows.len();
    let mut next = vec![Rational::zero(); n];
    for (i, row) in rows.iter().enumerate() {
        for (j, p) in row {
            next[*j] += &pi[i] * p;
        }
    }
    next == pi && pi.iter().cloned().sum::<Rational>() == int(1)
}

/// A bounded random LP together with its dense row form.
pub struct RandomLp {
    pub lp: meanpayoff::lp::LinearProgram,
    /// Rows `(coefficients, relation, rhs)`, including sign and box rows.
    pub rows: Vec<(Vec<Rational>, meanpayoff::lp::Relation, Rational)>,
    pub objective: Vec<Rational>,
    pub maximize: bool,
}

/// Random LP over at most `max_vars` variables; every variable is boxed so
/// the feasible set is a polytope.
pub fn random_lp<R: rand::Rng>(rng: &mut R, max_vars: usize) -> RandomLp {
    use meanpayoff::lp::{Direction, LinearProgram, Relation};
    use meanpayoff::model::ratio;
    let n = rng.random_range(1..=max_vars);
    let mut lp = LinearProgram::new();
    let mut rows = Vec::new();
    let vars: Vec<_> = (0..n)
        .map(|i| {
            let nonneg = rng.random_bool(0.7);
            let var = lp.add_variable(format!("x{i}"), nonneg);
            let mut unit = vec![Rational::zero(); n];
            unit[i] = Rational::one();
            let bound = int(rng.random_range(1..=6));
            lp.add_constraint(
                format!("ub{i}"),
                vec![(var, Rational::one())],
                Relation::Le,
                bound.clone(),
            );
            rows.push((unit.clone(), Relation::Le, bound.clone()));
            if nonneg {
                rows.push((unit, Relation::Ge, Rational::zero()));
            } else {
                lp.add_constraint(
                    format!("lb{i}"),
                    vec![(var, Rational::one())],
                    Relation::Ge,
                    -bound.clone(),
                );
                rows.push((unit, Relation::Ge, -bound));
            }
            var
        })
        .collect();
    let extra = rng.random_range(0..=4);
    for j in 0..extra {
        let coefficients: Vec<Rational> = (0..n)
            .map(|_| ratio(rng.random_range(-3..=3), rng.random_range(1..=2)))
            .collect();
        let relation = match rng.random_range(0..6) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = int(rng.random_range(-4..=6));
        let sparse = vars
            .iter()
            .zip(&coefficients)
            .filter(|(_, c)| !c.is_zero())
            .map(|(v, c)| (*v, c.clone()))
            .collect();
        lp.add_constraint(format!("c{j}"), sparse, relation, rhs.clone());
        rows.push((coefficients, relation, rhs));
    }
    let objective: Vec<Rational> = (0..n).map(|_| int(rng.random_range(-5..=5))).collect();
    let maximize = rng.random_bool(0.5);
    let sparse = vars.iter().zip(&objective).map(|(v, c)| (*v, c.clone())).collect();
    lp.set_objective(
        if maximize {
            Direction::Maximize
        } else {
            Direction::Minimize
        },
        sparse,
    );
    RandomLp {
        lp,
        rows,
        objective,
        maximize,
    }
}

fn row_holds(row: &(Vec<Rational>, meanpayoff::lp::Relation, Rational), x: &[Rational]) -> bool {
    use meanpayoff::lp::Relation;
    let lhs: Rational = row.0.iter().zip(x).map(|(a, b)| a * b).sum();
    match row.1 {
        Relation::Le => lhs <= row.2,
        Relation::Ge => lhs >= row.2,
        Relation::Eq => lhs == row.2,
    }
}

/// Optimum by enumerating every basic solution; `None` when infeasible.
pub fn vertex_enumeration_optimum(problem: &RandomLp) -> Option<Rational> {
    let n = problem.objective.len();
    let m = problem.rows.len();
    let mut best: Option<Rational> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = pick.iter().map(|&r| problem.rows[r].0.clone()).collect();
        let b = pick.iter().map(|&r| problem.rows[r].2.clone()).collect();
        if let Some(x) = gauss(a, b) {
            if problem.rows.iter().all(|row| row_holds(row, &x)) {
                let value: Rational = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                let better = match &best {
                    None => true,
                    Some(b) => (problem.maximize && value > *b) || (!problem.maximize && value < *b),
                };
                if better {
                    best = Some(value);
                }
            }
        }
        // Next n-subset in lexicographic order.
        let Some(i) = (0..n).rev().find(|&i| pick[i] < m - n + i) else {
            return best;
        };
        pick[i] += 1;
        for j in i + 1..n {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// Reward vector of an optimal frequency-system solution for a random
/// positive weighting: an achievable vector on the Pareto boundary.
pub fn boundary_vector<R: rand::Rng>(rng: &mut R, mdp: &Mdp, rewards: &RewardModel, s0: StateId) -> Vec<Rational> {
    use meanpayoff::expectation::build_frequency_system;
    use meanpayoff::lp::{solve_optimize, Direction};
    let floor = rewards.min_vector();
    let mut system = build_frequency_system(mdp, rewards, s0, &floor).unwrap();
    let weights: Vec<Rational> = (0..rewards.dimension()).map(|_| int(rng.random_range(1..=5))).collect();
    let objective = (0..mdp.num_actions())
        .map(|a| {
            let w: Rational = rewards.vector(a).iter().zip(&weights).map(|(r, w)| r * w).sum();
            (system.x_action[a], w)
        })
        .collect();
    system.program.set_objective(Direction::Maximize, objective);
    let outcome = solve_optimize(&system.program).unwrap();
    rewards.weighted_sum(&system.frequencies(&outcome))
}
