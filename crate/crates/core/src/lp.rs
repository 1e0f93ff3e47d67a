//! Linear programs over exact rationals and a two-phase simplex solver.
//!
//! Pivoting follows Bland's rule, so the solver terminates on degenerate
//! programs. There is no floating-point path.

use crate::model::{format_rational, Rational};
use num_traits::{One, Signed, Zero};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub coefficients: Vec<(Var, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    fn lhs(&self, assignment: &[Rational]) -> Rational {
        self.coefficients.iter().map(|(v, c)| c * &assignment[v.0]).sum()
    }

    pub fn is_satisfied_by(&self, assignment: &[Rational]) -> bool {
        let lhs = self.lhs(assignment);
        match self.relation {
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
            Relation::Ge => lhs >= self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub direction: Direction,
    pub coefficients: Vec<(Var, Rational)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Variable {
    name: String,
    nonnegative: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Option<Objective>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("constraint {0:?} references an undeclared variable")]
    UnknownVariable(String),
    #[error("optimization requested but no objective is set")]
    MissingObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Value of every variable, indexed by [`Var::index`]; empty unless
    /// the status is `Feasible` or `Optimal`.
    pub assignment: Vec<Rational>,
    pub objective_value: Option<Rational>,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, LpStatus::Feasible | LpStatus::Optimal)
    }

    pub fn value(&self, var: Var) -> &Rational {
        &self.assignment[var.0]
    }

    fn without_point(status: LpStatus) -> Self {
        LpOutcome {
            status,
            assignment: Vec::new(),
            objective_value: None,
        }
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, nonnegative: bool) -> Var {
        self.variables.push(Variable {
            name: name.into(),
            nonnegative,
        });
        Var(self.variables.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coefficients: Vec<(Var, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn set_objective(&mut self, direction: Direction, coefficients: Vec<(Var, Rational)>) {
        self.objective = Some(Objective {
            direction,
            coefficients,
        });
    }

    pub fn clear_objective(&mut self) {
        self.objective = None;
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    pub fn variable_name(&self, var: Var) -> &str {
        &self.variables[var.0].name
    }

    pub fn is_nonnegative(&self, var: Var) -> bool {
        self.variables[var.0].nonnegative
    }

    pub fn variables(&self) -> impl Iterator<Item = Var> {
        (0..self.variables.len()).map(Var)
    }

    /// Checks that every coefficient references a declared variable.
    pub fn check(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        for c in &self.constraints {
            if c.coefficients.iter().any(|(v, _)| v.0 >= n) {
                return Err(LpError::UnknownVariable(c.name.clone()));
            }
        }
        if let Some(obj) = &self.objective {
            if obj.coefficients.iter().any(|(v, _)| v.0 >= n) {
                return Err(LpError::UnknownVariable("objective".to_string()));
            }
        }
        Ok(())
    }

    /// Exact check of every constraint and sign restriction.
    pub fn is_satisfied_by(&self, assignment: &[Rational]) -> bool {
        assignment.len() == self.variables.len()
            && self
                .variables
                .iter()
                .zip(assignment)
                .all(|(v, x)| !v.nonnegative || !x.is_negative())
            && self.constraints.iter().all(|c| c.is_satisfied_by(assignment))
    }

    pub fn objective_value(&self, assignment: &[Rational]) -> Option<Rational> {
        self.objective
            .as_ref()
            .map(|obj| obj.coefficients.iter().map(|(v, c)| c * &assignment[v.0]).sum())
    }
}

fn write_terms(f: &mut fmt::Formatter<'_>, lp: &LinearProgram, terms: &[(Var, Rational)]) -> fmt::Result {
    if terms.is_empty() {
        return write!(f, " 0");
    }
    for (i, (v, c)) in terms.iter().enumerate() {
        let sign = if c.is_negative() {
            "-"
        } else if i == 0 {
            ""
        } else {
            "+"
        };
        let magnitude = c.abs();
        if i > 0 || sign == "-" {
            write!(f, " {sign}")?;
        }
        if magnitude.is_one() {
            write!(f, " {}", lp.variables[v.0].name)?;
        } else {
            write!(f, " {} {}", format_rational(&magnitude), lp.variables[v.0].name)?;
        }
    }
    Ok(())
}

/// LP-text dump for inspection.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.objective {
            Some(obj) => {
                let word = match obj.direction {
                    Direction::Maximize => "Maximize",
                    Direction::Minimize => "Minimize",
                };
                write!(f, "{word}\n obj:")?;
                write_terms(f, self, &obj.coefficients)?;
                writeln!(f)?;
            }
            None => writeln!(f, "Minimize\n obj: 0")?,
        }
        writeln!(f, "Subject To")?;
        for c in &self.constraints {
            write!(f, " {}:", c.name)?;
            write_terms(f, self, &c.coefficients)?;
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            writeln!(f, " {rel} {}", format_rational(&c.rhs))?;
        }
        writeln!(f, "Bounds")?;
        for v in &self.variables {
            if !v.nonnegative {
                writeln!(f, " {} free", v.name)?;
            }
        }
        writeln!(f, "End")
    }
}

/// Finds a feasible point, ignoring any objective.
pub fn solve_feasible(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    Ok(Simplex::build(lp).run(None))
}

/// Optimizes the objective.
pub fn solve_optimize(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let objective = lp.objective.as_ref().ok_or(LpError::MissingObjective)?;
    let outcome = Simplex::build(lp).run(Some(objective));
    Ok(match outcome.status {
        LpStatus::Optimal => {
            let value = lp.objective_value(&outcome.assignment);
            LpOutcome {
                objective_value: value,
                ..outcome
            }
        }
        _ => outcome,
    })
}

/// Dense tableau in equality form `A x = b`, `x ≥ 0`, `b ≥ 0`.
struct Simplex {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    /// Column layout: structural columns, then slack/surplus, then artificials.
    artificial_start: usize,
    /// For each original variable: (plus column, optional minus column).
    columns_of: Vec<(usize, Option<usize>)>,
    infeasible: bool,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Simplex {
        let mut columns_of = Vec::with_capacity(lp.variables.len());
        let mut next = 0;
        for v in &lp.variables {
            if v.nonnegative {
                columns_of.push((next, None));
                next += 1;
            } else {
                columns_of.push((next, Some(next + 1)));
                next += 2;
            }
        }
        let structural = next;

        // Dense structural rows with nonnegative right-hand sides; all-zero
        // rows are either dropped or prove infeasibility right away.
        let mut infeasible = false;
        let mut kept: Vec<(Vec<Rational>, Relation, Rational)> = Vec::new();
        for c in &lp.constraints {
            let mut row = vec![Rational::zero(); structural];
            for (v, coef) in &c.coefficients {
                let (plus, minus) = columns_of[v.0];
                row[plus] += coef;
                if let Some(m) = minus {
                    row[m] -= coef;
                }
            }
            let mut relation = c.relation;
            let mut rhs = c.rhs.clone();
            if row.iter().all(Zero::is_zero) {
                let holds = match relation {
                    Relation::Le => !rhs.is_negative(),
                    Relation::Eq => rhs.is_zero(),
                    Relation::Ge => !rhs.is_positive(),
                };
                infeasible |= !holds;
                continue;
            }
            if rhs.is_negative() {
                for x in row.iter_mut() {
                    *x = -std::mem::take(x);
                }
                rhs = -rhs;
                relation = match relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
            kept.push((row, relation, rhs));
        }

        let slacks = kept.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let artificials = kept.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let artificial_start = structural + slacks;
        let width = artificial_start + artificials;
        let mut rows = Vec::with_capacity(kept.len());
        let mut rhs_col = Vec::with_capacity(kept.len());
        let mut basis = Vec::with_capacity(kept.len());
        let (mut slack, mut art) = (structural, artificial_start);
        for (mut row, relation, rhs) in kept {
            row.resize(width, Rational::zero());
            match relation {
                Relation::Le => {
                    row[slack] = Rational::one();
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -Rational::one();
                    slack += 1;
                    row[art] = Rational::one();
                    basis.push(art);
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = Rational::one();
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(row);
            rhs_col.push(rhs);
        }
        Simplex {
            rows,
            rhs: rhs_col,
            basis,
            artificial_start,
            columns_of,
            infeasible,
        }
    }

    fn width(&self) -> usize {
        self.rows.first().map_or(self.artificial_start, Vec::len)
    }

    fn pivot(&mut self, r: usize, col: usize, cost: &mut [Rational]) {
        let inv = self.rows[r][col].recip();
        if !inv.is_one() {
            for x in self.rows[r].iter_mut() {
                if !x.is_zero() {
                    *x *= &inv;
                }
            }
            self.rhs[r] *= &inv;
        }
        let support: Vec<usize> = (0..self.rows[r].len())
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let pivot_rhs = self.rhs[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row.is_empty() || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for &j in &support {
                row[j] -= &factor * &pivot_row[j];
            }
            self.rhs[i] -= &factor * &pivot_rhs;
        }
        if !cost[col].is_zero() {
            let factor = cost[col].clone();
            for &j in &support {
                cost[j] -= &factor * &pivot_row[j];
            }
        }
        self.rows[r] = pivot_row;
        self.basis[r] = col;
    }

    /// Minimizes with reduced costs `cost` over columns `< limit`, Bland's rule.
    fn optimize(&mut self, cost: &mut [Rational], limit: usize) -> Step {
        loop {
            let Some(col) = (0..limit).find(|&j| cost[j].is_negative()) else {
                return Step::Optimal;
            };
            let mut best: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[col].is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / &row[col];
                let better = match &best {
                    None => true,
                    Some((b, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*b]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col, cost),
                None => return Step::Unbounded,
            }
        }
    }

    fn reduced_costs(&self, c: &[Rational]) -> Vec<Rational> {
        let mut cost = c.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = &c[self.basis[i]];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in row.iter().enumerate() {
                if !a.is_zero() {
                    cost[j] -= cb * a;
                }
            }
        }
        cost
    }

    fn run(mut self, objective: Option<&Objective>) -> LpOutcome {
        if self.infeasible {
            return LpOutcome::without_point(LpStatus::Infeasible);
        }
        let width = self.width();
        if self.artificial_start < width {
            let mut c = vec![Rational::zero(); width];
            for x in &mut c[self.artificial_start..] {
                *x = Rational::one();
            }
            let mut cost = self.reduced_costs(&c);
            self.optimize(&mut cost, width);
            let residual: Rational = self
                .basis
                .iter()
                .zip(&self.rhs)
                .filter(|(b, _)| **b >= self.artificial_start)
                .map(|(_, v)| v.clone())
                .sum();
            if residual.is_positive() {
                return LpOutcome::without_point(LpStatus::Infeasible);
            }
            self.drive_out_artificials();
        }

        let Some(objective) = objective else {
            return LpOutcome {
                status: LpStatus::Feasible,
                assignment: self.assignment(),
                objective_value: None,
            };
        };
        let width = self.width();
        let mut c = vec![Rational::zero(); width];
        for (v, coef) in &objective.coefficients {
            let coef = match objective.direction {
                Direction::Minimize => coef.clone(),
                Direction::Maximize => -coef.clone(),
            };
            let (plus, minus) = self.columns_of[v.index()];
            c[plus] += &coef;
            if let Some(m) = minus {
                c[m] -= &coef;
            }
        }
        let mut cost = self.reduced_costs(&c);
        match self.optimize(&mut cost, width) {
            Step::Unbounded => LpOutcome::without_point(LpStatus::Unbounded),
            Step::Optimal => LpOutcome {
                status: LpStatus::Optimal,
                assignment: self.assignment(),
                objective_value: None,
            },
        }
    }

    /// Pivots zero-valued artificials out of the basis, deletes redundant
    /// rows, then drops the artificial columns.
    fn drive_out_artificials(&mut self) {
        let start = self.artificial_start;
        let mut dummy = vec![Rational::zero(); self.width()];
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= start {
                match (0..start).find(|&j| !self.rows[r][j].is_zero()) {
                    Some(col) => {
                        self.pivot(r, col, &mut dummy);
                        r += 1;
                    }
                    None => {
                        self.rows.remove(r);
                        self.rhs.remove(r);
                        self.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        for row in &mut self.rows {
            row.truncate(start);
        }
    }

    fn assignment(&self) -> Vec<Rational> {
        let mut column_values = vec![Rational::zero(); self.width()];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < column_values.len() {
                column_values[b] = self.rhs[i].clone();
            }
        }
        self.columns_of
            .iter()
            .map(|&(plus, minus)| match minus {
                Some(m) => &column_values[plus] - &column_values[m],
                None => column_values[plus].clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, ratio};

    #[test]
    fn feasibility_basics() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        lp.add_constraint("c1", vec![(x, int(1))], Relation::Le, int(1));
        assert_eq!(solve_feasible(&lp).unwrap().status, LpStatus::Feasible);

        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        lp.add_constraint("c1", vec![(x, int(1))], Relation::Ge, int(1));
        lp.add_constraint("c2", vec![(x, int(1))], Relation::Le, int(0));
        assert_eq!(solve_feasible(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn optimize_basics() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        lp.add_constraint("c", vec![(x, int(1))], Relation::Le, ratio(3, 7));
        lp.set_objective(Direction::Maximize, vec![(x, int(1))]);
        let out = solve_optimize(&lp).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert_eq!(out.objective_value, Some(ratio(3, 7)));

        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        lp.add_constraint("c", vec![(x, int(1))], Relation::Ge, int(0));
        lp.set_objective(Direction::Maximize, vec![(x, int(1))]);
        assert_eq!(solve_optimize(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + y, x - y = -3, y <= 1, x free
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", false);
        let y = lp.add_variable("y", true);
        lp.add_constraint("e", vec![(x, int(1)), (y, int(-1))], Relation::Eq, int(-3));
        lp.add_constraint("u", vec![(y, int(1))], Relation::Le, int(1));
        lp.set_objective(Direction::Minimize, vec![(x, int(1)), (y, int(1))]);
        let out = solve_optimize(&lp).unwrap();
        assert_eq!(out.objective_value, Some(int(-3)));
        assert_eq!(out.value(x), &int(-3));
        assert!(lp.is_satisfied_by(&out.assignment));
    }

    #[test]
    fn redundant_and_zero_rows() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        let y = lp.add_variable("y", true);
        lp.add_constraint("a", vec![(x, int(1)), (y, int(1))], Relation::Eq, int(1));
        lp.add_constraint("b", vec![(x, int(2)), (y, int(2))], Relation::Eq, int(2));
        lp.add_constraint("z", vec![(x, int(0))], Relation::Le, int(5));
        lp.set_objective(Direction::Maximize, vec![(x, int(2)), (y, int(1))]);
        let out = solve_optimize(&lp).unwrap();
        assert_eq!(out.objective_value, Some(int(2)));

        lp.add_constraint("bad", vec![], Relation::Eq, int(1));
        assert_eq!(solve_feasible(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn rejects_foreign_variables() {
        let mut other = LinearProgram::new();
        other.add_variable("a", true);
        let foreign = other.add_variable("b", true);
        let mut lp = LinearProgram::new();
        lp.add_variable("x", true);
        lp.add_constraint("c", vec![(foreign, int(1))], Relation::Le, int(1));
        assert_eq!(solve_feasible(&lp), Err(LpError::UnknownVariable("c".to_string())));
        assert_eq!(solve_optimize(&LinearProgram::new()), Err(LpError::MissingObjective));
    }

    #[test]
    fn text_dump() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", true);
        let y = lp.add_variable("y", false);
        lp.add_constraint("c1", vec![(x, ratio(1, 2)), (y, int(-1))], Relation::Ge, int(1));
        lp.set_objective(Direction::Maximize, vec![(x, int(1))]);
        let text = lp.to_string();
        assert!(text.contains(" c1: 1/2 x - y >= 1"), "{text}");
        assert!(text.contains(" y free"));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let mut lp = LinearProgram::new();
        let x: Vec<Var> = (0..4).map(|i| lp.add_variable(format!("x{i}"), true)).collect();
        lp.add_constraint(
            "r1",
            vec![
                (x[0], ratio(1, 4)),
                (x[1], int(-60)),
                (x[2], ratio(-1, 25)),
                (x[3], int(9)),
            ],
            Relation::Le,
            int(0),
        );
        lp.add_constraint(
            "r2",
            vec![
                (x[0], ratio(1, 2)),
                (x[1], int(-90)),
                (x[2], ratio(-1, 50)),
                (x[3], int(3)),
            ],
            Relation::Le,
            int(0),
        );
        lp.add_constraint("r3", vec![(x[2], int(1))], Relation::Le, int(1));
        lp.set_objective(
            Direction::Maximize,
            vec![
                (x[0], ratio(3, 4)),
                (x[1], int(-150)),
                (x[2], ratio(1, 50)),
                (x[3], int(-6)),
            ],
        );
        let out = solve_optimize(&lp).unwrap();
        assert_eq!(out.objective_value, Some(ratio(1, 20)));
    }
}
