//! MDP and reward data model, exact rationals and the JSON model format.
//!
//! States and actions are identified by dense indices assigned in declaration
//! order. Every action is enabled in exactly one state (its source), so the
//! transition function is stored per action.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Exact rational number, always kept in lowest terms with a positive denominator.
pub type Rational = BigRational;

pub type StateId = usize;
pub type ActionId = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid rational {0:?} (expected [-]digits[/digits])")]
    BadRational(String),
    #[error("invalid model: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Parses `[-]digits[/digits]`. Decimal notation is rejected.
pub fn parse_rational(text: &str) -> Result<Rational, ModelError> {
    let bad = || ModelError::BadRational(text.to_string());
    let trimmed = text.trim();
    let (negative, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed),
    };
    let (numer, denom) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (body, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(numer) || !denom.map_or(true, all_digits) {
        return Err(bad());
    }
    let mut n: BigInt = numer.parse().map_err(|_| bad())?;
    if negative {
        n = -n;
    }
    let d: BigInt = match denom {
        Some(d) => d.parse().map_err(|_| bad())?,
        None => BigInt::one(),
    };
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(n, d))
}

/// Formats as `p/q`, or `p` for integers.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses a comma-separated list of rational strings.
pub fn parse_vector(text: &str) -> Result<Vec<Rational>, ModelError> {
    text.split(',').map(parse_rational).collect()
}

pub fn format_vector(values: &[Rational]) -> String {
    values.iter().map(format_rational).collect::<Vec<_>>().join(",")
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub name: String,
    pub source: StateId,
    /// Successor distribution, sorted by state index.
    pub distribution: Vec<(StateId, Rational)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<Action>,
    enabled: Vec<Vec<ActionId>>,
    initial: StateId,
}

impl Mdp {
    /// Builds an MDP without checking the distribution invariants; run
    /// [`validate`] before analysing a model from an untrusted source.
    pub fn new(states: Vec<String>, mut actions: Vec<Action>, initial: StateId) -> Self {
        let mut enabled = vec![Vec::new(); states.len()];
        for (id, action) in actions.iter_mut().enumerate() {
            action.distribution.sort_by_key(|(t, _)| *t);
            if let Some(list) = enabled.get_mut(action.source) {
                list.push(id);
            }
        }
        Mdp {
            states,
            actions,
            enabled,
            initial,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn with_initial(&self, initial: StateId) -> Mdp {
        Mdp {
            initial,
            ..self.clone()
        }
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|n| n == name)
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: ActionId) -> &Action {
        &self.actions[a]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a].name
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn source(&self, a: ActionId) -> StateId {
        self.actions[a].source
    }

    pub fn successors(&self, a: ActionId) -> &[(StateId, Rational)] {
        &self.actions[a].distribution
    }

    /// `δ(a)(t)`, zero when `t` is not a successor.
    pub fn probability(&self, a: ActionId, t: StateId) -> Rational {
        self.successors(a)
            .iter()
            .find(|(s, _)| *s == t)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn enabled(&self, s: StateId) -> &[ActionId] {
        &self.enabled[s]
    }
}

/// `k` rational reward functions over actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardModel {
    names: Vec<String>,
    /// `values[a][i]` is the reward of action `a` in dimension `i`.
    values: Vec<Vec<Rational>>,
}

impl RewardModel {
    pub fn new(names: Vec<String>, values: Vec<Vec<Rational>>) -> Self {
        RewardModel { names, values }
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vector(&self, a: ActionId) -> &[Rational] {
        &self.values[a]
    }

    pub fn reward(&self, a: ActionId, i: usize) -> &Rational {
        &self.values[a][i]
    }

    pub fn num_actions(&self) -> usize {
        self.values.len()
    }

    /// `max_a max_i |r_i(a)|`.
    pub fn max_abs(&self) -> Rational {
        self.values
            .iter()
            .flatten()
            .map(|r| r.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Componentwise minimum reward over all actions.
    pub fn min_vector(&self) -> Vec<Rational> {
        (0..self.dimension())
            .map(|i| {
                self.values
                    .iter()
                    .map(|v| v[i].clone())
                    .min()
                    .unwrap_or_else(Rational::zero)
            })
            .collect()
    }

    pub fn scaled(&self, factor: &Rational) -> RewardModel {
        RewardModel {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|r| r * factor).collect())
                .collect(),
        }
    }

    /// Negated rewards: maximising `lr_inf(-r)` is minimising `lr_sup(r)`.
    pub fn negated(&self) -> RewardModel {
        self.scaled(&-Rational::one())
    }

    /// Rewards of the listed actions, in that order.
    pub fn select(&self, actions: &[ActionId]) -> RewardModel {
        RewardModel {
            names: self.names.clone(),
            values: actions.iter().map(|&a| self.values[a].clone()).collect(),
        }
    }

    /// `Σ_a x_a · r(a)` for a frequency vector `x`.
    pub fn weighted_sum(&self, x: &[Rational]) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.dimension()];
        for (a, xa) in x.iter().enumerate() {
            if xa.is_zero() {
                continue;
            }
            for (i, r) in self.values[a].iter().enumerate() {
                out[i] += xa * r;
            }
        }
        out
    }
}

/// Lists every violated model invariant; empty iff the model is valid.
pub fn validate(mdp: &Mdp, rewards: &RewardModel) -> Vec<String> {
    let mut violations = Vec::new();
    let n = mdp.num_states();
    if n == 0 {
        violations.push("model has no states".to_string());
    }
    if mdp.initial() >= n && n > 0 {
        violations.push(format!("initial state index {} out of range", mdp.initial()));
    }
    let mut seen = HashMap::new();
    for (s, name) in mdp.state_names().iter().enumerate() {
        if let Some(prev) = seen.insert(name.as_str(), s) {
            violations.push(format!("state {name:?} declared twice (indices {prev} and {s})"));
        }
    }
    let mut action_names: HashMap<&str, StateId> = HashMap::new();
    for action in mdp.actions() {
        if let Some(&prev) = action_names.get(action.name.as_str()) {
            if prev != action.source {
                violations.push(format!("action {:?} is enabled at two states", action.name));
            } else {
                violations.push(format!("action {:?} declared twice", action.name));
            }
        } else {
            action_names.insert(&action.name, action.source);
        }
        if action.source >= n {
            violations.push(format!("action {:?} has unknown source state", action.name));
        }
        let mut sum = Rational::zero();
        let mut previous = None;
        for (t, p) in &action.distribution {
            if *t >= n {
                violations.push(format!("action {:?} leads to unknown state index {t}", action.name));
            }
            if previous == Some(*t) {
                violations.push(format!("action {:?} lists successor {t} twice", action.name));
            }
            previous = Some(*t);
            if !p.is_positive() {
                violations.push(format!(
                    "action {:?} has non-positive probability {} for successor {t}",
                    action.name,
                    format_rational(p)
                ));
            }
            sum += p;
        }
        if !sum.is_one() {
            violations.push(format!(
                "distribution of action {:?} sums to {} instead of 1",
                action.name,
                format_rational(&sum)
            ));
        }
    }
    for s in 0..n {
        if mdp.enabled(s).is_empty() {
            violations.push(format!("state {:?} has no enabled action", mdp.state_name(s)));
        }
    }
    let k = rewards.dimension();
    if k == 0 {
        violations.push("reward model has dimension 0".to_string());
    }
    if rewards.num_actions() != mdp.num_actions() {
        violations.push(format!(
            "reward model covers {} actions but the MDP has {}",
            rewards.num_actions(),
            mdp.num_actions()
        ));
    }
    for (a, values) in rewards.values.iter().enumerate() {
        if values.len() != k {
            let name = mdp.actions().get(a).map_or_else(|| a.to_string(), |x| x.name.clone());
            violations.push(format!(
                "action {name:?} has {} reward entries, expected {k}",
                values.len()
            ));
        }
    }
    violations
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum RationalField {
    Text(String),
    Integer(i64),
    Other(serde_json::Value),
}

impl RationalField {
    fn parse(&self) -> Result<Rational, ModelError> {
        match self {
            RationalField::Text(s) => parse_rational(s),
            RationalField::Integer(n) => Ok(int(*n)),
            RationalField::Other(v) => Err(ModelError::BadRational(v.to_string())),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    initial: String,
    #[serde(rename = "rewardNames")]
    reward_names: Vec<String>,
    actions: Vec<ActionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionEntry {
    name: String,
    from: String,
    to: BTreeMap<String, RationalField>,
    rewards: Vec<RationalField>,
}

fn syntax_error(err: serde_json::Error) -> ModelError {
    ModelError::Syntax {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Parses and validates a JSON model file.
pub fn parse_model(text: &str) -> Result<(Mdp, RewardModel), ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(syntax_error)?;
    let mut violations = Vec::new();
    let index: HashMap<&str, StateId> = file.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let initial = match index.get(file.initial.as_str()) {
        Some(&s) => s,
        None => {
            violations.push(format!("initial state {:?} is not declared", file.initial));
            0
        }
    };
    let mut actions = Vec::with_capacity(file.actions.len());
    let mut values = Vec::with_capacity(file.actions.len());
    for entry in &file.actions {
        let source = match index.get(entry.from.as_str()) {
            Some(&s) => s,
            None => {
                violations.push(format!(
                    "action {:?} is enabled at undeclared state {:?}",
                    entry.name, entry.from
                ));
                continue;
            }
        };
        let mut distribution = Vec::with_capacity(entry.to.len());
        for (target, p) in &entry.to {
            let Some(&t) = index.get(target.as_str()) else {
                violations.push(format!("action {:?} leads to undeclared state {target:?}", entry.name));
                continue;
            };
            distribution.push((t, p.parse()?));
        }
        let rewards = entry
            .rewards
            .iter()
            .map(RationalField::parse)
            .collect::<Result<Vec<_>, _>>()?;
        actions.push(Action {
            name: entry.name.clone(),
            source,
            distribution,
        });
        values.push(rewards);
    }
    // Unresolved names are reported together with the remaining invariants.
    let mdp = Mdp::new(file.states, actions, initial);
    let rewards = RewardModel::new(file.reward_names, values);
    violations.extend(validate(&mdp, &rewards));
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations));
    }
    Ok((mdp, rewards))
}

/// Writes the JSON model format; [`parse_model`] reads it back exactly.
pub fn serialize_model(mdp: &Mdp, rewards: &RewardModel) -> String {
    let file = ModelFile {
        states: mdp.state_names().to_vec(),
        initial: mdp.state_name(mdp.initial()).to_string(),
        reward_names: rewards.names().to_vec(),
        actions: mdp
            .actions()
            .iter()
            .enumerate()
            .map(|(a, action)| ActionEntry {
                name: action.name.clone(),
                from: mdp.state_name(action.source).to_string(),
                to: action
                    .distribution
                    .iter()
                    .map(|(t, p)| (mdp.state_name(*t).to_string(), RationalField::Text(format_rational(p))))
                    .collect(),
                rewards: rewards
                    .vector(a)
                    .iter()
                    .map(|r| RationalField::Text(format_rational(r)))
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}
