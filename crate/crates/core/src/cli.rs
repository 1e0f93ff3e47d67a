//! Command-line front end. Exit codes: 0 = YES / success, 1 = NO, 2 = error.

use crate::expectation::{self, DEFAULT_GRID_BUDGET};
use crate::graph::maximal_end_components;
use crate::model::{format_rational, parse_model, parse_rational, parse_vector, Mdp, Rational, RewardModel};
use crate::satisfaction::{self, SatQuery};
use crate::strategy::{parse_strategy, serialize_strategy};
use crate::verify::{exact_expected_mean_payoff, simulate, SimulatedStrategy, SimulationConfig};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "meanpayoff", version, about = "Multi-objective mean-payoff analysis of MDPs")]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Print tabular results as CSV instead of JSON.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the maximal end components.
    Mecs,
    /// Is the expected mean-payoff vector V achievable?
    CheckExp {
        #[arg(allow_hyphen_values = true)]
        v: String,
        /// Print the linear program to stderr.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Print a 2-memory strategy achieving expectation V.
    SynthExp {
        #[arg(allow_hyphen_values = true)]
        v: String,
    },
    /// Is V achievable with nothing achievable above its coordinate sum?
    ParetoPointExp {
        #[arg(allow_hyphen_values = true)]
        v: String,
    },
    /// Sample the expectation Pareto curve on an epsilon grid.
    ParetoExp {
        #[arg(long, default_value = "1/100")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_GRID_BUDGET)]
        budget: u128,
    },
    /// Can the mean payoff be at least V with probability at least NU?
    CheckSat {
        nu: String,
        #[arg(allow_hyphen_values = true)]
        v: String,
    },
    /// Print a memoryless strategy satisfying (NU - epsilon, V - epsilon).
    SynthSat {
        nu: String,
        #[arg(allow_hyphen_values = true)]
        v: String,
        #[arg(long, default_value = "1/100")]
        epsilon: String,
    },
    /// Is (NU, V) achievable and not dominated by an achievable pair?
    ParetoPointSat {
        nu: String,
        #[arg(allow_hyphen_values = true)]
        v: String,
    },
    /// Sample the satisfaction Pareto curve on an epsilon grid.
    ParetoSat {
        #[arg(long, default_value = "1/100")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_GRID_BUDGET)]
        budget: u128,
    },
    /// Evaluate a finite-memory strategy exactly.
    Evaluate {
        #[arg(long)]
        strategy: PathBuf,
        /// Also report Pr[mean payoff >= THRESHOLD].
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<String>,
    },
    /// Simulate a finite-memory strategy.
    Simulate {
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        horizon: u64,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated steps at which to record prefix averages.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<String>,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

enum Answer {
    Yes(String),
    No(String),
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, err) {
        Ok(Answer::Yes(text)) => {
            let _ = write!(out, "{text}");
            0
        }
        Ok(Answer::No(text)) => {
            let _ = write!(out, "{text}");
            1
        }
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {message}");
            2
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_model(cli: &Cli) -> Result<(Mdp, RewardModel), Failure> {
    let path = cli
        .model
        .as_ref()
        .ok_or_else(|| Failure("--model is required".into()))?;
    Ok(parse_model(&read(path)?)?)
}

fn strings(values: &[Rational]) -> Value {
    Value::from(values.iter().map(format_rational).collect::<Vec<_>>())
}

fn pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    text
}

fn decision(yes: bool, value: Value) -> Answer {
    if yes {
        Answer::Yes(pretty(&value))
    } else {
        Answer::No(pretty(&value))
    }
}

fn execute(cli: &Cli, err: &mut dyn Write) -> Result<Answer, Failure> {
    let (mdp, rewards) = load_model(cli)?;
    let s0 = mdp.initial();
    let answer = match &cli.command {
        Command::Mecs => {
            let mecs: Vec<Value> = maximal_end_components(&mdp)
                .iter()
                .map(|c| {
                    json!({
                        "states": c.states.iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>(),
                        "actions": c.actions.iter().map(|&a| mdp.action_name(a)).collect::<Vec<_>>(),
                    })
                })
                .collect();
            Answer::Yes(pretty(&json!({ "mecs": mecs })))
        }
        Command::CheckExp { v, dump_lp } => {
            let v = parse_vector(v)?;
            if *dump_lp {
                let system = expectation::build_frequency_system(&mdp, &rewards, s0, &v)?;
                let _ = write!(err, "{}", system.program);
            }
            let (yes, outcome) = expectation::decide_achievable(&mdp, &rewards, s0, &v)?;
            let mut value = json!({ "achievable": yes, "v": strings(&v) });
            if let Some(outcome) = outcome {
                let system = expectation::build_frequency_system(&mdp, &rewards, s0, &v)?;
                let x = system.frequencies(&outcome);
                let freq: serde_json::Map<String, Value> = x
                    .iter()
                    .enumerate()
                    .map(|(a, f)| (mdp.action_name(a).to_string(), Value::from(format_rational(f))))
                    .collect();
                value["frequencies"] = Value::Object(freq);
            }
            decision(yes, value)
        }
        Command::SynthExp { v } => {
            let v = parse_vector(v)?;
            match expectation::synthesize_strategy(&mdp, &rewards, s0, &v) {
                Ok(found) => Answer::Yes(serialize_strategy(&mdp, &found.strategy) + "\n"),
                Err(expectation::QueryError::NotAchievable) => {
                    decision(false, json!({ "achievable": false, "v": strings(&v) }))
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::ParetoPointExp { v } => {
            let v = parse_vector(v)?;
            let yes = expectation::decide_pareto_point(&mdp, &rewards, s0, &v)?;
            decision(yes, json!({ "pareto": yes, "v": strings(&v) }))
        }
        Command::ParetoExp { epsilon, budget } => {
            let epsilon = parse_rational(epsilon)?;
            let sample = expectation::approximate_pareto(&mdp, &rewards, s0, &epsilon, *budget)?;
            if cli.csv {
                Answer::Yes(sample.to_csv(rewards.names()))
            } else {
                let points: Vec<Value> = sample.points.iter().map(|p| strings(p)).collect();
                Answer::Yes(pretty(&json!({
                    "epsilon": format_rational(&sample.epsilon),
                    "maxAbsReward": format_rational(&sample.m_r),
                    "points": points,
                })))
            }
        }
        Command::CheckSat { nu, v } => {
            let query = SatQuery::new(parse_rational(nu)?, parse_vector(v)?);
            let yes = satisfaction::decide_achievable(&mdp, &rewards, s0, &query)?;
            decision(
                yes,
                json!({ "achievable": yes, "nu": format_rational(&query.nu), "v": strings(&query.v) }),
            )
        }
        Command::SynthSat { nu, v, epsilon } => {
            let query = SatQuery::new(parse_rational(nu)?, parse_vector(v)?).with_epsilon(parse_rational(epsilon)?);
            if !satisfaction::decide_achievable(&mdp, &rewards, s0, &query)? {
                decision(
                    false,
                    json!({ "achievable": false, "nu": format_rational(&query.nu), "v": strings(&query.v) }),
                )
            } else {
                let sigma = satisfaction::synthesize_strategy(&mdp, &rewards, s0, &query)?;
                Answer::Yes(serialize_strategy(&mdp, &sigma.to_stochastic_update()) + "\n")
            }
        }
        Command::ParetoPointSat { nu, v } => {
            let query = SatQuery::new(parse_rational(nu)?, parse_vector(v)?);
            let yes = satisfaction::decide_pareto_point(&mdp, &rewards, s0, &query)?;
            decision(
                yes,
                json!({ "pareto": yes, "nu": format_rational(&query.nu), "v": strings(&query.v) }),
            )
        }
        Command::ParetoSat { epsilon, budget } => {
            let epsilon = parse_rational(epsilon)?;
            let sample = satisfaction::approximate_pareto(&mdp, &rewards, s0, &epsilon, *budget)?;
            if cli.csv {
                Answer::Yes(sample.to_csv(rewards.names()))
            } else {
                let points: Vec<Value> = sample
                    .points
                    .iter()
                    .map(|(nu, v)| json!({ "nu": format_rational(nu), "v": strings(v) }))
                    .collect();
                Answer::Yes(pretty(&json!({
                    "epsilon": format_rational(&sample.epsilon),
                    "maxAbsReward": format_rational(&sample.m_r),
                    "points": points,
                })))
            }
        }
        Command::Evaluate { strategy, threshold } => {
            let sigma = parse_strategy(&mdp, &read(strategy)?)?;
            let report = exact_expected_mean_payoff(&mdp, &rewards, &sigma, s0);
            let bsccs: Vec<Value> = report
                .bsccs
                .iter()
                .map(|b| {
                    let locations: Vec<Value> = b
                        .locations
                        .iter()
                        .zip(&b.stationary)
                        .map(|(l, pi)| {
                            let loc = report.play.labels[*l];
                            json!({
                                "state": mdp.state_name(loc.state),
                                "memory": sigma.memory[loc.memory],
                                "action": mdp.action_name(loc.action),
                                "stationary": format_rational(pi),
                            })
                        })
                        .collect();
                    json!({
                        "probability": format_rational(&b.reach_probability),
                        "meanPayoff": strings(&b.mean_payoff),
                        "locations": locations,
                    })
                })
                .collect();
            let mut value = json!({ "expected": strings(&report.expected), "bsccs": bsccs });
            if let Some(t) = threshold {
                let t = parse_vector(t)?;
                expectation::check_dimension(&rewards, &t)?;
                value["satisfaction"] = Value::from(format_rational(&report.satisfaction_probability(&t)));
            }
            Answer::Yes(pretty(&value))
        }
        Command::Simulate {
            strategy,
            horizon,
            runs,
            seed,
            checkpoints,
            threshold,
        } => {
            let sigma = parse_strategy(&mdp, &read(strategy)?)?;
            if *horizon == 0 || *runs == 0 {
                return Err(Failure("horizon and runs must be positive".into()));
            }
            let mut config = SimulationConfig::new(*horizon, *runs, *seed);
            config.checkpoints = checkpoints.clone();
            let stats = simulate(&mdp, &rewards, SimulatedStrategy::FiniteMemory(&sigma), s0, &config);
            if cli.csv {
                Answer::Yes(stats.to_csv(rewards.names()))
            } else {
                let mut value = json!({
                    "horizon": horizon,
                    "runs": runs,
                    "seed": seed,
                    "mean": stats.empirical_mean(),
                });
                if let Some(t) = threshold {
                    let t = parse_vector(t)?;
                    expectation::check_dimension(&rewards, &t)?;
                    let t: Vec<f64> = t.iter().map(crate::model::to_f64).collect();
                    value["thresholdFrequency"] = Value::from(stats.threshold_frequency(&t));
                }
                Answer::Yes(pretty(&value))
            }
        }
    };
    Ok(answer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_vectors_parse_as_positionals() {
        let cli = Cli::try_parse_from(["meanpayoff", "--model", "m.json", "check-exp", "-1/2,3"]).unwrap();
        assert!(matches!(cli.command, Command::CheckExp { ref v, .. } if v == "-1/2,3"));
    }

    #[test]
    fn missing_model_is_an_error() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["meanpayoff", "mecs"], &mut out, &mut err), 2);
        assert!(String::from_utf8(err).unwrap().contains("--model"));
    }
}
