//! Ground truth for strategies: exact BSCC-based evaluation and Monte Carlo
//! simulation.

mod exact;
mod simulation;

pub(crate) use exact::evaluate_play;
pub use exact::{
    exact_expected_mean_payoff, exact_satisfaction_probability, reach_probability, used_actions, BsccReport,
    EvaluationReport,
};
pub(crate) use simulation::{run_rng, BandTracker, Program};
pub use simulation::{simulate, SimulatedStrategy, SimulationConfig, SimulationStats};
