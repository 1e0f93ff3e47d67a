//! Multi-objective mean-payoff analysis of Markov decision processes.

pub mod cli;
pub mod expectation;
pub mod fixtures;
pub mod graph;
mod linalg;
pub mod lp;
pub mod model;
pub mod satisfaction;
pub mod strategy;
pub mod verify;
