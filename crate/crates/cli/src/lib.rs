//! Experiment runner and property checker for the greedylore simulator.

pub mod checks;
pub mod constants;
pub mod plan;
pub mod report;
