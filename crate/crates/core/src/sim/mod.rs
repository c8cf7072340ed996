//! Simulation scenarios with known truth and method comparison.

pub mod metrics;
pub mod scenario;

pub use metrics::{evaluate, score, CellMetric, Estimator, Method, MethodFailure, MetricReport};
pub use scenario::{generate, Confounding, Scenario, ScenarioKind, ScenarioSpec, REFERENCE_SEED};

/// Seed of replicate `r` derived from a base seed.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64 + 1)
}
