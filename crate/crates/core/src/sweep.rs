//! Independent scenario replicas, in parallel when the `parallel` feature
//! is on.

use crate::harness::{run_scenario, ConfigError, RunError, RunOutput, Scenario, ScenarioConfig};

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    seq_map(items, f)
}

pub fn seq_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ReplicaError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Runs `cfg` once per seed.
pub fn run_replica(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, ReplicaError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    Ok(run_scenario(&Scenario::resolve(cfg)?)?)
}

pub fn run_replicas(cfg: &ScenarioConfig, seeds: &[u64]) -> Vec<Result<RunOutput, ReplicaError>> {
    par_map(seeds, |&s| run_replica(cfg, s))
}
