//! Parallel replication with output order fixed by replication id.

use rayon::prelude::*;

use crate::{HarnessError, Result};

/// Worker count from `SIM_WORKERS`, if set to a positive integer.
pub fn env_workers() -> Option<usize> {
    std::env::var("SIM_WORKERS").ok()?.trim().parse().ok().filter(|&w| w > 0)
}

/// `f(0), .., f(reps - 1)` on `workers` threads (rayon's default when `None`).
///
/// Each replication draws from its own random streams, so the result does not
/// depend on the worker count or scheduling.
pub fn map_replications<T, F>(reps: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let run = || (0..reps).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}
