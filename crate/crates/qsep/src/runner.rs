//! Multi-threaded chunk execution.
//!
//! Chunks are computed speculatively in batches on a private rayon pool and
//! handed to the serial stopping rule in index order, so a sweep gives the
//! same numbers for any worker count.

use std::ops::Range;

use qsep_core::montecarlo::{self, ChunkExecutor, ChunkTally, PointPlan, SerialExecutor};
use qsep_core::{MonteCarloError, PhaseQuantizer, SimConfig, SimPoint};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuildError, ThreadPoolBuilder};
use thiserror::Error;

/// Environment variable supplying the default worker count.
pub const WORKERS_ENV: &str = "QSEP_WORKERS";

/// Chunks requested per worker per batch.
const CHUNKS_PER_WORKER: u64 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot start worker threads: {0}")]
    Pool(#[from] ThreadPoolBuildError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
}

#[derive(Debug)]
pub struct ParallelExecutor {
    pool: ThreadPool,
    workers: usize,
}

impl ParallelExecutor {
    pub fn new(workers: usize) -> Result<Self, ThreadPoolBuildError> {
        let workers = workers.max(1);
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("qsep-worker-{i}"))
            .build()?;
        Ok(Self { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl ChunkExecutor for ParallelExecutor {
    fn batch_len(&self) -> u64 {
        self.workers as u64 * CHUNKS_PER_WORKER
    }

    fn run_batch<Q: PhaseQuantizer>(
        &self,
        plan: &PointPlan<Q>,
        chunks: Range<u64>,
    ) -> Vec<ChunkTally> {
        self.pool
            .install(|| chunks.into_par_iter().map(|c| plan.run_chunk(c)).collect())
    }
}

/// Sweeps the grid with `workers` threads; `workers <= 1` runs serially.
pub fn run_sweep(config: &SimConfig, workers: usize) -> Result<Vec<SimPoint>, RunError> {
    if workers <= 1 {
        return Ok(montecarlo::run_sweep_with(config, &SerialExecutor)?);
    }
    let executor = ParallelExecutor::new(workers)?;
    Ok(montecarlo::run_sweep_with(config, &executor)?)
}

/// Worker count from `QSEP_WORKERS`, falling back to the available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
