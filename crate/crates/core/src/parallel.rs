//! Replica-parallel execution with index-ordered results.

use rayon::prelude::*;

use crate::rng::{ReplicaRng, StreamFactory};

/// Seed and worker count shared by every Monte-Carlo estimator.
///
/// Replica `i` of purpose `(tag, sub)` always draws from the same stream, and
/// results come back in replica order, so any reduction done by the caller is
/// bit-identical for every worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub seed: u64,
    pub workers: usize,
}

impl MonteCarlo {
    pub fn new(seed: u64, workers: usize) -> Self {
        Self {
            seed,
            workers: workers.max(1),
        }
    }

    pub fn streams(&self, purpose: &str, sub: u64) -> StreamFactory {
        StreamFactory::new(self.seed, purpose, sub)
    }

    /// Runs `f(index, rng)` for every replica and returns results in index order.
    pub fn map<T, F>(&self, purpose: &str, sub: u64, reps: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &mut ReplicaRng) -> T + Sync + Send,
    {
        let streams = self.streams(purpose, sub);
        let run = |i: u64| {
            let mut rng = streams.replica(i);
            f(i, &mut rng)
        };
        if self.workers == 1 {
            return (0..reps).map(run).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("thread pool");
        pool.install(|| {
            (0..reps as usize)
                .into_par_iter()
                .with_min_len(256)
                .map(|i| run(i as u64))
                .collect()
        })
    }

    /// Counts replicas for which `event` holds.
    pub fn count<F>(&self, purpose: &str, sub: u64, reps: u64, event: F) -> u64
    where
        F: Fn(u64, &mut ReplicaRng) -> bool + Sync + Send,
    {
        self.map(purpose, sub, reps, event).into_iter().filter(|&b| b).count() as u64
    }
}
