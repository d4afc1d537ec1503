//! Deterministic in-process simulation of the worker collectives used by
//! the distributed pipeline: all-to-all, all-gather, and all-reduce.
//!
//! Collectives are synchronous barriers over `P` simulated workers; a
//! sequential round-robin scheduler is the reference execution model, so
//! results never depend on physical interleaving. Each call counts as
//! one epoch, and every worker participates exactly once per epoch by
//! construction (the caller supplies one entry per rank).

use crate::error::{Error, Result};

/// A group of `P` simulated workers advancing through collective epochs.
#[derive(Debug)]
pub struct WorkerGroup {
    workers: usize,
    epoch: u64,
}

impl WorkerGroup {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("worker group needs at least one worker"));
        }
        Ok(WorkerGroup { workers, epoch: 0 })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Completed collective epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Exchange addressed payloads: `outboxes[p]` is worker `p`'s list of
    /// `(destination, payload)`. Every payload lands exactly once in its
    /// destination inbox, ordered by (source rank, emission order).
    pub fn all_to_all<T>(&mut self, outboxes: Vec<Vec<(usize, T)>>) -> Result<Vec<Vec<T>>> {
        if outboxes.len() != self.workers {
            return Err(Error::invalid(format!(
                "all_to_all called with {} outboxes for {} workers",
                outboxes.len(),
                self.workers
            )));
        }
        for (src, outbox) in outboxes.iter().enumerate() {
            if let Some((dest, _)) = outbox.iter().find(|(d, _)| *d >= self.workers) {
                return Err(Error::invalid(format!(
                    "worker {src} addressed nonexistent worker {dest}"
                )));
            }
        }
        let mut inboxes: Vec<Vec<T>> = (0..self.workers).map(|_| Vec::new()).collect();
        for outbox in outboxes {
            for (dest, payload) in outbox {
                inboxes[dest].push(payload);
            }
        }
        self.epoch += 1;
        Ok(inboxes)
    }

    /// Replicate one item per worker: every worker receives the identical
    /// rank-ordered list.
    pub fn all_gather<T: Clone>(&mut self, items: Vec<T>) -> Result<Vec<Vec<T>>> {
        if items.len() != self.workers {
            return Err(Error::invalid(format!(
                "all_gather called with {} items for {} workers",
                items.len(),
                self.workers
            )));
        }
        self.epoch += 1;
        Ok((0..self.workers).map(|_| items.clone()).collect())
    }

    /// Sum one value per worker in fixed rank order (rank 0 + rank 1 + ...);
    /// every worker observes the identical result.
    pub fn all_reduce_sum(&mut self, contributions: &[f64]) -> Result<f64> {
        if contributions.len() != self.workers {
            return Err(Error::invalid(format!(
                "all_reduce_sum called with {} values for {} workers",
                contributions.len(),
                self.workers
            )));
        }
        self.epoch += 1;
        let mut sum = 0.0;
        for &v in contributions {
            sum += v;
        }
        Ok(sum)
    }
}
