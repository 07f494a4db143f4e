//! Bounded FIFO replay memory with uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};

/// Transition as the learner sees it: normalized observations and the
/// pre-squash proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredTransition {
    pub obs: [f64; OBS_DIM],
    pub u: [f64; ACTION_DIM],
    /// Log-density of the proposal under the behaviour policy.
    pub log_prob: f64,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    data: Vec<T>,
    /// Slot overwritten by the next store once full.
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be > 0".into()));
        }
        Ok(Self {
            capacity,
            data: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn store(&mut self, item: T) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.cursor] = item;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (a, b) = self.data.split_at(self.cursor);
        b.iter().chain(a.iter())
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n).map(|_| rng.random_range(0..self.data.len())).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&T>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.data[i])
            .collect())
    }
}
