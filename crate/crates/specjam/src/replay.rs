//! Observation histories and the bounded replay buffer.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A fixed-length window of the most recent observation vectors, oldest
/// first. This is the Q-network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationHistory {
    data: Vec<f64>,
    width: usize,
    len: usize,
}

impl ObservationHistory {
    /// All-zero history of `len` observations of `width` entries each.
    pub fn zeros(len: usize, width: usize) -> Self {
        assert!(len >= 1 && width >= 1);
        ObservationHistory {
            data: vec![0.0; len * width],
            width,
            len,
        }
    }

    /// Number of observations; always the construction length.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Observation at position `t` (0 = oldest).
    pub fn entry(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Drops the oldest observation and appends `obs`.
    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.width, "observation width mismatch");
        self.data.copy_within(self.width.., 0);
        let tail = (self.len - 1) * self.width;
        self.data[tail..].copy_from_slice(obs);
    }
}

/// One replayable experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub history: ObservationHistory,
    pub action: usize,
    pub reward: f64,
    pub next_history: ObservationHistory,
}

/// Bounded FIFO of transitions; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayHistory {
    buf: VecDeque<TransitionRecord>,
    capacity: usize,
}

impl ReplayHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        ReplayHistory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn get(&self, i: usize) -> &TransitionRecord {
        &self.buf[i]
    }

    pub fn push(&mut self, record: TransitionRecord) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(record);
    }

    /// Samples `m` records uniformly with replacement.
    pub fn sample(&self, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&TransitionRecord>> {
        if self.buf.is_empty() {
            return Err(Error::Empty("cannot sample from an empty replay buffer"));
        }
        Ok((0..m)
            .map(|_| &self.buf[rng.gen_range(0..self.buf.len())])
            .collect())
    }
}
