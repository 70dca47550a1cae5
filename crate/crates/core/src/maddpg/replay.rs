use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::encoder::ForecastWindow;

/// Everything needed to rebuild a global state once the encoder is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub soc: Vec<f64>,
    /// Counter divided by the day length.
    pub counter: f64,
    pub window: Arc<ForecastWindow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateRecord,
    /// Raw actor outputs in (-1, 1), before masking.
    pub pi: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Negated total slot cost.
    pub team_reward: f64,
    pub next: StateRecord,
    pub done: bool,
}

/// FIFO experience buffer with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}
