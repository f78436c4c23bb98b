//! Transitions and the experience-replay recency buffer.

use std::collections::VecDeque;

use rand::Rng;

use crate::envs::Action;
use crate::rng::Rng64;

pub const DEFAULT_ER_CAPACITY: usize = 100_000;

/// `terminal` marks true termination only; truncated steps are stored with
/// `terminal = false` so they keep their bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Action,
    pub r: f64,
    pub next: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ErBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ErBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Append, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform draw with replacement. Panics on an empty buffer.
    pub fn sample<'a>(&'a self, rng: &mut Rng64) -> &'a Transition {
        &self.items[rng.random_range(0..self.items.len())]
    }
}
