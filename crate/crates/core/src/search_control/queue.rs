use std::collections::VecDeque;

use rand::Rng;

use crate::rng::Rng64;

pub const DEFAULT_QUEUE_CAPACITY: usize = 1_000_000;
pub const DEFAULT_THRESHOLD_RATE: f64 = 0.001;

/// Euclidean distance normalized by `√d`.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt() / (a.len() as f64).sqrt()
}

/// Bounded FIFO of search-control states plus the admission threshold `ε_a`.
#[derive(Debug, Clone)]
pub struct SearchControlQueue {
    states: VecDeque<Vec<f64>>,
    capacity: usize,
    threshold: f64,
    rate: f64,
}

impl SearchControlQueue {
    pub fn new(capacity: usize, rate: f64) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            states: VecDeque::new(),
            capacity,
            threshold: 0.0,
            rate,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Current admission threshold `ε_a`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, eps: f64) {
        self.threshold = eps;
    }

    /// EMA of real transition lengths: `ε_a ← (1−β)ε_a + β·distance(s, s')`.
    pub fn threshold_update(&mut self, s: &[f64], next: &[f64]) {
        self.threshold = (1.0 - self.rate) * self.threshold + self.rate * distance(s, next);
    }

    /// Whether `candidate` may follow the last admitted state. No previous
    /// state counts as infinitely far, which clears any finite threshold.
    pub fn admits(&self, last: Option<&[f64]>, candidate: &[f64]) -> bool {
        match last {
            None => self.threshold.is_finite(),
            Some(prev) => distance(prev, candidate) >= self.threshold,
        }
    }

    pub fn push(&mut self, s: Vec<f64>) {
        if self.states.len() == self.capacity {
            self.states.pop_front();
        }
        self.states.push_back(s);
    }

    pub fn sample<'a>(&'a self, rng: &mut Rng64) -> &'a [f64] {
        &self.states[rng.random_range(0..self.states.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.states.iter()
    }
}
