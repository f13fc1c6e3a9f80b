//! Bounded FIFO replay storage with uniform sampling (with replacement).

use std::collections::VecDeque;

use rand::Rng;

use super::Transition;

pub struct ReplayBuffer {
    capacity: usize,
    store: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            store: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    /// Appends a transition, evicting the oldest when full.
    pub fn push(&mut self, t: Transition) {
        if self.store.len() == self.capacity {
            self.store.pop_front();
        }
        self.store.push_back(t);
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.store[index]
    }

    /// `n` independent uniform draws over the stored transitions.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.store.len())).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.store.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Action;
    use proptest::prelude::*;

    fn tagged(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: Action::Discrete(0),
            reward: 0.0,
            next_state: vec![tag],
            done: false,
        }
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(tagged(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let tags: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity_and_evicts_in_order(
            capacity in 1usize..50,
            inserts in 0usize..200,
        ) {
            let mut buf = ReplayBuffer::new(capacity);
            for i in 0..inserts {
                buf.push(tagged(i as f64));
                prop_assert!(buf.len() <= capacity);
            }
            let expected_first = inserts.saturating_sub(capacity);
            let tags: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
            let expected: Vec<f64> = (expected_first..inserts).map(|i| i as f64).collect();
            prop_assert_eq!(tags, expected);
        }
    }
}
