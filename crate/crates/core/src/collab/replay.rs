//! FIFO replay memory.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay<T> {
    capacity: usize,
    items: VecDeque<T>,
    /// Total pushes since creation; the write cursor.
    pushed: u64,
}

impl<T> Replay<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)), pushed: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.pushed += 1;
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

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Up to `n` distinct items, uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<&T> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fifo_eviction() {
        let mut r = Replay::new(3);
        for i in 0..5 {
            r.push(i);
        }
        assert_eq!(r.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(r.pushed(), 5);
    }

    #[test]
    fn sample_is_distinct() {
        let mut r = Replay::new(10);
        (0..10).for_each(|i| r.push(i));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<i32> = r.sample(&mut rng, 10).into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_eq!(r.sample(&mut rng, 50).len(), 10);
    }

    proptest! {
        #[test]
        fn capacity_never_exceeded(cap in 1usize..50, pushes in 0usize..200) {
            let mut r = Replay::new(cap);
            for i in 0..pushes {
                r.push(i);
                prop_assert!(r.len() <= cap);
            }
            if pushes > 0 {
                prop_assert_eq!(*r.iter().last().unwrap(), pushes - 1);
                prop_assert_eq!(*r.iter().next().unwrap(), pushes.saturating_sub(cap));
            }
        }
    }
}
