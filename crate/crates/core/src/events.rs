//! Deterministic discrete-event queue.
//!
//! Events are ordered by `(time, entity, sequence)`; the sequence number is
//! assigned at scheduling time, so events with equal time and entity run in
//! the order they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Debug)]
struct Scheduled<E> {
    time: u64,
    entity: u64,
    seq: u64,
    event: E,
}

impl<E> Scheduled<E> {
    fn key(&self) -> (u64, u64, u64) {
        (self.time, self.entity, self.seq)
    }
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Scheduled<E>>>,
    next_seq: u64,
    now: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Schedules `event` at absolute `time`. Scheduling into the past is
    /// clamped to the current time.
    pub fn schedule(&mut self, time: u64, entity: u64, event: E) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Scheduled {
            time: time.max(self.now),
            entity,
            seq,
            event,
        }));
    }

    pub fn pop(&mut self) -> Option<(u64, u64, E)> {
        let Reverse(s) = self.heap.pop()?;
        self.now = s.time;
        Some((s.time, s.entity, s.event))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_entity_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(5, 1, "late");
        q.schedule(1, 2, "b");
        q.schedule(1, 1, "a1");
        q.schedule(1, 1, "a2");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|e| e.2)).collect();
        assert_eq!(order, ["a1", "a2", "b", "late"]);
    }

    #[test]
    fn past_events_clamp_to_now() {
        let mut q = EventQueue::new();
        q.schedule(10, 0, 1);
        q.pop();
        q.schedule(3, 0, 2);
        assert_eq!(q.pop(), Some((10, 0, 2)));
    }
}
