use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::Timestamp;

struct Scheduled<E> {
    at: Timestamp,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Simulated time plus the pending-event queue. Events at the same instant
/// come out in the order they were scheduled.
pub struct Clock<E> {
    now: Timestamp,
    next_seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
}

impl<E> Clock<E> {
    pub fn new(start: Timestamp) -> Clock<E> {
        Clock { now: start, next_seq: 0, queue: BinaryHeap::new() }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Panics if `at` is in the past.
    pub fn schedule(&mut self, at: Timestamp, event: E) {
        assert!(at >= self.now, "event scheduled at {at}, before now {}", self.now);
        self.queue.push(Scheduled { at, seq: self.next_seq, event });
        self.next_seq += 1;
    }

    pub fn schedule_in(&mut self, delay: i64, event: E) {
        self.schedule(self.now + delay, event);
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.queue.peek().map(|s| s.at)
    }

    /// Removes the next event and moves the clock to its time.
    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        let s = self.queue.pop()?;
        self.now = s.at;
        Some((s.at, s.event))
    }

    /// Moves the clock forward to `t` without an event. Does nothing if an
    /// event is due before `t` or `t` is in the past.
    pub fn advance_to(&mut self, t: Timestamp) {
        if t > self.now && self.peek_time().is_none_or(|next| next >= t) {
            self.now = t;
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_keep_insertion_order() {
        let mut c = Clock::new(Timestamp(0));
        c.schedule(Timestamp(5), "b1");
        c.schedule(Timestamp(3), "a");
        c.schedule(Timestamp(5), "b2");
        c.schedule(Timestamp(5), "b3");
        let order: Vec<_> = std::iter::from_fn(|| c.pop()).map(|(_, e)| e).collect();
        assert_eq!(order, ["a", "b1", "b2", "b3"]);
        assert_eq!(c.now(), Timestamp(5));
    }

    #[test]
    #[should_panic]
    fn past_events_are_refused() {
        let mut c = Clock::new(Timestamp(10));
        c.schedule(Timestamp(9), ());
    }

    proptest! {
        #[test]
        fn time_never_decreases(delays in proptest::collection::vec(0i64..50, 1..200)) {
            // Payloads are insertion numbers, so ties must pop in increasing order.
            let mut c = Clock::new(Timestamp(0));
            let mut inserted = 0usize;
            for d in &delays {
                c.schedule_in(*d, inserted);
                inserted += 1;
            }
            let mut last: Option<(Timestamp, usize)> = None;
            while let Some((t, n)) = c.pop() {
                if let Some((lt, ln)) = last {
                    prop_assert!(t >= lt);
                    prop_assert!(t > lt || n > ln);
                }
                if n < delays.len() && n % 3 == 0 {
                    c.schedule_in(delays[n] / 2, inserted);
                    inserted += 1;
                }
                last = Some((t, n));
            }
        }
    }
}
