use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{EngineError, Event, EventKind, SimTime};

struct Entry<K>(Event<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Entry<K> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Time-ordered event queue with FIFO tie-break among equal times.
pub struct EventQueue<K = EventKind> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<K>>,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues `kind` at `time`, returning the assigned sequence number.
    pub fn schedule(&mut self, time: SimTime, kind: K) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::SchedulingInPast {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { time, seq, kind }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.time)
    }

    /// Dequeues the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<K>> {
        let Entry(ev) = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    /// Processes every event with `time <= until`, then sets the clock to `until`.
    ///
    /// The handler may schedule further events; those are honoured if they
    /// fall within the horizon.
    pub fn run_until<F>(&mut self, until: SimTime, mut handler: F)
    where
        F: FnMut(&mut EventQueue<K>, Event<K>),
    {
        debug_assert!(until >= self.now, "run_until into the past");
        while self.peek_time().is_some_and(|t| t <= until) {
            let ev = self.pop().expect("peeked");
            handler(self, ev);
        }
        if until > self.now {
            self.now = until;
        }
    }
}
