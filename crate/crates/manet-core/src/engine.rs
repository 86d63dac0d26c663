//! Discrete-event engine: virtual clock, priority event queue and seeded
//! random-number streams.
//!
//! One engine drives exactly one simulation run. Everything is
//! single-threaded and fully deterministic: events are totally ordered by
//! `(fire_at, sequence)` and every random draw comes from an explicitly
//! seeded, explicitly named stream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simulation time in seconds. Non-negative, finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Wraps a number of seconds. Panics on NaN or negative values: those
    /// are programming errors, not run-time conditions.
    pub fn from_secs(secs: f64) -> SimTime {
        assert!(secs.is_finite() && secs >= 0.0, "invalid sim time {secs}");
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn total_cmp(&self, other: &SimTime) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::ops::Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl std::ops::Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EngineError {
    #[error("event scheduled in the past: fire_at={fire_at} < clock={clock}")]
    ScheduleInPast { fire_at: SimTime, clock: SimTime },
}

struct Scheduled<T> {
    fire_at: SimTime,
    sequence: u64,
    payload: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        self.sequence == other.sequence && self.fire_at == other.fire_at
    }
}
impl<T> Eq for Scheduled<T> {}

impl<T> Ord for Scheduled<T> {
    // Reversed: BinaryHeap is a max-heap, we want the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .total_cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}
impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority event queue with a monotone clock.
///
/// Dequeue order is `fire_at` ascending with insertion order (`sequence`)
/// breaking ties, so two runs that schedule the same events in the same
/// order process them identically.
pub struct EventQueue<T> {
    heap: BinaryHeap<Scheduled<T>>,
    next_sequence: u64,
    clock: SimTime,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue::new()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_sequence: 0,
            clock: SimTime::ZERO,
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: T) -> Result<(), EngineError> {
        if fire_at < self.clock {
            return Err(EngineError::ScheduleInPast {
                fire_at,
                clock: self.clock,
            });
        }
        self.heap.push(Scheduled {
            fire_at,
            sequence: self.next_sequence,
            payload,
        });
        self.next_sequence += 1;
        Ok(())
    }

    /// Pops the next event if it fires at or before `until`, advancing the
    /// clock to its fire time. Events beyond `until` stay queued and the
    /// clock does not move.
    pub fn pop_until(&mut self, until: SimTime) -> Option<(SimTime, T)> {
        let head = self.heap.peek()?;
        if head.fire_at > until {
            return None;
        }
        let ev = self.heap.pop().unwrap();
        debug_assert!(ev.fire_at >= self.clock, "clock regression");
        self.clock = ev.fire_at;
        Some((ev.fire_at, ev.payload))
    }
}

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(SPLITMIX_GAMMA);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Identifies one independent stream of randomness within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    /// Initial node placement.
    Placement,
    /// Mobility decisions of one node (headings, waypoints, speeds, jitter offsets).
    Mobility(u32),
    /// Traffic source behaviour (optional phase jitter).
    Traffic,
    /// Flow endpoint selection.
    FlowSetup,
    /// Per-node timer jitter (periodic protocol broadcasts).
    Jitter(u32),
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Placement => 1 << 32,
            StreamId::Mobility(node) => (2 << 32) | node as u64,
            StreamId::Traffic => 3 << 32,
            StreamId::FlowSetup => 4 << 32,
            StreamId::Jitter(node) => (5 << 32) | node as u64,
        }
    }
}

/// A named, seeded random stream.
///
/// Backed by ChaCha8 (a fixed, portable generator, never the platform
/// default) with the stream key mixed into the seed, so identical
/// `(seed, stream)` pairs yield identical draw sequences on every platform
/// and draws on one stream never disturb another.
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> RngStream {
        RngStream {
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream.tag()))),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits, so the mapping is
    /// bit-identical everywhere.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`. Panics on an inverted or empty interval.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo < hi, "inverted interval [{lo}, {hi})");
        let v = lo + self.next_f64() * (hi - lo);
        if v >= hi {
            // Rounding pushed the product onto the open bound; step back one ulp.
            f64::from_bits(hi.to_bits() - 1)
        } else {
            v
        }
    }

    /// Uniform draw over `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Multiply-shift rejection-free mapping is fine here: n is tiny
        // compared to 2^64 and exact uniformity is not load-bearing.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Random unit vector via rejection sampling in the disk; avoids
    /// trigonometric functions whose results differ across platforms.
    pub fn unit_vector(&mut self) -> (f64, f64) {
        loop {
            let x = self.uniform(-1.0, 1.0);
            let y = self.uniform(-1.0, 1.0);
            let n2 = x * x + y * y;
            if n2 > 1e-12 && n2 <= 1.0 {
                let n = n2.sqrt();
                return (x / n, y / n);
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dequeue_order_is_time_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(5.0), "a").unwrap();
        q.schedule(SimTime::from_secs(1.0), "early").unwrap();
        q.schedule(SimTime::from_secs(5.0), "b").unwrap();
        let until = SimTime::from_secs(100.0);
        assert_eq!(q.pop_until(until).unwrap().1, "early");
        assert_eq!(q.pop_until(until).unwrap().1, "a");
        assert_eq!(q.pop_until(until).unwrap().1, "b");
        assert!(q.pop_until(until).is_none());
    }

    #[test]
    fn scheduling_into_the_past_reports_both_timestamps() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(1.0), ()).unwrap();
        q.pop_until(SimTime::from_secs(2.0));
        let err = q.schedule(SimTime::from_secs(0.5), ()).unwrap_err();
        assert_eq!(
            err,
            EngineError::ScheduleInPast {
                fire_at: SimTime::from_secs(0.5),
                clock: SimTime::from_secs(1.0),
            }
        );
    }

    #[test]
    fn pop_until_is_boundary_inclusive() {
        let mut q = EventQueue::new();
        for t in [1.0, 2.0, 3.0] {
            q.schedule(SimTime::from_secs(t), t).unwrap();
        }
        let mut processed = 0;
        while q.pop_until(SimTime::from_secs(2.0)).is_some() {
            processed += 1;
        }
        assert_eq!(processed, 2);
        assert_eq!(q.clock(), SimTime::from_secs(2.0));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn empty_queue_leaves_clock_unchanged() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert!(q.pop_until(SimTime::from_secs(100.0)).is_none());
        assert_eq!(q.clock(), SimTime::ZERO);
    }

    #[test]
    fn uniform_stays_inside_half_open_interval() {
        let mut rng = RngStream::new(7, StreamId::Traffic);
        let eps = 1e-9;
        for _ in 0..10_000 {
            let v = rng.uniform(2.0, 2.0 + eps);
            assert!(v >= 2.0 && v < 2.0 + eps, "{v}");
        }
    }

    #[test]
    fn same_seed_same_stream_same_sequence() {
        let mut a = RngStream::new(42, StreamId::Mobility(3));
        let mut b = RngStream::new(42, StreamId::Mobility(3));
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_isolated() {
        // Draw from B alone, then replay B interleaved with heavy use of A:
        // B's sequence must not change.
        let mut b_alone = RngStream::new(9, StreamId::Jitter(1));
        let solo: Vec<u64> = (0..100).map(|_| b_alone.next_u64()).collect();

        let mut a = RngStream::new(9, StreamId::Jitter(0));
        let mut b = RngStream::new(9, StreamId::Jitter(1));
        let mut interleaved = Vec::new();
        for i in 0..100 {
            for _ in 0..(i % 7) {
                a.next_u64();
            }
            interleaved.push(b.next_u64());
        }
        assert_eq!(solo, interleaved);
    }

    #[test]
    fn unit_vectors_are_normalized() {
        let mut rng = RngStream::new(1, StreamId::Placement);
        for _ in 0..1000 {
            let (x, y) = rng.unit_vector();
            assert!((x * x + y * y - 1.0).abs() < 1e-9);
        }
    }
}
