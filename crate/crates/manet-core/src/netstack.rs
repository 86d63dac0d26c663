//! Idealized shared-medium link layer: fixed-range disk connectivity, a
//! serializing transmitter per node and a drop-tail interface queue that
//! gives routing packets priority over data.

use std::collections::VecDeque;

use crate::mobility::Vec2;
use crate::packet::{NodeId, Packet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    /// Reception radius in meters; reception succeeds iff distance <= range.
    pub range: f64,
    pub bitrate_bps: f64,
    /// Fixed per-hop processing latency added on top of serialization.
    pub proc_delay: f64,
}

impl RadioConfig {
    /// Time the transmitter is occupied putting `bytes` on the air.
    pub fn tx_time(&self, bytes: u32) -> f64 {
        bytes as f64 * 8.0 / self.bitrate_bps
    }

    /// Delay from transmission start to delivery at a receiver.
    pub fn arrival_delay(&self, bytes: u32) -> f64 {
        self.tx_time(bytes) + self.proc_delay
    }

    pub fn in_range(&self, a: Vec2, b: Vec2) -> bool {
        a.dist_sq(b) <= self.range * self.range
    }
}

/// Nodes within range of `node`, excluding itself, in ascending id order.
pub fn neighbors_of(positions: &[Vec2], node: NodeId, radio: &RadioConfig) -> Vec<NodeId> {
    let me = positions[node.index()];
    let mut out = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        if i != node.index() && radio.in_range(me, *p) {
            out.push(NodeId(i as u32));
        }
    }
    out
}

/// A packet staged for transmission plus its link-layer target, which for
/// forwarded unicasts differs from the packet's final destination.
#[derive(Debug, Clone, PartialEq)]
pub struct MacFrame {
    pub link_dst: NodeId,
    pub packet: Packet,
}

impl MacFrame {
    fn is_control(&self) -> bool {
        self.packet.kind().is_control()
    }
}

#[derive(Debug, PartialEq)]
pub enum EnqueueOutcome {
    Accepted,
    /// Accepted after pushing out the data frame closest to the tail.
    AcceptedEvicting(MacFrame),
    /// Queue full and nothing evictable.
    Rejected,
}

/// Drop-tail output queue with routing-packet priority: control packets
/// jump ahead of queued data (but stay FIFO among themselves), and when
/// the queue is full a control packet may displace the last queued data
/// packet. Data packets are rejected outright when the queue is full.
#[derive(Debug)]
pub struct InterfaceQueue {
    items: VecDeque<MacFrame>,
    capacity: usize,
    high_water: usize,
}

impl InterfaceQueue {
    pub fn new(capacity: usize) -> InterfaceQueue {
        assert!(capacity > 0);
        InterfaceQueue {
            items: VecDeque::with_capacity(capacity),
            capacity,
            high_water: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Maximum occupancy ever observed.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn enqueue(&mut self, frame: MacFrame) -> EnqueueOutcome {
        let control = frame.is_control();
        let mut evicted = None;
        if self.items.len() >= self.capacity {
            if !control {
                return EnqueueOutcome::Rejected;
            }
            let Some(last_data) = self.items.iter().rposition(|f| !f.is_control()) else {
                return EnqueueOutcome::Rejected;
            };
            evicted = self.items.remove(last_data);
        }
        if control {
            let at = self
                .items
                .iter()
                .position(|f| !f.is_control())
                .unwrap_or(self.items.len());
            self.items.insert(at, frame);
        } else {
            self.items.push_back(frame);
        }
        self.high_water = self.high_water.max(self.items.len());
        match evicted {
            Some(f) => EnqueueOutcome::AcceptedEvicting(f),
            None => EnqueueOutcome::Accepted,
        }
    }

    pub fn dequeue(&mut self) -> Option<MacFrame> {
        self.items.pop_front()
    }

    /// Removes every queued frame, e.g. when the owning protocol is being
    /// swapped out.
    pub fn drain(&mut self) -> Vec<MacFrame> {
        self.items.drain(..).collect()
    }
}
