//! Constant-bit-rate traffic: flow selection, the emission schedule and
//! per-packet delivery bookkeeping used for end-of-run metrics.

use std::collections::BTreeMap;

use crate::engine::{RngStream, SimTime, StreamId};
use crate::packet::NodeId;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    /// Packets per second.
    pub rate: f64,
    pub start_s: f64,
    pub stop_s: f64,
}

impl Flow {
    /// Emissions at start, start + 1/rate, ... while <= stop: the fencepost
    /// count is floor((stop - start) * rate) + 1.
    pub fn packet_count(&self) -> u64 {
        ((self.stop_s - self.start_s) * self.rate + 1e-9).floor() as u64 + 1
    }

    pub fn send_time(&self, k: u64) -> SimTime {
        SimTime::from_secs(self.start_s + k as f64 / self.rate)
    }
}

/// Chooses flow endpoints. Explicit pairs win; otherwise 2F distinct nodes
/// are drawn by shuffling the id space and paired off in shuffle order.
pub fn build_flows(cfg: &ScenarioConfig, seed: u64) -> Vec<Flow> {
    let start = cfg.traffic_start_s;
    let stop = cfg.traffic_stop();
    let mk = |id: u32, src: NodeId, dst: NodeId| Flow {
        id,
        src,
        dst,
        rate: cfg.traffic_rate,
        start_s: start,
        stop_s: stop,
    };
    if let Some(pairs) = &cfg.flow_pairs {
        return pairs
            .iter()
            .enumerate()
            .map(|(i, (s, d))| mk(i as u32, *s, *d))
            .collect();
    }
    let f = cfg.effective_flows();
    let mut ids: Vec<u32> = (0..cfg.nodes as u32).collect();
    let mut rng = RngStream::new(seed, StreamId::FlowSetup);
    rng.shuffle(&mut ids);
    (0..f)
        .map(|i| mk(i as u32, NodeId(ids[2 * i]), NodeId(ids[2 * i + 1])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub sent_at: SimTime,
    pub received_at: Option<SimTime>,
    pub payload_bytes: u32,
}

/// Ground-truth delivery ledger kept by the engine, independent of the
/// trace file, so the two metric paths can be cross-checked.
#[derive(Debug, Default)]
pub struct DeliveryLog {
    records: BTreeMap<u64, DeliveryRecord>,
}

impl DeliveryLog {
    pub fn record_send(&mut self, pkt_id: u64, at: SimTime, payload_bytes: u32) {
        let prev = self.records.insert(
            pkt_id,
            DeliveryRecord {
                sent_at: at,
                received_at: None,
                payload_bytes,
            },
        );
        debug_assert!(prev.is_none(), "packet {pkt_id} sent twice");
    }

    /// Returns false for an unknown or already-delivered packet id, so
    /// duplicate deliveries can be detected by the caller.
    pub fn record_receive(&mut self, pkt_id: u64, at: SimTime) -> bool {
        match self.records.get_mut(&pkt_id) {
            Some(r) if r.received_at.is_none() => {
                r.received_at = Some(at);
                true
            }
            _ => false,
        }
    }

    pub fn sent(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn delivered(&self) -> u64 {
        self.records
            .values()
            .filter(|r| r.received_at.is_some())
            .count() as u64
    }

    pub fn delay_sum_s(&self) -> f64 {
        self.records
            .values()
            .filter_map(|r| r.received_at.map(|t| t - r.sent_at))
            .sum()
    }

    pub fn delivered_payload_bytes(&self) -> u64 {
        self.records
            .values()
            .filter(|r| r.received_at.is_some())
            .map(|r| r.payload_bytes as u64)
            .sum()
    }

    pub fn records(&self) -> impl Iterator<Item = (&u64, &DeliveryRecord)> {
        self.records.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_seconds_at_eight_per_second_is_801_packets() {
        let f = Flow {
            id: 0,
            src: NodeId(0),
            dst: NodeId(1),
            rate: 8.0,
            start_s: 0.0,
            stop_s: 100.0,
        };
        assert_eq!(f.packet_count(), 801);
        assert_eq!(f.send_time(0), SimTime::from_secs(0.0));
        assert_eq!(f.send_time(800), SimTime::from_secs(100.0));
    }

    #[test]
    fn emission_times_are_uniformly_spaced_from_start() {
        let f = Flow {
            id: 0,
            src: NodeId(0),
            dst: NodeId(1),
            rate: 4.0,
            start_s: 10.0,
            stop_s: 12.0,
        };
        assert_eq!(f.packet_count(), 9);
        assert_eq!(f.send_time(1), SimTime::from_secs(10.25));
    }

    #[test]
    fn auto_flows_pick_distinct_endpoints() {
        let cfg = ScenarioConfig::default(); // 20 nodes -> 5 flows
        let flows = build_flows(&cfg, cfg.seed);
        assert_eq!(flows.len(), 5);
        let mut endpoints: Vec<NodeId> = flows.iter().flat_map(|f| [f.src, f.dst]).collect();
        endpoints.sort();
        endpoints.dedup();
        assert_eq!(endpoints.len(), 10, "endpoints must not repeat");
        for f in &flows {
            assert_ne!(f.src, f.dst);
        }
    }

    #[test]
    fn explicit_pairs_override_random_choice() {
        let mut cfg = ScenarioConfig::default();
        cfg.flow_pairs = Some(vec![(NodeId(2), NodeId(9))]);
        let flows = build_flows(&cfg, 999);
        assert_eq!(flows.len(), 1);
        assert_eq!((flows[0].src, flows[0].dst), (NodeId(2), NodeId(9)));
    }

    #[test]
    fn flow_choice_is_seed_deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(build_flows(&cfg, 7), build_flows(&cfg, 7));
        assert_ne!(build_flows(&cfg, 7), build_flows(&cfg, 8));
    }

    #[test]
    fn delivery_log_tracks_completion_and_duplicates() {
        let mut log = DeliveryLog::default();
        log.record_send(1, SimTime::from_secs(1.0), 512);
        log.record_send(2, SimTime::from_secs(2.0), 512);
        assert!(log.record_receive(1, SimTime::from_secs(1.5)));
        assert!(!log.record_receive(1, SimTime::from_secs(1.6)), "duplicate");
        assert!(!log.record_receive(99, SimTime::from_secs(3.0)), "unknown");
        assert_eq!(log.sent(), 2);
        assert_eq!(log.delivered(), 1);
        assert!((log.delay_sum_s() - 0.5).abs() < 1e-12);
        assert_eq!(log.delivered_payload_bytes(), 512);
    }
}
