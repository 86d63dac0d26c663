//! Proactive distance-vector routing. Every node periodically advertises
//! its full table (with incremental deltas in between), entries carry
//! destination-owned sequence numbers, and a newer sequence number always
//! beats a better metric. Link breaks advertise an infinite metric under
//! an odd sequence number so the news outruns any stale alternative.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::{RngStream, SimTime};
use crate::packet::{Header, NodeId, Packet, PacketKind, ProtocolId};
use crate::trace::DropReason;

use super::{ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol, PENDING_BUFFER_CAP};

pub const INFINITE_METRIC: u32 = u32::MAX;
const FULL_DUMP_EVERY: u64 = 15;
const TICK_INTERVAL: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct TableEntry {
    next_hop: NodeId,
    metric: u32,
    seq: u32,
}

#[derive(Debug)]
pub struct Dsdv {
    self_id: NodeId,
    /// Own destination sequence number; even while reachable, advanced by
    /// two on every advertisement.
    seq: u32,
    table: BTreeMap<NodeId, TableEntry>,
    changed: BTreeSet<NodeId>,
    buffered: BTreeMap<NodeId, VecDeque<Packet>>,
    /// Advert cadence: tick k fires at `base + k * TICK_INTERVAL` where the
    /// base carries a per-node jitter so nodes do not advertise in lockstep.
    base: f64,
    ticks_fired: u64,
}

impl Dsdv {
    pub fn new(self_id: NodeId, mut rng: RngStream) -> Dsdv {
        let jitter = rng.uniform(0.0, TICK_INTERVAL);
        Dsdv {
            self_id,
            seq: 0,
            table: BTreeMap::new(),
            changed: BTreeSet::new(),
            buffered: BTreeMap::new(),
            base: jitter,
            ticks_fired: 0,
        }
    }

    fn usable(&self, dst: NodeId) -> Option<NodeId> {
        self.table
            .get(&dst)
            .filter(|e| e.metric != INFINITE_METRIC)
            .map(|e| e.next_hop)
    }

    fn advert_entries(&mut self, full: bool) -> Vec<(NodeId, u32, u32)> {
        // The own sequence number advances only on full dumps. Between
        // dumps every advert carries the same sequence, so the strictly-
        // smaller-metric rule relaxes all tables onto shortest paths
        // instead of whichever path happens to propagate a fresh
        // sequence fastest. Route breaks still move instantly through
        // odd sequence numbers, and a destination hearing one about
        // itself re-announces with a fresher even sequence right away.
        if full {
            self.seq += 2;
        }
        self.table.insert(
            self.self_id,
            TableEntry {
                next_hop: self.self_id,
                metric: 0,
                seq: self.seq,
            },
        );
        let include: Box<dyn Iterator<Item = NodeId>> = if full {
            Box::new(self.table.keys().copied())
        } else {
            let mut keys = self.changed.clone();
            keys.insert(self.self_id);
            Box::new(keys.into_iter())
        };
        let entries = include
            .filter_map(|dest| {
                self.table
                    .get(&dest)
                    .map(|e| (dest, e.metric, e.seq))
            })
            .collect();
        self.changed.clear();
        entries
    }

    fn flush_buffered(&mut self, dst: NodeId) -> Vec<ProtoAction> {
        let Some(next_hop) = self.usable(dst) else {
            return Vec::new();
        };
        let Some(queue) = self.buffered.remove(&dst) else {
            return Vec::new();
        };
        queue
            .into_iter()
            .map(|packet| ProtoAction::SendData { next_hop, packet })
            .collect()
    }

    fn buffer_packet(&mut self, dst: NodeId, packet: Packet) -> Vec<ProtoAction> {
        let queue = self.buffered.entry(dst).or_default();
        queue.push_back(packet);
        if queue.len() > PENDING_BUFFER_CAP {
            let evicted = queue.pop_front().unwrap();
            return vec![ProtoAction::DropData {
                packet: evicted,
                reason: DropReason::NoRoute,
            }];
        }
        Vec::new()
    }

    fn apply_advert(
        &mut self,
        from: NodeId,
        entries: &[(NodeId, u32, u32)],
    ) -> Vec<ProtoAction> {
        let mut flushable = Vec::new();
        for &(dest, metric_in, seq_in) in entries {
            if dest == self.self_id {
                // Someone believes we are unreachable; answer with a fresher
                // even sequence number at the next advertisement.
                if seq_in > self.seq {
                    self.seq = seq_in + (seq_in % 2);
                    self.changed.insert(self.self_id);
                }
                continue;
            }
            let metric = if metric_in == INFINITE_METRIC {
                INFINITE_METRIC
            } else {
                metric_in + 1
            };
            let candidate = TableEntry {
                next_hop: from,
                metric,
                seq: seq_in,
            };
            let adopt = match self.table.get(&dest) {
                None => true,
                Some(e) => {
                    seq_in > e.seq || (seq_in == e.seq && metric < e.metric)
                }
            };
            if adopt {
                self.table.insert(dest, candidate);
                // A bare sequence refresh is still a delta: neighbors
                // holding this destination under the old sequence can
                // only relax onto our (possibly shorter) route if we
                // re-advertise it under the new one.
                self.changed.insert(dest);
                if metric != INFINITE_METRIC {
                    flushable.push(dest);
                }
            }
        }
        let mut actions = Vec::new();
        for dest in flushable {
            actions.extend(self.flush_buffered(dest));
        }
        actions
    }
}

impl RoutingProtocol for Dsdv {
    fn protocol_id(&self) -> ProtocolId {
        ProtocolId::Dsdv
    }

    fn on_start(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction> {
        self.base += ctx.now.secs();
        self.table.insert(
            self.self_id,
            TableEntry {
                next_hop: self.self_id,
                metric: 0,
                seq: self.seq,
            },
        );
        vec![ProtoAction::ScheduleTick {
            at: SimTime::from_secs(self.base),
        }]
    }

    fn on_data(&mut self, _ctx: &ProtoCtx, packet: Packet) -> Vec<ProtoAction> {
        let dst = packet.dst;
        match self.usable(dst) {
            Some(next_hop) => vec![ProtoAction::SendData { next_hop, packet }],
            None => self.buffer_packet(dst, packet),
        }
    }

    fn on_packet(&mut self, _ctx: &ProtoCtx, from: NodeId, packet: Packet) -> Vec<ProtoAction> {
        match packet.header.clone() {
            Header::DsdvAdvert { entries } => self.apply_advert(from, &entries),
            Header::Data { .. } => {
                let dst = packet.dst;
                match self.usable(dst) {
                    Some(next_hop) => vec![ProtoAction::SendData { next_hop, packet }],
                    None => vec![ProtoAction::DropData {
                        packet,
                        reason: DropReason::NoRoute,
                    }],
                }
            }
            _ => Vec::new(),
        }
    }

    fn on_link_failure(
        &mut self,
        _ctx: &ProtoCtx,
        next_hop: NodeId,
        packet: Packet,
    ) -> Vec<ProtoAction> {
        let mut broken = Vec::new();
        for (dest, e) in self.table.iter_mut() {
            if *dest != self.self_id && e.next_hop == next_hop && e.metric != INFINITE_METRIC {
                e.metric = INFINITE_METRIC;
                e.seq += 1;
                broken.push((*dest, INFINITE_METRIC, e.seq));
                self.changed.insert(*dest);
            }
        }
        let mut actions = Vec::new();
        if !broken.is_empty() {
            actions.push(ProtoAction::SendControl {
                dst: NodeId::BROADCAST,
                header: Header::DsdvAdvert { entries: broken },
            });
        }
        if packet.kind() == PacketKind::Cbr {
            if packet.src == self.self_id {
                actions.extend(self.buffer_packet(packet.dst, packet));
            } else {
                actions.push(ProtoAction::DropData {
                    packet,
                    reason: DropReason::LinkBreak,
                });
            }
        }
        actions
    }

    fn on_tick(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction> {
        let full = self.ticks_fired % FULL_DUMP_EVERY == 0;
        self.ticks_fired += 1;
        let entries = self.advert_entries(full);
        let next_at = self.base + self.ticks_fired as f64 * TICK_INTERVAL;
        let _ = ctx;
        vec![
            ProtoAction::SendControl {
                dst: NodeId::BROADCAST,
                header: Header::DsdvAdvert { entries },
            },
            ProtoAction::ScheduleTick {
                at: SimTime::from_secs(next_at),
            },
        ]
    }

    fn ensure_route(&mut self, _ctx: &ProtoCtx, _dst: NodeId) -> Vec<ProtoAction> {
        // Proactive protocol: routes come from the periodic adverts.
        Vec::new()
    }

    fn has_route(&self, _now: SimTime, dst: NodeId) -> bool {
        self.usable(dst).is_some()
    }

    fn snapshot(&self) -> Vec<RouteEntry> {
        self.table
            .iter()
            .filter(|(dest, e)| **dest != self.self_id && e.metric != INFINITE_METRIC)
            .map(|(dest, e)| RouteEntry {
                dest: *dest,
                next_hop: e.next_hop,
                metric: e.metric,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StreamId;

    fn ctx(now: f64, node: u32) -> ProtoCtx {
        ProtoCtx {
            now: SimTime::from_secs(now),
            self_id: NodeId(node),
        }
    }

    fn fresh(node: u32) -> Dsdv {
        Dsdv::new(NodeId(node), RngStream::new(42, StreamId::Jitter(node)))
    }

    fn advert(from: u32, entries: Vec<(u32, u32, u32)>) -> Packet {
        Packet {
            id: 1,
            protocol: ProtocolId::Dsdv,
            src: NodeId(from),
            dst: NodeId::BROADCAST,
            payload_bytes: 0,
            sent_at: SimTime::from_secs(0.0),
            hops: 0,
            header: Header::DsdvAdvert {
                entries: entries
                    .into_iter()
                    .map(|(d, m, s)| (NodeId(d), m, s))
                    .collect(),
            },
        }
    }

    fn data(id: u64, src: u32, dst: u32) -> Packet {
        Packet {
            id,
            protocol: ProtocolId::Dsdv,
            src: NodeId(src),
            dst: NodeId(dst),
            payload_bytes: 512,
            sent_at: SimTime::from_secs(0.0),
            hops: 0,
            header: Header::Data {
                flow: 0,
                seq: 0,
                source_route: Vec::new(),
            },
        }
    }

    #[test]
    fn advert_installs_routes_one_hop_beyond_the_sender() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(1, 0, 2), (2, 1, 4)]));
        let snap = d.snapshot();
        let to1 = snap.iter().find(|e| e.dest == NodeId(1)).unwrap();
        let to2 = snap.iter().find(|e| e.dest == NodeId(2)).unwrap();
        assert_eq!((to1.next_hop, to1.metric), (NodeId(1), 1));
        assert_eq!((to2.next_hop, to2.metric), (NodeId(1), 2));
    }

    #[test]
    fn newer_sequence_wins_even_with_worse_metric() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(5, 1, 10)]));
        d.on_packet(&ctx(1.1, 0), NodeId(2), advert(2, vec![(5, 4, 12)]));
        let snap = d.snapshot();
        let to5 = snap.iter().find(|e| e.dest == NodeId(5)).unwrap();
        assert_eq!((to5.next_hop, to5.metric), (NodeId(2), 5));
    }

    #[test]
    fn equal_sequence_requires_strictly_better_metric() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(5, 2, 10)]));
        d.on_packet(&ctx(1.1, 0), NodeId(2), advert(2, vec![(5, 2, 10)]));
        let snap = d.snapshot();
        assert_eq!(snap.iter().find(|e| e.dest == NodeId(5)).unwrap().next_hop, NodeId(1));
        d.on_packet(&ctx(1.2, 0), NodeId(3), advert(3, vec![(5, 1, 10)]));
        let snap = d.snapshot();
        assert_eq!(snap.iter().find(|e| e.dest == NodeId(5)).unwrap().next_hop, NodeId(3));
    }

    #[test]
    fn link_break_floods_infinite_metric_under_odd_sequence() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(1, 0, 2), (5, 1, 10)]));
        let acts = d.on_link_failure(&ctx(2.0, 0), NodeId(1), data(9, 3, 5));
        let ProtoAction::SendControl {
            dst: NodeId::BROADCAST,
            header: Header::DsdvAdvert { ref entries },
        } = acts[0]
        else {
            panic!("expected triggered advert, got {acts:?}");
        };
        assert!(entries.contains(&(NodeId(1), INFINITE_METRIC, 3)));
        assert!(entries.contains(&(NodeId(5), INFINITE_METRIC, 11)));
        assert!(entries.iter().all(|(_, _, seq)| seq % 2 == 1), "break seqs are odd");
        assert!(matches!(
            acts[1],
            ProtoAction::DropData { reason: DropReason::LinkBreak, .. }
        ));
        assert!(!d.has_route(SimTime::from_secs(2.0), NodeId(5)));
    }

    #[test]
    fn infinite_metric_is_displaced_by_fresher_even_sequence() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(5, 1, 10)]));
        d.on_packet(&ctx(2.0, 0), NodeId(1), advert(1, vec![(5, INFINITE_METRIC, 11)]));
        assert!(!d.has_route(SimTime::from_secs(2.0), NodeId(5)));
        d.on_packet(&ctx(3.0, 0), NodeId(2), advert(2, vec![(5, 2, 12)]));
        assert!(d.has_route(SimTime::from_secs(3.0), NodeId(5)));
    }

    #[test]
    fn data_buffers_until_a_route_appears_then_flushes() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        assert!(d.on_data(&ctx(0.5, 0), data(7, 0, 5)).is_empty());
        let acts = d.on_packet(&ctx(1.0, 0), NodeId(1), advert(1, vec![(5, 1, 10)]));
        assert_eq!(acts.len(), 1);
        assert!(matches!(
            acts[0],
            ProtoAction::SendData { next_hop: NodeId(1), ref packet } if packet.id == 7
        ));
    }

    #[test]
    fn periodic_cycle_alternates_full_dumps_and_incrementals() {
        let mut d = fresh(0);
        let start = d.on_start(&ctx(0.0, 0));
        let ProtoAction::ScheduleTick { at } = start[0] else { panic!() };
        assert!(at.secs() < TICK_INTERVAL, "first advert jittered inside one interval");

        // First tick: full dump (whole table). Learn an extra entry first.
        d.on_packet(&ctx(0.1, 0), NodeId(1), advert(1, vec![(1, 0, 2), (7, 2, 6)]));
        let t1 = d.on_tick(&ctx(at.secs(), 0));
        let ProtoAction::SendControl { header: Header::DsdvAdvert { ref entries }, .. } = t1[0]
        else {
            panic!()
        };
        assert_eq!(entries.len(), 3, "full dump carries every known destination");

        // Second tick with no changes: incremental carries only our own entry.
        let t2 = d.on_tick(&ctx(at.secs() + 1.0, 0));
        let ProtoAction::SendControl { header: Header::DsdvAdvert { ref entries }, .. } = t2[0]
        else {
            panic!()
        };
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].0, NodeId(0));
        assert_eq!(entries[0].2 % 2, 0, "own sequence number stays even");
    }

    #[test]
    fn own_sequence_number_advances_by_two_per_full_dump() {
        let mut d = fresh(0);
        d.on_start(&ctx(0.0, 0));
        let s0 = d.seq;
        d.on_tick(&ctx(0.5, 0));
        let s1 = d.seq;
        assert_eq!(s1, s0 + 2, "the first tick is a full dump");
        // Incrementals re-advertise the current sequence unchanged, so
        // between dumps the metric rule can settle onto shortest paths.
        for k in 1..15 {
            d.on_tick(&ctx(0.5 + k as f64, 0));
            assert_eq!(d.seq, s1, "incremental tick {k} must not advance");
        }
        d.on_tick(&ctx(15.5, 0));
        assert_eq!(d.seq, s1 + 2, "the 16th tick is the next full dump");
    }
}
