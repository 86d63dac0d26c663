//! Source routing: discovery floods accumulate the traversed path, data
//! carries the complete route in its header, and forwarders relay by
//! position. Failures purge the dead link from every cache they reach.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::SimTime;
use crate::packet::{Header, NodeId, Packet, PacketKind, ProtocolId};
use crate::trace::DropReason;

use super::{ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol, NET_DIAMETER, PENDING_BUFFER_CAP};

const RREQ_TIMEOUT: f64 = 1.0;
const RREQ_RETRIES: u32 = 3;
const SEEN_TTL: f64 = 5.0;

/// Routes are full node sequences from self to the destination, keyed by
/// (length, route) so the set's first element is the preferred one.
type RouteSet = BTreeSet<(usize, Vec<NodeId>)>;

#[derive(Debug)]
struct Pending {
    retries: u32,
    deadline: f64,
    buffered: VecDeque<Packet>,
}

#[derive(Debug)]
pub struct Dsr {
    self_id: NodeId,
    next_rreq_id: u32,
    cache: BTreeMap<NodeId, RouteSet>,
    seen_rreqs: BTreeMap<(NodeId, u32), f64>,
    pending: BTreeMap<NodeId, Pending>,
}

impl Dsr {
    pub fn new(self_id: NodeId) -> Dsr {
        Dsr {
            self_id,
            next_rreq_id: 0,
            cache: BTreeMap::new(),
            seen_rreqs: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    /// Route must start at self and end at the destination.
    fn cache_insert(&mut self, route: Vec<NodeId>) {
        debug_assert!(route.len() >= 2);
        debug_assert_eq!(route[0], self.self_id);
        let dest = *route.last().unwrap();
        self.cache
            .entry(dest)
            .or_default()
            .insert((route.len(), route));
    }

    fn best_route(&self, dst: NodeId) -> Option<&Vec<NodeId>> {
        self.cache
            .get(&dst)
            .and_then(|set| set.first())
            .map(|(_, route)| route)
    }

    /// Removes every cached route that traverses the directed edge
    /// `from -> to`.
    fn purge_edge(&mut self, from: NodeId, to: NodeId) {
        for set in self.cache.values_mut() {
            set.retain(|(_, route)| !route.windows(2).any(|w| w[0] == from && w[1] == to));
        }
        self.cache.retain(|_, set| !set.is_empty());
    }

    fn start_discovery(&mut self, ctx: &ProtoCtx, target: NodeId) -> Vec<ProtoAction> {
        self.next_rreq_id += 1;
        let rreq_id = self.next_rreq_id;
        self.seen_rreqs
            .insert((self.self_id, rreq_id), ctx.now.secs() + SEEN_TTL);
        let deadline = ctx.now.secs() + RREQ_TIMEOUT;
        self.pending.entry(target).or_insert(Pending {
            retries: 0,
            deadline,
            buffered: VecDeque::new(),
        });
        vec![
            ProtoAction::SendControl {
                dst: NodeId::BROADCAST,
                header: Header::DsrRreq {
                    origin: self.self_id,
                    rreq_id,
                    target,
                    path: vec![self.self_id],
                },
            },
            ProtoAction::ScheduleTick {
                at: SimTime::from_secs(deadline),
            },
        ]
    }

    fn buffer_packet(&mut self, dst: NodeId, packet: Packet) -> Vec<ProtoAction> {
        let pending = self.pending.get_mut(&dst).expect("buffer without discovery");
        pending.buffered.push_back(packet);
        if pending.buffered.len() > PENDING_BUFFER_CAP {
            let evicted = pending.buffered.pop_front().unwrap();
            return vec![ProtoAction::DropData {
                packet: evicted,
                reason: DropReason::NoRoute,
            }];
        }
        Vec::new()
    }

    /// Stamps the route into the data header and emits the first hop.
    fn send_with_route(&self, route: &[NodeId], mut packet: Packet) -> ProtoAction {
        let Header::Data { flow, seq, .. } = packet.header else {
            unreachable!("source routes only apply to data");
        };
        packet.header = Header::Data {
            flow,
            seq,
            source_route: route.to_vec(),
        };
        ProtoAction::SendData {
            next_hop: route[1],
            packet,
        }
    }

    fn flush_pending(&mut self, dst: NodeId) -> Vec<ProtoAction> {
        let Some(pending) = self.pending.remove(&dst) else {
            return Vec::new();
        };
        let Some(route) = self.best_route(dst).cloned() else {
            self.pending.insert(dst, pending);
            return Vec::new();
        };
        pending
            .buffered
            .into_iter()
            .map(|p| self.send_with_route(&route, p))
            .collect()
    }
}

impl RoutingProtocol for Dsr {
    fn protocol_id(&self) -> ProtocolId {
        ProtocolId::Dsr
    }

    fn on_start(&mut self, _ctx: &ProtoCtx) -> Vec<ProtoAction> {
        Vec::new()
    }

    fn on_data(&mut self, ctx: &ProtoCtx, packet: Packet) -> Vec<ProtoAction> {
        let dst = packet.dst;
        if let Some(route) = self.best_route(dst).cloned() {
            return vec![self.send_with_route(&route, packet)];
        }
        if self.pending.contains_key(&dst) {
            return self.buffer_packet(dst, packet);
        }
        let mut actions = self.start_discovery(ctx, dst);
        actions.extend(self.buffer_packet(dst, packet));
        actions
    }

    fn on_packet(&mut self, ctx: &ProtoCtx, _from: NodeId, packet: Packet) -> Vec<ProtoAction> {
        match packet.header.clone() {
            Header::DsrRreq {
                origin,
                rreq_id,
                target,
                path,
            } => {
                if path.contains(&self.self_id) {
                    return Vec::new();
                }
                if self.seen_rreqs.contains_key(&(origin, rreq_id)) {
                    return Vec::new();
                }
                self.seen_rreqs
                    .insert((origin, rreq_id), ctx.now.secs() + SEEN_TTL);
                // The accumulated path read backward is a route to the origin.
                let mut to_origin = vec![self.self_id];
                to_origin.extend(path.iter().rev());
                self.cache_insert(to_origin);
                if target == self.self_id {
                    let mut full = path.clone();
                    full.push(self.self_id);
                    let back = full[full.len() - 2];
                    return vec![ProtoAction::SendControl {
                        dst: back,
                        header: Header::DsrRrep { path: full },
                    }];
                }
                if path.len() >= NET_DIAMETER as usize {
                    return Vec::new();
                }
                let mut grown = path;
                grown.push(self.self_id);
                let mut fwd = packet;
                fwd.header = Header::DsrRreq {
                    origin,
                    rreq_id,
                    target,
                    path: grown,
                };
                vec![ProtoAction::ForwardControl {
                    dst: NodeId::BROADCAST,
                    packet: fwd,
                }]
            }
            Header::DsrRrep { path } => {
                let Some(idx) = path.iter().position(|n| *n == self.self_id) else {
                    return Vec::new();
                };
                // Everything from us onward is a usable route.
                if path.len() - idx >= 2 {
                    self.cache_insert(path[idx..].to_vec());
                }
                if idx == 0 {
                    return self.flush_pending(*path.last().unwrap());
                }
                vec![ProtoAction::ForwardControl {
                    dst: path[idx - 1],
                    packet,
                }]
            }
            Header::DsrRerr {
                broken_from,
                broken_to,
                path_back,
            } => {
                self.purge_edge(broken_from, broken_to);
                let Some(idx) = path_back.iter().position(|n| *n == self.self_id) else {
                    return Vec::new();
                };
                if idx + 1 >= path_back.len() {
                    return Vec::new();
                }
                vec![ProtoAction::ForwardControl {
                    dst: path_back[idx + 1],
                    packet,
                }]
            }
            Header::Data { ref source_route, .. } => {
                let Some(idx) = source_route.iter().position(|n| *n == self.self_id) else {
                    return vec![ProtoAction::DropData {
                        packet,
                        reason: DropReason::BadSourceRoute,
                    }];
                };
                if idx + 1 >= source_route.len() {
                    return vec![ProtoAction::DropData {
                        packet,
                        reason: DropReason::BadSourceRoute,
                    }];
                }
                let next_hop = source_route[idx + 1];
                vec![ProtoAction::SendData { next_hop, packet }]
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
        self.purge_edge(self.self_id, next_hop);
        if packet.kind() != PacketKind::Cbr {
            return Vec::new();
        }
        let Header::Data { ref source_route, .. } = packet.header else {
            return Vec::new();
        };
        let mut actions = Vec::new();
        let idx = source_route.iter().position(|n| *n == self.self_id);
        if let Some(idx) = idx {
            if idx > 0 {
                // Tell the source which directed link died.
                let path_back: Vec<NodeId> =
                    source_route[..=idx].iter().rev().copied().collect();
                actions.push(ProtoAction::SendControl {
                    dst: path_back[1],
                    header: Header::DsrRerr {
                        broken_from: self.self_id,
                        broken_to: next_hop,
                        path_back,
                    },
                });
            }
        }
        actions.push(ProtoAction::DropData {
            packet,
            reason: DropReason::LinkBreak,
        });
        actions
    }

    fn on_tick(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction> {
        let now = ctx.now.secs();
        self.seen_rreqs.retain(|_, expiry| *expiry > now);
        let due: Vec<NodeId> = self
            .pending
            .iter()
            .filter(|(_, p)| p.deadline <= now)
            .map(|(d, _)| *d)
            .collect();
        let mut actions = Vec::new();
        for dst in due {
            if self.best_route(dst).is_some() {
                actions.extend(self.flush_pending(dst));
                continue;
            }
            let pending = self.pending.get_mut(&dst).unwrap();
            if pending.retries < RREQ_RETRIES {
                pending.retries += 1;
                let deadline = now + RREQ_TIMEOUT;
                pending.deadline = deadline;
                self.next_rreq_id += 1;
                let rreq_id = self.next_rreq_id;
                self.seen_rreqs
                    .insert((self.self_id, rreq_id), now + SEEN_TTL);
                actions.push(ProtoAction::SendControl {
                    dst: NodeId::BROADCAST,
                    header: Header::DsrRreq {
                        origin: self.self_id,
                        rreq_id,
                        target: dst,
                        path: vec![self.self_id],
                    },
                });
                actions.push(ProtoAction::ScheduleTick {
                    at: SimTime::from_secs(deadline),
                });
            } else {
                let pending = self.pending.remove(&dst).unwrap();
                for packet in pending.buffered {
                    actions.push(ProtoAction::DropData {
                        packet,
                        reason: DropReason::RetriesExhausted,
                    });
                }
            }
        }
        actions
    }

    fn ensure_route(&mut self, ctx: &ProtoCtx, dst: NodeId) -> Vec<ProtoAction> {
        if dst == self.self_id
            || self.best_route(dst).is_some()
            || self.pending.contains_key(&dst)
        {
            return Vec::new();
        }
        self.start_discovery(ctx, dst)
    }

    fn has_route(&self, _now: SimTime, dst: NodeId) -> bool {
        self.best_route(dst).is_some()
    }

    fn snapshot(&self) -> Vec<RouteEntry> {
        self.cache
            .iter()
            .filter_map(|(dest, set)| {
                set.first().map(|(len, route)| RouteEntry {
                    dest: *dest,
                    next_hop: route[1],
                    metric: (*len - 1) as u32,
                })
            })
            .collect()
    }
}
