//! On-demand distance-vector routing: RREQ floods discover routes,
//! RREPs install them hop by hop, destination sequence numbers keep the
//! tables loop-free, RERR broadcasts tear down broken paths.

use std::collections::{BTreeMap, VecDeque};

use crate::engine::SimTime;
use crate::packet::{Header, NodeId, Packet, ProtocolId};
use crate::trace::DropReason;

use super::{ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol, NET_DIAMETER, PENDING_BUFFER_CAP};

const ROUTE_LIFETIME: f64 = 10.0;
const RREQ_TIMEOUT: f64 = 1.0;
const RREQ_RETRIES: u32 = 3;
const SEEN_TTL: f64 = 5.0;

#[derive(Debug, Clone, Copy)]
struct Route {
    next_hop: NodeId,
    hop_count: u32,
    dest_seq: u32,
    valid: bool,
    expires_at: f64,
}

#[derive(Debug)]
struct Pending {
    retries: u32,
    deadline: f64,
    buffered: VecDeque<Packet>,
}

#[derive(Debug)]
pub struct Aodv {
    self_id: NodeId,
    seq: u32,
    next_rreq_id: u32,
    routes: BTreeMap<NodeId, Route>,
    /// (origin, rreq id) -> suppression expiry.
    seen_rreqs: BTreeMap<(NodeId, u32), f64>,
    pending: BTreeMap<NodeId, Pending>,
}

impl Aodv {
    pub fn new(self_id: NodeId) -> Aodv {
        Aodv {
            self_id,
            seq: 0,
            next_rreq_id: 0,
            routes: BTreeMap::new(),
            seen_rreqs: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    fn valid_route(&self, now: SimTime, dst: NodeId) -> Option<&Route> {
        self.routes
            .get(&dst)
            .filter(|r| r.valid && r.expires_at >= now.secs())
    }

    fn touch(&mut self, now: SimTime, dst: NodeId) {
        if let Some(r) = self.routes.get_mut(&dst) {
            r.expires_at = now.secs() + ROUTE_LIFETIME;
        }
    }

    /// Sequence-number-first update rule: newer sequence always wins;
    /// same sequence only improves on hop count or revives an invalid row.
    fn update_route(&mut self, now: SimTime, dest: NodeId, next_hop: NodeId, hops: u32, seq: u32) {
        let fresh = Route {
            next_hop,
            hop_count: hops,
            dest_seq: seq,
            valid: true,
            expires_at: now.secs() + ROUTE_LIFETIME,
        };
        match self.routes.get_mut(&dest) {
            None => {
                self.routes.insert(dest, fresh);
            }
            Some(r) => {
                if seq > r.dest_seq || (seq == r.dest_seq && (!r.valid || hops < r.hop_count)) {
                    *r = fresh;
                }
            }
        }
    }

    /// A packet heard from `from` proves a 1-hop link; never downgrades a
    /// live entry, only fills gaps and refreshes the lifetime.
    fn learn_neighbor(&mut self, now: SimTime, from: NodeId) {
        match self.routes.get_mut(&from) {
            Some(r) if r.valid => r.expires_at = now.secs() + ROUTE_LIFETIME,
            Some(r) => {
                let seq = r.dest_seq;
                *r = Route {
                    next_hop: from,
                    hop_count: 1,
                    dest_seq: seq,
                    valid: true,
                    expires_at: now.secs() + ROUTE_LIFETIME,
                };
            }
            None => {
                self.routes.insert(
                    from,
                    Route {
                        next_hop: from,
                        hop_count: 1,
                        dest_seq: 0,
                        valid: true,
                        expires_at: now.secs() + ROUTE_LIFETIME,
                    },
                );
            }
        }
    }

    fn start_discovery(&mut self, ctx: &ProtoCtx, target: NodeId) -> Vec<ProtoAction> {
        self.seq += 1;
        self.next_rreq_id += 1;
        let rreq_id = self.next_rreq_id;
        self.seen_rreqs
            .insert((self.self_id, rreq_id), ctx.now.secs() + SEEN_TTL);
        let target_seq_known = self.routes.get(&target).map(|r| r.dest_seq).unwrap_or(0);
        let deadline = ctx.now.secs() + RREQ_TIMEOUT;
        self.pending.entry(target).or_insert(Pending {
            retries: 0,
            deadline,
            buffered: VecDeque::new(),
        });
        vec![
            ProtoAction::SendControl {
                dst: NodeId::BROADCAST,
                header: Header::AodvRreq {
                    origin: self.self_id,
                    origin_seq: self.seq,
                    rreq_id,
                    target,
                    target_seq_known,
                    hop_count: 0,
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

    fn flush_pending(&mut self, now: SimTime, dst: NodeId) -> Vec<ProtoAction> {
        let Some(pending) = self.pending.remove(&dst) else {
            return Vec::new();
        };
        let Some(route) = self.valid_route(now, dst).copied() else {
            self.pending.insert(dst, pending);
            return Vec::new();
        };
        self.touch(now, dst);
        pending
            .buffered
            .into_iter()
            .map(|p| ProtoAction::SendData {
                next_hop: route.next_hop,
                packet: p,
            })
            .collect()
    }

    /// Invalidates every route through `broken`, bumping sequence numbers
    /// so stale adverts cannot resurrect them; returns the RERR payload.
    fn invalidate_via(&mut self, broken: NodeId) -> Vec<(NodeId, u32)> {
        let mut lost = Vec::new();
        for (dest, r) in self.routes.iter_mut() {
            if r.valid && r.next_hop == broken {
                r.valid = false;
                r.dest_seq += 1;
                lost.push((*dest, r.dest_seq));
            }
        }
        lost
    }
}

impl RoutingProtocol for Aodv {
    fn protocol_id(&self) -> ProtocolId {
        ProtocolId::Aodv
    }

    fn on_start(&mut self, _ctx: &ProtoCtx) -> Vec<ProtoAction> {
        Vec::new()
    }

    fn on_data(&mut self, ctx: &ProtoCtx, packet: Packet) -> Vec<ProtoAction> {
        let dst = packet.dst;
        if let Some(r) = self.valid_route(ctx.now, dst) {
            let next_hop = r.next_hop;
            self.touch(ctx.now, dst);
            return vec![ProtoAction::SendData { next_hop, packet }];
        }
        if self.pending.contains_key(&dst) {
            return self.buffer_packet(dst, packet);
        }
        let mut actions = self.start_discovery(ctx, dst);
        let mut drops = self.buffer_packet(dst, packet);
        actions.append(&mut drops);
        actions
    }

    fn on_packet(&mut self, ctx: &ProtoCtx, from: NodeId, packet: Packet) -> Vec<ProtoAction> {
        match packet.header.clone() {
            Header::AodvRreq {
                origin,
                origin_seq,
                rreq_id,
                target,
                target_seq_known,
                hop_count,
            } => {
                if self.seen_rreqs.contains_key(&(origin, rreq_id)) {
                    return Vec::new();
                }
                self.seen_rreqs
                    .insert((origin, rreq_id), ctx.now.secs() + SEEN_TTL);
                let hops_here = hop_count + 1;
                self.learn_neighbor(ctx.now, from);
                self.update_route(ctx.now, origin, from, hops_here, origin_seq);
                if target == self.self_id {
                    // Freshen our own sequence so the reply supersedes any
                    // stale knowledge the network holds about us.
                    self.seq = self.seq.max(target_seq_known);
                    return vec![ProtoAction::SendControl {
                        dst: from,
                        header: Header::AodvRrep {
                            origin,
                            target: self.self_id,
                            target_seq: self.seq,
                            hop_count: 0,
                        },
                    }];
                }
                if let Some(r) = self.valid_route(ctx.now, target) {
                    if r.dest_seq >= target_seq_known {
                        let (target_seq, hop_count) = (r.dest_seq, r.hop_count);
                        return vec![ProtoAction::SendControl {
                            dst: from,
                            header: Header::AodvRrep {
                                origin,
                                target,
                                target_seq,
                                hop_count,
                            },
                        }];
                    }
                }
                if hops_here >= NET_DIAMETER {
                    return Vec::new();
                }
                let mut fwd = packet;
                fwd.header = Header::AodvRreq {
                    origin,
                    origin_seq,
                    rreq_id,
                    target,
                    target_seq_known,
                    hop_count: hops_here,
                };
                vec![ProtoAction::ForwardControl {
                    dst: NodeId::BROADCAST,
                    packet: fwd,
                }]
            }
            Header::AodvRrep {
                origin,
                target,
                target_seq,
                hop_count,
            } => {
                let hops_here = hop_count + 1;
                self.learn_neighbor(ctx.now, from);
                self.update_route(ctx.now, target, from, hops_here, target_seq);
                if origin == self.self_id {
                    return self.flush_pending(ctx.now, target);
                }
                let Some(rev) = self.valid_route(ctx.now, origin) else {
                    return Vec::new();
                };
                let rev_hop = rev.next_hop;
                self.touch(ctx.now, origin);
                let mut fwd = packet;
                fwd.header = Header::AodvRrep {
                    origin,
                    target,
                    target_seq,
                    hop_count: hops_here,
                };
                vec![ProtoAction::ForwardControl {
                    dst: rev_hop,
                    packet: fwd,
                }]
            }
            Header::AodvRerr { unreachable } => {
                let mut cascaded = Vec::new();
                for (dest, seq) in unreachable {
                    if let Some(r) = self.routes.get_mut(&dest) {
                        if r.valid && r.next_hop == from {
                            r.valid = false;
                            r.dest_seq = r.dest_seq.max(seq);
                            cascaded.push((dest, r.dest_seq));
                        }
                    }
                }
                if cascaded.is_empty() {
                    return Vec::new();
                }
                vec![ProtoAction::SendControl {
                    dst: NodeId::BROADCAST,
                    header: Header::AodvRerr {
                        unreachable: cascaded,
                    },
                }]
            }
            Header::Data { .. } => {
                let dst = packet.dst;
                if let Some(r) = self.valid_route(ctx.now, dst) {
                    let next_hop = r.next_hop;
                    self.touch(ctx.now, dst);
                    return vec![ProtoAction::SendData { next_hop, packet }];
                }
                // Transit data with no live route: report upstream so
                // senders stop using us for this destination.
                let seq = match self.routes.get_mut(&dst) {
                    Some(r) => {
                        r.valid = false;
                        r.dest_seq += 1;
                        r.dest_seq
                    }
                    None => 1,
                };
                vec![
                    ProtoAction::DropData {
                        packet,
                        reason: DropReason::NoRoute,
                    },
                    ProtoAction::SendControl {
                        dst: NodeId::BROADCAST,
                        header: Header::AodvRerr {
                            unreachable: vec![(dst, seq)],
                        },
                    },
                ]
            }
            _ => Vec::new(),
        }
    }

    fn on_link_failure(
        &mut self,
        ctx: &ProtoCtx,
        next_hop: NodeId,
        packet: Packet,
    ) -> Vec<ProtoAction> {
        let lost = self.invalidate_via(next_hop);
        let mut actions = Vec::new();
        if !lost.is_empty() {
            actions.push(ProtoAction::SendControl {
                dst: NodeId::BROADCAST,
                header: Header::AodvRerr { unreachable: lost },
            });
        }
        if packet.kind() == crate::packet::PacketKind::Cbr {
            if packet.src == self.self_id {
                // Our own packet: hold it and rediscover.
                let dst = packet.dst;
                if !self.pending.contains_key(&dst) {
                    actions.extend(self.start_discovery(ctx, dst));
                }
                actions.extend(self.buffer_packet(dst, packet));
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
            if self.valid_route(ctx.now, dst).is_some() {
                actions.extend(self.flush_pending(ctx.now, dst));
                continue;
            }
            let pending = self.pending.get_mut(&dst).unwrap();
            if pending.retries < RREQ_RETRIES {
                pending.retries += 1;
                let deadline = now + RREQ_TIMEOUT;
                pending.deadline = deadline;
                self.seq += 1;
                self.next_rreq_id += 1;
                let rreq_id = self.next_rreq_id;
                self.seen_rreqs
                    .insert((self.self_id, rreq_id), now + SEEN_TTL);
                let target_seq_known =
                    self.routes.get(&dst).map(|r| r.dest_seq).unwrap_or(0);
                actions.push(ProtoAction::SendControl {
                    dst: NodeId::BROADCAST,
                    header: Header::AodvRreq {
                        origin: self.self_id,
                        origin_seq: self.seq,
                        rreq_id,
                        target: dst,
                        target_seq_known,
                        hop_count: 0,
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
            || self.valid_route(ctx.now, dst).is_some()
            || self.pending.contains_key(&dst)
        {
            return Vec::new();
        }
        self.start_discovery(ctx, dst)
    }

    fn has_route(&self, now: SimTime, dst: NodeId) -> bool {
        self.valid_route(now, dst).is_some()
    }

    fn snapshot(&self) -> Vec<RouteEntry> {
        self.routes
            .iter()
            .filter(|(_, r)| r.valid)
            .map(|(dest, r)| RouteEntry {
                dest: *dest,
                next_hop: r.next_hop,
                metric: r.hop_count,
            })
            .collect()
    }
}
