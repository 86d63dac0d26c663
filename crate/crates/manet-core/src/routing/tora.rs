//! Link-reversal routing on a destination-rooted height ordering. A
//! query/update wave assigns every node a height above the destination's
//! zero; packets always flow to a strictly lower neighbor. A node left
//! with no lower neighbor lifts itself above all of them (full reversal)
//! and rebroadcasts, which re-orients the region around the break.

use std::collections::{BTreeMap, VecDeque};

use crate::engine::SimTime;
use crate::packet::{Header, NodeId, Packet, PacketKind, ProtocolId, ToraHeight};
use crate::trace::DropReason;

use super::{ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol, PENDING_BUFFER_CAP};

const QRY_TIMEOUT: f64 = 1.0;
const QRY_RETRIES: u32 = 3;
/// After this many reversals for one destination the node declares it
/// unreachable instead of oscillating forever.
const REVERSAL_BUDGET: u32 = 50;
/// Minimum spacing between repeated height advertisements answering
/// queries for the same destination.
const UPD_MIN_INTERVAL: f64 = 0.5;

#[derive(Debug)]
struct DestState {
    height: Option<ToraHeight>,
    neighbor_heights: BTreeMap<NodeId, ToraHeight>,
    route_required: bool,
    buffered: VecDeque<Packet>,
    reversals: u32,
    qry_retries: u32,
    /// Retry deadline for an episode started here (origins and probes only;
    /// transit nodes forward the wave without their own timer).
    deadline: Option<f64>,
    last_upd: f64,
}

impl DestState {
    fn new() -> DestState {
        DestState {
            height: None,
            neighbor_heights: BTreeMap::new(),
            route_required: false,
            buffered: VecDeque::new(),
            reversals: 0,
            qry_retries: 0,
            deadline: None,
            last_upd: f64::NEG_INFINITY,
        }
    }

    fn downstream(&self) -> Option<NodeId> {
        let mine = self.height?;
        self.neighbor_heights
            .iter()
            .filter(|(_, h)| **h < mine)
            .min_by_key(|(n, h)| (**h, **n))
            .map(|(n, _)| *n)
    }
}

#[derive(Debug)]
pub struct Tora {
    self_id: NodeId,
    states: BTreeMap<NodeId, DestState>,
}

impl Tora {
    pub fn new(self_id: NodeId) -> Tora {
        Tora {
            self_id,
            states: BTreeMap::new(),
        }
    }

    fn state(&mut self, dest: NodeId) -> &mut DestState {
        self.states.entry(dest).or_insert_with(DestState::new)
    }

    fn broadcast_upd(&mut self, now: SimTime, dest: NodeId) -> ProtoAction {
        let st = self.state(dest);
        let height = st.height.expect("advertising an unset height");
        st.last_upd = now.secs();
        ProtoAction::SendControl {
            dst: NodeId::BROADCAST,
            header: Header::ToraUpd { dest, height },
        }
    }

    /// Full reversal: jump above every known neighbor so they all become
    /// downstream. Returns false when the node has nothing to reverse over.
    fn reverse(&mut self, dest: NodeId) -> bool {
        let self_id = self.self_id;
        let st = self.state(dest);
        if st.height.is_none()
            || st.neighbor_heights.is_empty()
            || st.reversals >= REVERSAL_BUDGET
        {
            return false;
        }
        let max_level = st
            .neighbor_heights
            .values()
            .map(|h| h.level)
            .max()
            .unwrap();
        st.height = Some(ToraHeight {
            level: max_level + 1,
            node: self_id,
        });
        st.reversals += 1;
        true
    }

    fn start_episode(&mut self, now: SimTime, dest: NodeId, with_timer: bool) -> Vec<ProtoAction> {
        let st = self.state(dest);
        st.route_required = true;
        st.qry_retries = 0;
        let mut actions = vec![ProtoAction::SendControl {
            dst: NodeId::BROADCAST,
            header: Header::ToraQry { dest },
        }];
        if with_timer {
            let deadline = now.secs() + QRY_TIMEOUT;
            st.deadline = Some(deadline);
            actions.push(ProtoAction::ScheduleTick {
                at: SimTime::from_secs(deadline),
            });
        }
        actions
    }

    fn buffer_packet(&mut self, dest: NodeId, packet: Packet) -> Vec<ProtoAction> {
        let st = self.state(dest);
        st.buffered.push_back(packet);
        if st.buffered.len() > PENDING_BUFFER_CAP {
            let evicted = st.buffered.pop_front().unwrap();
            return vec![ProtoAction::DropData {
                packet: evicted,
                reason: DropReason::NoRoute,
            }];
        }
        Vec::new()
    }

    fn flush_if_routable(&mut self, dest: NodeId) -> Vec<ProtoAction> {
        let st = self.state(dest);
        let Some(next_hop) = st.downstream() else {
            return Vec::new();
        };
        st.route_required = false;
        st.deadline = None;
        st.qry_retries = 0;
        st.buffered
            .drain(..)
            .map(|packet| ProtoAction::SendData { next_hop, packet })
            .collect()
    }

    /// Shared forwarding path: route, else reverse and route, else recover
    /// (origins buffer and query; transit drops).
    fn route_or_recover(
        &mut self,
        ctx: &ProtoCtx,
        packet: Packet,
        at_origin: bool,
    ) -> Vec<ProtoAction> {
        let dest = packet.dst;
        if let Some(next_hop) = self.state(dest).downstream() {
            return vec![ProtoAction::SendData { next_hop, packet }];
        }
        if self.reverse(dest) {
            let upd = self.broadcast_upd(ctx.now, dest);
            let next_hop = self
                .state(dest)
                .downstream()
                .expect("reversal leaves every neighbor downstream");
            return vec![upd, ProtoAction::SendData { next_hop, packet }];
        }
        let st = self.state(dest);
        if at_origin && st.reversals < REVERSAL_BUDGET {
            let episode = if st.route_required {
                Vec::new()
            } else {
                self.start_episode(ctx.now, dest, true)
            };
            let mut actions = episode;
            actions.extend(self.buffer_packet(dest, packet));
            return actions;
        }
        vec![ProtoAction::DropData {
            packet,
            reason: DropReason::NoRoute,
        }]
    }
}

impl RoutingProtocol for Tora {
    fn protocol_id(&self) -> ProtocolId {
        ProtocolId::Tora
    }

    fn on_start(&mut self, _ctx: &ProtoCtx) -> Vec<ProtoAction> {
        Vec::new()
    }

    fn on_data(&mut self, ctx: &ProtoCtx, packet: Packet) -> Vec<ProtoAction> {
        self.route_or_recover(ctx, packet, true)
    }

    fn on_packet(&mut self, ctx: &ProtoCtx, from: NodeId, packet: Packet) -> Vec<ProtoAction> {
        match packet.header.clone() {
            Header::ToraQry { dest } => {
                if dest == self.self_id {
                    let self_id = self.self_id;
                    let st = self.state(dest);
                    if st.height.is_none() {
                        st.height = Some(ToraHeight {
                            level: 0,
                            node: self_id,
                        });
                    }
                    if ctx.now.secs() - st.last_upd >= UPD_MIN_INTERVAL {
                        return vec![self.broadcast_upd(ctx.now, dest)];
                    }
                    return Vec::new();
                }
                let st = self.state(dest);
                if st.height.is_some() {
                    if ctx.now.secs() - st.last_upd >= UPD_MIN_INTERVAL {
                        return vec![self.broadcast_upd(ctx.now, dest)];
                    }
                    return Vec::new();
                }
                if st.route_required {
                    return Vec::new();
                }
                st.route_required = true;
                vec![ProtoAction::ForwardControl {
                    dst: NodeId::BROADCAST,
                    packet,
                }]
            }
            Header::ToraUpd { dest, height } => {
                let self_id = self.self_id;
                let at_dest = dest == self_id;
                let st = self.state(dest);
                st.neighbor_heights.insert(from, height);
                if at_dest {
                    return Vec::new();
                }
                let mut actions = Vec::new();
                if st.height.is_none() && st.route_required {
                    st.height = Some(ToraHeight {
                        level: height.level + 1,
                        node: self_id,
                    });
                    actions.push(self.broadcast_upd(ctx.now, dest));
                }
                actions.extend(self.flush_if_routable(dest));
                actions
            }
            Header::Data { .. } => self.route_or_recover(ctx, packet, false),
            _ => Vec::new(),
        }
    }

    fn on_link_failure(
        &mut self,
        ctx: &ProtoCtx,
        next_hop: NodeId,
        packet: Packet,
    ) -> Vec<ProtoAction> {
        for st in self.states.values_mut() {
            st.neighbor_heights.remove(&next_hop);
        }
        if packet.kind() != PacketKind::Cbr {
            return Vec::new();
        }
        let at_origin = packet.src == self.self_id;
        let mut actions = self.route_or_recover(ctx, packet, at_origin);
        // Salvaging via reversal re-fails through LinkBreak semantics when
        // the packet was in transit; rewrite the terminal reason to match.
        if !at_origin {
            for act in actions.iter_mut() {
                if let ProtoAction::DropData { reason, .. } = act {
                    *reason = DropReason::LinkBreak;
                }
            }
        }
        actions
    }

    fn on_tick(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction> {
        let now = ctx.now.secs();
        let due: Vec<NodeId> = self
            .states
            .iter()
            .filter(|(_, st)| {
                st.route_required && st.deadline.map_or(false, |d| d <= now)
            })
            .map(|(dest, _)| *dest)
            .collect();
        let mut actions = Vec::new();
        for dest in due {
            let flushed = self.flush_if_routable(dest);
            if !flushed.is_empty() {
                actions.extend(flushed);
                continue;
            }
            let st = self.state(dest);
            if st.downstream().is_some() {
                st.route_required = false;
                st.deadline = None;
                continue;
            }
            if st.qry_retries < QRY_RETRIES {
                st.qry_retries += 1;
                let deadline = now + QRY_TIMEOUT;
                st.deadline = Some(deadline);
                actions.push(ProtoAction::SendControl {
                    dst: NodeId::BROADCAST,
                    header: Header::ToraQry { dest },
                });
                actions.push(ProtoAction::ScheduleTick {
                    at: SimTime::from_secs(deadline),
                });
            } else {
                st.route_required = false;
                st.deadline = None;
                let buffered: Vec<Packet> = st.buffered.drain(..).collect();
                for packet in buffered {
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
        if dst == self.self_id {
            return Vec::new();
        }
        let st = self.state(dst);
        if st.downstream().is_some() || st.route_required {
            return Vec::new();
        }
        self.start_episode(ctx.now, dst, true)
    }

    fn has_route(&self, _now: SimTime, dst: NodeId) -> bool {
        self.states
            .get(&dst)
            .map_or(false, |st| st.downstream().is_some())
    }

    fn snapshot(&self) -> Vec<RouteEntry> {
        self.states
            .iter()
            .filter(|(dest, _)| **dest != self.self_id)
            .filter_map(|(dest, st)| {
                let next_hop = st.downstream()?;
                let level = st.height.map(|h| h.level).unwrap_or(u64::MAX);
                Some(RouteEntry {
                    dest: *dest,
                    next_hop,
                    metric: level.min(u32::MAX as u64) as u32,
                })
            })
            .collect()
    }
}
