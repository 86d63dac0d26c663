//! The uniform routing interface. Protocols are single-node state
//! machines: the simulator feeds them packets, timer ticks and link
//! failures, and they answer with actions (transmit, forward, drop,
//! wake me later). They never touch the event queue or other nodes.

use std::fmt::Write as _;

use crate::engine::{RngStream, SimTime};
use crate::packet::{Header, NodeId, Packet, ProtocolId};
use crate::trace::DropReason;

pub mod aodv;
pub mod dsdv;
pub mod dsr;
pub mod tora;

pub use aodv::Aodv;
pub use dsdv::Dsdv;
pub use dsr::Dsr;
pub use tora::Tora;

/// Hop budget for control floods.
pub const NET_DIAMETER: u32 = 30;
/// Per-destination cap on data packets parked while a route is sought.
pub const PENDING_BUFFER_CAP: usize = 64;

/// Read-only call context.
#[derive(Debug, Clone, Copy)]
pub struct ProtoCtx {
    pub now: SimTime,
    pub self_id: NodeId,
}

/// What a protocol wants done, in order.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtoAction {
    /// Transmit a control packet originated here. `dst` is the link-layer
    /// target (a neighbor or broadcast).
    SendControl { dst: NodeId, header: Header },
    /// Relay someone else's control packet, keeping its identity.
    ForwardControl { dst: NodeId, packet: Packet },
    /// Hand a data packet to the MAC toward a chosen neighbor.
    SendData { next_hop: NodeId, packet: Packet },
    /// Give up on a data packet; the simulator traces the drop.
    DropData { packet: Packet, reason: DropReason },
    /// Request an `on_tick` callback at `at`.
    ScheduleTick { at: SimTime },
}

/// One routing-table row, uniform across protocols for snapshots and the
/// loop-freedom checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub metric: u32,
}

/// Snapshot rows as CSV lines `time,node,dest,next_hop,metric`.
pub fn snapshot_csv(at: SimTime, node: NodeId, rows: &[RouteEntry]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(out, "{at},{node},{},{},{}", r.dest, r.next_hop, r.metric);
    }
    out
}

pub trait RoutingProtocol {
    fn protocol_id(&self) -> ProtocolId;

    /// Called once when the instance goes live; returns initial timers and
    /// any startup transmissions.
    fn on_start(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction>;

    /// A locally originated data packet needs routing.
    fn on_data(&mut self, ctx: &ProtoCtx, packet: Packet) -> Vec<ProtoAction>;

    /// A packet arrived over the air: any control packet, or a data packet
    /// in transit (data for this node is delivered before reaching here).
    fn on_packet(&mut self, ctx: &ProtoCtx, from: NodeId, packet: Packet) -> Vec<ProtoAction>;

    /// A unicast to `next_hop` found no receiver. The undeliverable packet
    /// is returned to the protocol, which must account for it: re-route,
    /// re-buffer or drop (data packets must not vanish silently).
    fn on_link_failure(
        &mut self,
        ctx: &ProtoCtx,
        next_hop: NodeId,
        packet: Packet,
    ) -> Vec<ProtoAction>;

    /// Timer callback previously requested with `ScheduleTick`.
    fn on_tick(&mut self, ctx: &ProtoCtx) -> Vec<ProtoAction>;

    /// Warm-standby probe: make sure a route toward `dst` exists or is
    /// being sought, without sending data.
    fn ensure_route(&mut self, ctx: &ProtoCtx, dst: NodeId) -> Vec<ProtoAction>;

    /// Whether a usable route to `dst` is currently held.
    fn has_route(&self, now: SimTime, dst: NodeId) -> bool;

    /// Current table rows (valid routes only).
    fn snapshot(&self) -> Vec<RouteEntry>;
}

/// Builds a protocol instance for one node. `rng` feeds protocols that
/// jitter their timers; the others never draw from it.
pub fn make_protocol(
    id: ProtocolId,
    self_id: NodeId,
    rng: RngStream,
) -> Box<dyn RoutingProtocol> {
    match id {
        ProtocolId::Aodv => Box::new(Aodv::new(self_id)),
        ProtocolId::Dsr => Box::new(Dsr::new(self_id)),
        ProtocolId::Dsdv => Box::new(Dsdv::new(self_id, rng)),
        ProtocolId::Tora => Box::new(Tora::new(self_id)),
    }
}
