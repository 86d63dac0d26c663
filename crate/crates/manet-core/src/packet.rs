//! Packets and the identifiers shared across the stack.

use std::fmt;

use crate::engine::SimTime;

/// A node identifier. `NodeId::BROADCAST` is the all-nodes address used as
/// a MAC target and serialized as `-1` in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const BROADCAST: NodeId = NodeId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == NodeId::BROADCAST {
            write!(f, "-1")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// The four routing protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolId {
    Aodv,
    Dsr,
    Dsdv,
    Tora,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 4] = [
        ProtocolId::Aodv,
        ProtocolId::Dsr,
        ProtocolId::Dsdv,
        ProtocolId::Tora,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Aodv => "aodv",
            ProtocolId::Dsr => "dsr",
            ProtocolId::Dsdv => "dsdv",
            ProtocolId::Tora => "tora",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolId> {
        match s {
            "aodv" => Some(ProtocolId::Aodv),
            "dsr" => Some(ProtocolId::Dsr),
            "dsdv" => Some(ProtocolId::Dsdv),
            "tora" => Some(ProtocolId::Tora),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Packet kind as it appears in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PacketKind {
    Cbr,
    Rreq,
    Rrep,
    Rerr,
    DsdvUpdate,
    ToraUpdate,
    MrpSwitch,
}

impl PacketKind {
    pub fn token(self) -> &'static str {
        match self {
            PacketKind::Cbr => "cbr",
            PacketKind::Rreq => "rreq",
            PacketKind::Rrep => "rrep",
            PacketKind::Rerr => "rerr",
            PacketKind::DsdvUpdate => "dsdv",
            PacketKind::ToraUpdate => "tora",
            PacketKind::MrpSwitch => "mrp_switch",
        }
    }

    pub fn parse(s: &str) -> Option<PacketKind> {
        match s {
            "cbr" => Some(PacketKind::Cbr),
            "rreq" => Some(PacketKind::Rreq),
            "rrep" => Some(PacketKind::Rrep),
            "rerr" => Some(PacketKind::Rerr),
            "dsdv" => Some(PacketKind::DsdvUpdate),
            "tora" => Some(PacketKind::ToraUpdate),
            "mrp_switch" => Some(PacketKind::MrpSwitch),
            _ => None,
        }
    }

    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Cbr)
    }
}

/// TORA height: compared lexicographically, destination sits at
/// `(0, dest)`. The node id makes heights totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ToraHeight {
    pub level: u64,
    pub node: NodeId,
}

/// Per-protocol header contents. Everything stays in memory; traces only
/// carry the kind and size.
#[derive(Debug, Clone, PartialEq)]
pub enum Header {
    Data {
        flow: u32,
        seq: u64,
        /// DSR stamps the full hop list; other protocols leave this empty.
        source_route: Vec<NodeId>,
    },
    AodvRreq {
        origin: NodeId,
        origin_seq: u32,
        rreq_id: u32,
        target: NodeId,
        target_seq_known: u32,
        hop_count: u32,
    },
    AodvRrep {
        origin: NodeId,
        target: NodeId,
        target_seq: u32,
        hop_count: u32,
    },
    AodvRerr {
        unreachable: Vec<(NodeId, u32)>,
    },
    DsrRreq {
        origin: NodeId,
        rreq_id: u32,
        target: NodeId,
        /// Nodes traversed so far, origin first.
        path: Vec<NodeId>,
    },
    DsrRrep {
        /// Full route, origin first, target last.
        path: Vec<NodeId>,
    },
    DsrRerr {
        broken_from: NodeId,
        broken_to: NodeId,
        /// Return route toward the data source, detecting node first.
        path_back: Vec<NodeId>,
    },
    DsdvAdvert {
        /// (destination, metric in hops, destination sequence number)
        entries: Vec<(NodeId, u32, u32)>,
    },
    ToraQry {
        dest: NodeId,
    },
    ToraUpd {
        dest: NodeId,
        height: ToraHeight,
    },
}

// Declared wire-size constants (bytes). Only the 512-byte data payload
// is load-bearing for metrics; header sizes are loosely RFC-shaped
// defaults.
const DATA_HEADER: u32 = 20;
const PER_HOP_ADDR: u32 = 4;
const AODV_RREQ_SIZE: u32 = 24;
const AODV_RREP_SIZE: u32 = 20;
const AODV_RERR_BASE: u32 = 12;
const AODV_RERR_PER_DEST: u32 = 8;
const DSR_CTRL_BASE: u32 = 16;
const DSDV_ADVERT_BASE: u32 = 8;
const DSDV_PER_ENTRY: u32 = 12;
const TORA_QRY_SIZE: u32 = 16;
const TORA_UPD_SIZE: u32 = 28;

/// One datagram: a CBR payload or a routing control message.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    /// Globally unique, monotonically assigned. Preserved hop to hop, so a
    /// forwarded packet keeps the id it was created with.
    pub id: u64,
    /// Protocol instance that owns this packet on every node.
    pub protocol: ProtocolId,
    /// Logical source (originator).
    pub src: NodeId,
    /// Logical destination; `BROADCAST` for undirected control floods.
    pub dst: NodeId,
    /// Application payload bytes; zero for control packets.
    pub payload_bytes: u32,
    /// When the packet was handed to the stack (`S_a` for data).
    pub sent_at: SimTime,
    /// Hops traversed so far; the forwarding layer increments this and
    /// drops data packets exceeding the TTL cap.
    pub hops: u32,
    pub header: Header,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self.header {
            Header::Data { .. } => PacketKind::Cbr,
            Header::AodvRreq { .. } | Header::DsrRreq { .. } => PacketKind::Rreq,
            Header::AodvRrep { .. } | Header::DsrRrep { .. } => PacketKind::Rrep,
            Header::AodvRerr { .. } | Header::DsrRerr { .. } => PacketKind::Rerr,
            Header::DsdvAdvert { .. } => PacketKind::DsdvUpdate,
            Header::ToraQry { .. } | Header::ToraUpd { .. } => PacketKind::ToraUpdate,
        }
    }

    /// On-wire size in bytes, used for serialization delay and MAC/RTR
    /// trace lines. AGT lines carry the bare payload instead.
    pub fn wire_size(&self) -> u32 {
        match &self.header {
            Header::Data { source_route, .. } => {
                let route_overhead = if source_route.is_empty() {
                    0
                } else {
                    PER_HOP_ADDR + PER_HOP_ADDR * source_route.len() as u32
                };
                self.payload_bytes + DATA_HEADER + route_overhead
            }
            Header::AodvRreq { .. } => AODV_RREQ_SIZE,
            Header::AodvRrep { .. } => AODV_RREP_SIZE,
            Header::AodvRerr { unreachable } => {
                AODV_RERR_BASE + AODV_RERR_PER_DEST * unreachable.len() as u32
            }
            Header::DsrRreq { path, .. } => DSR_CTRL_BASE + PER_HOP_ADDR * path.len() as u32,
            Header::DsrRrep { path } => DSR_CTRL_BASE + PER_HOP_ADDR * path.len() as u32,
            Header::DsrRerr { path_back, .. } => {
                DSR_CTRL_BASE + PER_HOP_ADDR * path_back.len() as u32
            }
            Header::DsdvAdvert { entries } => {
                DSDV_ADVERT_BASE + DSDV_PER_ENTRY * entries.len() as u32
            }
            Header::ToraQry { .. } => TORA_QRY_SIZE,
            Header::ToraUpd { .. } => TORA_UPD_SIZE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_tokens() {
        for kind in [
            PacketKind::Cbr,
            PacketKind::Rreq,
            PacketKind::Rrep,
            PacketKind::Rerr,
            PacketKind::DsdvUpdate,
            PacketKind::ToraUpdate,
            PacketKind::MrpSwitch,
        ] {
            assert_eq!(PacketKind::parse(kind.token()), Some(kind));
        }
        assert_eq!(PacketKind::parse("bogus"), None);
    }

    #[test]
    fn dsr_data_wire_size_grows_with_route() {
        let mk = |route: Vec<NodeId>| Packet {
            id: 1,
            protocol: ProtocolId::Dsr,
            src: NodeId(0),
            dst: NodeId(3),
            payload_bytes: 512,
            sent_at: SimTime::ZERO,
            hops: 0,
            header: Header::Data {
                flow: 0,
                seq: 0,
                source_route: route,
            },
        };
        let plain = mk(vec![]);
        let routed = mk(vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
        assert_eq!(plain.wire_size(), 532);
        assert_eq!(routed.wire_size(), 532 + 4 + 16);
    }

    #[test]
    fn broadcast_displays_as_minus_one() {
        assert_eq!(NodeId::BROADCAST.to_string(), "-1");
        assert_eq!(NodeId(7).to_string(), "7");
    }
}
