//! Deterministic discrete-event simulator for mobile ad-hoc networks:
//! mobility models, an idealized shared-medium MAC, four routing
//! protocols (AODV, DSR, DSDV, TORA) and a supervisor that switches
//! between two of them at runtime based on windowed performance.

pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod netstack;
pub mod mrp;
pub mod packet;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod traffic;

pub use engine::{EngineError, EventQueue, RngStream, SimTime, StreamId};
pub use metrics::{analyze_events, windowed_metrics, MetricsReport, WindowSample};
pub use mobility::{Area, MobilityField, MobilityModel, SpeedRange, Vec2};
pub use netstack::{InterfaceQueue, RadioConfig};
pub use packet::{Header, NodeId, Packet, PacketKind, ProtocolId};
pub use mrp::{switches_csv, MrpController, SwitchEvent};
pub use routing::{
    make_protocol, ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol,
};
pub use sim::{RunOutput, Simulator};
pub use scenario::{MrpParams, MrpPolicy, ProtocolChoice, ScenarioConfig, ScenarioError};
pub use trace::{Action, DropReason, Layer, TraceEvent, TraceSink};
pub use traffic::{build_flows, DeliveryLog, Flow};
