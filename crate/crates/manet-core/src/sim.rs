//! The run loop: one event queue drives mobility, traffic, per-node
//! protocol instances, and an idealized serializing MAC. Every observable
//! action lands in the trace sink; metrics are counted live by the same
//! rules the trace analyzer applies, so the two always agree.
//!
//! The MAC model: each node owns one priority interface queue and one
//! transmitter. A transmission occupies the sender for the serialization
//! time and arrives (serialization + processing delay) later at every
//! in-range receiver (broadcast) or the link target (unicast). A unicast
//! whose target moved out of range fails synchronously at transmission
//! attempt, consuming no airtime and leaving no trace lines: the routing
//! layer hears about it and reacts, which is where RERRs and reversals
//! come from.

use std::collections::BTreeMap;

use crate::engine::{EngineError, EventQueue, RngStream, SimTime, StreamId};
use crate::metrics::{compute_pdr, MetricsReport, WindowSample, WindowTracker};
use crate::mobility::{MobilityField, MobilityModel, Vec2};
use crate::mrp::{MrpController, SwitchEvent};
use crate::netstack::{neighbors_of, EnqueueOutcome, InterfaceQueue, MacFrame, RadioConfig};
use crate::packet::{Header, NodeId, Packet, PacketKind, ProtocolId};
use crate::routing::{self, make_protocol, ProtoAction, ProtoCtx, RouteEntry, RoutingProtocol};
use crate::scenario::{MrpPolicy, ProtocolChoice, ScenarioConfig, ScenarioError};
use crate::trace::{Action, DropReason, Layer, TraceEvent, TraceSink};
use crate::traffic::{build_flows, DeliveryLog, Flow};

/// Hop budget for data packets; exceeding it is a routing failure, not a
/// normal occurrence (control floods have their own tighter caps).
const TTL_CAP: u32 = 64;

#[derive(Debug)]
enum EventKind {
    MobilityTick,
    TrafficEmit { flow: usize, k: u64 },
    TxDone { node: NodeId },
    Arrival { at: NodeId, from: NodeId, packet: Packet },
    ProtoTick { node: NodeId, protocol: ProtocolId },
    MrpEvaluate,
}

struct Node {
    iface: InterfaceQueue,
    busy: bool,
    instances: Vec<(ProtocolId, Box<dyn RoutingProtocol>)>,
}

impl Node {
    fn instance_mut(&mut self, proto: ProtocolId) -> Option<&mut Box<dyn RoutingProtocol>> {
        self.instances
            .iter_mut()
            .find(|(p, _)| *p == proto)
            .map(|(_, i)| i)
    }

    fn instance(&self, proto: ProtocolId) -> Option<&dyn RoutingProtocol> {
        self.instances
            .iter()
            .find(|(p, _)| *p == proto)
            .map(|(_, i)| i.as_ref())
    }
}

/// Everything a finished run reports besides the trace itself.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub switches: Vec<SwitchEvent>,
    pub events_processed: u64,
    /// Deepest any interface queue got, across all nodes.
    pub queue_high_water: usize,
}

pub struct Simulator<S: TraceSink> {
    cfg: ScenarioConfig,
    radio: RadioConfig,
    queue: EventQueue<EventKind>,
    mobility: MobilityField,
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    delivery: DeliveryLog,
    pub sink: S,
    next_pkt_id: u64,
    /// Protocol stamped onto data packets entering the stack now.
    active: ProtocolId,
    controller: Option<MrpController>,
    switches: Vec<SwitchEvent>,
    // Live counters, maintained under exactly the rules the trace analyzer
    // applies to the persisted file.
    data_sent: u64,
    data_received: u64,
    roh: u64,
    /// Control transmissions made by the protocol that was on standby at
    /// transmission time (zero outside supervisor runs).
    standby_ctrl: u64,
    // Per-epoch observations feeding supervisor decisions.
    tracker: WindowTracker,
    epoch_ctrl: BTreeMap<ProtocolId, u64>,
    probe_cursor: usize,
    events_processed: u64,
}

impl<S: TraceSink> Simulator<S> {
    pub fn new(cfg: ScenarioConfig, sink: S) -> Result<Simulator<S>, ScenarioError> {
        cfg.validate()?;
        let radio = RadioConfig {
            range: cfg.range_m,
            bitrate_bps: cfg.bitrate_bps,
            proc_delay: cfg.proc_delay_s,
        };
        let mobility = MobilityField::new(
            cfg.mobility,
            cfg.area,
            cfg.speeds,
            cfg.pause_s,
            cfg.nodes,
            cfg.rpgm_groups,
            cfg.rpgm_deviation_m,
            cfg.seed,
            cfg.positions.as_deref(),
        );
        let flows = build_flows(&cfg, cfg.seed);
        let protos: Vec<ProtocolId> = match cfg.protocol {
            ProtocolChoice::Single(p) => vec![p],
            ProtocolChoice::Mrp => match cfg.mrp.policy {
                // Inert supervisor: the standby plane never exists, making
                // the run the same machine as the primary alone.
                MrpPolicy::Disabled => vec![cfg.mrp.primary],
                _ => vec![cfg.mrp.primary, cfg.mrp.secondary],
            },
        };
        let nodes: Vec<Node> = (0..cfg.nodes)
            .map(|i| Node {
                iface: InterfaceQueue::new(cfg.queue_len),
                busy: false,
                instances: protos
                    .iter()
                    .map(|p| {
                        let rng = RngStream::new(cfg.seed, StreamId::Jitter(i as u32));
                        (*p, make_protocol(*p, NodeId(i as u32), rng))
                    })
                    .collect(),
            })
            .collect();
        let active = match cfg.protocol {
            ProtocolChoice::Single(p) => p,
            ProtocolChoice::Mrp => cfg.mrp.primary,
        };
        let controller = match cfg.protocol {
            ProtocolChoice::Mrp if cfg.mrp.policy != MrpPolicy::Disabled => {
                Some(MrpController::new(cfg.mrp.clone()))
            }
            _ => None,
        };
        let tracker = WindowTracker::new(cfg.mrp.epoch_s);
        Ok(Simulator {
            cfg,
            radio,
            queue: EventQueue::new(),
            mobility,
            nodes,
            flows,
            delivery: DeliveryLog::default(),
            sink,
            next_pkt_id: 0,
            active,
            controller,
            switches: Vec::new(),
            data_sent: 0,
            data_received: 0,
            roh: 0,
            standby_ctrl: 0,
            tracker,
            epoch_ctrl: BTreeMap::new(),
            probe_cursor: 0,
            events_processed: 0,
        })
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn delivery_log(&self) -> &DeliveryLog {
        &self.delivery
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.mobility.positions()
    }

    /// Per-node routing tables of one protocol, for oracle checks.
    pub fn route_tables(&self, proto: ProtocolId) -> Vec<(NodeId, Vec<RouteEntry>)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                n.instance(proto)
                    .map(|inst| (NodeId(i as u32), inst.snapshot()))
            })
            .collect()
    }

    /// Route snapshot export: `time,node,dest,next_hop,metric` rows for
    /// every node's active-protocol table.
    pub fn snapshot_csv(&self, at: SimTime) -> String {
        let mut out = String::from("time,node,dest,next_hop,metric\n");
        for (node, rows) in self.route_tables(self.active) {
            out.push_str(&routing::snapshot_csv(at, node, &rows));
        }
        out
    }

    /// Current connectivity graph as an undirected edge list.
    pub fn connectivity_csv(&self) -> String {
        let positions = self.mobility.positions();
        let mut out = String::from("node_a,node_b\n");
        for a in 0..positions.len() {
            for b in (a + 1)..positions.len() {
                if self.radio.in_range(positions[a], positions[b]) {
                    out.push_str(&format!("{a},{b}\n"));
                }
            }
        }
        out
    }

    fn alloc_pkt_id(&mut self) -> u64 {
        let id = self.next_pkt_id;
        self.next_pkt_id += 1;
        id
    }

    fn trace(&mut self, event: TraceEvent) {
        self.sink.record(&event);
    }

    fn trace_packet(
        &mut self,
        t: SimTime,
        action: Action,
        layer: Layer,
        node: NodeId,
        packet: &Packet,
        size: u32,
        drop_reason: Option<DropReason>,
    ) {
        self.trace(TraceEvent {
            time: t,
            action,
            layer,
            node,
            pkt_id: packet.id,
            kind: packet.kind(),
            size,
            src: packet.src,
            dst: packet.dst,
            drop_reason,
        });
    }

    /// Queues a frame on a node's interface, tracing any overflow victim.
    fn enqueue_frame(&mut self, t: SimTime, node: NodeId, frame: MacFrame) {
        // Capture identity up front: a rejected frame is consumed.
        let probe = frame.packet.clone();
        match self.nodes[node.index()].iface.enqueue(frame) {
            EnqueueOutcome::Accepted => {}
            EnqueueOutcome::AcceptedEvicting(evicted) => {
                let size = evicted.packet.wire_size();
                self.trace_packet(
                    t,
                    Action::Drop,
                    Layer::Mac,
                    node,
                    &evicted.packet,
                    size,
                    Some(DropReason::QueueFull),
                );
            }
            EnqueueOutcome::Rejected => {
                let size = probe.wire_size();
                self.trace_packet(
                    t,
                    Action::Drop,
                    Layer::Mac,
                    node,
                    &probe,
                    size,
                    Some(DropReason::QueueFull),
                );
            }
        }
    }

    /// Applies a protocol's requested actions. Never transmits directly:
    /// frames go onto the interface queue and the caller pumps afterwards,
    /// which keeps re-entrancy out of the MAC.
    fn dispatch(
        &mut self,
        t: SimTime,
        node: NodeId,
        proto: ProtocolId,
        actions: Vec<ProtoAction>,
    ) -> Result<(), EngineError> {
        for action in actions {
            match action {
                ProtoAction::SendControl { dst, header } => {
                    let packet = Packet {
                        id: self.alloc_pkt_id(),
                        protocol: proto,
                        src: node,
                        dst,
                        payload_bytes: 0,
                        sent_at: t,
                        hops: 0,
                        header,
                    };
                    self.enqueue_frame(t, node, MacFrame {
                        link_dst: dst,
                        packet,
                    });
                }
                ProtoAction::ForwardControl { dst, packet } => {
                    self.enqueue_frame(t, node, MacFrame {
                        link_dst: dst,
                        packet,
                    });
                }
                ProtoAction::SendData { next_hop, packet } => {
                    self.enqueue_frame(t, node, MacFrame {
                        link_dst: next_hop,
                        packet,
                    });
                }
                ProtoAction::DropData { packet, reason } => {
                    let size = packet.wire_size();
                    self.trace_packet(
                        t,
                        Action::Drop,
                        Layer::Rtr,
                        node,
                        &packet,
                        size,
                        Some(reason),
                    );
                }
                ProtoAction::ScheduleTick { at } => {
                    self.queue.schedule(at, EventKind::ProtoTick {
                        node,
                        protocol: proto,
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Runs a node's protocol callback and applies the results.
    fn with_instance<F>(
        &mut self,
        t: SimTime,
        node: NodeId,
        proto: ProtocolId,
        f: F,
    ) -> Result<(), EngineError>
    where
        F: FnOnce(&mut Box<dyn RoutingProtocol>, &ProtoCtx) -> Vec<ProtoAction>,
    {
        let ctx = ProtoCtx { now: t, self_id: node };
        let actions = match self.nodes[node.index()].instance_mut(proto) {
            Some(inst) => f(inst, &ctx),
            None => return Ok(()),
        };
        self.dispatch(t, node, proto, actions)
    }

    /// Drains a node's interface queue into at most one live transmission.
    /// Out-of-range unicasts fail here, synchronously and silently (no
    /// airtime, no trace); the owning protocol is told and its reaction is
    /// queued behind whatever else is pending.
    fn pump(&mut self, t: SimTime, node: NodeId) -> Result<(), EngineError> {
        loop {
            if self.nodes[node.index()].busy {
                return Ok(());
            }
            let Some(frame) = self.nodes[node.index()].iface.dequeue() else {
                return Ok(());
            };
            let tx_pos = self.mobility.position(node);
            if frame.link_dst != NodeId::BROADCAST {
                let rx_pos = self.mobility.position(frame.link_dst);
                if !self.radio.in_range(tx_pos, rx_pos) {
                    let proto = frame.packet.protocol;
                    let link_dst = frame.link_dst;
                    let packet = frame.packet;
                    self.with_instance(t, node, proto, |inst, ctx| {
                        inst.on_link_failure(ctx, link_dst, packet)
                    })?;
                    continue;
                }
            }
            let wire = frame.packet.wire_size();
            if frame.packet.kind().is_control() {
                let action = if frame.packet.src == node {
                    Action::Send
                } else {
                    Action::Fwd
                };
                self.trace_packet(t, action, Layer::Rtr, node, &frame.packet, wire, None);
                self.roh += 1;
                let proto = frame.packet.protocol;
                if self.controller.is_some() {
                    *self.epoch_ctrl.entry(proto).or_insert(0) += 1;
                    if proto == self.active {
                        self.tracker.record_control_tx();
                    } else {
                        self.standby_ctrl += 1;
                    }
                }
            }
            self.trace_packet(t, Action::Send, Layer::Mac, node, &frame.packet, wire, None);
            let tx_time = self.radio.tx_time(wire);
            let arrival = SimTime::from_secs(t.secs() + self.radio.arrival_delay(wire));
            if frame.link_dst == NodeId::BROADCAST {
                let positions = self.mobility.positions();
                for nb in neighbors_of(&positions, node, &self.radio) {
                    self.queue.schedule(arrival, EventKind::Arrival {
                        at: nb,
                        from: node,
                        packet: frame.packet.clone(),
                    })?;
                }
            } else {
                self.queue.schedule(arrival, EventKind::Arrival {
                    at: frame.link_dst,
                    from: node,
                    packet: frame.packet,
                })?;
            }
            self.nodes[node.index()].busy = true;
            self.queue
                .schedule(SimTime::from_secs(t.secs() + tx_time), EventKind::TxDone {
                    node,
                })?;
            return Ok(());
        }
    }

    fn handle_traffic_emit(&mut self, t: SimTime, flow_idx: usize, k: u64) -> Result<(), EngineError> {
        let flow = self.flows[flow_idx].clone();
        let packet = Packet {
            id: self.alloc_pkt_id(),
            protocol: self.active,
            src: flow.src,
            dst: flow.dst,
            payload_bytes: self.cfg.payload_bytes,
            sent_at: t,
            hops: 0,
            header: Header::Data {
                flow: flow.id,
                seq: k,
                source_route: Vec::new(),
            },
        };
        self.trace_packet(
            t,
            Action::Send,
            Layer::Agt,
            flow.src,
            &packet,
            packet.payload_bytes,
            None,
        );
        self.data_sent += 1;
        self.delivery.record_send(packet.id, t, packet.payload_bytes);
        if self.controller.is_some() {
            self.tracker.record_send(packet.id, t.secs());
        }
        let active = self.active;
        self.with_instance(t, flow.src, active, |inst, ctx| inst.on_data(ctx, packet))?;
        self.pump(t, flow.src)?;
        if k + 1 < flow.packet_count() {
            self.queue.schedule(
                flow.send_time(k + 1),
                EventKind::TrafficEmit {
                    flow: flow_idx,
                    k: k + 1,
                },
            )?;
        }
        Ok(())
    }

    fn handle_arrival(
        &mut self,
        t: SimTime,
        at: NodeId,
        from: NodeId,
        mut packet: Packet,
    ) -> Result<(), EngineError> {
        let wire = packet.wire_size();
        self.trace_packet(t, Action::Recv, Layer::Mac, at, &packet, wire, None);
        packet.hops += 1;
        let is_data = packet.kind() == PacketKind::Cbr;
        if is_data && packet.hops > TTL_CAP {
            self.trace_packet(
                t,
                Action::Drop,
                Layer::Rtr,
                at,
                &packet,
                wire,
                Some(DropReason::TtlExceeded),
            );
            return Ok(());
        }
        if is_data && packet.dst == at {
            if self.delivery.record_receive(packet.id, t) {
                self.trace_packet(
                    t,
                    Action::Recv,
                    Layer::Agt,
                    at,
                    &packet,
                    packet.payload_bytes,
                    None,
                );
                self.data_received += 1;
                if self.controller.is_some() {
                    self.tracker.record_receive(packet.id, t.secs());
                }
            } else {
                self.trace_packet(
                    t,
                    Action::Drop,
                    Layer::Agt,
                    at,
                    &packet,
                    packet.payload_bytes,
                    Some(DropReason::Duplicate),
                );
            }
            return Ok(());
        }
        let proto = packet.protocol;
        self.with_instance(t, at, proto, |inst, ctx| inst.on_packet(ctx, from, packet))?;
        self.pump(t, at)
    }

    fn evaluate_mrp(&mut self, t: SimTime) -> Result<(), EngineError> {
        let window: WindowSample = self.tracker.take_sample(t.secs());
        let (standby, epoch_s) = {
            let c = self.controller.as_ref().expect("evaluate without controller");
            (c.standby(), self.cfg.mrp.epoch_s)
        };
        let standby_ctrl_rate =
            *self.epoch_ctrl.get(&standby).unwrap_or(&0) as f64 / epoch_s;
        let coverage = if self.flows.is_empty() {
            0.0
        } else {
            let covered = self
                .flows
                .iter()
                .filter(|f| {
                    self.nodes[f.src.index()]
                        .instance(standby)
                        .map_or(false, |inst| inst.has_route(t, f.dst))
                })
                .count();
            covered as f64 / self.flows.len() as f64
        };
        let decision = self
            .controller
            .as_mut()
            .unwrap()
            .evaluate(t, &window, coverage, standby_ctrl_rate);
        if let Some(event) = decision {
            self.active = event.to;
            let marker_id = self.alloc_pkt_id();
            self.trace(TraceEvent {
                time: t,
                action: Action::Send,
                layer: Layer::Agt,
                node: NodeId(0),
                pkt_id: marker_id,
                kind: PacketKind::MrpSwitch,
                size: 0,
                src: NodeId(0),
                dst: NodeId::BROADCAST,
                drop_reason: None,
            });
            self.switches.push(event);
        }
        self.epoch_ctrl.clear();
        // Keep the standby warm: ask it for a route to one flow
        // destination per epoch, cycling through the flows.
        if !self.flows.is_empty() {
            let flow = self.flows[self.probe_cursor % self.flows.len()].clone();
            self.probe_cursor += 1;
            let standby_now = self.controller.as_ref().unwrap().standby();
            self.with_instance(t, flow.src, standby_now, |inst, ctx| {
                inst.ensure_route(ctx, flow.dst)
            })?;
            self.pump(t, flow.src)?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<RunOutput, EngineError> {
        let duration = SimTime::from_secs(self.cfg.duration_s);
        if self.mobility.model != MobilityModel::Static && self.cfg.tick_s <= self.cfg.duration_s
        {
            self.queue
                .schedule(SimTime::from_secs(self.cfg.tick_s), EventKind::MobilityTick)?;
        }
        for (i, flow) in self.flows.iter().enumerate() {
            if flow.packet_count() > 0 && flow.start_s <= self.cfg.duration_s {
                self.queue.schedule(
                    SimTime::from_secs(flow.start_s),
                    EventKind::TrafficEmit { flow: i, k: 0 },
                )?;
            }
        }
        let start = SimTime::ZERO;
        let protos: Vec<ProtocolId> =
            self.nodes[0].instances.iter().map(|(p, _)| *p).collect();
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            for proto in &protos {
                self.with_instance(start, node, *proto, |inst, ctx| inst.on_start(ctx))?;
            }
            self.pump(start, node)?;
        }
        if self.controller.is_some() && self.cfg.mrp.epoch_s <= self.cfg.duration_s {
            self.queue
                .schedule(SimTime::from_secs(self.cfg.mrp.epoch_s), EventKind::MrpEvaluate)?;
        }

        while let Some((t, event)) = self.queue.pop_until(duration) {
            self.events_processed += 1;
            match event {
                EventKind::MobilityTick => {
                    self.mobility.tick(self.cfg.tick_s, t);
                    let next = t.secs() + self.cfg.tick_s;
                    if next <= self.cfg.duration_s {
                        self.queue
                            .schedule(SimTime::from_secs(next), EventKind::MobilityTick)?;
                    }
                }
                EventKind::TrafficEmit { flow, k } => self.handle_traffic_emit(t, flow, k)?,
                EventKind::TxDone { node } => {
                    self.nodes[node.index()].busy = false;
                    self.pump(t, node)?;
                }
                EventKind::Arrival { at, from, packet } => {
                    self.handle_arrival(t, at, from, packet)?
                }
                EventKind::ProtoTick { node, protocol } => {
                    self.with_instance(t, node, protocol, |inst, ctx| inst.on_tick(ctx))?;
                    self.pump(t, node)?;
                }
                EventKind::MrpEvaluate => {
                    self.evaluate_mrp(t)?;
                    let next = t.secs() + self.cfg.mrp.epoch_s;
                    if next <= self.cfg.duration_s {
                        self.queue
                            .schedule(SimTime::from_secs(next), EventKind::MrpEvaluate)?;
                    }
                }
            }
        }

        let roh = if self.controller.is_some() && !self.cfg.mrp.count_standby_overhead {
            self.roh - self.standby_ctrl
        } else {
            self.roh
        };
        let delivered = self.delivery.delivered();
        let report = MetricsReport {
            data_sent: self.data_sent,
            data_received: self.data_received,
            routing_overhead: roh,
            pdr: compute_pdr(self.data_sent, self.data_received),
            avg_delay_s: if delivered > 0 {
                Some(self.delivery.delay_sum_s() / delivered as f64)
            } else {
                None
            },
            throughput_bps: self.delivery.delivered_payload_bytes() as f64 * 8.0
                / self.cfg.duration_s,
            duration_s: self.cfg.duration_s,
        };
        Ok(RunOutput {
            report,
            switches: self.switches.clone(),
            events_processed: self.events_processed,
            queue_high_water: self
                .nodes
                .iter()
                .map(|n| n.iface.high_water())
                .max()
                .unwrap_or(0),
        })
    }
}
