//! Trace events and the line-oriented trace file format.
//!
//! Every observable simulator action becomes one `TraceEvent`; the metrics
//! module consumes nothing else. The persisted format is one
//! space-separated line per event:
//!
//! ```text
//! time action layer node pkt_id pkt_kind size src dst
//! ```
//!
//! with `action` in `{SEND, RECV, FWD, DROP}`, `layer` in `{AGT, RTR, MAC}`,
//! time fixed to nanosecond precision and broadcast addresses written as
//! `-1`. Drop reasons are kept in memory for diagnostics but are not part
//! of the file format.

use std::fmt::Write as _;

use crate::engine::SimTime;
use crate::packet::{NodeId, PacketKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Send,
    Recv,
    Fwd,
    Drop,
}

impl Action {
    pub fn token(self) -> &'static str {
        match self {
            Action::Send => "SEND",
            Action::Recv => "RECV",
            Action::Fwd => "FWD",
            Action::Drop => "DROP",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s {
            "SEND" => Some(Action::Send),
            "RECV" => Some(Action::Recv),
            "FWD" => Some(Action::Fwd),
            "DROP" => Some(Action::Drop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Application agent: CBR sources and sinks.
    Agt,
    /// Routing layer: control packets and routing-level data drops.
    Rtr,
    /// Abstracted medium: per-hop transmissions.
    Mac,
}

impl Layer {
    pub fn token(self) -> &'static str {
        match self {
            Layer::Agt => "AGT",
            Layer::Rtr => "RTR",
            Layer::Mac => "MAC",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        match s {
            "AGT" => Some(Layer::Agt),
            "RTR" => Some(Layer::Rtr),
            "MAC" => Some(Layer::Mac),
            _ => None,
        }
    }
}

/// Why a packet was dropped. Diagnostic only; not serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueFull,
    LinkBreak,
    NoRoute,
    RetriesExhausted,
    BadSourceRoute,
    Duplicate,
    TtlExceeded,
}

/// One timestamped simulator event.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub action: Action,
    pub layer: Layer,
    pub node: NodeId,
    pub pkt_id: u64,
    pub kind: PacketKind,
    pub size: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub drop_reason: Option<DropReason>,
}

impl TraceEvent {
    /// Serializes to the canonical nine-column line (no trailing newline).
    pub fn format_line(&self) -> String {
        let mut s = String::with_capacity(64);
        let _ = write!(
            s,
            "{} {} {} {} {} {} {} {} {}",
            self.time,
            self.action.token(),
            self.layer.token(),
            self.node,
            self.pkt_id,
            self.kind.token(),
            self.size,
            self.src,
            self.dst
        );
        s
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceParseError {
    #[error("line {line}: expected 9 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: bad {field}: {value:?}")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
}

fn parse_node(s: &str) -> Option<NodeId> {
    if s == "-1" {
        return Some(NodeId::BROADCAST);
    }
    s.parse::<u32>().ok().map(NodeId)
}

/// Parses one trace line. `line_no` is 1-based and used only for errors.
pub fn parse_line(text: &str, line_no: usize) -> Result<TraceEvent, TraceParseError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 9 {
        return Err(TraceParseError::FieldCount {
            line: line_no,
            found: fields.len(),
        });
    }
    let bad = |field: &'static str, value: &str| TraceParseError::BadField {
        line: line_no,
        field,
        value: value.to_string(),
    };
    let time = fields[0]
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite() && *t >= 0.0)
        .ok_or_else(|| bad("time", fields[0]))?;
    let action = Action::parse(fields[1]).ok_or_else(|| bad("action", fields[1]))?;
    let layer = Layer::parse(fields[2]).ok_or_else(|| bad("layer", fields[2]))?;
    let node = parse_node(fields[3]).ok_or_else(|| bad("node", fields[3]))?;
    let pkt_id = fields[4]
        .parse::<u64>()
        .map_err(|_| bad("pkt_id", fields[4]))?;
    let kind = PacketKind::parse(fields[5]).ok_or_else(|| bad("pkt_kind", fields[5]))?;
    let size = fields[6]
        .parse::<u32>()
        .map_err(|_| bad("size", fields[6]))?;
    let src = parse_node(fields[7]).ok_or_else(|| bad("src", fields[7]))?;
    let dst = parse_node(fields[8]).ok_or_else(|| bad("dst", fields[8]))?;
    Ok(TraceEvent {
        time: SimTime::from_secs(time),
        action,
        layer,
        node,
        pkt_id,
        kind,
        size,
        src,
        dst,
        drop_reason: None,
    })
}

/// Parses a whole trace. Blank lines are ignored.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_line(line, idx + 1)?);
    }
    Ok(events)
}

/// Sink receiving every trace event as it is emitted.
pub trait TraceSink {
    fn record(&mut self, event: &TraceEvent);
}

/// Discards everything; for runs where only the metrics matter.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _event: &TraceEvent) {}
}

/// Collects events in memory.
#[derive(Default)]
pub struct VecSink {
    pub events: Vec<TraceEvent>,
}

impl TraceSink for VecSink {
    fn record(&mut self, event: &TraceEvent) {
        self.events.push(event.clone());
    }
}

/// Accumulates the canonical text form.
#[derive(Default)]
pub struct TextSink {
    pub text: String,
}

impl TraceSink for TextSink {
    fn record(&mut self, event: &TraceEvent) {
        self.text.push_str(&event.format_line());
        self.text.push('\n');
    }
}

/// Streams lines into any writer (typically a buffered file).
pub struct WriterSink<W: std::io::Write> {
    writer: W,
    pub error: Option<std::io::Error>,
}

impl<W: std::io::Write> WriterSink<W> {
    pub fn new(writer: W) -> Self {
        WriterSink {
            writer,
            error: None,
        }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: std::io::Write> TraceSink for WriterSink<W> {
    fn record(&mut self, event: &TraceEvent) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.writer, "{}", event.format_line()) {
            self.error = Some(e);
        }
    }
}

/// Fans one event out to several sinks.
pub struct TeeSink<'a> {
    pub sinks: Vec<&'a mut dyn TraceSink>,
}

impl TraceSink for TeeSink<'_> {
    fn record(&mut self, event: &TraceEvent) {
        for sink in self.sinks.iter_mut() {
            sink.record(event);
        }
    }
}
