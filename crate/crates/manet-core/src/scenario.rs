//! Run configuration: a flat `key=value` file format with strict parsing,
//! validation and defaults matching the standard comparison setup
//! (600 x 600 m field, 20 nodes at 0.5..5 m/s, zero pause, group
//! mobility, 8 packets/s of 512-byte data, 50-packet queues, 100 s).

use std::fmt::Write as _;

use thiserror::Error;

use crate::mobility::{Area, MobilityModel, SpeedRange};
use crate::packet::{NodeId, ProtocolId};

/// Which routing stack a run uses: one fixed protocol, or the supervisor
/// switching between two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolChoice {
    Single(ProtocolId),
    Mrp,
}

impl ProtocolChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolChoice::Single(p) => p.name(),
            ProtocolChoice::Mrp => "mrp",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolChoice> {
        if s == "mrp" {
            Some(ProtocolChoice::Mrp)
        } else {
            ProtocolId::parse(s).map(ProtocolChoice::Single)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrpPolicy {
    /// Supervisor present but inert: no probing, no evaluation, no
    /// switching. A run with this policy behaves exactly like the primary
    /// protocol alone.
    Disabled,
    /// Switch when the standby's estimated score beats the active score
    /// by the hysteresis margin.
    Threshold,
    /// Switch every evaluation epoch regardless of scores (stress tool).
    ForcedAlternate,
}

impl MrpPolicy {
    pub fn name(self) -> &'static str {
        match self {
            MrpPolicy::Disabled => "disabled",
            MrpPolicy::Threshold => "threshold",
            MrpPolicy::ForcedAlternate => "forced_alternate",
        }
    }

    pub fn parse(s: &str) -> Option<MrpPolicy> {
        match s {
            "disabled" => Some(MrpPolicy::Disabled),
            "threshold" => Some(MrpPolicy::Threshold),
            "forced_alternate" => Some(MrpPolicy::ForcedAlternate),
            _ => None,
        }
    }
}

/// Supervisor tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpParams {
    pub primary: ProtocolId,
    pub secondary: ProtocolId,
    pub policy: MrpPolicy,
    /// Evaluation window length in seconds.
    pub epoch_s: f64,
    /// Relative margin the standby must clear before a switch.
    pub hysteresis: f64,
    /// Minimum epochs between switches.
    pub min_dwell: u32,
    /// Delay considered "bad" when normalizing the delay term.
    pub delay_scale_s: f64,
    /// Control transmissions per second considered "bad".
    pub ctrl_scale: f64,
    /// Whether standby probe traffic counts toward reported overhead.
    pub count_standby_overhead: bool,
}

impl Default for MrpParams {
    fn default() -> MrpParams {
        MrpParams {
            primary: ProtocolId::Aodv,
            secondary: ProtocolId::Dsr,
            policy: MrpPolicy::Threshold,
            epoch_s: 5.0,
            hysteresis: 0.1,
            min_dwell: 2,
            delay_scale_s: 0.5,
            ctrl_scale: 150.0,
            count_standby_overhead: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub area: Area,
    pub nodes: usize,
    pub speeds: SpeedRange,
    pub pause_s: f64,
    pub mobility: MobilityModel,
    pub protocol: ProtocolChoice,
    /// Data packets per second per flow.
    pub traffic_rate: f64,
    pub payload_bytes: u32,
    pub queue_len: usize,
    pub duration_s: f64,
    pub range_m: f64,
    pub bitrate_bps: f64,
    pub proc_delay_s: f64,
    /// Mobility advance interval.
    pub tick_s: f64,
    pub rpgm_groups: u32,
    pub rpgm_deviation_m: f64,
    pub seed: u64,
    pub traffic_start_s: f64,
    /// Last moment a flow may emit; defaults to the run duration.
    pub traffic_stop_s: Option<f64>,
    /// Number of flows; defaults to ceil(nodes / 4).
    pub flows: Option<usize>,
    /// Explicit source:destination pairs overriding random flow choice.
    pub flow_pairs: Option<Vec<(NodeId, NodeId)>>,
    /// Explicit starting positions overriding random placement.
    pub positions: Option<Vec<(f64, f64)>>,
    pub mrp: MrpParams,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            area: Area::new(600.0, 600.0),
            nodes: 20,
            speeds: SpeedRange { min: 0.5, max: 5.0 },
            pause_s: 0.0,
            mobility: MobilityModel::Rpgm,
            protocol: ProtocolChoice::Single(ProtocolId::Aodv),
            traffic_rate: 8.0,
            payload_bytes: 512,
            queue_len: 50,
            duration_s: 100.0,
            range_m: 250.0,
            bitrate_bps: 2_000_000.0,
            proc_delay_s: 0.001,
            tick_s: 0.1,
            rpgm_groups: 4,
            rpgm_deviation_m: 50.0,
            seed: 1,
            traffic_start_s: 0.0,
            traffic_stop_s: None,
            flows: None,
            flow_pairs: None,
            positions: None,
            mrp: MrpParams::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected key=value, got '{text}'")]
    MissingEquals { line: usize, text: String },
    #[error("line {line}: bad value '{value}' for key '{key}'")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    /// Parses the flat format. Lines are `key=value`; `#` starts a
    /// comment; blank lines are ignored. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        let mut flow_count: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScenarioError::MissingEquals {
                    line: line_no,
                    text: line.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = || ScenarioError::BadValue {
                line: line_no,
                key: key.to_string(),
                value: value.to_string(),
            };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad())?
                };
            }
            match key {
                "area_width" => cfg.area.width = num!(),
                "area_height" => cfg.area.height = num!(),
                "nodes" => cfg.nodes = num!(),
                "speed_min" => cfg.speeds.min = num!(),
                "speed_max" => cfg.speeds.max = num!(),
                "pause" => cfg.pause_s = num!(),
                "mobility" => cfg.mobility = MobilityModel::parse(value).ok_or_else(bad)?,
                "protocol" => cfg.protocol = ProtocolChoice::parse(value).ok_or_else(bad)?,
                "traffic_rate" => cfg.traffic_rate = num!(),
                "payload" => cfg.payload_bytes = num!(),
                "queue_len" => cfg.queue_len = num!(),
                "duration" => cfg.duration_s = num!(),
                "range" => cfg.range_m = num!(),
                "bitrate" => cfg.bitrate_bps = num!(),
                "proc_delay" => cfg.proc_delay_s = num!(),
                "tick" => cfg.tick_s = num!(),
                "rpgm_groups" => cfg.rpgm_groups = num!(),
                "rpgm_deviation" => cfg.rpgm_deviation_m = num!(),
                "seed" => cfg.seed = num!(),
                "traffic_start" => cfg.traffic_start_s = num!(),
                "traffic_stop" => cfg.traffic_stop_s = Some(num!()),
                "flows" => flow_count = Some(num!()),
                "flow_pairs" => {
                    let mut pairs = Vec::new();
                    for part in value.split(',') {
                        let (a, b) = part.trim().split_once(':').ok_or_else(bad)?;
                        let a: u32 = a.trim().parse().map_err(|_| bad())?;
                        let b: u32 = b.trim().parse().map_err(|_| bad())?;
                        pairs.push((NodeId(a), NodeId(b)));
                    }
                    cfg.flow_pairs = Some(pairs);
                }
                "positions" => {
                    let mut ps = Vec::new();
                    for part in value.split(',') {
                        let (x, y) = part.trim().split_once(':').ok_or_else(bad)?;
                        let x: f64 = x.trim().parse().map_err(|_| bad())?;
                        let y: f64 = y.trim().parse().map_err(|_| bad())?;
                        ps.push((x, y));
                    }
                    cfg.positions = Some(ps);
                }
                "mrp_primary" => cfg.mrp.primary = ProtocolId::parse(value).ok_or_else(bad)?,
                "mrp_secondary" => cfg.mrp.secondary = ProtocolId::parse(value).ok_or_else(bad)?,
                "mrp_policy" => cfg.mrp.policy = MrpPolicy::parse(value).ok_or_else(bad)?,
                "mrp_epoch" => cfg.mrp.epoch_s = num!(),
                "mrp_hysteresis" => cfg.mrp.hysteresis = num!(),
                "mrp_min_dwell" => cfg.mrp.min_dwell = num!(),
                "mrp_delay_scale" => cfg.mrp.delay_scale_s = num!(),
                "mrp_ctrl_scale" => cfg.mrp.ctrl_scale = num!(),
                "mrp_count_standby_overhead" => {
                    cfg.mrp.count_standby_overhead = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        line: line_no,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.flows = flow_count;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |msg: String| Err(ScenarioError::Invalid(msg));
        if self.nodes < 2 {
            return err(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return err("area dimensions must be positive".into());
        }
        if self.speeds.min < 0.0 || self.speeds.max < self.speeds.min {
            return err(format!(
                "speed range [{}, {}] must satisfy 0 <= min <= max",
                self.speeds.min, self.speeds.max
            ));
        }
        if self.mobility != MobilityModel::Static && self.speeds.max <= 0.0 {
            return err("moving models need speed_max > 0".into());
        }
        if self.pause_s < 0.0 {
            return err("pause must be >= 0".into());
        }
        if self.duration_s <= 0.0 || self.tick_s <= 0.0 {
            return err("duration and tick must be positive".into());
        }
        if self.traffic_rate <= 0.0 {
            return err("traffic_rate must be positive".into());
        }
        if self.payload_bytes == 0 {
            return err("payload must be positive".into());
        }
        if self.queue_len == 0 {
            return err("queue_len must be positive".into());
        }
        if self.range_m <= 0.0 || self.bitrate_bps <= 0.0 || self.proc_delay_s < 0.0 {
            return err("radio parameters out of range".into());
        }
        if self.rpgm_groups == 0 || self.rpgm_deviation_m < 0.0 {
            return err("group mobility parameters out of range".into());
        }
        if self.traffic_start_s < 0.0 || self.traffic_start_s >= self.duration_s {
            return err(format!(
                "traffic_start {} outside [0, duration)",
                self.traffic_start_s
            ));
        }
        if let Some(stop) = self.traffic_stop_s {
            if stop <= self.traffic_start_s || stop > self.duration_s {
                return err(format!("traffic_stop {stop} outside (start, duration]"));
            }
        }
        if let Some(pairs) = &self.flow_pairs {
            if pairs.is_empty() {
                return err("flow_pairs must not be empty".into());
            }
            for (s, d) in pairs {
                if s.index() >= self.nodes || d.index() >= self.nodes {
                    return err(format!("flow pair {s}:{d} references a missing node"));
                }
                if s == d {
                    return err(format!("flow {s}:{d} sends to itself"));
                }
            }
        }
        if let Some(f) = self.flows {
            if f == 0 || 2 * f > self.nodes {
                return err(format!(
                    "{f} flows need {} distinct endpoints but there are {} nodes",
                    2 * f,
                    self.nodes
                ));
            }
        }
        if let Some(ps) = &self.positions {
            if ps.len() != self.nodes {
                return err(format!(
                    "positions lists {} nodes, scenario has {}",
                    ps.len(),
                    self.nodes
                ));
            }
        }
        if self.protocol == ProtocolChoice::Mrp {
            if self.mrp.primary == self.mrp.secondary {
                return err("mrp_primary and mrp_secondary must differ".into());
            }
            if self.mrp.epoch_s <= 0.0 || self.mrp.epoch_s > self.duration_s {
                return err("mrp_epoch outside (0, duration]".into());
            }
            if self.mrp.hysteresis < 0.0 {
                return err("mrp_hysteresis must be >= 0".into());
            }
        }
        Ok(())
    }

    /// Number of flows actually run.
    pub fn effective_flows(&self) -> usize {
        if let Some(pairs) = &self.flow_pairs {
            return pairs.len();
        }
        self.flows.unwrap_or_else(|| self.nodes.div_ceil(4))
    }

    pub fn traffic_stop(&self) -> f64 {
        self.traffic_stop_s.unwrap_or(self.duration_s)
    }

    /// Round-trips through [`ScenarioConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "area_width={}", self.area.width);
        let _ = writeln!(s, "area_height={}", self.area.height);
        let _ = writeln!(s, "nodes={}", self.nodes);
        let _ = writeln!(s, "speed_min={}", self.speeds.min);
        let _ = writeln!(s, "speed_max={}", self.speeds.max);
        let _ = writeln!(s, "pause={}", self.pause_s);
        let _ = writeln!(s, "mobility={}", self.mobility.name());
        let _ = writeln!(s, "protocol={}", self.protocol.name());
        let _ = writeln!(s, "traffic_rate={}", self.traffic_rate);
        let _ = writeln!(s, "payload={}", self.payload_bytes);
        let _ = writeln!(s, "queue_len={}", self.queue_len);
        let _ = writeln!(s, "duration={}", self.duration_s);
        let _ = writeln!(s, "range={}", self.range_m);
        let _ = writeln!(s, "bitrate={}", self.bitrate_bps);
        let _ = writeln!(s, "proc_delay={}", self.proc_delay_s);
        let _ = writeln!(s, "tick={}", self.tick_s);
        let _ = writeln!(s, "rpgm_groups={}", self.rpgm_groups);
        let _ = writeln!(s, "rpgm_deviation={}", self.rpgm_deviation_m);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "traffic_start={}", self.traffic_start_s);
        if let Some(stop) = self.traffic_stop_s {
            let _ = writeln!(s, "traffic_stop={stop}");
        }
        if let Some(f) = self.flows {
            let _ = writeln!(s, "flows={f}");
        }
        if let Some(pairs) = &self.flow_pairs {
            let joined: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}:{b}")).collect();
            let _ = writeln!(s, "flow_pairs={}", joined.join(","));
        }
        if let Some(ps) = &self.positions {
            let joined: Vec<String> = ps.iter().map(|(x, y)| format!("{x}:{y}")).collect();
            let _ = writeln!(s, "positions={}", joined.join(","));
        }
        let _ = writeln!(s, "mrp_primary={}", self.mrp.primary.name());
        let _ = writeln!(s, "mrp_secondary={}", self.mrp.secondary.name());
        let _ = writeln!(s, "mrp_policy={}", self.mrp.policy.name());
        let _ = writeln!(s, "mrp_epoch={}", self.mrp.epoch_s);
        let _ = writeln!(s, "mrp_hysteresis={}", self.mrp.hysteresis);
        let _ = writeln!(s, "mrp_min_dwell={}", self.mrp.min_dwell);
        let _ = writeln!(s, "mrp_delay_scale={}", self.mrp.delay_scale_s);
        let _ = writeln!(s, "mrp_ctrl_scale={}", self.mrp.ctrl_scale);
        let _ = writeln!(
            s,
            "mrp_count_standby_overhead={}",
            self.mrp.count_standby_overhead
        );
        s
    }

    /// Applies a `key=value` override on top of the current config, as
    /// used by sweeps and `--set` command-line flags.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let merged = format!("{}\n{key}={value}\n", self.to_text());
        *self = ScenarioConfig::parse(&merged)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard_setup() {
        let c = ScenarioConfig::default();
        assert_eq!(c.area, Area::new(600.0, 600.0));
        assert_eq!(c.nodes, 20);
        assert_eq!(c.speeds, SpeedRange { min: 0.5, max: 5.0 });
        assert_eq!(c.pause_s, 0.0);
        assert_eq!(c.mobility, MobilityModel::Rpgm);
        assert_eq!(c.traffic_rate, 8.0);
        assert_eq!(c.payload_bytes, 512);
        assert_eq!(c.queue_len, 50);
        assert_eq!(c.duration_s, 100.0);
        assert_eq!(c.effective_flows(), 5);
    }

    #[test]
    fn parses_comments_and_whitespace() {
        let text = "\
# comparison run
nodes = 40   # denser field
protocol=dsr

speed_max=10
";
        let c = ScenarioConfig::parse(text).unwrap();
        assert_eq!(c.nodes, 40);
        assert_eq!(c.protocol, ProtocolChoice::Single(ProtocolId::Dsr));
        assert_eq!(c.speeds.max, 10.0);
        assert_eq!(c.effective_flows(), 10);
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let err = ScenarioConfig::parse("nodes=10\nspped_max=3\n").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::UnknownKey {
                line: 2,
                key: "spped_max".into()
            }
        );
    }

    #[test]
    fn bad_value_reports_key_and_line() {
        let err = ScenarioConfig::parse("nodes=twenty\n").unwrap_err();
        assert!(matches!(err, ScenarioError::BadValue { line: 1, .. }));
    }

    #[test]
    fn flow_pairs_and_positions_round_trip() {
        let text = "\
nodes=4
protocol=dsdv
flow_pairs=0:3,1:2
positions=0:0,100:0,200:0,300:0
";
        let c = ScenarioConfig::parse(text).unwrap();
        assert_eq!(
            c.flow_pairs,
            Some(vec![(NodeId(0), NodeId(3)), (NodeId(1), NodeId(2))])
        );
        assert_eq!(c.positions.as_ref().unwrap().len(), 4);
        let again = ScenarioConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn validation_rejects_inconsistencies() {
        assert!(ScenarioConfig::parse("nodes=1\n").is_err());
        assert!(ScenarioConfig::parse("speed_min=5\nspeed_max=1\n").is_err());
        assert!(ScenarioConfig::parse("nodes=4\nflow_pairs=0:9\n").is_err());
        assert!(ScenarioConfig::parse("nodes=4\nflow_pairs=2:2\n").is_err());
        assert!(ScenarioConfig::parse("nodes=4\npositions=0:0\n").is_err());
        assert!(ScenarioConfig::parse("protocol=mrp\nmrp_secondary=aodv\n").is_err());
        assert!(ScenarioConfig::parse("flows=11\n").is_err(), "2*11 > 20 nodes");
    }

    #[test]
    fn default_round_trips_through_text() {
        let c = ScenarioConfig::default();
        let again = ScenarioConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut c = ScenarioConfig::default();
        c.apply_override("nodes", "60").unwrap();
        assert_eq!(c.nodes, 60);
        assert!(c.apply_override("nodes", "0").is_err());
    }
}
