//! Node mobility: random direction, random waypoint and reference-point
//! group mobility, advanced in fixed ticks by the engine.

use std::fmt::Write as _;

use crate::engine::{RngStream, SimTime, StreamId};
use crate::packet::NodeId;

/// Rectangular simulation field, origin at (0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Area {
        assert!(width > 0.0 && height > 0.0, "area must be positive");
        Area { width, height }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Projection onto the rectangle. Non-expansive, so clamping a point
    /// never increases its distance to any point already inside.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2 {
            x: p.x.clamp(0.0, self.width),
            y: p.y.clamp(0.0, self.height),
        }
    }

    pub fn random_point(&self, rng: &mut RngStream) -> Vec2 {
        Vec2 {
            x: rng.uniform(0.0, self.width),
            y: rng.uniform(0.0, self.height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn dist_sq(self, o: Vec2) -> f64 {
        let d = self.sub(o);
        d.x * d.x + d.y * d.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRange {
    pub min: f64,
    pub max: f64,
}

impl SpeedRange {
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.uniform(self.min, self.max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Moving,
    Paused,
}

/// Kinematic state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub phase: Phase,
    pub waypoint: Option<Vec2>,
    pub pause_until: Option<SimTime>,
}

impl MobilityState {
    pub fn at_rest(position: Vec2) -> MobilityState {
        MobilityState {
            position,
            velocity: Vec2::default(),
            phase: Phase::Paused,
            waypoint: None,
            pause_until: None,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Group membership for RPGM.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    pub group: u32,
    pub leader: bool,
    /// Fixed offset of this member's reference point from the leader.
    pub offset: Vec2,
    pub deviation_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityModel {
    RandomDirection,
    RandomWaypoint,
    Rpgm,
    /// Nodes never move. Not one of the compared models; exists for
    /// scripted topologies and debugging.
    Static,
}

impl MobilityModel {
    pub fn name(self) -> &'static str {
        match self {
            MobilityModel::RandomDirection => "random_direction",
            MobilityModel::RandomWaypoint => "random_waypoint",
            MobilityModel::Rpgm => "rpgm",
            MobilityModel::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<MobilityModel> {
        match s {
            "random_direction" => Some(MobilityModel::RandomDirection),
            "random_waypoint" => Some(MobilityModel::RandomWaypoint),
            "rpgm" => Some(MobilityModel::Rpgm),
            "static" => Some(MobilityModel::Static),
            _ => None,
        }
    }
}

fn draw_heading(speeds: SpeedRange, rng: &mut RngStream) -> Vec2 {
    let (dx, dy) = rng.unit_vector();
    let speed = speeds.draw(rng);
    Vec2::new(dx * speed, dy * speed)
}

/// Redraws headings until the velocity points into the area from `pos`.
/// Components pinned to a boundary get their sign forced inward, so this
/// terminates on the first draw.
fn draw_inward_heading(pos: Vec2, area: &Area, speeds: SpeedRange, rng: &mut RngStream) -> Vec2 {
    let mut v = draw_heading(speeds, rng);
    if (pos.x <= 0.0 && v.x < 0.0) || (pos.x >= area.width && v.x > 0.0) {
        v.x = -v.x;
    }
    if (pos.y <= 0.0 && v.y < 0.0) || (pos.y >= area.height && v.y > 0.0) {
        v.y = -v.y;
    }
    v
}

/// Random direction: move straight, redraw an inward heading and a new
/// speed on boundary contact. No pausing.
pub fn step_random_direction(
    state: &mut MobilityState,
    area: &Area,
    speeds: SpeedRange,
    dt: f64,
    rng: &mut RngStream,
) {
    assert!(dt > 0.0);
    state.phase = Phase::Moving;
    let mut remaining = dt;
    // Bounded iterations: each pass either exhausts dt or reaches a wall.
    for _ in 0..16 {
        if remaining <= 0.0 {
            return;
        }
        let v = state.velocity;
        if v.x == 0.0 && v.y == 0.0 {
            state.velocity = draw_inward_heading(state.position, area, speeds, rng);
            continue;
        }
        // Time until the current heading hits a wall.
        let mut hit = f64::INFINITY;
        if v.x > 0.0 {
            hit = hit.min((area.width - state.position.x) / v.x);
        } else if v.x < 0.0 {
            hit = hit.min(-state.position.x / v.x);
        }
        if v.y > 0.0 {
            hit = hit.min((area.height - state.position.y) / v.y);
        } else if v.y < 0.0 {
            hit = hit.min(-state.position.y / v.y);
        }
        if hit > remaining {
            state.position = area.clamp(state.position.add(v.scale(remaining)));
            return;
        }
        state.position = area.clamp(state.position.add(v.scale(hit.max(0.0))));
        state.velocity = draw_inward_heading(state.position, area, speeds, rng);
        remaining -= hit.max(0.0);
        if hit <= 0.0 {
            // Pinned on the wall with an outward heading; the redraw above
            // already fixed the sign, keep going with full remaining time.
            continue;
        }
    }
    state.position = area.clamp(state.position);
}

/// Random waypoint: head to the waypoint, pause on arrival, then draw a
/// fresh waypoint and speed. With `pause == 0` the fresh waypoint is
/// available the instant the old one is reached.
pub fn step_random_waypoint(
    state: &mut MobilityState,
    area: &Area,
    speeds: SpeedRange,
    pause: f64,
    dt: f64,
    now: SimTime,
    rng: &mut RngStream,
) {
    assert!(dt > 0.0 && pause >= 0.0);
    let tick_start = now.secs() - dt;
    let mut t = tick_start;
    let tick_end = now.secs();
    for _ in 0..64 {
        if t >= tick_end {
            break;
        }
        match state.phase {
            Phase::Paused => {
                let resume = state.pause_until.map(|p| p.secs()).unwrap_or(t);
                if resume > tick_end {
                    return; // still pausing at tick end
                }
                t = t.max(resume);
                state.waypoint = Some(area.random_point(rng));
                let speed = speeds.draw(rng);
                let wp = state.waypoint.unwrap();
                let delta = wp.sub(state.position);
                let dist = delta.norm();
                state.velocity = if dist > 0.0 {
                    delta.scale(speed / dist)
                } else {
                    Vec2::default()
                };
                state.phase = Phase::Moving;
                state.pause_until = None;
            }
            Phase::Moving => {
                let Some(wp) = state.waypoint else {
                    // First tick: treat as an expired pause to draw a target.
                    state.phase = Phase::Paused;
                    state.pause_until = Some(SimTime::from_secs(t.max(0.0)));
                    continue;
                };
                let speed = state.velocity.norm();
                if speed <= 0.0 {
                    state.position = wp;
                    state.phase = Phase::Paused;
                    state.pause_until = Some(SimTime::from_secs(t.max(0.0) + pause));
                    continue;
                }
                let dist = state.position.dist(wp);
                let arrival = t + dist / speed;
                if arrival > tick_end {
                    state.position = area
                        .clamp(state.position.add(state.velocity.scale(tick_end - t)));
                    return;
                }
                // Land exactly on the waypoint, then pause (possibly for 0 s).
                state.position = wp;
                state.velocity = Vec2::default();
                state.phase = Phase::Paused;
                state.pause_until = Some(SimTime::from_secs(arrival.max(0.0) + pause));
                t = arrival;
            }
        }
    }
}

/// RPGM: the leader moves by the random-waypoint rule; each member sits at
/// its reference point (leader position + fixed offset, clamped into the
/// area) plus a fresh random displacement of magnitude at most the
/// deviation radius.
#[allow(clippy::too_many_arguments)]
pub fn step_rpgm_member(
    member: &mut MobilityState,
    assignment: &GroupAssignment,
    leader_pos: Vec2,
    area: &Area,
    dt: f64,
    rng: &mut RngStream,
) {
    assert!(dt > 0.0);
    let reference = area.clamp(leader_pos.add(assignment.offset));
    let new_pos = if assignment.deviation_radius > 0.0 {
        let (ux, uy) = rng.unit_vector();
        // sqrt for an area-uniform displacement inside the disk
        let r = assignment.deviation_radius * rng.next_f64().sqrt();
        area.clamp(reference.add(Vec2::new(ux * r, uy * r)))
    } else {
        reference
    };
    member.velocity = new_pos.sub(member.position).scale(1.0 / dt);
    member.position = new_pos;
    member.phase = Phase::Moving;
}

/// Clamped reference point of a member given its leader's position.
pub fn rpgm_reference(leader_pos: Vec2, assignment: &GroupAssignment, area: &Area) -> Vec2 {
    area.clamp(leader_pos.add(assignment.offset))
}

/// Positions and kinematics for every node in a run.
pub struct MobilityField {
    pub model: MobilityModel,
    pub area: Area,
    pub speeds: SpeedRange,
    pub pause: f64,
    states: Vec<MobilityState>,
    groups: Vec<GroupAssignment>,
    rngs: Vec<RngStream>,
}

impl MobilityField {
    /// Places nodes and initializes per-model state. `positions` overrides
    /// random placement when given (scripted topologies).
    pub fn new(
        model: MobilityModel,
        area: Area,
        speeds: SpeedRange,
        pause: f64,
        n_nodes: usize,
        group_count: u32,
        deviation_radius: f64,
        seed: u64,
        positions: Option<&[(f64, f64)]>,
    ) -> MobilityField {
        let mut placement = RngStream::new(seed, StreamId::Placement);
        let mut rngs: Vec<RngStream> = (0..n_nodes)
            .map(|i| RngStream::new(seed, StreamId::Mobility(i as u32)))
            .collect();
        let mut states: Vec<MobilityState> = (0..n_nodes)
            .map(|i| {
                let pos = match positions {
                    Some(ps) => area.clamp(Vec2::new(ps[i].0, ps[i].1)),
                    None => area.random_point(&mut placement),
                };
                MobilityState::at_rest(pos)
            })
            .collect();

        let mut groups = Vec::new();
        match model {
            MobilityModel::Rpgm => {
                let g = group_count.max(1);
                for i in 0..n_nodes {
                    let group = i as u32 % g;
                    let leader = i < g as usize; // round-robin: first node of each group leads
                    let offset = if leader {
                        Vec2::default()
                    } else {
                        let (ux, uy) = rngs[i].unit_vector();
                        let r = deviation_radius * rngs[i].next_f64().sqrt();
                        Vec2::new(ux * r, uy * r)
                    };
                    groups.push(GroupAssignment {
                        group,
                        leader,
                        offset,
                        deviation_radius,
                    });
                }
            }
            MobilityModel::RandomDirection => {
                for i in 0..n_nodes {
                    states[i].velocity =
                        draw_inward_heading(states[i].position, &area, speeds, &mut rngs[i]);
                    states[i].phase = Phase::Moving;
                }
            }
            MobilityModel::RandomWaypoint | MobilityModel::Static => {}
        }

        MobilityField {
            model,
            area,
            speeds,
            pause,
            states,
            groups,
            rngs,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Vec2 {
        self.states[node.index()].position
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.states.iter().map(|s| s.position).collect()
    }

    pub fn state(&self, node: NodeId) -> &MobilityState {
        &self.states[node.index()]
    }

    pub fn groups(&self) -> &[GroupAssignment] {
        &self.groups
    }

    /// Advances every node to `now`, `dt` seconds past the previous tick.
    pub fn tick(&mut self, dt: f64, now: SimTime) {
        match self.model {
            MobilityModel::Static => {}
            MobilityModel::RandomDirection => {
                for i in 0..self.states.len() {
                    step_random_direction(
                        &mut self.states[i],
                        &self.area,
                        self.speeds,
                        dt,
                        &mut self.rngs[i],
                    );
                }
            }
            MobilityModel::RandomWaypoint => {
                for i in 0..self.states.len() {
                    step_random_waypoint(
                        &mut self.states[i],
                        &self.area,
                        self.speeds,
                        self.pause,
                        dt,
                        now,
                        &mut self.rngs[i],
                    );
                }
            }
            MobilityModel::Rpgm => {
                // Leaders move first so members see this tick's leader position.
                for i in 0..self.states.len() {
                    if self.groups[i].leader {
                        step_random_waypoint(
                            &mut self.states[i],
                            &self.area,
                            self.speeds,
                            self.pause,
                            dt,
                            now,
                            &mut self.rngs[i],
                        );
                    }
                }
                for i in 0..self.states.len() {
                    if !self.groups[i].leader {
                        let leader_pos = self.leader_position(self.groups[i].group);
                        let assignment = self.groups[i].clone();
                        step_rpgm_member(
                            &mut self.states[i],
                            &assignment,
                            leader_pos,
                            &self.area,
                            dt,
                            &mut self.rngs[i],
                        );
                    }
                }
            }
        }
    }

    pub fn leader_position(&self, group: u32) -> Vec2 {
        for (i, g) in self.groups.iter().enumerate() {
            if g.group == group && g.leader {
                return self.states[i].position;
            }
        }
        panic!("group {group} has no leader");
    }

    /// One CSV line per node: `time,node,x,y`.
    pub fn positions_csv(&self, now: SimTime) -> String {
        let mut out = String::new();
        for (i, s) in self.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3}",
                now, i, s.position.x, s.position.y
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AREA: Area = Area {
        width: 600.0,
        height: 600.0,
    };
    const SPEEDS: SpeedRange = SpeedRange { min: 0.5, max: 5.0 };

    fn rng() -> RngStream {
        RngStream::new(99, StreamId::Mobility(0))
    }

    #[test]
    fn straight_line_kinematics() {
        let mut s = MobilityState::at_rest(Vec2::new(300.0, 300.0));
        s.velocity = Vec2::new(1.0, 0.0);
        s.phase = Phase::Moving;
        let mut r = rng();
        step_random_direction(&mut s, &AREA, SPEEDS, 1.0, &mut r);
        assert_eq!(s.position, Vec2::new(301.0, 300.0));
        assert_eq!(s.velocity, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn boundary_contact_redraws_inward() {
        let mut s = MobilityState::at_rest(Vec2::new(599.5, 300.0));
        s.velocity = Vec2::new(5.0, 0.0);
        s.phase = Phase::Moving;
        let mut r = rng();
        step_random_direction(&mut s, &AREA, SPEEDS, 1.0, &mut r);
        assert!(AREA.contains(s.position));
        assert!(s.velocity.x < 0.0, "heading must point away from the right wall");
    }

    #[test]
    fn random_direction_contained_over_many_steps() {
        let mut s = MobilityState::at_rest(Vec2::new(300.0, 300.0));
        let mut r = rng();
        for _ in 0..100_000 {
            step_random_direction(&mut s, &AREA, SPEEDS, 0.1, &mut r);
            assert!(AREA.contains(s.position), "escaped at {:?}", s.position);
            let v = s.speed();
            assert!((SPEEDS.min..=SPEEDS.max).contains(&v), "speed {v}");
        }
    }

    #[test]
    fn waypoint_arrival_with_zero_pause_gets_fresh_target() {
        let mut s = MobilityState::at_rest(Vec2::new(100.0, 100.0));
        s.waypoint = Some(Vec2::new(110.0, 100.0));
        s.velocity = Vec2::new(5.0, 0.0);
        s.phase = Phase::Moving;
        let mut r = rng();
        let dt = 0.1;
        let mut now = 0.0;
        // 10 m at 5 m/s arrives near t = 2.0; a few extra ticks absorb
        // accumulated rounding in the per-tick advance.
        for _ in 0..25 {
            now += dt;
            step_random_waypoint(&mut s, &AREA, SPEEDS, 0.0, dt, SimTime::from_secs(now), &mut r);
        }
        assert!(
            s.waypoint != Some(Vec2::new(110.0, 100.0)),
            "waypoint must be refreshed on arrival"
        );
        assert_eq!(s.phase, Phase::Moving);
    }

    #[test]
    fn pause_holds_position_for_exactly_the_pause_time() {
        let pause = 3.0;
        let mut s = MobilityState::at_rest(Vec2::new(100.0, 100.0));
        s.waypoint = Some(Vec2::new(101.0, 100.0));
        s.velocity = Vec2::new(1.0, 0.0);
        s.phase = Phase::Moving;
        let mut r = rng();
        let dt = 0.1;
        let mut positions = Vec::new();
        for k in 1..=60 {
            let now = SimTime::from_secs(k as f64 * dt);
            step_random_waypoint(&mut s, &AREA, SPEEDS, pause, dt, now, &mut r);
            positions.push(s.position);
        }
        // Arrival pins the position to the waypoint exactly; it must stay
        // there for the full pause (30 ticks) and move again afterwards.
        let wp = Vec2::new(101.0, 100.0);
        let arrived = positions
            .iter()
            .position(|p| *p == wp)
            .expect("never reached the waypoint");
        assert!(arrived <= 11, "arrival later than one tick of slop");
        for (k, p) in positions.iter().enumerate() {
            if k > arrived && k < arrived + 29 {
                assert_eq!(*p, wp, "moved during pause at tick {k}");
            }
        }
        let moved = positions.iter().skip(arrived + 32).any(|p| *p != wp);
        assert!(moved, "never resumed after pause");
    }

    #[test]
    fn waypoint_speed_draws_average_to_range_midpoint() {
        // Monte-Carlo over the declared uniform speed draw.
        let mut r = rng();
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            total += SPEEDS.draw(&mut r);
        }
        let mean = total / n as f64;
        let midpoint = (SPEEDS.min + SPEEDS.max) / 2.0;
        assert!(
            (mean - midpoint).abs() / midpoint < 0.05,
            "mean {mean} vs midpoint {midpoint}"
        );
    }

    #[test]
    fn zero_deviation_member_tracks_reference_exactly() {
        let assignment = GroupAssignment {
            group: 0,
            leader: false,
            offset: Vec2::new(10.0, 5.0),
            deviation_radius: 0.0,
        };
        let mut member = MobilityState::at_rest(Vec2::new(0.0, 0.0));
        let mut r = rng();
        let leader_pos = Vec2::new(200.0, 200.0);
        step_rpgm_member(&mut member, &assignment, leader_pos, &AREA, 0.1, &mut r);
        assert_eq!(member.position, Vec2::new(210.0, 205.0));
    }

    #[test]
    fn leader_translation_shifts_every_reference_rigidly() {
        let offsets = [Vec2::new(3.0, 4.0), Vec2::new(-7.0, 2.0), Vec2::new(0.0, -9.0)];
        let before = Vec2::new(250.0, 250.0);
        let after = before.add(Vec2::new(10.0, 0.0));
        for off in offsets {
            let a = GroupAssignment {
                group: 0,
                leader: false,
                offset: off,
                deviation_radius: 20.0,
            };
            let r0 = rpgm_reference(before, &a, &AREA);
            let r1 = rpgm_reference(after, &a, &AREA);
            assert_eq!(r1.sub(r0), Vec2::new(10.0, 0.0));
        }
    }

    #[test]
    fn rpgm_members_stay_within_deviation_radius() {
        let mut field = MobilityField::new(
            MobilityModel::Rpgm,
            AREA,
            SPEEDS,
            0.0,
            12,
            4,
            50.0,
            7,
            None,
        );
        let mut max_dev: f64 = 0.0;
        for k in 1..=2000 {
            field.tick(0.1, SimTime::from_secs(k as f64 * 0.1));
            for i in 0..field.len() {
                let g = &field.groups()[i];
                assert!(AREA.contains(field.states[i].position));
                if !g.leader {
                    let leader = field.leader_position(g.group);
                    let reference = rpgm_reference(leader, g, &AREA);
                    max_dev = max_dev.max(field.states[i].position.dist(reference));
                }
            }
        }
        assert!(max_dev <= 50.0 + 1e-9, "max deviation {max_dev}");
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let build = || {
            MobilityField::new(
                MobilityModel::RandomWaypoint,
                AREA,
                SPEEDS,
                0.0,
                10,
                4,
                50.0,
                1234,
                None,
            )
        };
        let mut a = build();
        let mut b = build();
        for k in 1..=500 {
            let now = SimTime::from_secs(k as f64 * 0.1);
            a.tick(0.1, now);
            b.tick(0.1, now);
            assert_eq!(a.positions(), b.positions());
        }
    }
}
