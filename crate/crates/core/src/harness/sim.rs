//! The deterministic stepping loop tying agents, tasks, hands and negotiation together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, HandConfig, HandProfile, ResolvedRobot, RunConfig};
use super::trace::{AgentRecord, EventBody, MessageRecord, SimEvent, TraceRecord};
use crate::agent::{
    aggregate_forces, step_agent, AgentId, AgentState, AttachmentClass, AttachmentId, BodyAnchor, Component,
    ComponentAttachment, DynamicsParams, ForceBreakdown, HandSnapshot, OtherAnchor, WorldSnapshot, BODY_POINTS,
};
use crate::components::TimeLawFilter;
use crate::coordination::{
    stall_metric, Baseline, LocalStatus, NegotiationEvent, Negotiator, NegotiatorConfig,
    SelectionRules, StallDetector, StallMetricSample, ToggleCommand, Transport,
};
use crate::scenario::{
    build_layout, ApproachScript, HandSource, Keyframe, LayoutError, Phase, PickPlaceStateMachine, ScenarioKind,
    TaskBoard, WorldDescription, SENSING_PERIOD,
};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{0}")]
    Hand(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    Running,
    Completed,
    Capped,
    Faulted { reason: String },
}

const CLASSES: [AttachmentClass; 5] = [
    AttachmentClass::Goal,
    AttachmentClass::RobotAvoidance,
    AttachmentClass::HandAvoidance,
    AttachmentClass::HandDamper,
    AttachmentClass::Obstacle,
];

#[derive(Debug, Clone)]
struct Hold {
    since: f64,
    transitions: u64,
}

#[derive(Debug)]
pub struct Simulation {
    cfg: RunConfig,
    world: WorldDescription,
    step: u64,
    robots: Vec<AgentState>,
    params: Vec<ResolvedRobot>,
    attachments: Vec<Vec<ComponentAttachment>>,
    goals: Vec<Option<TimeLawFilter>>,
    goal_target: Vec<Option<Vec3>>,
    goal_enabled: Vec<bool>,
    machines: Vec<Option<PickPlaceStateMachine>>,
    board: TaskBoard,
    hands: Vec<HandSource>,
    hand_snaps: Vec<HandSnapshot>,
    hand_end: Option<f64>,
    human_next: Option<f64>,
    breakdowns: Vec<ForceBreakdown>,
    metrics: Vec<(f64, f64, f64)>,
    detectors: Vec<StallDetector>,
    stalled: Vec<bool>,
    negotiators: Vec<Negotiator>,
    transport: Transport,
    holds: Vec<Option<Hold>>,
    pending_events: Vec<SimEvent>,
    pending_messages: Vec<MessageRecord>,
    last_record_step: Option<u64>,
    records_out: Vec<TraceRecord>,
    outcome: StepOutcome,
}

fn approach_keyframes(a: &super::config::ApproachConfig, seed: u64) -> Vec<Keyframe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4A4D);
    let mut out = Vec::new();
    let mut t = a.first_start;
    for _ in 0..a.repeats {
        let jitter = if a.jitter > 0.0 { rng.gen_range(-a.jitter..=a.jitter) } else { 0.0 };
        let s = ApproachScript { start: a.start, target: a.target + Vec3::new(jitter, 0.0, 0.0), speed: a.speed, start_time: t, hold: a.hold };
        let mut k = s.keyframes();
        if a.rest > 0.0 {
            out.append(&mut k);
        } else {
            k.pop();
            out.append(&mut k);
        }
        t = s.end_time() + a.rest.max(SENSING_PERIOD) + SENSING_PERIOD;
    }
    out
}

/// A scripted human reaching into the grid once per placement.
fn human_keyframes(rest: Vec3, first: f64, interval: f64, count: usize) -> Vec<Keyframe> {
    let reach = Vec3::new(rest.x, rest.y.signum() * 0.06, 0.12);
    let mut out = Vec::new();
    for k in 0..count {
        let t = first + interval * k as f64;
        out.push(Keyframe { t: t - 1.0, position: Some(rest) });
        out.push(Keyframe { t: t - 0.3, position: Some(reach) });
        out.push(Keyframe { t: t + 0.3, position: Some(reach) });
        out.push(Keyframe { t: t + 1.0, position: Some(rest) });
        out.push(Keyframe { t: t + 1.1, position: None });
    }
    out
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self, SetupError> {
        cfg.validate()?;
        let n = cfg.scenario.n_robots;
        let world = build_layout(n, cfg.scenario.kind, cfg.seed)?;
        let params: Vec<ResolvedRobot> = (0..n).map(|i| cfg.resolve_robot(i)).collect::<Result<_, _>>()?;
        let table = cfg.table_spec()?;
        let ids: Vec<AgentId> = (0..n as u32).map(AgentId::robot).collect();

        let robots: Vec<AgentState> = (0..n)
            .map(|i| {
                let m = &world.layout.robots[i];
                AgentState::new_robot(i as u32, m.base, m.rest, params[i].virtual_mass, m.reach)
            })
            .collect();

        // Hands.
        let mut hands = Vec::new();
        let mut hand_end = None;
        let make = |h: Result<HandSource, _>| -> Result<HandSource, SetupError> {
            let h: HandSource = h.map_err(|e: crate::scenario::HandError| SetupError::Hand(e.to_string()))?;
            h.with_cluster(cfg.hand_keypoints, cfg.hand_cluster_radius).map_err(|e| SetupError::Hand(e.to_string()))
        };
        match &cfg.hand {
            HandConfig::None => {}
            HandConfig::Approach(a) => {
                let k = approach_keyframes(a, cfg.seed);
                hand_end = k.last().map(|k| k.t);
                hands.push(make(HandSource::scripted(k))?);
            }
            HandConfig::Keyframes { keyframes } => {
                hand_end = keyframes.last().map(|k| k.t);
                hands.push(make(HandSource::scripted(keyframes.clone()))?);
            }
            HandConfig::Live => hands.push(make(Ok(HandSource::live()))?),
            HandConfig::Recorded { inputs } => hands.push(make(Ok(HandSource::recorded(inputs.clone())))?),
        }
        let human_next = (world.n_humans > 0).then_some(cfg.human.first_place);
        if world.n_humans > 0 && hands.is_empty() {
            let count = world.human_blocks[0].len();
            let k = human_keyframes(world.layout.human_rest[0], cfg.human.first_place, cfg.human.place_interval, count);
            hands.push(make(HandSource::scripted(k))?);
        }

        // Attachments, owned per robot, each robot's own points in the outer loop.
        let mut next_id = 0u32;
        let mut id = || {
            next_id += 1;
            AttachmentId(next_id - 1)
        };
        let mut attachments = Vec::with_capacity(n);
        for (i, me) in ids.iter().enumerate() {
            let p = &params[i];
            let mut atts = vec![ComponentAttachment::new(id(), *me, Component::Goal(p.goal), BodyAnchor::EndEffector, OtherAnchor::TaskTarget)];
            for own in 0..BODY_POINTS as u8 {
                for other in ids.iter().filter(|o| *o != me) {
                    for point in 0..BODY_POINTS as u8 {
                        let anchor = if own as usize == BODY_POINTS - 1 { BodyAnchor::EndEffector } else { BodyAnchor::BodyPoint(own) };
                        let mut a = ComponentAttachment::new(
                            id(),
                            *me,
                            Component::Gaussian(p.robot_avoidance),
                            anchor,
                            OtherAnchor::AgentPoint { robot: other.index, point },
                        );
                        a.enabled = p.avoid_robots;
                        atts.push(a);
                    }
                }
            }
            for h in 0..hands.len() as u32 {
                for k in 0..cfg.hand_keypoints as u32 {
                    atts.push(ComponentAttachment::new(
                        id(),
                        *me,
                        Component::Gaussian(p.hand_avoidance),
                        BodyAnchor::EndEffector,
                        OtherAnchor::Hand { hand: h, keypoint: k },
                    ));
                    let mut d = ComponentAttachment::new(
                        id(),
                        *me,
                        Component::Damper(p.damper),
                        BodyAnchor::EndEffector,
                        OtherAnchor::Hand { hand: h, keypoint: k },
                    );
                    d.enabled = cfg.features.damper;
                    atts.push(d);
                }
            }
            atts.push(ComponentAttachment::new(id(), *me, Component::Obstacle(table), BodyAnchor::EndEffector, OtherAnchor::Table));
            crate::agent::validate_attachments(&atts, n, hands.len())
                .map_err(|e| SetupError::Config(ConfigError::Invalid { path: "attachments".into(), reason: e.to_string() }))?;
            attachments.push(atts);
        }

        let machines = (0..n)
            .map(|i| {
                let holds_center = cfg.scenario.kind == ScenarioKind::Hold && i == 0;
                (!holds_center).then(|| PickPlaceStateMachine::new(i, world.layout.robots[i].rest))
            })
            .collect();
        let c = &cfg.coordination;
        let rules = SelectionRules { alpha: c.alpha, proximity_threshold: c.proximity_threshold, near_goal: c.near_goal };
        let negotiators = ids
            .iter()
            .enumerate()
            .map(|(i, me)| {
                Negotiator::new(
                    *me,
                    ids.clone(),
                    NegotiatorConfig { rules, round_timeout: c.round_timeout, seed: cfg.seed },
                    Baseline { goal: true, robot_avoidance: params[i].avoid_robots },
                )
            })
            .collect();
        let transport = Transport::new(ids.clone(), c.transport, cfg.seed);
        let detectors = (0..n).map(|_| StallDetector::new(c.stall_threshold, c.stall_dwell, c.speed_floor)).collect();
        let board = TaskBoard::new(&world);
        let n_hands = hands.len();
        let mut sim = Self {
            world,
            step: 0,
            robots,
            params,
            attachments,
            goals: vec![None; n],
            goal_target: vec![None; n],
            goal_enabled: vec![true; n],
            machines,
            board,
            hands,
            hand_snaps: vec![HandSnapshot::default(); n_hands],
            hand_end,
            human_next,
            breakdowns: vec![ForceBreakdown::default(); n],
            metrics: vec![(0.0, 0.0, 0.0); n],
            detectors,
            stalled: vec![false; n],
            negotiators,
            transport,
            holds: vec![None; n],
            pending_events: Vec::new(),
            pending_messages: Vec::new(),
            last_record_step: None,
            records_out: Vec::new(),
            outcome: StepOutcome::Running,
            cfg,
        };
        if sim.cfg.duration_cap <= 0.0 {
            sim.outcome = StepOutcome::Capped;
        }
        Ok(sim)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldDescription {
        &self.world
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn robots(&self) -> &[AgentState] {
        &self.robots
    }

    pub fn board(&self) -> &TaskBoard {
        &self.board
    }

    pub fn outcome(&self) -> &StepOutcome {
        &self.outcome
    }

    pub fn is_finished(&self) -> bool {
        self.outcome != StepOutcome::Running
    }

    /// Deposits live hand input; it takes effect at the next sensing tick.
    pub fn feed_hand(&mut self, hand: usize, position: Option<Vec3>) {
        let t = self.time();
        let input = crate::scenario::HandInput { t, position };
        if let Some(h) = self.hands.get_mut(hand) {
            h.feed(input);
            self.pending_events.push(SimEvent { time: t, body: EventBody::HandInput(input) });
        }
    }

    /// Swaps the hand-avoidance spring and damper switch on every robot.
    /// Refused while any robot holds a block, so a grasp never sees two force laws.
    pub fn switch_hand_profile(&mut self, profile: HandProfile) -> Result<(), String> {
        if let Some(r) = self.robots.iter().find(|r| r.grasped_block.is_some()) {
            return Err(format!("{} is holding a block", r.id));
        }
        let spring = profile.hand_avoidance.to_spec("hand_avoidance").map_err(|e| e.to_string())?;
        for (r, atts) in self.attachments.iter_mut().enumerate() {
            self.params[r].hand_avoidance = spring;
            for a in atts.iter_mut() {
                match a.class() {
                    AttachmentClass::HandAvoidance => a.component = Component::Gaussian(spring),
                    AttachmentClass::HandDamper => a.enabled = profile.damper,
                    _ => {}
                }
            }
        }
        self.event(EventBody::ProfileSwitched(profile));
        Ok(())
    }

    /// Flushes a final record for a session that stops before finishing.
    pub fn close(&mut self) {
        self.emit_record();
    }

    fn event(&mut self, body: EventBody) {
        let time = self.time();
        self.pending_events.push(SimEvent { time, body });
    }

    fn apply_toggle(&mut self, cmd: ToggleCommand) {
        let r = cmd.agent.index as usize;
        for a in self.attachments[r].iter_mut().filter(|a| a.class() == cmd.class) {
            a.enabled = cmd.enabled;
        }
        if cmd.class == AttachmentClass::Goal {
            if cmd.enabled && !self.goal_enabled[r] {
                // Resume from where the robot was pushed to.
                self.goal_target[r] = None;
            }
            self.goal_enabled[r] = cmd.enabled;
        }
    }

    fn waypoint(&self, r: usize) -> Vec3 {
        match &self.machines[r] {
            Some(m) => m.waypoint,
            None => self.cfg.scenario.hold_point,
        }
    }

    fn all_done(&self) -> bool {
        if self.world.blocks_to_place() > 0 {
            self.board.is_complete()
        } else {
            self.hand_end.is_some_and(|end| self.time() >= end + 1.0)
        }
    }

    /// Advances the world by one control cycle.
    pub fn step(&mut self) -> &StepOutcome {
        if self.is_finished() {
            return &self.outcome;
        }
        let t = self.time();
        let dt = self.cfg.dt;
        let n = self.robots.len();

        for (h, src) in self.hands.iter_mut().enumerate() {
            self.hand_snaps[h] = src.sample(t);
        }

        if let Some(next) = self.human_next {
            if t + 1e-9 >= next {
                match self.board.human_assign(0) {
                    Some(a) => {
                        self.board.human_place(a.block, a.cell);
                        self.event(EventBody::HumanPlaced { block: a.block, cell: a.cell });
                        self.human_next = Some(next + self.cfg.human.place_interval);
                    }
                    None => self.human_next = None,
                }
            }
        }

        // Task logic, frozen while a robot's goal is suspended.
        for r in 0..n {
            if !self.goal_enabled[r] {
                continue;
            }
            let Some(mut m) = self.machines[r].take() else { continue };
            let events = m.advance(&mut self.robots[r], &mut self.board, &self.cfg.tolerances, t);
            self.machines[r] = Some(m);
            for e in events {
                self.event(EventBody::Task(e));
            }
            if let Some(b) = self.robots[r].grasped_block {
                self.board.carry(b as usize, self.robots[r].position, self.cfg.tolerances.grasp_offset);
            }
        }
        if self.all_done() {
            self.event(EventBody::Completed);
            self.outcome = StepOutcome::Completed;
            self.emit_record();
            return &self.outcome;
        }

        // Moving goals restart from the current end-effector whenever the target changes.
        for r in 0..n {
            let wp = self.waypoint(r);
            if self.goal_target[r] != Some(wp) {
                self.goals[r] = TimeLawFilter::new(self.robots[r].position, wp, self.params[r].filter_speed, t).ok();
                self.goal_target[r] = Some(wp);
            }
        }

        let world = WorldSnapshot {
            robots: &self.robots,
            hands: &self.hand_snaps,
            goals: &self.goals,
            prune_radius: self.cfg.prune_radius,
        };
        for r in 0..n {
            aggregate_forces(&self.robots[r], &mut self.attachments[r], &world, t, &mut self.breakdowns[r]);
        }

        let mut detections = Vec::new();
        for r in 0..n {
            let (rho, f_net, f_tot) = stall_metric(&self.breakdowns[r], self.cfg.coordination.metric_scope);
            self.metrics[r] = (rho, f_net, f_tot);
            let active = self.machines[r].as_ref().map_or(true, |m| !m.is_done());
            let sample = StallMetricSample { time: t, rho, f_net, f_tot, speed: self.robots[r].speed() };
            let now = active && self.detectors[r].push(sample);
            if now && !self.stalled[r] && self.negotiators[r].holder().is_none() {
                detections.push((r, rho));
            }
            self.stalled[r] = now;
        }
        for (r, rho) in detections {
            self.event(EventBody::StallDetected { agent: self.robots[r].id, rho });
        }

        if self.cfg.features.negotiation {
            self.negotiate(t);
        }

        let mut next = Vec::with_capacity(n);
        for r in 0..n {
            let dyn_params = DynamicsParams { floor_damping: self.params[r].floor_damping };
            match step_agent(&self.robots[r], &self.breakdowns[r], dt, &dyn_params) {
                Ok(a) => next.push(a),
                Err(e) => {
                    self.outcome = StepOutcome::Faulted { reason: e.to_string() };
                    self.emit_record();
                    return &self.outcome;
                }
            }
        }
        if self.step % u64::from(self.cfg.record_every) == 0 {
            self.emit_record();
        }
        self.robots = next;
        self.step += 1;
        if self.time() >= self.cfg.duration_cap - 1e-9 {
            self.outcome = StepOutcome::Capped;
            self.emit_record();
        }
        &self.outcome
    }

    fn local_status(&self, r: usize) -> LocalStatus {
        let me = &self.robots[r];
        let nearest = self
            .robots
            .iter()
            .filter(|o| o.id != me.id)
            .map(|o| o.position.distance(me.position))
            .fold(f64::INFINITY, f64::min);
        let (finished, grasping) = match &self.machines[r] {
            Some(m) => (m.is_done(), m.phase.is_grasping()),
            None => (false, false),
        };
        LocalStatus {
            stalled: self.stalled[r],
            finished,
            dist_to_goal: me.position.distance(self.waypoint(r)),
            grasping,
            dist_to_nearest_robot: nearest,
        }
    }

    fn negotiate(&mut self, t: f64) {
        let n = self.robots.len();
        let inboxes = self.transport.deliver(self.step);
        for r in 0..n {
            let local = self.local_status(r);
            let mut out = self.negotiators[r].negotiation_round(&local, &inboxes[r], t);

            if self.negotiators[r].is_holder() {
                let transitions = self.machines[r].as_ref().map_or(0, |m| m.transitions);
                let hold = self.holds[r].get_or_insert(Hold { since: t, transitions });
                let (dwell, done) = self.machines[r].as_ref().map_or((false, false), |m| (m.dwell_pending(), m.is_done()));
                let advanced = transitions != hold.transitions;
                let arrived = local.dist_to_goal <= self.cfg.coordination.release_tolerance && !dwell;
                let expired = t - hold.since >= self.cfg.coordination.priority_timeout;
                if advanced || arrived || expired || done {
                    let rel = self.negotiators[r].release();
                    out.outbound.extend(rel.outbound);
                    out.toggles.extend(rel.toggles);
                    out.events.extend(rel.events);
                }
            }
            if !self.negotiators[r].is_holder() {
                self.holds[r] = None;
            }

            let id = self.robots[r].id;
            for cmd in out.toggles {
                self.apply_toggle(cmd);
            }
            for e in out.events {
                if matches!(e, NegotiationEvent::Granted { .. } | NegotiationEvent::Released { .. } | NegotiationEvent::Conflict { .. }) {
                    self.detectors[r].reset();
                    self.stalled[r] = false;
                }
                self.event(EventBody::Negotiation { node: id, event: e });
            }
            for msg in out.outbound {
                self.transport.broadcast(id, msg, self.step, t);
                self.pending_messages.push(MessageRecord { time: t, from: id, message: msg });
            }
        }
    }

    fn class_forces(b: &ForceBreakdown) -> Vec<(AttachmentClass, Vec3)> {
        CLASSES.iter().map(|c| (*c, b.class_total(*c))).collect()
    }

    /// Current state as a trace record, without consuming pending events.
    pub fn peek_record(&self) -> TraceRecord {
        let agents = (0..self.robots.len())
            .map(|r| {
                let a = &self.robots[r];
                let (rho, f_net, f_tot) = self.metrics[r];
                let m = self.machines[r].as_ref();
                let transfer = m.and_then(|m| m.transfer(&self.board)).map(|(s, d)| [s, d]);
                AgentRecord {
                    id: a.id,
                    position: a.position,
                    velocity: a.velocity,
                    rho,
                    f_net,
                    f_tot,
                    phase: m.map_or(Phase::Idle, |m| m.phase),
                    goal_enabled: self.goal_enabled[r],
                    robot_avoidance_enabled: self.attachments[r]
                        .iter()
                        .any(|x| x.class() == AttachmentClass::RobotAvoidance && x.enabled),
                    grasped_block: a.grasped_block,
                    transfer,
                    class_forces: Self::class_forces(&self.breakdowns[r]),
                }
            })
            .collect();
        TraceRecord {
            step: self.step,
            time: self.time(),
            // Time since the previous record, so spans add up to the run length.
            span: self.last_record_step.map_or(0.0, |l| (self.step - l) as f64 * self.cfg.dt),
            agents,
            hands: self.hand_snaps.clone(),
            blocks_placed: self.board.placed_count(),
            priority: self.negotiators.first().map(|n| n.priority().clone()).unwrap_or_default(),
            messages: self.pending_messages.clone(),
            events: self.pending_events.clone(),
        }
    }

    fn emit_record(&mut self) {
        if self.last_record_step == Some(self.step) {
            // Already recorded this step; fold late events into the final record.
            if let Some(r) = self.records_out.last_mut() {
                r.events.append(&mut self.pending_events);
                r.messages.append(&mut self.pending_messages);
            }
            return;
        }
        let rec = self.peek_record();
        self.pending_events.clear();
        self.pending_messages.clear();
        self.last_record_step = Some(self.step);
        self.records_out.push(rec);
    }

    /// Records produced since the last call.
    pub fn drain_records(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.records_out)
    }
}
