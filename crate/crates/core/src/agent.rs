//! Point-mass agents driven by the sum of their attached virtual components.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{
    filtered_goal_position, gaussian_avoidance_force, goal_spring_force, obstacle_force,
    unilateral_damper_force_or, GaussianSpringSpec, GoalSpringSpec, ObstacleSpringSpec,
    TimeLawFilter, UnilateralDamperSpec,
};
use crate::vec3::Vec3;

/// Number of virtual points sampled along each robot body.
pub const BODY_POINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Robot,
    Human,
}

/// Serialized as its display form (`R1`, `H2`) so it can key JSON maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub kind: AgentKind,
    pub index: u32,
}

impl AgentId {
    pub const fn robot(index: u32) -> Self {
        Self { kind: AgentKind::Robot, index }
    }

    pub const fn human(index: u32) -> Self {
        Self { kind: AgentKind::Human, index }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bad agent id {0:?}, expected R<n> or H<n>")]
pub struct ParseAgentIdError(String);

impl std::str::FromStr for AgentId {
    type Err = ParseAgentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseAgentIdError(s.to_owned());
        let kind = match s.get(..1) {
            Some("R") => AgentKind::Robot,
            Some("H") => AgentKind::Human,
            _ => return Err(err()),
        };
        let n: u32 = s[1..].parse().map_err(|_| err())?;
        if n == 0 {
            return Err(err());
        }
        Ok(Self { kind, index: n - 1 })
    }
}

impl Serialize for AgentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AgentKind::Robot => write!(f, "R{}", self.index + 1),
            AgentKind::Human => write!(f, "H{}", self.index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub virtual_mass: f64,
    pub base_position: Vec3,
    pub reach_radius: f64,
    pub grasped_block: Option<u32>,
    pub body_points: Vec<Vec3>,
}

impl AgentState {
    pub fn new_robot(index: u32, base: Vec3, ee: Vec3, virtual_mass: f64, reach_radius: f64) -> Self {
        Self {
            id: AgentId::robot(index),
            position: ee,
            velocity: Vec3::ZERO,
            virtual_mass,
            base_position: base,
            reach_radius,
            grasped_block: None,
            body_points: body_points_of(base, ee),
        }
    }

    /// Point on the body addressed by an anchor.
    pub fn anchor_point(&self, anchor: BodyAnchor) -> Vec3 {
        match anchor {
            BodyAnchor::EndEffector => self.position,
            BodyAnchor::BodyPoint(i) => self.body_points[i as usize],
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Twelve evenly spaced points from `base` to `ee`, both ends included.
pub fn body_points_of(base: Vec3, ee: Vec3) -> Vec<Vec3> {
    let mut points: Vec<Vec3> = (0..BODY_POINTS - 1).map(|i| base.lerp(ee, body_fraction(i))).collect();
    points.push(ee);
    points
}

/// Fraction of the way from base to end-effector for body point `i`.
///
/// A force at that point acts on the end-effector scaled by this fraction.
pub fn body_fraction(i: usize) -> f64 {
    i as f64 / (BODY_POINTS - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyAnchor {
    EndEffector,
    BodyPoint(u8),
}

impl BodyAnchor {
    fn fraction(self) -> f64 {
        match self {
            BodyAnchor::EndEffector => 1.0,
            BodyAnchor::BodyPoint(i) => body_fraction(i as usize),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OtherAnchor {
    AgentPoint { robot: u32, point: u8 },
    Hand { hand: u32, keypoint: u32 },
    Table,
    TaskTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Goal(GoalSpringSpec),
    Gaussian(GaussianSpringSpec),
    Damper(UnilateralDamperSpec),
    Obstacle(ObstacleSpringSpec),
}

/// Groups of attachments that the coordination layer switches together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttachmentClass {
    Goal,
    RobotAvoidance,
    HandAvoidance,
    HandDamper,
    Obstacle,
}

impl AttachmentClass {
    pub fn is_spring(self) -> bool {
        !matches!(self, AttachmentClass::HandDamper)
    }

    pub fn involves_hand(self) -> bool {
        matches!(self, AttachmentClass::HandAvoidance | AttachmentClass::HandDamper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttachmentId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAttachment {
    pub id: AttachmentId,
    pub owner: AgentId,
    pub component: Component,
    pub anchor_self: BodyAnchor,
    pub anchor_other: OtherAnchor,
    pub enabled: bool,
    /// Last well-defined hand direction, reused by dampers when points coincide.
    #[serde(skip)]
    pub last_direction: Option<Vec3>,
}

impl ComponentAttachment {
    pub fn new(id: AttachmentId, owner: AgentId, component: Component, anchor_self: BodyAnchor, anchor_other: OtherAnchor) -> Self {
        Self { id, owner, component, anchor_self, anchor_other, enabled: true, last_direction: None }
    }

    pub fn class(&self) -> AttachmentClass {
        match (&self.component, &self.anchor_other) {
            (Component::Goal(_), _) => AttachmentClass::Goal,
            (Component::Obstacle(_), _) => AttachmentClass::Obstacle,
            (Component::Damper(_), _) => AttachmentClass::HandDamper,
            (Component::Gaussian(_), OtherAnchor::Hand { .. }) => AttachmentClass::HandAvoidance,
            (Component::Gaussian(_), _) => AttachmentClass::RobotAvoidance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentForce {
    pub id: AttachmentId,
    pub class: AttachmentClass,
    pub force: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub per_component: Vec<ComponentForce>,
    pub net: Vec3,
}

impl ForceBreakdown {
    pub fn clear(&mut self) {
        self.per_component.clear();
        self.net = Vec3::ZERO;
    }

    pub fn push(&mut self, id: AttachmentId, class: AttachmentClass, force: Vec3) {
        self.per_component.push(ComponentForce { id, class, force });
        self.net += force;
    }

    /// Sum of the forces of one attachment class.
    pub fn class_total(&self, class: AttachmentClass) -> Vec3 {
        self.per_component.iter().filter(|c| c.class == class).map(|c| c.force).sum()
    }
}

/// Sensed state of a human hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HandSnapshot {
    pub present: bool,
    pub keypoints: Vec<Vec3>,
    pub velocity: Vec3,
}

/// Read-only view of everything an agent's components can reference.
#[derive(Debug, Clone, Copy)]
pub struct WorldSnapshot<'a> {
    pub robots: &'a [AgentState],
    pub hands: &'a [HandSnapshot],
    /// Per-robot moving-goal filter feeding the goal spring.
    pub goals: &'a [Option<TimeLawFilter>],
    /// Skip robot-robot point pairs farther apart than this.
    pub prune_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttachError {
    #[error("attachment {id:?} references robot {robot}, which does not exist")]
    UnknownRobot { id: AttachmentId, robot: u32 },
    #[error("attachment {id:?} references hand {hand}, which does not exist")]
    UnknownHand { id: AttachmentId, hand: u32 },
    #[error("attachment {id:?} references body point {point}; robots carry {BODY_POINTS}")]
    UnknownPoint { id: AttachmentId, point: u8 },
    #[error("attachment {id:?} couples robot {robot} to itself")]
    SelfReference { id: AttachmentId, robot: u32 },
}

/// Checks that every attachment refers to an existing entity.
pub fn validate_attachments(attachments: &[ComponentAttachment], n_robots: usize, n_hands: usize) -> Result<(), AttachError> {
    for a in attachments {
        if let BodyAnchor::BodyPoint(p) = a.anchor_self {
            if p as usize >= BODY_POINTS {
                return Err(AttachError::UnknownPoint { id: a.id, point: p });
            }
        }
        match a.anchor_other {
            OtherAnchor::AgentPoint { robot, point } => {
                if robot as usize >= n_robots {
                    return Err(AttachError::UnknownRobot { id: a.id, robot });
                }
                if robot == a.owner.index {
                    return Err(AttachError::SelfReference { id: a.id, robot });
                }
                if point as usize >= BODY_POINTS {
                    return Err(AttachError::UnknownPoint { id: a.id, point });
                }
            }
            OtherAnchor::Hand { hand, .. } if hand as usize >= n_hands => {
                return Err(AttachError::UnknownHand { id: a.id, hand });
            }
            _ => {}
        }
    }
    Ok(())
}

/// Evaluates every enabled attachment of `agent`, writing one entry per attachment into `out`.
///
/// Forces acting on intermediate body points are mapped onto the end-effector
/// through their body fraction.
pub fn aggregate_forces(
    agent: &AgentState,
    attachments: &mut [ComponentAttachment],
    world: &WorldSnapshot<'_>,
    t: f64,
    out: &mut ForceBreakdown,
) {
    out.clear();
    let me = agent.id.index as usize;
    for att in attachments.iter_mut().filter(|a| a.enabled) {
        let class = att.class();
        let x_self = agent.anchor_point(att.anchor_self);
        let scale = att.anchor_self.fraction();
        let force = match (&att.component, att.anchor_other) {
            (Component::Goal(spec), _) => match world.goals.get(me).copied().flatten() {
                Some(filter) => goal_force(agent, spec, &filter, t),
                None => Vec3::ZERO,
            },
            (Component::Obstacle(spec), _) => obstacle_force(agent.position, agent.grasped_block.is_some(), spec),
            (Component::Gaussian(spec), OtherAnchor::AgentPoint { robot, point }) => {
                match world.robots.get(robot as usize) {
                    Some(other) => {
                        let x_other = other.body_points[point as usize];
                        let pruned = world.prune_radius.is_some_and(|r| x_other.distance(x_self) > r);
                        if pruned {
                            Vec3::ZERO
                        } else {
                            gaussian_avoidance_force(x_self, x_other, spec) * scale
                        }
                    }
                    None => Vec3::ZERO,
                }
            }
            (Component::Gaussian(spec), OtherAnchor::Hand { hand, keypoint }) => {
                match present_keypoint(world, hand, keypoint) {
                    Some((x_hand, _)) => gaussian_avoidance_force(x_self, x_hand, spec) * scale,
                    None => Vec3::ZERO,
                }
            }
            (Component::Damper(spec), OtherAnchor::Hand { hand, keypoint }) => {
                match present_keypoint(world, hand, keypoint) {
                    Some((x_hand, v_hand)) => {
                        let (f, dir) =
                            unilateral_damper_force_or(x_self, agent.velocity * scale, x_hand, v_hand, spec, att.last_direction);
                        att.last_direction = dir;
                        f * scale
                    }
                    None => Vec3::ZERO,
                }
            }
            (Component::Gaussian(_), _) | (Component::Damper(_), _) => Vec3::ZERO,
        };
        out.push(att.id, class, force);
    }
}

fn goal_force(agent: &AgentState, spec: &GoalSpringSpec, filter: &TimeLawFilter, t: f64) -> Vec3 {
    let target = filtered_goal_position(filter, t);
    goal_spring_force(agent.position, agent.velocity, target, filter.velocity(t), spec)
}

fn present_keypoint(world: &WorldSnapshot<'_>, hand: u32, keypoint: u32) -> Option<(Vec3, Vec3)> {
    let h = world.hands.get(hand as usize)?;
    if !h.present {
        return None;
    }
    h.keypoints.get(keypoint as usize).map(|p| (*p, h.velocity))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Viscous floor damping `μ` in 1/s.
    pub floor_damping: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationFault {
    #[error("non-finite net force {force:?} on {agent}")]
    NonFiniteForce { agent: AgentId, force: Vec3 },
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
}

/// Advances one agent by `dt` with semi-implicit Euler and enforces the reach sphere.
pub fn step_agent(
    agent: &AgentState,
    breakdown: &ForceBreakdown,
    dt: f64,
    params: &DynamicsParams,
) -> Result<AgentState, SimulationFault> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimulationFault::BadTimestep(dt));
    }
    if !breakdown.net.is_finite() {
        return Err(SimulationFault::NonFiniteForce { agent: agent.id, force: breakdown.net });
    }
    let accel = breakdown.net / agent.virtual_mass - agent.velocity * params.floor_damping;
    let mut velocity = agent.velocity + accel * dt;
    let mut position = agent.position + velocity * dt;

    let offset = position - agent.base_position;
    let reach = offset.norm();
    if reach > agent.reach_radius {
        let radial = offset / reach;
        position = agent.base_position + radial * agent.reach_radius;
        let outward = velocity.dot(radial);
        if outward > 0.0 {
            velocity -= radial * outward;
        }
    }

    let mut next = agent.clone();
    next.position = position;
    next.velocity = velocity;
    next.body_points = body_points_of(agent.base_position, position);
    Ok(next)
}

/// Robot-robot avoidance springs between every pair of body points of every pair of robots.
///
/// Each ordered robot pair gets its own `12 x 12` set, owned by the first robot.
pub fn attach_standard_avoidance(robots: &[AgentId], spec: &GaussianSpringSpec, first_id: u32) -> Vec<ComponentAttachment> {
    let mut next = first_id;
    let mut out = Vec::new();
    for owner in robots {
        for other in robots.iter().filter(|o| *o != owner) {
            for i in 0..BODY_POINTS as u8 {
                for j in 0..BODY_POINTS as u8 {
                    out.push(ComponentAttachment::new(
                        AttachmentId(next),
                        *owner,
                        Component::Gaussian(*spec),
                        if i as usize == BODY_POINTS - 1 { BodyAnchor::EndEffector } else { BodyAnchor::BodyPoint(i) },
                        OtherAnchor::AgentPoint { robot: other.index, point: j },
                    ));
                    next += 1;
                }
            }
        }
    }
    out
}
