//! Priority selection rules and the grant/release lifecycle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AttachmentClass};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Stalled,
    NotStalled,
    Finished,
}

/// Stall report broadcast by each robot taking part in a negotiation round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegotiationMessage {
    pub sender: AgentId,
    pub round: u64,
    pub state: RobotStatus,
    pub priority_count: u32,
    pub dist_to_goal: f64,
    pub grasping_flag: bool,
    pub dist_to_nearest_robot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityGrant {
    pub sender: AgentId,
    pub round: u64,
    pub winner: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityRelease {
    pub sender: AgentId,
    pub round: u64,
    pub holder: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolMessage {
    Report(NegotiationMessage),
    Grant(PriorityGrant),
    Release(PriorityRelease),
}

impl ProtocolMessage {
    pub fn sender(&self) -> AgentId {
        match self {
            ProtocolMessage::Report(m) => m.sender,
            ProtocolMessage::Grant(g) => g.sender,
            ProtocolMessage::Release(r) => r.sender,
        }
    }
}

/// A node's view of who currently holds priority and how often each robot has held it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorityState {
    pub holder: Option<AgentId>,
    pub granted_at: f64,
    pub round: u64,
    pub counters: BTreeMap<AgentId, u32>,
}

impl PriorityState {
    pub fn count(&self, id: AgentId) -> u32 {
        self.counters.get(&id).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRules {
    /// Bias strength of the draw; larger values penalize past grants more.
    pub alpha: f64,
    /// A grasping or releasing robot this close to another robot is preferred.
    pub proximity_threshold: f64,
    /// A robot this close to its target is preferred.
    pub near_goal: f64,
}

impl Default for SelectionRules {
    fn default() -> Self {
        Self { alpha: 1.0, proximity_threshold: 0.15, near_goal: 0.06 }
    }
}

impl SelectionRules {
    /// Grasping or releasing near another robot; applies even without a stall.
    pub fn manipulating_near_robot(&self, m: &NegotiationMessage) -> bool {
        m.grasping_flag && m.dist_to_nearest_robot < self.proximity_threshold
    }

    pub fn near_goal(&self, m: &NegotiationMessage) -> bool {
        m.dist_to_goal < self.near_goal
    }

    /// Whether a report makes its sender a candidate at all.
    pub fn is_candidate(&self, m: &NegotiationMessage) -> bool {
        match m.state {
            RobotStatus::Finished => false,
            RobotStatus::Stalled => true,
            RobotStatus::NotStalled => self.manipulating_near_robot(m),
        }
    }
}

/// Shared key from which every node derives the same draw for a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundKey {
    pub seed: u64,
    pub round: u64,
}

impl RoundKey {
    fn rng(self) -> ChaCha8Rng {
        let mixed = self.seed ^ self.round.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

/// `P(i) = exp(-α c_i) / Σ_j exp(-α c_j)` over the given counts.
pub fn selection_probabilities(counts: &[u32], alpha: f64) -> Vec<f64> {
    let Some(min) = counts.iter().min().copied() else {
        return Vec::new();
    };
    // Shifting by the minimum count leaves the ratios unchanged and avoids underflow.
    let weights: Vec<f64> = counts.iter().map(|c| (-alpha * f64::from(c - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Splits candidate reports into the preferred set and the rest.
pub fn preferred_candidates<'a>(
    candidates: &'a [NegotiationMessage],
    rules: &SelectionRules,
) -> (Vec<&'a NegotiationMessage>, Vec<&'a NegotiationMessage>) {
    let mut eligible: Vec<&NegotiationMessage> = candidates.iter().filter(|m| rules.is_candidate(m)).collect();
    eligible.sort_by_key(|m| m.sender);
    eligible.dedup_by_key(|m| m.sender);
    eligible
        .into_iter()
        .partition(|m| rules.manipulating_near_robot(m) || (m.state == RobotStatus::Stalled && rules.near_goal(m)))
}

/// Picks the robot to prioritize, or `None` when someone already holds priority
/// or no report qualifies. Increments the winner's counter.
pub fn select_priority(
    candidates: &[NegotiationMessage],
    priority: &mut PriorityState,
    rules: &SelectionRules,
    key: RoundKey,
) -> Option<AgentId> {
    if priority.holder.is_some() {
        return None;
    }
    let (preferred, rest) = preferred_candidates(candidates, rules);
    let pool = if preferred.is_empty() { rest } else { preferred };
    if pool.is_empty() {
        return None;
    }
    let counts: Vec<u32> = pool.iter().map(|m| m.priority_count).collect();
    let probs = selection_probabilities(&counts, rules.alpha);
    let u: f64 = key.rng().gen();
    let mut acc = 0.0;
    let mut winner = pool[pool.len() - 1].sender;
    for (m, p) in pool.iter().zip(&probs) {
        acc += p;
        if u < acc {
            winner = m.sender;
            break;
        }
    }
    *priority.counters.entry(winner).or_insert(0) += 1;
    Some(winner)
}

/// Enables or disables one class of a robot's attachments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleCommand {
    pub agent: AgentId,
    pub class: AttachmentClass,
    pub enabled: bool,
}

/// The winner drives to its goal ignoring robots; everyone else drops its goal and only avoids.
/// Hand-related attachments are never touched.
pub fn apply_priority(winner: AgentId, robots: &[AgentId]) -> Vec<ToggleCommand> {
    let mut out = vec![
        ToggleCommand { agent: winner, class: AttachmentClass::Goal, enabled: true },
        ToggleCommand { agent: winner, class: AttachmentClass::RobotAvoidance, enabled: false },
    ];
    for r in robots.iter().filter(|r| **r != winner) {
        out.push(ToggleCommand { agent: *r, class: AttachmentClass::Goal, enabled: false });
        out.push(ToggleCommand { agent: *r, class: AttachmentClass::RobotAvoidance, enabled: true });
    }
    out
}

/// Toggle state of the switchable classes before a grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    pub goal: bool,
    pub robot_avoidance: bool,
}

impl Default for Baseline {
    fn default() -> Self {
        Self { goal: true, robot_avoidance: true }
    }
}

/// Where the holder stands relative to the goal it had when priority was granted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderProgress {
    pub ee: Vec3,
    pub waypoint: Vec3,
    /// The holder's task moved past the phase it was in at grant time.
    pub phase_advanced: bool,
    /// The current phase still waits on a timed action (gripper open/close).
    pub dwell_pending: bool,
}

/// Releases priority once the holder reached its goal, returning the
/// commands that restore every robot's pre-grant configuration.
pub fn release_priority(
    priority: &mut PriorityState,
    progress: &HolderProgress,
    tolerance: f64,
    robots: &[AgentId],
    baseline: &BTreeMap<AgentId, Baseline>,
) -> Option<Vec<ToggleCommand>> {
    priority.holder?;
    let arrived = progress.ee.distance(progress.waypoint) <= tolerance && !progress.dwell_pending;
    if !(progress.phase_advanced || arrived) {
        return None;
    }
    priority.holder = None;
    Some(restore_commands(robots, baseline))
}

pub fn restore_commands(robots: &[AgentId], baseline: &BTreeMap<AgentId, Baseline>) -> Vec<ToggleCommand> {
    robots
        .iter()
        .flat_map(|r| {
            let b = baseline.get(r).copied().unwrap_or_default();
            [
                ToggleCommand { agent: *r, class: AttachmentClass::Goal, enabled: b.goal },
                ToggleCommand { agent: *r, class: AttachmentClass::RobotAvoidance, enabled: b.robot_avoidance },
            ]
        })
        .collect()
}
