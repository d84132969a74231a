//! Per-robot negotiation node.
//!
//! Each robot runs one [`Negotiator`]. Nodes share nothing but messages: a
//! stalled robot opens a round by broadcasting its report, peers answer with
//! theirs, and once a node holds every report (or the round times out) it
//! draws the winner with the round-keyed generator. Nodes that saw the same
//! reports therefore agree on the winner without a coordinator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::protocol::{
    apply_priority, restore_commands, select_priority, Baseline, NegotiationMessage, PriorityGrant, PriorityRelease,
    PriorityState, ProtocolMessage, RobotStatus, RoundKey, SelectionRules, ToggleCommand,
};
use crate::agent::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegotiatorConfig {
    pub rules: SelectionRules,
    /// Seconds to wait for missing reports before deciding with what arrived.
    pub round_timeout: f64,
    pub seed: u64,
}

/// What a node knows about its own robot when it takes part in a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalStatus {
    pub stalled: bool,
    pub finished: bool,
    pub dist_to_goal: f64,
    pub grasping: bool,
    pub dist_to_nearest_robot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegotiationEvent {
    RoundStarted { round: u64 },
    Granted { round: u64, winner: AgentId },
    Released { round: u64, holder: AgentId },
    Conflict { round: u64, local: AgentId, remote: AgentId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundOutput {
    pub outbound: Vec<ProtocolMessage>,
    /// Commands for this node's own robot only.
    pub toggles: Vec<ToggleCommand>,
    pub events: Vec<NegotiationEvent>,
}

#[derive(Debug, Clone)]
struct PendingRound {
    round: u64,
    started_at: f64,
    reports: BTreeMap<AgentId, NegotiationMessage>,
}

#[derive(Debug, Clone)]
pub struct Negotiator {
    me: AgentId,
    robots: Vec<AgentId>,
    config: NegotiatorConfig,
    baseline: Baseline,
    priority: PriorityState,
    round: u64,
    decided_round: u64,
    pending: Option<PendingRound>,
}

impl Negotiator {
    pub fn new(me: AgentId, robots: Vec<AgentId>, config: NegotiatorConfig, baseline: Baseline) -> Self {
        Self {
            me,
            robots,
            config,
            baseline,
            priority: PriorityState::default(),
            round: 0,
            decided_round: 0,
            pending: None,
        }
    }

    pub fn id(&self) -> AgentId {
        self.me
    }

    pub fn priority(&self) -> &PriorityState {
        &self.priority
    }

    pub fn holder(&self) -> Option<AgentId> {
        self.priority.holder
    }

    pub fn is_holder(&self) -> bool {
        self.priority.holder == Some(self.me)
    }

    pub fn in_round(&self) -> bool {
        self.pending.is_some()
    }

    fn report(&self, local: &LocalStatus, round: u64) -> NegotiationMessage {
        let state = if local.finished {
            RobotStatus::Finished
        } else if local.stalled {
            RobotStatus::Stalled
        } else {
            RobotStatus::NotStalled
        };
        NegotiationMessage {
            sender: self.me,
            round,
            state,
            priority_count: self.priority.count(self.me),
            dist_to_goal: local.dist_to_goal,
            grasping_flag: local.grasping,
            dist_to_nearest_robot: local.dist_to_nearest_robot,
        }
    }

    fn own_toggles(&self, cmds: Vec<ToggleCommand>) -> Vec<ToggleCommand> {
        cmds.into_iter().filter(|c| c.agent == self.me).collect()
    }

    fn restore(&self) -> Vec<ToggleCommand> {
        let baseline: BTreeMap<AgentId, Baseline> = [(self.me, self.baseline)].into();
        restore_commands(&[self.me], &baseline)
    }

    fn grant(&mut self, winner: AgentId, round: u64, now: f64, out: &mut RoundOutput) {
        self.priority.holder = Some(winner);
        self.priority.granted_at = now;
        self.priority.round = round;
        self.decided_round = self.decided_round.max(round);
        out.toggles.extend(self.own_toggles(apply_priority(winner, &self.robots)));
        out.events.push(NegotiationEvent::Granted { round, winner });
    }

    /// One control cycle of the protocol: absorb the inbox, decide a due round,
    /// and open a new round if this robot needs one.
    pub fn negotiation_round(&mut self, local: &LocalStatus, inbox: &[ProtocolMessage], now: f64) -> RoundOutput {
        let mut out = RoundOutput::default();
        for msg in inbox {
            match msg {
                ProtocolMessage::Report(m) => self.on_report(m, local, now, &mut out),
                ProtocolMessage::Grant(g) => self.on_grant(g, now, &mut out),
                ProtocolMessage::Release(r) => {
                    if self.priority.holder == Some(r.holder) {
                        self.priority.holder = None;
                        out.toggles.extend(self.restore());
                        out.events.push(NegotiationEvent::Released { round: r.round, holder: r.holder });
                    }
                }
            }
        }

        if let Some(p) = &self.pending {
            let complete = p.reports.len() >= self.robots.len();
            if complete || now - p.started_at >= self.config.round_timeout - 1e-12 {
                let p = self.pending.take().expect("pending round");
                self.decide(p, now, &mut out);
            }
        }

        let own = self.report(local, self.round + 1);
        let wants_priority = !local.finished && (local.stalled || self.config.rules.manipulating_near_robot(&own));
        if wants_priority && self.priority.holder.is_none() && self.pending.is_none() {
            self.round += 1;
            let mut reports = BTreeMap::new();
            reports.insert(self.me, own);
            self.pending = Some(PendingRound { round: self.round, started_at: now, reports });
            out.outbound.push(ProtocolMessage::Report(own));
            out.events.push(NegotiationEvent::RoundStarted { round: self.round });
        }
        out
    }

    fn on_report(&mut self, m: &NegotiationMessage, local: &LocalStatus, now: f64, out: &mut RoundOutput) {
        if m.round <= self.decided_round {
            return;
        }
        match &mut self.pending {
            Some(p) if p.round == m.round => {
                p.reports.insert(m.sender, *m);
            }
            Some(p) if p.round > m.round => {}
            _ => {
                // Join the newer round with our own report.
                self.round = self.round.max(m.round);
                let own = self.report(local, m.round);
                let mut reports = BTreeMap::new();
                reports.insert(self.me, own);
                reports.insert(m.sender, *m);
                self.pending = Some(PendingRound { round: m.round, started_at: now, reports });
                out.outbound.push(ProtocolMessage::Report(own));
            }
        }
    }

    fn on_grant(&mut self, g: &PriorityGrant, now: f64, out: &mut RoundOutput) {
        match self.priority.holder {
            Some(h) if h != g.winner => {
                // Two holders observed: everyone involved drops priority and renegotiates.
                self.priority.holder = None;
                self.decided_round = self.decided_round.max(g.round);
                out.toggles.extend(self.restore());
                out.events.push(NegotiationEvent::Conflict { round: g.round, local: h, remote: g.winner });
            }
            Some(_) => {}
            None if g.round > self.decided_round => {
                if self.pending.as_ref().is_some_and(|p| p.round <= g.round) {
                    self.pending = None;
                }
                self.round = self.round.max(g.round);
                *self.priority.counters.entry(g.winner).or_insert(0) += 1;
                self.grant(g.winner, g.round, now, out);
            }
            None => {}
        }
    }

    fn decide(&mut self, p: PendingRound, now: f64, out: &mut RoundOutput) {
        let reports: Vec<NegotiationMessage> = p.reports.into_values().collect();
        let key = RoundKey { seed: self.config.seed, round: p.round };
        match select_priority(&reports, &mut self.priority, &self.config.rules, key) {
            Some(winner) => {
                self.grant(winner, p.round, now, out);
                out.outbound.push(ProtocolMessage::Grant(PriorityGrant { sender: self.me, round: p.round, winner }));
            }
            None => self.decided_round = self.decided_round.max(p.round),
        }
    }

    /// Called by the holder once it reached its goal (or gave up on it).
    pub fn release(&mut self) -> RoundOutput {
        let mut out = RoundOutput::default();
        if self.is_holder() {
            self.priority.holder = None;
            out.toggles.extend(self.restore());
            out.outbound.push(ProtocolMessage::Release(PriorityRelease {
                sender: self.me,
                round: self.priority.round,
                holder: self.me,
            }));
            out.events.push(NegotiationEvent::Released { round: self.priority.round, holder: self.me });
        }
        out
    }
}
