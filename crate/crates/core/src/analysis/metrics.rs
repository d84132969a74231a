//! Metrics recomputed from trace records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::fairness::{fairness_report, FairnessReport};
use super::geometry::{segment_distance_xy, segments_intersect_xy};
use crate::agent::{AgentId, AgentKind};
use crate::coordination::NegotiationEvent;
use crate::harness::trace::{EventBody, RunStatus, SimTrace, TraceRecord};

/// Transfers whose straight segments come closer than this count as near misses.
pub const NEAR_MISS_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separations {
    pub d_min_rr: Option<f64>,
    pub d_min_rh: Option<f64>,
}

fn robots(r: &TraceRecord) -> impl Iterator<Item = &crate::harness::trace::AgentRecord> {
    r.agents.iter().filter(|a| a.id.kind == AgentKind::Robot)
}

/// Minimum end-effector distance between robot pairs, per pair.
pub fn pairwise_minima(records: &[TraceRecord]) -> BTreeMap<(AgentId, AgentId), f64> {
    let mut out: BTreeMap<(AgentId, AgentId), f64> = BTreeMap::new();
    for r in records {
        let rs: Vec<_> = robots(r).collect();
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                let d = rs[i].position.distance(rs[j].position);
                let e = out.entry((rs[i].id, rs[j].id)).or_insert(f64::INFINITY);
                *e = e.min(d);
            }
        }
    }
    out
}

/// Closest robot-robot and robot-hand distances over the whole trace.
pub fn min_separations(records: &[TraceRecord]) -> Separations {
    let d_min_rr = pairwise_minima(records).values().copied().reduce(f64::min);
    let mut d_min_rh: Option<f64> = None;
    for r in records {
        if let Some(d) = robot_hand_distance(r) {
            d_min_rh = Some(d_min_rh.map_or(d, |m| m.min(d)));
        }
    }
    Separations { d_min_rr, d_min_rh }
}

fn robot_hand_distance(r: &TraceRecord) -> Option<f64> {
    let mut best: Option<f64> = None;
    for h in r.hands.iter().filter(|h| h.present) {
        for k in &h.keypoints {
            for a in robots(r) {
                let d = a.position.distance(*k);
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
    }
    best
}

/// Time during which a present hand is closer than `s_p` to any robot end-effector.
pub fn violation_time(records: &[TraceRecord], s_p: f64) -> f64 {
    records
        .iter()
        .filter(|r| robot_hand_distance(r).is_some_and(|d| d < s_p))
        .fold(0.0, |acc, r| acc + r.span)
}

/// (T_cross, T_nm): concurrent-transfer time split by whether the two
/// straight transfer segments intersect or merely pass within the near-miss distance.
pub fn crossing_and_near_miss(records: &[TraceRecord]) -> (f64, f64) {
    let mut t_cross = 0.0;
    let mut t_nm = 0.0;
    for r in records {
        let segs: Vec<_> = robots(r).filter_map(|a| a.transfer).collect();
        for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                if segments_intersect_xy(segs[i], segs[j]) {
                    t_cross += r.span;
                } else if segment_distance_xy(segs[i], segs[j]) < NEAR_MISS_DISTANCE {
                    t_nm += r.span;
                }
            }
        }
    }
    (t_cross, t_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallEvent {
    pub agent: AgentId,
    pub detected: f64,
    pub resolved: Option<f64>,
    pub winner: Option<AgentId>,
}

/// Distinct grants, one per negotiated round, in time order.
pub fn grants(records: &[TraceRecord]) -> Vec<(f64, u64, AgentId)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in records.iter().flat_map(|r| &r.events) {
        if let EventBody::Negotiation { event: NegotiationEvent::Granted { round, winner }, .. } = e.body {
            if seen.insert(round) {
                out.push((e.time, round, winner));
            }
        }
    }
    out
}

/// Each stall detection paired with the first grant at or after it.
pub fn stall_events(records: &[TraceRecord]) -> Vec<StallEvent> {
    let g = grants(records);
    records
        .iter()
        .flat_map(|r| &r.events)
        .filter_map(|e| match e.body {
            EventBody::StallDetected { agent, .. } => {
                let m = g.iter().find(|(t, _, _)| *t >= e.time - 1e-12);
                Some(StallEvent { agent, detected: e.time, resolved: m.map(|x| x.0), winner: m.map(|x| x.2) })
            }
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub status: Option<RunStatus>,
    pub end_time: f64,
    pub completion_time: Option<f64>,
    pub blocks_placed: usize,
    pub d_min_rr: Option<f64>,
    pub d_min_rh: Option<f64>,
    /// Mean over robot pairs of each pair's minimum separation.
    pub mean_pairwise_min_rr: Option<f64>,
    pub s_p: f64,
    pub t_below_sp: f64,
    pub t_cross: f64,
    pub t_nm: f64,
    pub priority_counts: BTreeMap<AgentId, u64>,
    pub fairness: FairnessReport,
    pub stall_events: Vec<StallEvent>,
}

pub fn compute_metrics(trace: &SimTrace, s_p: f64) -> MetricsRecord {
    let recs = &trace.records;
    let sep = min_separations(recs);
    let pairs = pairwise_minima(recs);
    let mean_pairwise_min_rr = (!pairs.is_empty()).then(|| pairs.values().sum::<f64>() / pairs.len() as f64);
    let (t_cross, t_nm) = crossing_and_near_miss(recs);
    let robot_ids: Vec<AgentId> = (0..trace.header.world.n_robots as u32).map(AgentId::robot).collect();
    let winners: Vec<AgentId> = grants(recs).into_iter().map(|g| g.2).collect();
    let fairness = fairness_report(&robot_ids, &winners);
    let completion_time = recs
        .iter()
        .flat_map(|r| &r.events)
        .find(|e| matches!(e.body, EventBody::Completed))
        .map(|e| e.time);
    MetricsRecord {
        status: trace.footer.as_ref().map(|f| f.status.clone()),
        end_time: trace.footer.as_ref().map_or_else(|| recs.last().map_or(0.0, |r| r.time), |f| f.end_time),
        completion_time,
        blocks_placed: recs.last().map_or(0, |r| r.blocks_placed),
        d_min_rr: sep.d_min_rr,
        d_min_rh: sep.d_min_rh,
        mean_pairwise_min_rr,
        s_p,
        t_below_sp: violation_time(recs, s_p),
        t_cross,
        t_nm,
        priority_counts: fairness.counts.clone(),
        fairness,
        stall_events: stall_events(recs),
    }
}
