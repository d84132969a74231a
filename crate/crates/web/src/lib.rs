//! Browser demo: force-law profiles, a crossing run with negotiation on or off,
//! and conflict enumeration. Everything crosses the boundary as JSON strings.

use std::collections::BTreeSet;

use serde::Serialize;
use vmcollab::analysis::conflict_count;
use vmcollab::components::{gaussian_avoidance_force, unilateral_damper_force, GaussianSpringSpec, UnilateralDamperSpec};
use vmcollab::coordination::NegotiationEvent;
use vmcollab::harness::trace::EventBody;
use vmcollab::harness::{RunConfig, Simulation, StepOutcome};
use vmcollab::scenario::Layout;
use vmcollab::Vec3;
use wasm_bindgen::prelude::*;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

// Plain strings rather than String so the same code runs in native tests.
fn js_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Profile {
    distance: Vec<f64>,
    spring: Vec<f64>,
    damper: Vec<f64>,
    sigma: f64,
    radius: f64,
}

/// Repulsion magnitude against distance for a Gaussian hand spring and for a
/// unilateral damper facing a hand that approaches at `approach_speed`.
#[wasm_bindgen]
pub fn force_profile(
    sigma: f64,
    max_force: f64,
    base_damping: f64,
    radius: f64,
    damper_cap: f64,
    approach_speed: f64,
    samples: usize,
) -> Result<String, String> {
    let spring = GaussianSpringSpec::from_sigma_max_force(sigma, -max_force.abs()).map_err(js_err)?;
    let damper = UnilateralDamperSpec::new(base_damping, radius, damper_cap).map_err(js_err)?;
    let samples = samples.clamp(2, 2000);
    let r_max = (3.0 * sigma).max(1.2 * radius);
    let mut p = Profile { distance: Vec::new(), spring: Vec::new(), damper: Vec::new(), sigma, radius };
    for i in 1..=samples {
        let r = r_max * i as f64 / samples as f64;
        let hand = Vec3::new(r, 0.0, 0.0);
        let v_hand = Vec3::new(-approach_speed.abs(), 0.0, 0.0);
        p.distance.push(r);
        p.spring.push(gaussian_avoidance_force(Vec3::ZERO, hand, &spring).norm());
        p.damper.push(unilateral_damper_force(Vec3::ZERO, Vec3::ZERO, hand, v_hand, &damper).map_err(js_err)?.norm());
    }
    Ok(json(&p))
}

#[derive(Serialize)]
struct RobotView {
    id: String,
    x: f64,
    y: f64,
    rho: f64,
    speed: f64,
    phase: String,
    goal_enabled: bool,
    avoiding_robots: bool,
    carrying: bool,
}

#[derive(Serialize)]
struct CrossingView {
    time: f64,
    status: &'static str,
    blocks_placed: usize,
    holder: Option<String>,
    stalls: usize,
    grants: usize,
    robots: Vec<RobotView>,
}

/// The two-robot crossing transfer, stepped from the page.
#[wasm_bindgen]
pub struct CrossingDemo {
    sim: Simulation,
    stalls: usize,
    granted_rounds: BTreeSet<u64>,
}

#[wasm_bindgen]
impl CrossingDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(negotiation: bool, seed: u64) -> Result<CrossingDemo, String> {
        let mut cfg = RunConfig::preset("crossing").map_err(js_err)?;
        cfg.features.negotiation = negotiation;
        cfg.seed = seed;
        Ok(CrossingDemo { sim: Simulation::new(cfg).map_err(js_err)?, stalls: 0, granted_rounds: BTreeSet::new() })
    }

    /// Advances up to `steps` integration steps and returns the current state.
    pub fn advance(&mut self, steps: u32) -> String {
        for _ in 0..steps {
            if self.sim.is_finished() {
                break;
            }
            self.sim.step();
            for rec in self.sim.drain_records() {
                for e in &rec.events {
                    match e.body {
                        EventBody::StallDetected { .. } => self.stalls += 1,
                        // Every node reports the same grant; count rounds.
                        EventBody::Negotiation { event: NegotiationEvent::Granted { round, .. }, .. } => {
                            self.granted_rounds.insert(round);
                        }
                        _ => {}
                    }
                }
            }
        }
        self.view()
    }

    /// Table geometry (grid cells and block homes) for drawing.
    pub fn world(&self) -> String {
        let layout = &self.sim.world().layout;
        let cells: Vec<[f64; 2]> = layout.grid.cells().map(|c| layout.grid.cell_center(c).xy()).collect();
        let blocks: Vec<[f64; 2]> = layout.blocks.iter().map(|b| b.xy()).collect();
        json(&serde_json::json!({ "cells": cells, "pitch": layout.grid.pitch, "blocks": blocks }))
    }

    fn view(&self) -> String {
        let rec = self.sim.peek_record();
        let status = match self.sim.outcome() {
            StepOutcome::Running => "running",
            StepOutcome::Completed => "completed",
            StepOutcome::Capped => "capped",
            StepOutcome::Faulted { .. } => "faulted",
        };
        let robots = rec
            .agents
            .iter()
            .map(|a| RobotView {
                id: a.id.to_string(),
                x: a.position.x,
                y: a.position.y,
                rho: a.rho,
                speed: a.velocity.norm(),
                phase: format!("{:?}", a.phase),
                goal_enabled: a.goal_enabled,
                avoiding_robots: a.robot_avoidance_enabled,
                carrying: a.grasped_block.is_some(),
            })
            .collect();
        json(&CrossingView {
            time: rec.time,
            status,
            blocks_placed: rec.blocks_placed,
            holder: rec.priority.holder.map(|h| h.to_string()),
            stalls: self.stalls,
            grants: self.granted_rounds.len(),
            robots,
        })
    }
}

#[derive(Serialize)]
struct ConflictRow {
    robots: usize,
    conflicting: String,
    total: String,
    probability: f64,
}

/// Exact conflict probability on the canonical layout for 1..=max_robots.
#[wasm_bindgen]
pub fn enumerate_conflicts(max_robots: usize) -> Result<String, String> {
    let layout = Layout::canonical();
    let cells: Vec<Vec3> = layout.grid.cells().map(|c| layout.grid.cell_center(c)).collect();
    let rows = (1..=max_robots.min(3))
        .map(|n| {
            let c = conflict_count(&layout.blocks, &cells, n).map_err(js_err)?;
            // u128 counts do not fit a JS number exactly.
            Ok(ConflictRow { robots: n, conflicting: c.conflicting.to_string(), total: c.total.to_string(), probability: c.probability() })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json(&rows))
}
