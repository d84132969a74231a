use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::agent::ForceBreakdown;

/// One evaluation of the force-balance metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallMetricSample {
    pub time: f64,
    /// `|F_net - F_tot|`, in newtons.
    pub rho: f64,
    pub f_net: f64,
    pub f_tot: f64,
    /// End-effector speed at the same instant.
    pub speed: f64,
}

/// Which attachments enter the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScope {
    #[default]
    AllComponents,
    SpringsOnly,
}

/// Returns `(rho, F_net, F_tot)` over the components of a breakdown.
pub fn stall_metric(breakdown: &ForceBreakdown, scope: MetricScope) -> (f64, f64, f64) {
    let mut net = crate::Vec3::ZERO;
    let mut total = 0.0;
    for c in &breakdown.per_component {
        if scope == MetricScope::SpringsOnly && !c.class.is_spring() {
            continue;
        }
        net += c.force;
        total += c.force.norm();
    }
    let f_net = net.norm();
    ((f_net - total).abs(), f_net, total)
}

/// True when the trailing run of samples has `rho > threshold` and
/// `speed < speed_floor` and spans at least `dwell` seconds.
pub fn detect_stall(samples: &[StallMetricSample], threshold: f64, dwell: f64, speed_floor: f64) -> bool {
    let Some(last) = samples.last() else {
        return false;
    };
    let stalled = |s: &StallMetricSample| s.rho > threshold && s.speed < speed_floor;
    if !stalled(last) {
        return false;
    }
    let run_start = samples.iter().rev().take_while(|s| stalled(s)).last().unwrap_or(last);
    last.time - run_start.time >= dwell - 1e-9
}

/// Sliding window feeding [`detect_stall`].
#[derive(Debug, Clone)]
pub struct StallDetector {
    pub threshold: f64,
    pub dwell: f64,
    pub speed_floor: f64,
    window: VecDeque<StallMetricSample>,
}

impl StallDetector {
    pub fn new(threshold: f64, dwell: f64, speed_floor: f64) -> Self {
        Self { threshold, dwell, speed_floor, window: VecDeque::new() }
    }

    pub fn push(&mut self, sample: StallMetricSample) -> bool {
        self.window.push_back(sample);
        while self.window.len() > 2 && self.window[1].time <= sample.time - self.dwell {
            self.window.pop_front();
        }
        detect_stall(self.window.make_contiguous(), self.threshold, self.dwell, self.speed_floor)
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }

    pub fn latest(&self) -> Option<&StallMetricSample> {
        self.window.back()
    }
}
