//! Hand position sources, sampled and held at the sensing rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::HandSnapshot;
use crate::vec3::Vec3;

pub const SENSING_PERIOD: f64 = 0.1;
pub const SILENCE_TIMEOUT: f64 = 1.0;
pub const VELOCITY_TAU: f64 = 0.1;

/// A point on a scripted trajectory; `position: None` means the hand is out of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub position: Option<Vec3>,
}

/// A live input as ingested at a step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandInput {
    pub t: f64,
    pub position: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HandMode {
    /// Linear interpolation between keyframes; absent before the first and after a `None`.
    Scripted { keyframes: Vec<Keyframe> },
    /// Inputs replayed as if they had arrived live at the recorded times.
    Recorded { inputs: Vec<HandInput> },
    Live,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HandError {
    #[error("keyframe {index} at t={t} is not after the previous one")]
    UnorderedKeyframes { index: usize, t: f64 },
    #[error("keypoint cluster is empty")]
    EmptyCluster,
    #[error("non-finite hand position")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct HandSource {
    pub mode: HandMode,
    pub period: f64,
    pub silence_timeout: f64,
    pub velocity_tau: f64,
    /// Rigid keypoint offsets from the tracked point.
    pub cluster: Vec<Vec3>,
    next_tick: u64,
    held: Option<Vec3>,
    velocity: Vec3,
    live_latest: Option<HandInput>,
    replay_cursor: usize,
}

impl HandSource {
    fn with_mode(mode: HandMode) -> Self {
        Self {
            mode,
            period: SENSING_PERIOD,
            silence_timeout: SILENCE_TIMEOUT,
            velocity_tau: VELOCITY_TAU,
            cluster: vec![Vec3::ZERO],
            next_tick: 0,
            held: None,
            velocity: Vec3::ZERO,
            live_latest: None,
            replay_cursor: 0,
        }
    }

    pub fn scripted(keyframes: Vec<Keyframe>) -> Result<Self, HandError> {
        for (i, w) in keyframes.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(HandError::UnorderedKeyframes { index: i + 1, t: w[1].t });
            }
        }
        if keyframes.iter().filter_map(|k| k.position).any(|p| !p.is_finite()) {
            return Err(HandError::NonFinite);
        }
        Ok(Self::with_mode(HandMode::Scripted { keyframes }))
    }

    pub fn live() -> Self {
        Self::with_mode(HandMode::Live)
    }

    pub fn recorded(mut inputs: Vec<HandInput>) -> Self {
        inputs.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self::with_mode(HandMode::Recorded { inputs })
    }

    /// Fans the tracked point out into `n` keypoints on a small horizontal ring.
    pub fn with_cluster(mut self, n: usize, radius: f64) -> Result<Self, HandError> {
        if n == 0 {
            return Err(HandError::EmptyCluster);
        }
        self.cluster = if n == 1 {
            vec![Vec3::ZERO]
        } else {
            let mut pts = vec![Vec3::ZERO];
            pts.extend((0..n - 1).map(|i| {
                let a = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
                Vec3::new(radius * a.cos(), radius * a.sin(), 0.0)
            }));
            pts
        };
        Ok(self)
    }

    /// Deposits a live input; only the most recent one survives until the next tick.
    pub fn feed(&mut self, input: HandInput) {
        self.live_latest = Some(input);
    }

    /// Scripted position at an arbitrary time, before sampling.
    fn scripted_at(keyframes: &[Keyframe], t: f64) -> Option<Vec3> {
        let first = keyframes.first()?;
        if t < first.t {
            return None;
        }
        let i = keyframes.partition_point(|k| k.t <= t) - 1;
        let a = keyframes[i];
        let pa = a.position?;
        match keyframes.get(i + 1) {
            Some(b) => match b.position {
                Some(pb) => Some(pa.lerp(pb, (t - a.t) / (b.t - a.t))),
                None => Some(pa),
            },
            None => Some(pa),
        }
    }

    fn raw_sample(&mut self, t: f64) -> Option<Vec3> {
        match &self.mode {
            HandMode::Scripted { keyframes } => Self::scripted_at(keyframes, t),
            HandMode::Recorded { inputs } => {
                while let Some(inp) = inputs.get(self.replay_cursor) {
                    if inp.t > t + 1e-12 {
                        break;
                    }
                    self.live_latest = Some(*inp);
                    self.replay_cursor += 1;
                }
                self.live_sample(t)
            }
            HandMode::Live => self.live_sample(t),
        }
    }

    fn live_sample(&self, t: f64) -> Option<Vec3> {
        let inp = self.live_latest?;
        if t - inp.t > self.silence_timeout {
            return None;
        }
        inp.position
    }

    /// Advances to time `t`, taking every sensing tick that has elapsed, and
    /// returns the held snapshot.
    pub fn sample(&mut self, t: f64) -> HandSnapshot {
        loop {
            let tick_t = self.next_tick as f64 * self.period;
            if tick_t > t + 1e-9 {
                break;
            }
            let p = self.raw_sample(tick_t);
            match (self.held, p) {
                (Some(prev), Some(now)) => {
                    let raw = (now - prev) * (1.0 / self.period);
                    let a = 1.0 - (-self.period / self.velocity_tau).exp();
                    self.velocity = self.velocity + (raw - self.velocity) * a;
                }
                _ => self.velocity = Vec3::ZERO,
            }
            self.held = p;
            self.next_tick += 1;
        }
        self.snapshot()
    }

    pub fn snapshot(&self) -> HandSnapshot {
        match self.held {
            Some(p) => HandSnapshot {
                present: true,
                keypoints: self.cluster.iter().map(|o| p + *o).collect(),
                velocity: self.velocity,
            },
            None => HandSnapshot { present: false, keypoints: Vec::new(), velocity: Vec3::ZERO },
        }
    }

    /// Held keypoints at time `t` (empty when absent).
    pub fn hand_position(&mut self, t: f64) -> Vec<Vec3> {
        self.sample(t).keypoints
    }

    pub fn reset(&mut self) {
        self.next_tick = 0;
        self.held = None;
        self.velocity = Vec3::ZERO;
        self.live_latest = None;
        self.replay_cursor = 0;
    }
}

/// Parameters of the approach, hold and retreat trajectory used in safety runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachScript {
    pub start: Vec3,
    pub target: Vec3,
    pub speed: f64,
    pub start_time: f64,
    pub hold: f64,
}

impl ApproachScript {
    pub fn keyframes(&self) -> Vec<Keyframe> {
        let travel = self.start.distance(self.target) / self.speed;
        let t0 = self.start_time;
        let t1 = t0 + travel;
        let t2 = t1 + self.hold;
        let t3 = t2 + travel;
        vec![
            Keyframe { t: t0, position: Some(self.start) },
            Keyframe { t: t1, position: Some(self.target) },
            Keyframe { t: t2, position: Some(self.target) },
            Keyframe { t: t3, position: Some(self.start) },
            Keyframe { t: t3 + SENSING_PERIOD, position: None },
        ]
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + 2.0 * self.start.distance(self.target) / self.speed + self.hold
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(speed: f64) -> HandSource {
        let start = Vec3::new(0.0, 1.0, 0.2);
        let end = Vec3::new(0.0, 0.0, 0.2);
        HandSource::scripted(vec![
            Keyframe { t: 0.0, position: Some(start) },
            Keyframe { t: 1.0 / speed, position: Some(end) },
        ])
        .unwrap()
    }

    #[test]
    fn samples_advance_a_tenth_of_speed() {
        let mut h = line(0.8);
        let mut prev = h.sample(0.0).keypoints[0];
        let mut t = 0.0;
        for _ in 0..5 {
            t += 0.1;
            let p = h.sample(t).keypoints[0];
            assert!((prev.distance(p) - 0.08).abs() < 1e-9);
            prev = p;
        }
    }

    #[test]
    fn held_between_ticks() {
        let mut h = line(0.8);
        let a = h.sample(0.1).keypoints[0];
        for k in 1..25 {
            assert_eq!(h.sample(0.1 + k as f64 * 0.004).keypoints[0], a);
        }
        assert_ne!(h.sample(0.2).keypoints[0], a);
    }

    #[test]
    fn velocity_converges_to_motion() {
        let mut h = line(0.8);
        let mut v = Vec3::ZERO;
        for k in 0..10 {
            v = h.sample(k as f64 * 0.1).velocity;
        }
        assert!((v.y + 0.8).abs() < 1e-3, "{v:?}");
    }

    #[test]
    fn absent_before_first_sample() {
        let mut h = HandSource::scripted(vec![Keyframe { t: 0.5, position: Some(Vec3::ZERO) }]).unwrap();
        assert!(!h.sample(0.3).present);
        assert!(h.sample(0.5).present);
    }

    #[test]
    fn stale_live_feed_goes_absent() {
        let mut h = HandSource::live();
        h.feed(HandInput { t: 0.0, position: Some(Vec3::new(0.1, 0.0, 0.2)) });
        assert!(h.sample(0.0).present);
        assert!(h.sample(1.0).present);
        assert!(!h.sample(1.1).present);
        h.feed(HandInput { t: 1.15, position: Some(Vec3::ZERO) });
        assert!(h.sample(1.2).present);
    }

    #[test]
    fn recorded_matches_live() {
        let inputs: Vec<HandInput> = (0..20)
            .map(|k| HandInput { t: 0.04 * k as f64, position: Some(Vec3::new(0.01 * k as f64, 0.0, 0.2)) })
            .collect();
        let mut live = HandSource::live();
        let mut rec = HandSource::recorded(inputs.clone());
        let mut j = 0;
        for s in 0..300 {
            let t = s as f64 * 0.004;
            while j < inputs.len() && inputs[j].t <= t + 1e-12 {
                live.feed(inputs[j]);
                j += 1;
            }
            assert_eq!(live.sample(t), rec.sample(t));
        }
    }

    #[test]
    fn cluster_is_rigid() {
        let mut h = line(0.8).with_cluster(5, 0.02).unwrap();
        let k = h.hand_position(0.3);
        assert_eq!(k.len(), 5);
        for p in &k[1..] {
            assert!((p.distance(k[0]) - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn approach_script_round_trip() {
        let s = ApproachScript {
            start: Vec3::new(0.0, 0.8, 0.2),
            target: Vec3::new(0.0, 0.0, 0.2),
            speed: 0.8,
            start_time: 1.0,
            hold: 2.0,
        };
        let mut h = HandSource::scripted(s.keyframes()).unwrap();
        assert!(!h.sample(0.9).present);
        assert_eq!(h.sample(2.0).keypoints[0], s.target);
        assert!((h.sample(4.5).keypoints[0].y - 0.4).abs() < 1e-9);
        assert!(!h.sample(s.end_time() + 0.2).present);
    }

    #[test]
    fn unordered_keyframes_rejected() {
        let k = vec![Keyframe { t: 1.0, position: None }, Keyframe { t: 1.0, position: None }];
        assert!(matches!(HandSource::scripted(k), Err(HandError::UnorderedKeyframes { index: 1, .. })));
    }
}
