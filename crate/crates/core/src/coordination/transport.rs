use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::ProtocolMessage;
use crate::agent::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    /// Delivery delay in control steps; at least one.
    pub delay_steps: u32,
    /// Probability that any single point-to-point delivery is lost.
    pub drop_rate: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self { delay_steps: 1, drop_rate: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sent_at: f64,
    pub from: AgentId,
    pub to: AgentId,
    pub message: ProtocolMessage,
}

/// In-process mailbox connecting the robot controllers.
///
/// Delivery order is the send order, so a run is reproducible from its seed.
#[derive(Debug, Clone)]
pub struct Transport {
    config: TransportConfig,
    nodes: Vec<AgentId>,
    rng: ChaCha8Rng,
    in_flight: Vec<(u64, Envelope)>,
}

impl Transport {
    pub fn new(nodes: Vec<AgentId>, config: TransportConfig, seed: u64) -> Self {
        Self { config, nodes, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7A11_5EED), in_flight: Vec::new() }
    }

    pub fn broadcast(&mut self, from: AgentId, message: ProtocolMessage, step: u64, time: f64) {
        let deliver_at = step + u64::from(self.config.delay_steps.max(1));
        for to in self.nodes.iter().copied().filter(|n| *n != from) {
            if self.config.drop_rate > 0.0 && self.rng.gen::<f64>() < self.config.drop_rate {
                continue;
            }
            self.in_flight.push((deliver_at, Envelope { sent_at: time, from, to, message }));
        }
    }

    /// Removes and returns every message due at `step`, grouped by recipient position in `nodes`.
    pub fn deliver(&mut self, step: u64) -> Vec<Vec<ProtocolMessage>> {
        let mut inboxes = vec![Vec::new(); self.nodes.len()];
        let mut keep = Vec::with_capacity(self.in_flight.len());
        for (due, env) in self.in_flight.drain(..) {
            if due <= step {
                if let Some(pos) = self.nodes.iter().position(|n| *n == env.to) {
                    inboxes[pos].push(env.message);
                }
            } else {
                keep.push((due, env));
            }
        }
        self.in_flight = keep;
        inboxes
    }

    pub fn pending(&self) -> usize {
        self.in_flight.len()
    }
}
