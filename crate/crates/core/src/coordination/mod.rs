//! Force-balance stall detection and the priority negotiation protocol.

mod negotiator;
mod protocol;
mod stall;
mod transport;

pub use negotiator::{LocalStatus, NegotiationEvent, Negotiator, NegotiatorConfig, RoundOutput};
pub use protocol::{
    apply_priority, preferred_candidates, release_priority, restore_commands, select_priority, selection_probabilities,
    Baseline, HolderProgress, NegotiationMessage, PriorityGrant, PriorityRelease, PriorityState, ProtocolMessage,
    RobotStatus, RoundKey, SelectionRules, ToggleCommand,
};
pub use stall::{detect_stall, stall_metric, MetricScope, StallDetector, StallMetricSample};
pub use transport::{Envelope, Transport, TransportConfig};
