//! Metrics over traces and combinatorial conflict counting.

mod conflicts;
mod fairness;
mod geometry;
mod metrics;
mod ssm;

pub use conflicts::{conflict_count, conflict_monte_carlo, conflict_probability, ConflictCount, ConflictError};
pub use fairness::{fairness_report, FairnessReport};
pub use geometry::{segment_distance_xy, segments_intersect, segments_intersect_xy, LatticePoint, LATTICE};
pub use metrics::{
    compute_metrics, crossing_and_near_miss, grants, min_separations, pairwise_minima, stall_events, violation_time,
    MetricsRecord, Separations, StallEvent, NEAR_MISS_DISTANCE,
};
pub use ssm::{ssm_protective_distance, SsmParams};
