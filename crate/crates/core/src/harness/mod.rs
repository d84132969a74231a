//! Configuration, the simulation loop, traces, runs, sweeps and the live socket.

pub mod config;
mod runner;
#[cfg(not(target_arch = "wasm32"))]
pub mod serve;
mod sim;
pub mod trace;

pub use config::{ConfigError, RunConfig};
pub use runner::{
    default_s_p, footer_for, header_for, replay, replay_session, resimulate, run, session_inputs, sweep, write_metrics_json, write_sweep_csv, RunResult,
    Stat, SweepCell,
};
pub use sim::{SetupError, Simulation, StepOutcome};
pub use trace::{read_trace, write_trace, RunStatus, SimTrace, TraceError};
