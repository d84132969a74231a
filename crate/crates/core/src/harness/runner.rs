//! Headless runs, replay and parameter sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, HandConfig, HandProfile, RunConfig};
use super::sim::{SetupError, Simulation, StepOutcome};
use super::trace::{write_trace, EventBody, RunStatus, SimTrace, TraceError, TraceFooter, TraceHeader, TRACE_SCHEMA};
use crate::scenario::HandInput;
use crate::analysis::{compute_metrics, ssm_protective_distance, MetricsRecord, SsmParams};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: SimTrace,
    pub metrics: MetricsRecord,
}

impl RunResult {
    pub fn status(&self) -> &RunStatus {
        &self.trace.footer.as_ref().expect("finished runs carry a footer").status
    }

    /// Serialized trace and the hash of its last line.
    pub fn trace_bytes(&self) -> Result<(Vec<u8>, String), TraceError> {
        let mut buf = Vec::new();
        let head = write_trace(&self.trace, &mut buf)?;
        Ok((buf, head))
    }
}

/// Protective separation distance used for violation time.
pub fn default_s_p() -> f64 {
    ssm_protective_distance(&SsmParams::default())
}

pub fn header_for(sim: &Simulation) -> TraceHeader {
    let cfg = sim.config().clone();
    TraceHeader { schema: TRACE_SCHEMA, config_hash: cfg.hash(), seed: cfg.seed, world: sim.world().clone(), config: cfg }
}

pub fn footer_for(sim: &Simulation, records: u64) -> TraceFooter {
    let status = match sim.outcome() {
        StepOutcome::Completed => RunStatus::Completed,
        StepOutcome::Faulted { reason } => RunStatus::Faulted { reason: reason.clone() },
        StepOutcome::Capped | StepOutcome::Running => RunStatus::Capped,
    };
    TraceFooter { status, steps: sim.step_index(), end_time: sim.time(), records }
}

/// Runs a configuration to completion, cap or fault.
pub fn run(cfg: &RunConfig) -> Result<RunResult, SetupError> {
    let mut sim = Simulation::new(cfg.clone())?;
    let header = header_for(&sim);
    let mut records = Vec::new();
    while !sim.is_finished() {
        sim.step();
        records.append(&mut sim.drain_records());
    }
    records.append(&mut sim.drain_records());
    let footer = footer_for(&sim, records.len() as u64);
    let trace = SimTrace { header, records, footer: Some(footer) };
    let metrics = replay(&trace);
    Ok(RunResult { trace, metrics })
}

/// Metrics recomputed from a (verified) trace.
pub fn replay(trace: &SimTrace) -> MetricsRecord {
    compute_metrics(trace, default_s_p())
}

/// Re-runs the trace's configuration and reports whether it reproduces the same records.
pub fn resimulate(trace: &SimTrace) -> Result<bool, SetupError> {
    if trace.header.config.hash() != trace.header.config_hash {
        return Ok(false);
    }
    let again = run(&trace.header.config)?;
    Ok(again.trace == *trace)
}

/// Hand inputs a live session ingested, in arrival order.
pub fn session_inputs(trace: &SimTrace) -> Vec<HandInput> {
    trace
        .records
        .iter()
        .flat_map(|r| &r.events)
        .filter_map(|e| match e.body {
            EventBody::HandInput(i) => Some(i),
            _ => None,
        })
        .collect()
}

/// Re-runs a live session headlessly: the recorded hand inputs are replayed at
/// their arrival times, profile switches are re-applied at the step they took
/// effect, and the run stops where the session stopped.
pub fn replay_session(trace: &SimTrace) -> Result<RunResult, SetupError> {
    let mut cfg = trace.header.config.clone();
    cfg.hand = HandConfig::Recorded { inputs: session_inputs(trace) };
    let switches: Vec<(f64, HandProfile)> = trace
        .records
        .iter()
        .flat_map(|r| &r.events)
        .filter_map(|e| match e.body {
            EventBody::ProfileSwitched(p) => Some((e.time, p)),
            _ => None,
        })
        .collect();
    let steps = trace.footer.as_ref().map_or(u64::MAX, |f| f.steps);
    let mut sim = Simulation::new(cfg)?;
    let header = header_for(&sim);
    let mut records = Vec::new();
    let mut next = 0;
    while !sim.is_finished() && sim.step_index() < steps {
        while let Some((t, p)) = switches.get(next) {
            if *t > sim.time() + 1e-9 {
                break;
            }
            // The live session accepted it at this boundary, so it applies again.
            let _ = sim.switch_hand_profile(*p);
            next += 1;
        }
        sim.step();
        records.append(&mut sim.drain_records());
    }
    sim.close();
    records.append(&mut sim.drain_records());
    let footer = footer_for(&sim, records.len() as u64);
    let trace = SimTrace { header, records, footer: Some(footer) };
    let metrics = replay(&trace);
    Ok(RunResult { trace, metrics })
}

pub fn write_metrics_json<W: Write>(m: &MetricsRecord, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, m)
}

/// One cell of a sweep table: all seeds for one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub runs: usize,
    pub completed: usize,
    pub faulted: usize,
    pub errors: Vec<String>,
    pub completion_time: Stat,
    pub d_min_rr: Stat,
    pub d_min_rh: Stat,
    pub t_below_sp: Stat,
    pub t_cross: Stat,
    pub t_nm: Stat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; zero for a single value.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { n, mean: Some(mean), std: Some(var.sqrt()) }
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => write!(f, "{m:.3} ± {s:.3}"),
            _ => write!(f, "-"),
        }
    }
}

/// Runs `base` once per (axis value, seed) and aggregates per value. A run that
/// fails to set up or faults is counted in its cell and the sweep goes on.
pub fn sweep(
    base: &RunConfig,
    path: &str,
    values: &[toml::Value],
    seeds: &[u64],
    mut progress: impl FnMut(&str, u64, Result<&RunResult, &str>),
) -> Result<Vec<SweepCell>, ConfigError> {
    let configs: Vec<RunConfig> = values.iter().map(|v| base.with_override(path, v.clone())).collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for (value, cfg) in values.iter().zip(configs) {
        let label = value.to_string();
        let mut metrics = Vec::new();
        let mut faulted = 0;
        let mut errors = Vec::new();
        for &seed in seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            match run(&c) {
                Ok(r) => {
                    progress(&label, seed, Ok(&r));
                    if let RunStatus::Faulted { reason } = r.status() {
                        faulted += 1;
                        errors.push(reason.clone());
                    } else {
                        metrics.push(r.metrics);
                    }
                }
                Err(e) => {
                    progress(&label, seed, Err(&e.to_string()));
                    faulted += 1;
                    errors.push(e.to_string());
                }
            }
        }
        let pick = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| Stat::of(&metrics.iter().filter_map(f).collect::<Vec<_>>());
        cells.push(SweepCell {
            value: label,
            runs: seeds.len(),
            completed: metrics.iter().filter(|m| m.completion_time.is_some()).count(),
            faulted,
            errors,
            completion_time: pick(&|m| m.completion_time),
            d_min_rr: pick(&|m| m.d_min_rr),
            d_min_rh: pick(&|m| m.d_min_rh),
            t_below_sp: pick(&|m| Some(m.t_below_sp)),
            t_cross: pick(&|m| Some(m.t_cross)),
            t_nm: pick(&|m| Some(m.t_nm)),
        });
    }
    Ok(cells)
}

/// Flat CSV with one row per cell and mean/std columns per metric.
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let metrics = ["completion_time", "d_min_rr", "d_min_rh", "t_below_sp", "t_cross", "t_nm"];
    let mut head = vec!["value".to_owned(), "runs".into(), "completed".into(), "faulted".into()];
    for m in metrics {
        head.push(format!("{m}_mean"));
        head.push(format!("{m}_std"));
    }
    w.write_record(&head)?;
    for c in cells {
        let mut row = vec![c.value.clone(), c.runs.to_string(), c.completed.to_string(), c.faulted.to_string()];
        for s in [c.completion_time, c.d_min_rr, c.d_min_rh, c.t_below_sp, c.t_cross, c.t_nm] {
            row.push(s.mean.map(|v| v.to_string()).unwrap_or_default());
            row.push(s.std.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
