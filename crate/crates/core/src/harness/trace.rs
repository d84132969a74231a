//! Newline-delimited trace files with a SHA-256 hash chain.
//!
//! Every line is `{"hash":"<hex>","body":<document>}` where the hash covers the
//! previous line's hash followed by the exact body bytes. The first line is the
//! header, the last the footer.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{HandProfile, RunConfig};
use crate::agent::{AgentId, AttachmentClass, HandSnapshot};
use crate::coordination::{NegotiationEvent, PriorityState, ProtocolMessage};
use crate::scenario::{CellId, HandInput, Phase, TaskEvent, WorldDescription};
use crate::vec3::Vec3;

pub const TRACE_SCHEMA: u32 = 1;
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub world: WorldDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub rho: f64,
    pub f_net: f64,
    pub f_tot: f64,
    pub phase: Phase,
    pub goal_enabled: bool,
    pub robot_avoidance_enabled: bool,
    pub grasped_block: Option<u32>,
    /// Straight source-to-destination segment while a block is being carried.
    pub transfer: Option<[Vec3; 2]>,
    /// Summed force per attachment class, in class order.
    pub class_forces: Vec<(AttachmentClass, Vec3)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventBody {
    Task(TaskEvent),
    Negotiation { node: AgentId, event: NegotiationEvent },
    StallDetected { agent: AgentId, rho: f64 },
    HumanPlaced { block: usize, cell: CellId },
    HandInput(HandInput),
    ProfileSwitched(HandProfile),
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// A protocol message as broadcast by its sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub time: f64,
    pub from: AgentId,
    pub message: ProtocolMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub time: f64,
    /// Simulated time since the previous record; integrating over spans covers the whole run.
    pub span: f64,
    pub agents: Vec<AgentRecord>,
    pub hands: Vec<HandSnapshot>,
    pub blocks_placed: usize,
    /// Priority state as seen by the first robot's node.
    pub priority: PriorityState,
    pub messages: Vec<MessageRecord>,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Capped,
    Faulted { reason: String },
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Capped => 2,
            RunStatus::Faulted { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps: u64,
    pub end_time: f64,
    pub records: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(TraceHeader),
    Record(TraceRecord),
    Footer(TraceFooter),
}

/// A fully loaded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub footer: Option<TraceFooter>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Integrity { line: usize, reason: String },
    #[error("trace is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn chain(prev: &str, body: &str) -> String {
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(body.as_bytes());
    hex::encode(h.finalize())
}

/// Serializes trace lines while maintaining the hash chain.
#[derive(Debug)]
pub struct TraceWriter<W: Write> {
    out: W,
    prev: String,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, prev: GENESIS.to_owned() }
    }

    pub fn write(&mut self, line: &TraceLine) -> Result<(), TraceError> {
        let body = serde_json::to_string(line)?;
        let hash = chain(&self.prev, &body);
        writeln!(self.out, "{{\"hash\":\"{hash}\",\"body\":{body}}}")?;
        self.prev = hash;
        Ok(())
    }

    /// Hash of the last line written; identifies the whole trace.
    pub fn head(&self) -> &str {
        &self.prev
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Deserialize)]
struct Chained<'a> {
    hash: String,
    #[serde(borrow)]
    body: &'a RawValue,
}

/// Reads and verifies a trace. Errors name the first (1-based) line that fails.
pub fn read_trace<R: BufRead>(input: R) -> Result<SimTrace, TraceError> {
    let mut prev = GENESIS.to_owned();
    let mut header = None;
    let mut records = Vec::new();
    let mut footer = None;
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let bad = |reason: String| TraceError::Integrity { line: n, reason };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let c: Chained = serde_json::from_str(&line).map_err(|e| bad(format!("malformed line: {e}")))?;
        let expect = chain(&prev, c.body.get());
        if c.hash != expect {
            return Err(bad("hash chain broken".into()));
        }
        prev = c.hash;
        let parsed: TraceLine = serde_json::from_str(c.body.get()).map_err(|e| bad(format!("bad record: {e}")))?;
        if footer.is_some() {
            return Err(bad("content after footer".into()));
        }
        match parsed {
            TraceLine::Header(h) if header.is_none() && n == 1 => header = Some(h),
            TraceLine::Header(_) => return Err(bad("unexpected header".into())),
            _ if header.is_none() => return Err(bad("missing header".into())),
            TraceLine::Record(r) => {
                if let Some(last) = records.last() {
                    let last: &TraceRecord = last;
                    if !(r.time > last.time) {
                        return Err(bad("timestamps not increasing".into()));
                    }
                }
                records.push(r);
            }
            TraceLine::Footer(f) => footer = Some(f),
        }
    }
    let header = header.ok_or(TraceError::Empty)?;
    Ok(SimTrace { header, records, footer })
}

pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> Result<String, TraceError> {
    let mut w = TraceWriter::new(out);
    w.write(&TraceLine::Header(trace.header.clone()))?;
    for r in &trace.records {
        w.write(&TraceLine::Record(r.clone()))?;
    }
    if let Some(f) = &trace.footer {
        w.write(&TraceLine::Footer(f.clone()))?;
    }
    Ok(w.head().to_owned())
}
