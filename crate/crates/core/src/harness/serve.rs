//! Live sessions over a local TCP socket.
//!
//! Frames are a 4-byte big-endian length followed by one UTF-8 JSON message.
//! On connect the server sends `hello`; the client must answer with its own
//! `hello` carrying the same schema before anything else is accepted. After
//! that the client sends `hand_input` and `control` messages and receives
//! `snapshot`s at a fixed wall-clock rate, plus `ack`/`error` replies.
//!
//! Any number of clients may watch; every one of them gets the same snapshots
//! and any of them may drive the hand. Each client has a small outgoing queue,
//! so a slow reader loses frames instead of holding up the simulation. The
//! simulation keeps running when clients go away; the hand then falls silent
//! and disengages after the silence timeout.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{HandConfig, RunConfig};
use super::runner::{footer_for, header_for};
use super::sim::{SetupError, Simulation};
use super::trace::{SimTrace, TraceRecord};
use crate::scenario::WorldDescription;
use crate::vec3::Vec3;

pub const WIRE_SCHEMA: u32 = 1;
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        schema: u32,
    },
    HandInput {
        #[serde(default)]
        hand: usize,
        position: Option<Vec3>,
    },
    Control {
        command: ControlCommand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<f64>,
    },
}

impl ClientMessage {
    pub fn control(command: ControlCommand) -> Self {
        Self::Control { command, profile: None, factor: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCommand {
    Start,
    Pause,
    Reset,
    /// Switch the hand-avoidance profile to the named preset's.
    Profile,
    /// Change the real-time factor (`factor`, > 0).
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Paused,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        schema: u32,
        session: u32,
        config_name: String,
        dt: f64,
        realtime_factor: f64,
        profiles: Vec<String>,
        world: Box<WorldDescription>,
    },
    Snapshot {
        session: u32,
        seq: u64,
        state: SessionState,
        realtime_factor: f64,
        record: Box<TraceRecord>,
    },
    /// Sent once the command has been applied; `time` is the simulation time at that boundary.
    Ack {
        command: ControlCommand,
        session: u32,
        time: f64,
    },
    Error {
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<(), FrameError> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME {
        return Err(FrameError::TooLarge(body.len()));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame's payload. Payload errors leave the stream aligned on the next frame.
pub fn read_frame_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, FrameError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_frame<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T, FrameError> {
    let buf = read_frame_bytes(r)?;
    Ok(serde_json::from_slice(&buf)?)
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub realtime_factor: f64,
    pub snapshot_hz: f64,
    /// Start stepping without waiting for a `start` command.
    pub autostart: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { realtime_factor: 1.0, snapshot_hz: 40.0, autostart: false }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid option: {0}")]
    Options(String),
}

enum Command {
    Control { client: u64, command: ControlCommand, profile: Option<String>, factor: Option<f64> },
}

/// Outgoing frames queued per client; a full queue drops the frame instead of waiting.
const OUTBOX: usize = 16;

#[derive(Default)]
struct Clients {
    next_id: u64,
    outboxes: Vec<(u64, SyncSender<ServerMessage>)>,
}

type Registry = Arc<Mutex<Clients>>;
type Mailbox = Arc<Mutex<Option<(usize, Option<Vec3>)>>>;

impl Clients {
    fn add(&mut self, outbox: SyncSender<ServerMessage>) -> u64 {
        self.next_id += 1;
        self.outboxes.push((self.next_id, outbox));
        self.next_id
    }

    fn remove(&mut self, id: u64) {
        self.outboxes.retain(|(c, _)| *c != id);
    }

    fn broadcast(&mut self, msg: &ServerMessage) {
        self.outboxes.retain(|(_, tx)| !matches!(tx.try_send(msg.clone()), Err(TrySendError::Disconnected(_))));
    }

    fn send_to(&self, id: u64, msg: ServerMessage) {
        if let Some((_, tx)) = self.outboxes.iter().find(|(c, _)| *c == id) {
            let _ = tx.try_send(msg);
        }
    }

    fn len(&self) -> usize {
        self.outboxes.len()
    }
}

/// A running server; dropping it without [`ServerHandle::shutdown`] leaves the threads running.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: JoinHandle<Vec<SimTrace>>,
    accept: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Flag that stops the server when set, e.g. from a signal handler.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stops the server and returns one trace per session (resets start new sessions).
    pub fn shutdown(self) -> Vec<SimTrace> {
        self.stop.store(true, Ordering::SeqCst);
        self.wait()
    }

    /// Blocks until the stop flag is set, then returns the session traces.
    pub fn wait(self) -> Vec<SimTrace> {
        let _ = self.accept.join();
        self.sim.join().unwrap_or_default()
    }
}

/// The configuration a live session actually runs: the hand is always live.
pub fn live_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.hand = HandConfig::Live;
    c
}

/// Binds (use port 0 for an ephemeral port) and starts serving in background threads.
pub fn serve(cfg: &RunConfig, addr: impl ToSocketAddrs, opts: ServeOptions) -> Result<ServerHandle, ServeError> {
    if !(opts.realtime_factor > 0.0 && opts.realtime_factor.is_finite()) {
        return Err(ServeError::Options("realtime factor must be positive".into()));
    }
    if !(opts.snapshot_hz >= 30.0 && opts.snapshot_hz.is_finite()) {
        return Err(ServeError::Options("snapshot rate must be at least 30 Hz".into()));
    }
    let cfg = live_config(cfg);
    let sim = Simulation::new(cfg.clone())?;
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let stop = Arc::new(AtomicBool::new(false));
    let clients: Registry = Arc::default();
    let mailbox: Mailbox = Arc::default();
    let (tx, rx) = mpsc::channel();
    let hello = Arc::new(Mutex::new(hello_for(&sim, 0, opts.realtime_factor)));

    let accept = {
        let (stop, clients, mailbox, hello) = (stop.clone(), clients.clone(), mailbox.clone(), hello.clone());
        thread::spawn(move || accept_loop(listener, stop, clients, mailbox, tx, hello))
    };
    let sim = {
        let session = SessionLoop {
            base: cfg,
            sim,
            opts,
            clients,
            mailbox,
            rx,
            stop: stop.clone(),
            hello,
            session: 0,
            seq: 0,
            running: false,
            records: Vec::new(),
            finished: Vec::new(),
            anchor: (Instant::now(), 0.0),
        };
        thread::spawn(move || session.run())
    };
    Ok(ServerHandle { addr, stop, sim, accept })
}

fn hello_for(sim: &Simulation, session: u32, realtime_factor: f64) -> ServerMessage {
    ServerMessage::Hello {
        schema: WIRE_SCHEMA,
        session,
        config_name: sim.config().name.clone(),
        dt: sim.config().dt,
        realtime_factor,
        profiles: profile_names().iter().map(|s| (*s).to_owned()).collect(),
        world: Box::new(sim.world().clone()),
    }
}

fn profile_names() -> &'static [&'static str] {
    &["profile1", "profile2", "profile3", "profile4", "profile1-damper"]
}

fn accept_loop(
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    clients: Registry,
    mailbox: Mailbox,
    tx: Sender<Command>,
    hello: Arc<Mutex<ServerMessage>>,
) {
    let mut readers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let Ok(writer) = stream.try_clone() else { continue };
                let (out_tx, out_rx) = mpsc::sync_channel(OUTBOX);
                let _ = out_tx.try_send(hello.lock().expect("hello lock").clone());
                let (stop, clients, mailbox, tx) = (stop.clone(), clients.clone(), mailbox.clone(), tx.clone());
                readers.retain(|h| !h.is_finished());
                readers.push(thread::spawn(move || {
                    let w = thread::spawn(move || write_loop(writer, out_rx));
                    read_loop(stream, out_tx, stop, clients, mailbox, tx);
                    let _ = w.join();
                }));
            }
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
    for h in readers {
        let _ = h.join();
    }
}

/// Drains one client's queue onto its socket; ends when the queue closes or the socket fails.
fn write_loop(mut stream: TcpStream, outbox: Receiver<ServerMessage>) {
    for msg in outbox {
        if write_frame(&mut stream, &msg).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn read_loop(
    mut reader: TcpStream,
    outbox: SyncSender<ServerMessage>,
    stop: Arc<AtomicBool>,
    clients: Registry,
    mailbox: Mailbox,
    tx: Sender<Command>,
) {
    // Poll so that shutdown is noticed even when the client is idle.
    let _ = reader.set_read_timeout(Some(Duration::from_millis(50)));
    let mut id = None;
    let reply = |reason: String| {
        let _ = outbox.try_send(ServerMessage::Error { reason });
    };
    while !stop.load(Ordering::SeqCst) {
        let bytes = match read_frame_bytes(&mut reader) {
            Ok(b) => b,
            Err(FrameError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                continue;
            }
            Err(FrameError::TooLarge(n)) => {
                // The stream can no longer be trusted to be frame-aligned.
                reply(format!("frame of {n} bytes exceeds the limit"));
                break;
            }
            Err(_) => break,
        };
        let msg: ClientMessage = match serde_json::from_slice(&bytes) {
            Ok(m) => m,
            Err(e) => {
                reply(format!("malformed message: {e}"));
                continue;
            }
        };
        match (msg, id) {
            (ClientMessage::Hello { schema }, None) => {
                if schema != WIRE_SCHEMA {
                    reply(format!("schema {schema} not supported; server speaks {WIRE_SCHEMA}"));
                    break;
                }
                id = Some(clients.lock().expect("clients lock").add(outbox.clone()));
            }
            (_, None) => reply("expected hello first".into()),
            (ClientMessage::Hello { .. }, Some(_)) => reply("already greeted".into()),
            (ClientMessage::HandInput { hand, position }, Some(_)) => {
                if position.is_some_and(|p| !p.is_finite()) {
                    reply("non-finite hand position".into());
                } else {
                    // Single slot: a newer input replaces one not yet consumed.
                    *mailbox.lock().expect("mailbox lock") = Some((hand, position));
                }
            }
            (ClientMessage::Control { command, profile, factor }, Some(client)) => {
                let _ = tx.send(Command::Control { client, command, profile, factor });
            }
        }
    }
    if let Some(id) = id {
        clients.lock().expect("clients lock").remove(id);
    }
    // Dropping the last sender ends the writer once it has flushed what is queued.
}

struct SessionLoop {
    base: RunConfig,
    sim: Simulation,
    opts: ServeOptions,
    clients: Registry,
    mailbox: Mailbox,
    rx: Receiver<Command>,
    stop: Arc<AtomicBool>,
    hello: Arc<Mutex<ServerMessage>>,
    session: u32,
    seq: u64,
    running: bool,
    records: Vec<TraceRecord>,
    finished: Vec<SimTrace>,
    /// Wall-clock instant and sim time when pacing last restarted.
    anchor: (Instant, f64),
}

impl SessionLoop {
    fn state(&self) -> SessionState {
        if self.sim.is_finished() {
            SessionState::Finished
        } else if self.running {
            SessionState::Running
        } else {
            SessionState::Paused
        }
    }

    fn repace(&mut self) {
        self.anchor = (Instant::now(), self.sim.time());
    }

    fn close_session(&mut self) {
        let header = header_for(&self.sim);
        self.sim.close();
        self.records.append(&mut self.sim.drain_records());
        let records = std::mem::take(&mut self.records);
        let footer = footer_for(&self.sim, records.len() as u64);
        self.finished.push(SimTrace { header, records, footer: Some(footer) });
    }

    fn control(&mut self, command: ControlCommand, profile: Option<String>, factor: Option<f64>) -> Result<(), String> {
        match command {
            ControlCommand::Start => {
                self.running = true;
                self.repace();
            }
            ControlCommand::Pause => self.running = false,
            ControlCommand::Reset => {
                let fresh = Simulation::new(self.base.clone()).map_err(|e| e.to_string())?;
                self.close_session();
                self.sim = fresh;
                self.session += 1;
                self.running = self.opts.autostart;
                self.repace();
                let greeting = hello_for(&self.sim, self.session, self.opts.realtime_factor);
                self.clients.lock().expect("clients lock").broadcast(&greeting);
                *self.hello.lock().expect("hello lock") = greeting;
            }
            ControlCommand::Profile => {
                let name = profile.ok_or("profile command needs a `profile` name")?;
                if !profile_names().contains(&name.as_str()) {
                    return Err(format!("unknown profile `{name}`"));
                }
                let preset = RunConfig::preset(&name).map_err(|e| e.to_string())?;
                self.sim.switch_hand_profile(preset.hand_profile())?;
            }
            ControlCommand::Speed => {
                let f = factor.ok_or("speed command needs a `factor`")?;
                if !(f > 0.0 && f.is_finite() && f <= 100.0) {
                    return Err(format!("realtime factor {f} outside (0, 100]"));
                }
                self.opts.realtime_factor = f;
                self.repace();
            }
        }
        Ok(())
    }

    fn run(mut self) -> Vec<SimTrace> {
        self.running = self.opts.autostart;
        self.repace();
        let period = Duration::from_secs_f64(1.0 / self.opts.snapshot_hz);
        let mut next_snapshot = Instant::now();
        while !self.stop.load(Ordering::SeqCst) {
            while let Ok(Command::Control { client, command, profile, factor }) = self.rx.try_recv() {
                let reply = match self.control(command, profile, factor) {
                    Ok(()) => ServerMessage::Ack { command, session: self.session, time: self.sim.time() },
                    Err(reason) => ServerMessage::Error { reason },
                };
                self.clients.lock().expect("clients lock").send_to(client, reply);
            }

            if self.running && !self.sim.is_finished() {
                let (t0, s0) = self.anchor;
                let target = s0 + t0.elapsed().as_secs_f64() * self.opts.realtime_factor;
                // Bounded catch-up keeps snapshots flowing if stepping falls behind.
                let mut budget = 2000;
                while self.sim.time() + self.sim.config().dt <= target + 1e-12 && budget > 0 && !self.sim.is_finished() {
                    if let Some((hand, position)) = self.mailbox.lock().expect("mailbox lock").take() {
                        self.sim.feed_hand(hand, position);
                    }
                    self.sim.step();
                    self.records.append(&mut self.sim.drain_records());
                    budget -= 1;
                }
                if budget == 0 {
                    self.repace();
                }
                if self.sim.is_finished() {
                    self.running = false;
                }
            }

            let now = Instant::now();
            if now >= next_snapshot {
                let mut clients = self.clients.lock().expect("clients lock");
                if clients.len() > 0 {
                    let snap = ServerMessage::Snapshot {
                        session: self.session,
                        seq: self.seq,
                        state: self.state(),
                        realtime_factor: self.opts.realtime_factor,
                        record: Box::new(self.sim.peek_record()),
                    };
                    clients.broadcast(&snap);
                }
                drop(clients);
                self.seq += 1;
                next_snapshot += period;
                if next_snapshot < now {
                    next_snapshot = now + period;
                }
            }
            let wake = next_snapshot.saturating_duration_since(Instant::now()).min(Duration::from_millis(2));
            thread::sleep(wake);
        }
        self.close_session();
        self.finished
    }
}

/// Minimal blocking client, used by tests and tooling.
pub struct ServeClient {
    stream: TcpStream,
    pub hello: ServerMessage,
}

impl ServeClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, FrameError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let hello: ServerMessage = read_frame(&mut stream)?;
        if let ServerMessage::Error { reason } = &hello {
            return Err(FrameError::Io(io::Error::new(io::ErrorKind::ConnectionRefused, reason.clone())));
        }
        write_frame(&mut stream, &ClientMessage::Hello { schema: WIRE_SCHEMA })?;
        Ok(Self { stream, hello })
    }

    pub fn send(&mut self, msg: &ClientMessage) -> Result<(), FrameError> {
        write_frame(&mut self.stream, msg)
    }

    pub fn send_raw(&mut self, payload: &[u8]) -> io::Result<()> {
        self.stream.write_all(&(payload.len() as u32).to_be_bytes())?;
        self.stream.write_all(payload)
    }

    pub fn recv(&mut self) -> Result<ServerMessage, FrameError> {
        read_frame(&mut self.stream)
    }

    pub fn set_timeout(&self, d: Option<Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(d)
    }

    /// Receives until a message matches, discarding the rest.
    pub fn recv_until(&mut self, mut pred: impl FnMut(&ServerMessage) -> bool) -> Result<ServerMessage, FrameError> {
        loop {
            let m = self.recv()?;
            if pred(&m) {
                return Ok(m);
            }
        }
    }
}
