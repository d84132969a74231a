use std::io::Write;
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use vmcollab::harness::serve::{
    read_frame, serve, write_frame, ClientMessage, ControlCommand, ServeClient, ServeOptions, ServerMessage,
    SessionState, WIRE_SCHEMA,
};
use vmcollab::harness::trace::EventBody;
use vmcollab::harness::{replay_session, RunConfig};
use vmcollab::agent::AttachmentClass;
use vmcollab::Vec3;

fn hold_config() -> RunConfig {
    let mut c = RunConfig::preset("profile4").unwrap();
    c.duration_cap = 600.0;
    c
}

fn start(opts: ServeOptions) -> (vmcollab::harness::serve::ServerHandle, ServeClient) {
    let server = serve(&hold_config(), "127.0.0.1:0", opts).unwrap();
    let client = ServeClient::connect(server.local_addr()).unwrap();
    client.set_timeout(Some(Duration::from_secs(5))).unwrap();
    (server, client)
}

fn snapshot(c: &mut ServeClient) -> (u32, u64, SessionState, vmcollab::harness::trace::TraceRecord) {
    match c.recv_until(|m| matches!(m, ServerMessage::Snapshot { .. })).unwrap() {
        ServerMessage::Snapshot { session, seq, state, record, .. } => (session, seq, state, *record),
        _ => unreachable!(),
    }
}

fn control(c: &mut ServeClient, msg: ClientMessage) -> ServerMessage {
    c.send(&msg).unwrap();
    c.recv_until(|m| matches!(m, ServerMessage::Ack { .. } | ServerMessage::Error { .. })).unwrap()
}

fn acked(reply: ServerMessage, expected: ControlCommand) -> f64 {
    match reply {
        ServerMessage::Ack { command, time, .. } if command == expected => time,
        other => panic!("expected ack for {expected:?}, got {other:?}"),
    }
}

/// Snapshots queue up in the socket; a command round trip flushes the stale ones.
fn fresh_snapshot(c: &mut ServeClient) -> vmcollab::harness::trace::TraceRecord {
    let speed = ClientMessage::Control { command: ControlCommand::Speed, profile: None, factor: None };
    c.send(&speed).unwrap();
    c.recv_until(|m| matches!(m, ServerMessage::Error { .. })).unwrap();
    snapshot(c).3
}

#[test]
fn handshake_then_snapshots_at_thirty_hertz_or_more() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    match &c.hello {
        ServerMessage::Hello { schema, session, world, .. } => {
            assert_eq!(*schema, WIRE_SCHEMA);
            assert_eq!(*session, 0);
            assert_eq!(world.n_robots, 1);
        }
        other => panic!("expected hello, got {other:?}"),
    }
    snapshot(&mut c);
    let t0 = Instant::now();
    let mut n = 0;
    let mut last = (0, f64::NEG_INFINITY);
    while t0.elapsed() < Duration::from_secs(2) {
        let (_, seq, _, rec) = snapshot(&mut c);
        assert!(seq > last.0 || n == 0);
        assert!(rec.time >= last.1, "snapshot time went back: {} after {}", rec.time, last.1);
        last = (seq, rec.time);
        n += 1;
    }
    let rate = f64::from(n) / t0.elapsed().as_secs_f64();
    assert!(rate >= 30.0, "snapshot rate {rate:.1} Hz");
    // Real-time pacing: two seconds of wall clock is about two seconds of simulation.
    assert!((1.5..2.6).contains(&last.1), "sim time {}", last.1);
    server.shutdown();
}

#[test]
fn wrong_schema_is_refused() {
    let server = serve(&hold_config(), "127.0.0.1:0", ServeOptions::default()).unwrap();
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let hello: ServerMessage = read_frame(&mut s).unwrap();
    assert!(matches!(hello, ServerMessage::Hello { .. }));
    write_frame(&mut s, &ClientMessage::Hello { schema: WIRE_SCHEMA + 1 }).unwrap();
    match read_frame::<_, ServerMessage>(&mut s).unwrap() {
        ServerMessage::Error { reason } => assert!(reason.contains("schema"), "{reason}"),
        other => panic!("{other:?}"),
    }
    assert!(read_frame::<_, ServerMessage>(&mut s).is_err(), "connection stays open after a bad handshake");
    server.shutdown();
}

#[test]
fn messages_before_hello_are_rejected() {
    let server = serve(&hold_config(), "127.0.0.1:0", ServeOptions::default()).unwrap();
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let _: ServerMessage = read_frame(&mut s).unwrap();
    write_frame(&mut s, &ClientMessage::control(ControlCommand::Start)).unwrap();
    match read_frame::<_, ServerMessage>(&mut s).unwrap() {
        ServerMessage::Error { reason } => assert!(reason.contains("hello"), "{reason}"),
        other => panic!("{other:?}"),
    }
    server.shutdown();
}

#[test]
fn malformed_frames_get_an_error_and_the_session_continues() {
    let (server, mut c) = start(ServeOptions::default());
    c.send_raw(b"{not json").unwrap();
    match c.recv_until(|m| matches!(m, ServerMessage::Error { .. })).unwrap() {
        ServerMessage::Error { reason } => assert!(reason.starts_with("malformed"), "{reason}"),
        _ => unreachable!(),
    }
    c.send_raw(br#"{"type":"control","command":"explode"}"#).unwrap();
    assert!(matches!(c.recv_until(|m| matches!(m, ServerMessage::Error { .. })).unwrap(), ServerMessage::Error { .. }));
    acked(control(&mut c, ClientMessage::control(ControlCommand::Start)), ControlCommand::Start);
    server.shutdown();
}

#[test]
fn oversized_frame_closes_the_connection() {
    let server = serve(&hold_config(), "127.0.0.1:0", ServeOptions::default()).unwrap();
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let _: ServerMessage = read_frame(&mut s).unwrap();
    write_frame(&mut s, &ClientMessage::Hello { schema: WIRE_SCHEMA }).unwrap();
    s.write_all(&u32::MAX.to_be_bytes()).unwrap();
    let reason = loop {
        match read_frame::<_, ServerMessage>(&mut s).unwrap() {
            ServerMessage::Error { reason } => break reason,
            _ => continue,
        }
    };
    assert!(reason.contains("exceeds"), "{reason}");
    let closed = (0..200).any(|_| read_frame::<_, ServerMessage>(&mut s).is_err());
    assert!(closed);
    server.shutdown();
}

#[test]
fn pause_start_reset_and_bad_commands() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    thread::sleep(Duration::from_millis(100));
    let paused_at = acked(control(&mut c, ClientMessage::control(ControlCommand::Pause)), ControlCommand::Pause);
    let (_, _, state, a) = snapshot(&mut c);
    assert_eq!(state, SessionState::Paused);
    assert_eq!(a.time, paused_at);
    thread::sleep(Duration::from_millis(200));
    let b = fresh_snapshot(&mut c);
    assert_eq!(a.time, b.time, "paused session advanced");

    let bad = ClientMessage::Control { command: ControlCommand::Profile, profile: Some("profile9".into()), factor: None };
    assert!(matches!(control(&mut c, bad), ServerMessage::Error { .. }));
    let bad = ClientMessage::Control { command: ControlCommand::Speed, profile: None, factor: Some(-1.0) };
    assert!(matches!(control(&mut c, bad), ServerMessage::Error { .. }));
    let ok = ClientMessage::Control { command: ControlCommand::Profile, profile: Some("profile1".into()), factor: None };
    acked(control(&mut c, ok), ControlCommand::Profile);

    let fast = ClientMessage::Control { command: ControlCommand::Speed, profile: None, factor: Some(4.0) };
    acked(control(&mut c, fast), ControlCommand::Speed);
    let t0 = Instant::now();
    let started = acked(control(&mut c, ClientMessage::control(ControlCommand::Start)), ControlCommand::Start);
    thread::sleep(Duration::from_millis(500));
    let d = fresh_snapshot(&mut c);
    let expected = 4.0 * t0.elapsed().as_secs_f64();
    assert!((d.time - started - expected).abs() < 0.5, "4x pacing: {started} -> {} over {expected}", d.time);

    let reset_at = acked(control(&mut c, ClientMessage::control(ControlCommand::Reset)), ControlCommand::Reset);
    assert_eq!(reset_at, 0.0);
    let (session, _, state, e) = snapshot(&mut c);
    assert_eq!(session, 1);
    assert_eq!(state, SessionState::Running);
    assert!(e.time < d.time);
    let traces = server.shutdown();
    assert_eq!(traces.len(), 2);
    assert!(traces[0].records.iter().flat_map(|r| &r.events).any(|e| matches!(e.body, EventBody::ProfileSwitched(_))));
}

#[test]
fn every_viewer_gets_the_same_snapshots() {
    let (server, mut driver) = start(ServeOptions { autostart: true, ..Default::default() });
    let mut viewer = ServeClient::connect(server.local_addr()).unwrap();
    viewer.set_timeout(Some(Duration::from_secs(5))).unwrap();
    let (_, seq, _, _) = snapshot(&mut viewer);
    let target = seq + 5;
    let pick = |c: &mut ServeClient| loop {
        let (_, s, _, rec) = snapshot(c);
        if s == target {
            break rec;
        }
        assert!(s < target, "skipped past seq {target}");
    };
    assert_eq!(pick(&mut driver), pick(&mut viewer));
    server.shutdown();
}

#[test]
fn a_client_that_never_reads_does_not_stall_the_simulation() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    // Connects and greets but never reads: its queue and socket buffers fill up.
    let mut idle = TcpStream::connect(server.local_addr()).unwrap();
    write_frame(&mut idle, &ClientMessage::Hello { schema: WIRE_SCHEMA }).unwrap();
    let start = fresh_snapshot(&mut c).time;
    thread::sleep(Duration::from_millis(1500));
    let end = fresh_snapshot(&mut c).time;
    assert!(end - start > 1.2, "simulation advanced only {:.2}s", end - start);
    drop(idle);
    server.shutdown();
}

#[test]
fn hand_in_range_shows_up_as_avoidance_force() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    let ee = snapshot(&mut c).3.agents[0].position;
    c.send(&ClientMessage::HandInput { hand: 0, position: Some(ee + Vec3::new(0.0, 0.1, 0.0)) }).unwrap();
    let t0 = Instant::now();
    loop {
        let (_, _, _, rec) = snapshot(&mut c);
        let f = rec.agents[0].class_forces.iter().find(|(k, _)| *k == AttachmentClass::HandAvoidance).unwrap().1;
        if f.norm() > 0.0 {
            assert!(rec.hands[0].present);
            break;
        }
        assert!(t0.elapsed() < Duration::from_millis(500), "no hand force within half a second");
    }
    server.shutdown();
}

#[test]
fn disconnect_disengages_the_hand_after_the_silence_timeout() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    c.send(&ClientMessage::HandInput { hand: 0, position: Some(Vec3::new(0.0, 0.6, 0.15)) }).unwrap();
    let t0 = Instant::now();
    loop {
        let (_, _, _, rec) = snapshot(&mut c);
        if rec.hands[0].present {
            break;
        }
        assert!(t0.elapsed() < Duration::from_secs(3), "hand never appeared");
    }
    drop(c);
    thread::sleep(Duration::from_millis(1500));
    let mut c = ServeClient::connect(server.local_addr()).unwrap();
    c.set_timeout(Some(Duration::from_secs(5))).unwrap();
    let (_, _, _, rec) = snapshot(&mut c);
    assert!(!rec.hands[0].present, "hand still engaged {}s after disconnect", rec.time);
    server.shutdown();
}

/// The operator pushes the hand towards the held end-effector and withdraws;
/// the robot gives way and comes back, and the session replays headlessly.
#[test]
fn live_hand_pushes_the_robot_and_the_session_replays() {
    let (server, mut c) = start(ServeOptions { autostart: true, ..Default::default() });
    let home = hold_config().scenario.hold_point;
    // Let the robot settle at its hold point first.
    thread::sleep(Duration::from_millis(2500));
    let settled = fresh_snapshot(&mut c);
    assert!(settled.agents[0].position.distance(home) < 0.01);
    let from = Vec3::new(0.0, 0.6, 0.15);
    let to = Vec3::new(0.0, 0.05, 0.15);
    let t0 = Instant::now();
    let mut next = t0;
    let mut max_push: f64 = 0.0;
    while t0.elapsed() < Duration::from_secs(6) {
        let s = t0.elapsed().as_secs_f64();
        // Approach over 2 s, hold 2 s, withdraw over 1 s, then vanish.
        let p = if s < 2.0 {
            Some(from.lerp(to, s / 2.0))
        } else if s < 4.0 {
            Some(to)
        } else if s < 5.0 {
            Some(to.lerp(from, s - 4.0))
        } else {
            None
        };
        c.send(&ClientMessage::HandInput { hand: 0, position: p }).unwrap();
        next += Duration::from_millis(100);
        while Instant::now() < next {
            if let Ok(ServerMessage::Snapshot { record, .. }) = c.recv() {
                let ee = record.agents[0].position;
                // The hand comes from +y, so giving way means moving towards -y.
                max_push = max_push.max(home.y - ee.y);
            }
        }
    }
    thread::sleep(Duration::from_millis(1500));
    let last = fresh_snapshot(&mut c);
    let traces = server.shutdown();
    assert!(max_push >= 0.05, "robot retreated only {max_push:.3} m");
    assert!(last.agents[0].position.distance(home) < 0.02, "robot did not return: {:?}", last.agents[0].position);

    let trace = &traces[0];
    let inputs: Vec<f64> = trace
        .records
        .iter()
        .flat_map(|r| &r.events)
        .filter_map(|e| matches!(e.body, EventBody::HandInput(_)).then_some(e.time))
        .collect();
    let span = inputs.last().unwrap() - inputs.first().unwrap();
    let rate = (inputs.len() - 1) as f64 / span;
    assert!((8.0..=12.0).contains(&rate), "hand input rate {rate:.2} Hz");

    let again = replay_session(trace).unwrap();
    let live = vmcollab::harness::replay(trace);
    assert_eq!(again.metrics, live);
    assert_eq!(again.trace.records.len(), trace.records.len());
    for (a, b) in again.trace.records.iter().zip(&trace.records) {
        assert_eq!(a.agents, b.agents, "diverged at t={}", a.time);
        assert_eq!(a.hands, b.hands);
    }
}
