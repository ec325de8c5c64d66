//! The telemetry pipeline end to end: UDP packets in, joined JSON
//! records out.

mod common;

use std::net::UdpSocket;
use std::time::Duration;

use common::*;
use stashfed::clock::Clock;
use stashfed::monitor_svc::{self, MonitorConfig, SinkConfig};
use stashfed_core::monitor::{
    encode_packet, AuthMethod, CollectorConfig, EventBody, IpVersion, MonitorEvent, TransferRecord,
};

fn monitor_config(sink: SinkConfig) -> MonitorConfig {
    let mut cfg = MonitorConfig::new(sink);
    cfg.udp_listen = "127.0.0.1:0".to_string();
    cfg.collector = CollectorConfig { grace_ms: 300, ..CollectorConfig::default() };
    cfg.sweep_interval = Duration::from_millis(50);
    cfg
}

fn send(sock: &UdpSocket, target: &str, event: &MonitorEvent) {
    sock.send_to(&encode_packet(event).unwrap(), target).unwrap();
}

fn login(sid: u32, uid: u32, host: &str) -> MonitorEvent {
    MonitorEvent {
        server_id: sid,
        timestamp: 100,
        body: EventBody::Login {
            user_id: uid,
            auth: AuthMethod::Federation,
            ip_version: IpVersion::V4,
            hostname: host.to_string(),
        },
    }
}

fn open(sid: u32, fid: u32, uid: u32, path: &str, size: u64) -> MonitorEvent {
    MonitorEvent {
        server_id: sid,
        timestamp: 101,
        body: EventBody::Open { file_id: fid, user_id: uid, file_size: size, path: path.to_string() },
    }
}

fn close(sid: u32, fid: u32, bytes: u64) -> MonitorEvent {
    MonitorEvent {
        server_id: sid,
        timestamp: 102,
        body: EventBody::Close {
            file_id: fid,
            bytes_read: bytes,
            bytes_written: 0,
            read_ops: 1,
            write_ops: 0,
        },
    }
}

fn read_records(path: &std::path::Path) -> Vec<TransferRecord> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn udp_to_file_sink_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let handle = monitor_svc::spawn(monitor_config(SinkConfig::File(sink_path.clone()))).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let target = handle.udp_endpoint();

    send(&sock, &target, &login(1, 7, "worker9"));
    send(&sock, &target, &open(1, 40, 7, "/exp1/a.bin", 5_797));
    send(&sock, &target, &close(1, 40, 5_797));

    wait_for("record in sink", Duration::from_secs(5), || read_records(&sink_path).len() == 1);
    let records = read_records(&sink_path);
    let r = &records[0];
    assert!(r.complete);
    assert_eq!(r.server_id, 1);
    assert_eq!(r.path.as_deref(), Some("/exp1/a.bin"));
    assert_eq!(r.file_size, Some(5_797));
    assert_eq!(r.hostname.as_deref(), Some("worker9"));
    assert_eq!(r.auth_method, Some(AuthMethod::Federation));
    assert_eq!(r.ip_version, Some(IpVersion::V4));
    assert_eq!(r.bytes_read, 5_797);
    assert_eq!(r.open_time, Some(101));
    assert_eq!(r.close_time, 102);

    let stats = handle.stats();
    assert_eq!(stats.datagrams, 3);
    assert_eq!(stats.malformed, 0);
    assert_eq!(stats.complete_records, 1);
    handle.shutdown();
}

#[test]
fn reordered_close_joins_within_grace() {
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let handle = monitor_svc::spawn(monitor_config(SinkConfig::File(sink_path.clone()))).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let target = handle.udp_endpoint();

    send(&sock, &target, &login(1, 7, "w"));
    // Close before its open: UDP reordering.
    send(&sock, &target, &close(1, 50, 10));
    std::thread::sleep(Duration::from_millis(50));
    send(&sock, &target, &open(1, 50, 7, "/exp1/x", 10));

    wait_for("joined record", Duration::from_secs(5), || read_records(&sink_path).len() == 1);
    assert!(read_records(&sink_path)[0].complete);
    handle.shutdown();
}

#[test]
fn dropped_open_emits_incomplete_after_grace() {
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let handle = monitor_svc::spawn(monitor_config(SinkConfig::File(sink_path.clone()))).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    send(&sock, &handle.udp_endpoint(), &close(1, 60, 42));

    wait_for("incomplete record", Duration::from_secs(5), || read_records(&sink_path).len() == 1);
    let r = &read_records(&sink_path)[0];
    assert!(!r.complete);
    assert!(r.path.is_none());
    assert_eq!(r.bytes_read, 42);
    assert_eq!(handle.stats().orphan_closes, 1);
    handle.shutdown();
}

#[test]
fn malformed_datagrams_are_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let handle = monitor_svc::spawn(monitor_config(SinkConfig::File(sink_path.clone()))).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let target = handle.udp_endpoint();

    sock.send_to(b"garbage", &target).unwrap();
    sock.send_to(&[0x53, 0x43, 9, 1, 0, 0, 0], &target).unwrap();
    // The pipeline keeps working afterwards.
    send(&sock, &target, &login(1, 7, "w"));
    send(&sock, &target, &open(1, 70, 7, "/exp1/y", 1));
    send(&sock, &target, &close(1, 70, 1));

    wait_for("record after garbage", Duration::from_secs(5), || {
        read_records(&sink_path).len() == 1
    });
    let stats = handle.stats();
    assert_eq!(stats.malformed, 2);
    assert_eq!(stats.datagrams, 5);
    handle.shutdown();
}

#[test]
fn tcp_sink_outage_buffers_then_delivers() {
    // A TCP sink that is down at first; records must be buffered and
    // delivered once it comes up.
    let sink_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let sink_addr = sink_listener.local_addr().unwrap().to_string();
    drop(sink_listener); // sink goes down, port known

    let handle = monitor_svc::spawn(monitor_config(SinkConfig::Tcp(sink_addr.clone()))).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    let target = handle.udp_endpoint();
    for fid in 1..=10u32 {
        send(&sock, &target, &login(1, 7, "w"));
        send(&sock, &target, &open(1, fid, 7, "/exp1/z", 5));
        send(&sock, &target, &close(1, fid, 5));
    }
    wait_for("records emitted", Duration::from_secs(5), || {
        handle.stats().records_emitted == 10
    });
    assert_eq!(handle.stats().sink_delivered, 0);

    // Sink comes back on the same port.
    let sink_listener = std::net::TcpListener::bind(&sink_addr).unwrap();
    sink_listener.set_nonblocking(true).unwrap();
    let mut received = Vec::new();
    wait_for("all records delivered", Duration::from_secs(10), || {
        if let Ok((mut conn, _)) = sink_listener.accept() {
            use std::io::Read;
            conn.set_read_timeout(Some(Duration::from_millis(200))).unwrap();
            let mut buf = String::new();
            let _ = conn.read_to_string(&mut buf);
            received.extend(buf.lines().map(String::from));
        }
        received.len() == 10
    });
    assert_eq!(handle.stats().sink_delivered, 10);
    assert_eq!(handle.stats().sink_dropped, 0);
    for line in &received {
        let r: TransferRecord = serde_json::from_str(line).unwrap();
        assert!(r.complete);
    }
    handle.shutdown();
}

#[test]
fn cache_emits_telemetry_that_joins_end_to_end() {
    // Full loop: client reads through a cache; the cache's packets reach
    // the collector; the collector emits one complete record per open.
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let monitor = monitor_svc::spawn(monitor_config(SinkConfig::File(sink_path.clone()))).unwrap();

    let body = content(5, 9_000);
    let redirector = spawn_redirector();
    let tree = tempfile::tempdir().unwrap();
    write_tree(tree.path(), &[("t.bin", &body)]);
    let origin =
        stashfed::origin::spawn(origin_config("/exp1", tree.path(), &redirector.endpoint()))
            .unwrap();
    let cdir = tempfile::tempdir().unwrap();
    let mut ccfg = cache_config("c", cdir.path(), &redirector.endpoint(), 256 << 20);
    ccfg.monitor = Some(monitor.udp_endpoint());
    let cache = stashfed::cache_server::spawn(ccfg).unwrap();
    wait_for("registration", Duration::from_secs(5), || {
        !redirector.origin_registrations().is_empty()
    });

    let w = wire();
    let url = format!("http://{}/data/exp1/t.bin", cache.endpoint());
    assert_eq!(w.get(&url, &[]).unwrap().body, body);
    assert_eq!(w.get(&url, &[]).unwrap().body, body);

    wait_for("two records", Duration::from_secs(5), || read_records(&sink_path).len() == 2);
    let records = read_records(&sink_path);
    for r in &records {
        assert!(r.complete);
        assert_eq!(r.path.as_deref(), Some("/exp1/t.bin"));
        assert_eq!(r.file_size, Some(9_000));
        assert_eq!(r.bytes_read, 9_000);
        assert_eq!(r.hostname.as_deref(), Some("127.0.0.1"));
    }

    cache.shutdown();
    origin.shutdown();
    redirector.shutdown();
    monitor.shutdown();
}

#[test]
fn clock_is_injectable_for_deterministic_grace() {
    let (clock, manual) = Clock::manual(1_000);
    let dir = tempfile::tempdir().unwrap();
    let sink_path = dir.path().join("records.jsonl");
    let mut cfg = monitor_config(SinkConfig::File(sink_path.clone()));
    cfg.clock = clock;
    let handle = monitor_svc::spawn(cfg).unwrap();
    let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
    send(&sock, &handle.udp_endpoint(), &close(1, 80, 1));

    wait_for("close ingested", Duration::from_secs(5), || handle.stats().datagrams == 1);
    // Time stands still: nothing may be emitted.
    std::thread::sleep(Duration::from_millis(300));
    assert_eq!(handle.stats().records_emitted, 0);

    manual.advance_ms(10_000);
    wait_for("grace expiry", Duration::from_secs(5), || handle.stats().records_emitted == 1);
    assert!(!read_records(&sink_path)[0].complete);
    handle.shutdown();
}
