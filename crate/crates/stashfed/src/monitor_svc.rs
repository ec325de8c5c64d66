//! The monitoring collector service: a UDP listener feeding the join
//! state machine, a JSON-line sink (file or TCP) behind a bounded queue,
//! and an admin endpoint for counters.

use std::io::Write;
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use stashfed_core::monitor::{decode_packet, Collector, CollectorConfig, TransferRecord};

use crate::clock::Clock;
use crate::httpd::{empty_response, json_response, split_target, HttpServer};

#[derive(Debug, Clone)]
pub enum SinkConfig {
    File(PathBuf),
    Tcp(String),
}

impl SinkConfig {
    /// Parses `file:PATH` or `tcp:HOST:PORT`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        if let Some(path) = spec.strip_prefix("file:") {
            return Ok(SinkConfig::File(PathBuf::from(path)));
        }
        if let Some(addr) = spec.strip_prefix("tcp:") {
            return Ok(SinkConfig::Tcp(addr.to_string()));
        }
        Err(format!("sink must be file:PATH or tcp:H:P, got {spec}"))
    }
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub udp_listen: String,
    pub admin_listen: String,
    pub sink: SinkConfig,
    pub collector: CollectorConfig,
    /// Records queued toward the sink before new ones are dropped.
    pub queue_capacity: usize,
    pub sweep_interval: Duration,
    pub clock: Clock,
}

impl MonitorConfig {
    pub fn new(sink: SinkConfig) -> Self {
        MonitorConfig {
            udp_listen: "127.0.0.1:9930".to_string(),
            admin_listen: "127.0.0.1:0".to_string(),
            sink,
            collector: CollectorConfig::default(),
            queue_capacity: 10_000,
            sweep_interval: Duration::from_millis(200),
            clock: Clock::system(),
        }
    }
}

#[derive(Debug, Default)]
struct MonitorCounters {
    datagrams: AtomicU64,
    malformed: AtomicU64,
    sink_delivered: AtomicU64,
    sink_dropped: AtomicU64,
    sink_reconnects: AtomicU64,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MonitorStats {
    pub datagrams: u64,
    pub malformed: u64,
    pub records_emitted: u64,
    pub complete_records: u64,
    pub orphan_closes: u64,
    pub orphan_opens: u64,
    pub duplicate_opens: u64,
    pub duplicate_closes: u64,
    pub sink_delivered: u64,
    pub sink_dropped: u64,
    pub sink_reconnects: u64,
}

struct MonitorState {
    counters: MonitorCounters,
    collector: Mutex<Collector>,
}

pub struct MonitorHandle {
    udp_addr: SocketAddr,
    admin: HttpServer,
    state: Arc<MonitorState>,
    shutdown: Arc<AtomicBool>,
    threads: Vec<std::thread::JoinHandle<()>>,
}

impl MonitorHandle {
    pub fn udp_endpoint(&self) -> String {
        format!("127.0.0.1:{}", self.udp_addr.port())
    }

    pub fn admin_endpoint(&self) -> String {
        self.admin.endpoint()
    }

    pub fn stats(&self) -> MonitorStats {
        stats_snapshot(&self.state)
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.admin.shutdown();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn stats_snapshot(state: &MonitorState) -> MonitorStats {
    let collector = state.collector.lock().expect("collector lock").counters();
    MonitorStats {
        datagrams: state.counters.datagrams.load(Ordering::SeqCst),
        malformed: state.counters.malformed.load(Ordering::SeqCst),
        records_emitted: collector.records_emitted,
        complete_records: collector.complete_records,
        orphan_closes: collector.orphan_closes,
        orphan_opens: collector.orphan_opens,
        duplicate_opens: collector.duplicate_opens,
        duplicate_closes: collector.duplicate_closes,
        sink_delivered: state.counters.sink_delivered.load(Ordering::SeqCst),
        sink_dropped: state.counters.sink_dropped.load(Ordering::SeqCst),
        sink_reconnects: state.counters.sink_reconnects.load(Ordering::SeqCst),
    }
}

pub fn spawn(cfg: MonitorConfig) -> anyhow::Result<MonitorHandle> {
    let socket = UdpSocket::bind(&cfg.udp_listen)?;
    socket.set_read_timeout(Some(Duration::from_millis(100)))?;
    let udp_addr = socket.local_addr()?;

    let state = Arc::new(MonitorState {
        counters: MonitorCounters::default(),
        collector: Mutex::new(Collector::new(cfg.collector)),
    });
    let shutdown = Arc::new(AtomicBool::new(false));
    let (record_tx, record_rx) = mpsc::sync_channel::<TransferRecord>(cfg.queue_capacity);

    // Datagram reception and ingestion: one thread owns the join state.
    let ingest_state = state.clone();
    let ingest_stop = shutdown.clone();
    let ingest_clock = cfg.clock.clone();
    let sweep_interval = cfg.sweep_interval;
    let ingest_tx = record_tx.clone();
    let ingest = std::thread::spawn(move || {
        let mut buf = [0u8; 2048];
        let mut last_sweep = ingest_clock.now_ms();
        while !ingest_stop.load(Ordering::SeqCst) {
            let now = ingest_clock.now_ms();
            let mut emitted = Vec::new();
            match socket.recv_from(&mut buf) {
                Ok((n, _)) => {
                    ingest_state.counters.datagrams.fetch_add(1, Ordering::SeqCst);
                    match decode_packet(&buf[..n]) {
                        Ok(decoded) => {
                            let mut collector =
                                ingest_state.collector.lock().expect("collector lock");
                            emitted = collector.ingest(now, decoded.event);
                        }
                        Err(_) => {
                            // Malformed datagrams are counted, never fatal.
                            ingest_state.counters.malformed.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                }
                Err(ref e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(e) => {
                    log::warn!("udp receive failed: {e}");
                    break;
                }
            }
            if now.saturating_sub(last_sweep) >= sweep_interval.as_millis() as u64 {
                let mut collector = ingest_state.collector.lock().expect("collector lock");
                emitted.extend(collector.sweep(now));
                last_sweep = now;
            }
            for record in emitted {
                if ingest_tx.try_send(record).is_err() {
                    ingest_state.counters.sink_dropped.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
    });
    drop(record_tx);

    let sink_state = state.clone();
    let sink_cfg = cfg.sink.clone();
    let sink = std::thread::spawn(move || run_sink(sink_cfg, record_rx, &sink_state));

    let admin_state = state.clone();
    let admin = HttpServer::spawn(&cfg.admin_listen, 2, move |request| {
        let (path, _) = split_target(request.url());
        let outcome = match (request.method().as_str(), path) {
            ("GET", "/stats") => request.respond(json_response(200, &stats_snapshot(&admin_state))),
            _ => request.respond(empty_response(404)),
        };
        if let Err(e) = outcome {
            log::debug!("admin response failed: {e}");
        }
    })?;

    Ok(MonitorHandle {
        udp_addr,
        admin,
        state,
        shutdown,
        threads: vec![ingest, sink],
    })
}

/// One LF-terminated JSON object per record.
pub fn emit_record(record: &TransferRecord) -> String {
    let mut line = serde_json::to_string(record).expect("record serialization");
    line.push('\n');
    line
}

enum SinkBackend {
    File(std::fs::File),
    Tcp { addr: String, stream: Option<std::net::TcpStream> },
}

fn run_sink(cfg: SinkConfig, rx: mpsc::Receiver<TransferRecord>, state: &MonitorState) {
    let mut backend = match cfg {
        SinkConfig::File(path) => match std::fs::File::options().create(true).append(true).open(&path) {
            Ok(f) => SinkBackend::File(f),
            Err(e) => {
                log::error!("cannot open sink file {path:?}: {e}");
                return;
            }
        },
        SinkConfig::Tcp(addr) => SinkBackend::Tcp { addr, stream: None },
    };

    // Records that failed a TCP write wait here for the reconnect.
    let mut pending: std::collections::VecDeque<TransferRecord> = std::collections::VecDeque::new();
    loop {
        let record = match rx.recv_timeout(Duration::from_millis(100)) {
            Ok(r) => Some(r),
            Err(mpsc::RecvTimeoutError::Timeout) => None,
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                flush_pending(&mut backend, &mut pending, state);
                return;
            }
        };
        if let Some(record) = record {
            pending.push_back(record);
        }
        flush_pending(&mut backend, &mut pending, state);
    }
}

fn flush_pending(
    backend: &mut SinkBackend,
    pending: &mut std::collections::VecDeque<TransferRecord>,
    state: &MonitorState,
) {
    while let Some(front) = pending.front() {
        let line = emit_record(front);
        let written = match backend {
            SinkBackend::File(f) => f.write_all(line.as_bytes()).and_then(|_| f.flush()).is_ok(),
            SinkBackend::Tcp { addr, stream } => {
                if stream.is_none() {
                    match std::net::TcpStream::connect(&*addr) {
                        Ok(s) => {
                            state.counters.sink_reconnects.fetch_add(1, Ordering::SeqCst);
                            *stream = Some(s);
                        }
                        Err(_) => return, // sink down; keep buffering
                    }
                }
                let s = stream.as_mut().expect("stream just ensured");
                match s.write_all(line.as_bytes()) {
                    Ok(()) => true,
                    Err(_) => {
                        *stream = None;
                        return;
                    }
                }
            }
        };
        if written {
            state.counters.sink_delivered.fetch_add(1, Ordering::SeqCst);
            pending.pop_front();
        } else {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sink_spec_parses() {
        assert!(matches!(SinkConfig::parse("file:/tmp/x.jsonl"), Ok(SinkConfig::File(_))));
        assert!(matches!(SinkConfig::parse("tcp:127.0.0.1:9"), Ok(SinkConfig::Tcp(_))));
        assert!(SinkConfig::parse("kafka:topic").is_err());
    }

    #[test]
    fn record_lines_are_lf_terminated_json() {
        let record = TransferRecord {
            server_id: 1,
            path: Some("/exp1/a".to_string()),
            file_size: Some(10),
            hostname: Some("h".to_string()),
            auth_method: Some(stashfed_core::monitor::AuthMethod::Http),
            ip_version: Some(stashfed_core::monitor::IpVersion::V4),
            bytes_read: 10,
            bytes_written: 0,
            read_ops: 1,
            write_ops: 0,
            open_time: Some(5),
            close_time: 6,
            complete: true,
        };
        let line = emit_record(&record);
        assert!(line.ends_with('\n'));
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["host"], "h");
        assert_eq!(v["auth"], "http");
        assert_eq!(v["ipv"], 4);
        assert_eq!(v["open_ts"], 5);
        assert_eq!(v["close_ts"], 6);
        assert_eq!(v["complete"], true);
    }
}
