//! Fault injection for integrity testing: a TCP relay that forwards HTTP
//! traffic and flips one byte inside response bodies.
//!
//! The relay sits between a cache and its origin (or a client and a
//! cache) by advertising its own address in place of the upstream's. It
//! parses Content-Length framing on the response stream, so flips land in
//! entity bytes and never corrupt HTTP framing.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Where a flip lands: at `body_offset` within a response body. A body
/// qualifies only when its length is within `[min_body_len, max_body_len]`
/// and, when `path_prefix` is set, the request that provoked it targeted
/// that path — which keeps flips on the intended data responses and off
/// control responses sharing the connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipSpec {
    pub body_offset: u64,
    pub min_body_len: u64,
    pub max_body_len: u64,
    pub path_prefix: Option<String>,
}

impl FlipSpec {
    pub fn at(body_offset: u64) -> Self {
        FlipSpec {
            body_offset,
            min_body_len: 0,
            max_body_len: u64::MAX,
            path_prefix: None,
        }
    }

    pub fn min_body(mut self, len: u64) -> Self {
        self.min_body_len = len;
        self
    }

    pub fn max_body(mut self, len: u64) -> Self {
        self.max_body_len = len;
        self
    }

    pub fn on_path(mut self, prefix: &str) -> Self {
        self.path_prefix = Some(prefix.to_string());
        self
    }

    fn applies(&self, body_pos: u64, body_len: u64, target: &str) -> bool {
        body_pos == self.body_offset
            && body_len >= self.min_body_len
            && body_len <= self.max_body_len
            && self.path_prefix.as_deref().is_none_or(|p| target.starts_with(p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlipMode {
    /// Pass traffic through untouched.
    Off,
    /// Flip one bit in the first qualifying body, then become transparent.
    Once(FlipSpec),
    /// Flip one bit in every qualifying body.
    Always(FlipSpec),
}

pub struct RelayHandle {
    addr: SocketAddr,
    flips: Arc<AtomicU64>,
    mode: Arc<Mutex<FlipMode>>,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl RelayHandle {
    pub fn endpoint(&self) -> String {
        format!("127.0.0.1:{}", self.addr.port())
    }

    /// Number of byte flips performed so far.
    pub fn flips(&self) -> u64 {
        self.flips.load(Ordering::SeqCst)
    }

    /// Swaps the flip mode; affects connections opened from now on and
    /// bodies not yet parsed on existing ones.
    pub fn set_mode(&self, mode: FlipMode) {
        *self.mode.lock().expect("mode lock") = mode;
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RelayHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

pub fn spawn_relay(upstream: String, mode: FlipMode) -> std::io::Result<RelayHandle> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flips = Arc::new(AtomicU64::new(0));
    let flipped_once = Arc::new(AtomicBool::new(false));
    let mode = Arc::new(Mutex::new(mode));

    let stop = shutdown.clone();
    let flip_counter = flips.clone();
    let shared_mode = mode.clone();
    let accept_thread = std::thread::spawn(move || {
        let mut workers = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((client, _)) => {
                    let upstream = upstream.clone();
                    let flips = flip_counter.clone();
                    let once_latch = flipped_once.clone();
                    let stop = stop.clone();
                    let mode = shared_mode.clone();
                    workers.push(std::thread::spawn(move || {
                        if let Err(e) =
                            relay_connection(client, &upstream, &mode, &flips, &once_latch, &stop)
                        {
                            log::debug!("relay connection ended: {e}");
                        }
                    }));
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(_) => break,
            }
        }
        for w in workers {
            let _ = w.join();
        }
    });

    Ok(RelayHandle { addr, flips, mode, shutdown, accept_thread: Some(accept_thread) })
}

fn relay_connection(
    client: TcpStream,
    upstream: &str,
    mode: &Mutex<FlipMode>,
    flips: &AtomicU64,
    once_latch: &AtomicBool,
    stop: &Arc<AtomicBool>,
) -> std::io::Result<()> {
    let server = TcpStream::connect(upstream)?;
    client.set_read_timeout(Some(Duration::from_millis(200)))?;
    server.set_read_timeout(Some(Duration::from_millis(200)))?;

    // Requests pass through verbatim; their targets queue up so response
    // flips can be scoped to the request that provoked them.
    let targets: Arc<Mutex<VecDeque<String>>> = Arc::new(Mutex::new(VecDeque::new()));
    let mut client_read = client.try_clone()?;
    let mut server_write = server.try_clone()?;
    let fw_stop = stop.clone();
    let fw_targets = targets.clone();
    let forward = std::thread::spawn(move || {
        let mut tracker = RequestTargetTracker::new();
        let mut buf = [0u8; 16 * 1024];
        while !fw_stop.load(Ordering::SeqCst) {
            match client_read.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    for byte in &buf[..n] {
                        if let Some(target) = tracker.advance(*byte) {
                            fw_targets.lock().expect("targets lock").push_back(target);
                        }
                    }
                    if server_write.write_all(&buf[..n]).is_err() {
                        break;
                    }
                }
                Err(ref e) if would_block(e) => continue,
                Err(_) => break,
            }
        }
        let _ = server_write.shutdown(std::net::Shutdown::Write);
    });

    // Responses run through the body parser that applies the flips.
    let mut server_read = server;
    let mut client_write = client;
    let mut parser = ResponseBodyTracker::new();
    let mut current_target = String::new();
    let mut buf = [0u8; 16 * 1024];
    while !stop.load(Ordering::SeqCst) {
        let n = match server_read.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(ref e) if would_block(e) => continue,
            Err(_) => break,
        };
        let chunk = &mut buf[..n];
        for byte_index in 0..chunk.len() {
            match parser.advance(chunk[byte_index]) {
                Advance::Header => {}
                Advance::HeadersEnd => {
                    current_target = targets
                        .lock()
                        .expect("targets lock")
                        .pop_front()
                        .unwrap_or_default();
                }
                Advance::Body { pos: body_pos, len: body_len } => {
                    let snapshot = mode.lock().expect("mode lock").clone();
                    let should_flip = match &snapshot {
                        FlipMode::Off => false,
                        FlipMode::Always(spec) => spec.applies(body_pos, body_len, &current_target),
                        FlipMode::Once(spec) => {
                            spec.applies(body_pos, body_len, &current_target)
                                && !once_latch.load(Ordering::SeqCst)
                        }
                    };
                    if should_flip {
                        chunk[byte_index] ^= 0x01;
                        flips.fetch_add(1, Ordering::SeqCst);
                        if matches!(snapshot, FlipMode::Once(_)) {
                            once_latch.store(true, Ordering::SeqCst);
                        }
                    }
                }
            }
        }
        if client_write.write_all(chunk).is_err() {
            break;
        }
    }
    let _ = client_write.shutdown(std::net::Shutdown::Write);
    let _ = forward.join();
    Ok(())
}

/// Watches a request byte stream and yields each request-line target.
/// GET/HEAD requests are bodyless, so a blank line ends each request.
struct RequestTargetTracker {
    line: Vec<u8>,
    in_first_line: bool,
}

impl RequestTargetTracker {
    fn new() -> Self {
        RequestTargetTracker { line: Vec::new(), in_first_line: true }
    }

    fn advance(&mut self, byte: u8) -> Option<String> {
        if byte != b'\n' {
            if byte != b'\r' {
                self.line.push(byte);
            }
            return None;
        }
        // End of a line.
        let mut emitted = None;
        if self.in_first_line {
            let text = String::from_utf8_lossy(&self.line);
            emitted = Some(text.split_whitespace().nth(1).unwrap_or_default().to_string());
            self.in_first_line = false;
        } else if self.line.is_empty() {
            // Blank line: the next line starts a new request.
            self.in_first_line = true;
        }
        self.line.clear();
        emitted
    }
}

fn would_block(e: &std::io::Error) -> bool {
    matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Advance {
    Header,
    /// The final header byte of a response; its body (possibly empty)
    /// follows.
    HeadersEnd,
    Body { pos: u64, len: u64 },
}

/// Streams over an HTTP/1.1 response byte sequence (Content-Length
/// framing) and reports, per byte, where it falls.
struct ResponseBodyTracker {
    in_body: bool,
    header_tail: [u8; 4],
    header_buf: Vec<u8>,
    body_len: u64,
    body_remaining: u64,
    body_pos: u64,
}

impl ResponseBodyTracker {
    fn new() -> Self {
        ResponseBodyTracker {
            in_body: false,
            header_tail: [0; 4],
            header_buf: Vec::new(),
            body_len: 0,
            body_remaining: 0,
            body_pos: 0,
        }
    }

    fn advance(&mut self, byte: u8) -> Advance {
        if self.in_body {
            let pos = self.body_pos;
            self.body_pos += 1;
            self.body_remaining -= 1;
            if self.body_remaining == 0 {
                self.in_body = false;
                self.header_buf.clear();
                self.header_tail = [0; 4];
            }
            return Advance::Body { pos, len: self.body_len };
        }
        self.header_buf.push(byte);
        self.header_tail.rotate_left(1);
        self.header_tail[3] = byte;
        if self.header_tail == *b"\r\n\r\n" {
            let text = String::from_utf8_lossy(&self.header_buf);
            let content_length = text
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.trim().eq_ignore_ascii_case("content-length").then(|| value.trim())
                })
                .and_then(|v| v.parse::<u64>().ok())
                .unwrap_or(0);
            self.header_buf.clear();
            self.header_tail = [0; 4];
            if content_length > 0 {
                self.in_body = true;
                self.body_len = content_length;
                self.body_remaining = content_length;
                self.body_pos = 0;
            }
            return Advance::HeadersEnd;
        }
        Advance::Header
    }
}
