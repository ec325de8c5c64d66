//! The HTTP face of the federation wire protocol: a small server harness
//! over `tiny_http`, a client wrapper over `ureq`, byte-range parsing,
//! and the percent-encoding rules for namespace paths.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS, NON_ALPHANUMERIC};
use stashfed_core::path::FederationPath;

/// Escapes applied to a federation path embedded in a URL path; keeps `/`.
const URL_PATH_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'`')
    .add(b'{')
    .add(b'}');

/// Encodes a federation path for use after an endpoint's `/data` prefix.
pub fn encode_url_path(path: &FederationPath) -> String {
    utf8_percent_encode(path.as_str(), URL_PATH_ESCAPE).to_string()
}

/// Encodes an arbitrary string as a query-parameter value.
pub fn encode_query_value(value: &str) -> String {
    utf8_percent_encode(value, NON_ALPHANUMERIC).to_string()
}

pub fn decode_percent(raw: &str) -> Option<String> {
    percent_decode_str(raw).decode_utf8().ok().map(|c| c.into_owned())
}

/// Splits a request target into path and query string.
pub fn split_target(target: &str) -> (&str, Option<&str>) {
    match target.split_once('?') {
        Some((p, q)) => (p, Some(q)),
        None => (target, None),
    }
}

/// Looks up a query parameter (values percent-decoded).
pub fn query_param(query: Option<&str>, name: &str) -> Option<String> {
    let query = query?;
    for pair in query.split('&') {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if k == name {
            return decode_percent(v);
        }
    }
    None
}

/// A parsed `Range` header resolved against a total size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeOutcome {
    /// No range requested: the whole resource.
    Whole,
    /// Satisfiable range as a half-open interval.
    Slice { start: u64, end: u64 },
    Unsatisfiable,
    Malformed,
}

/// Parses a single-interval `bytes=` range header against `size`.
/// Multi-range requests are treated as malformed.
pub fn resolve_range(header: Option<&str>, size: u64) -> RangeOutcome {
    let Some(header) = header else { return RangeOutcome::Whole };
    let Some(spec) = header.strip_prefix("bytes=") else {
        return RangeOutcome::Malformed;
    };
    if spec.contains(',') {
        return RangeOutcome::Malformed;
    }
    let Some((from, to)) = spec.split_once('-') else {
        return RangeOutcome::Malformed;
    };
    match (from, to) {
        ("", "") => RangeOutcome::Malformed,
        // Suffix form: last N bytes.
        ("", suffix) => match suffix.parse::<u64>() {
            Ok(0) => RangeOutcome::Unsatisfiable,
            Ok(n) => RangeOutcome::Slice { start: size.saturating_sub(n), end: size },
            Err(_) => RangeOutcome::Malformed,
        },
        (start, "") => match start.parse::<u64>() {
            Ok(s) if s < size => RangeOutcome::Slice { start: s, end: size },
            Ok(_) => RangeOutcome::Unsatisfiable,
            Err(_) => RangeOutcome::Malformed,
        },
        (start, last) => match (start.parse::<u64>(), last.parse::<u64>()) {
            (Ok(s), Ok(l)) if s <= l => {
                if s >= size {
                    RangeOutcome::Unsatisfiable
                } else {
                    RangeOutcome::Slice { start: s, end: (l + 1).min(size) }
                }
            }
            (Ok(_), Ok(_)) => RangeOutcome::Malformed,
            _ => RangeOutcome::Malformed,
        },
    }
}

pub fn range_header_for_chunk(start: u64, end: u64) -> String {
    debug_assert!(end > start);
    format!("bytes={}-{}", start, end - 1)
}

pub fn header(name: &str, value: &str) -> tiny_http::Header {
    tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

pub fn json_response(status: u16, body: &impl serde::Serialize) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let data = serde_json::to_vec(body).expect("JSON serialization");
    tiny_http::Response::from_data(data)
        .with_status_code(status)
        .with_chunked_threshold(usize::MAX)
        .with_header(header("Content-Type", "application/json"))
}

pub fn text_response(status: u16, body: impl Into<Vec<u8>>) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_data(body.into())
        .with_status_code(status)
        .with_chunked_threshold(usize::MAX)
}

pub fn empty_response(status: u16) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_data(Vec::new()).with_status_code(status)
}

/// A running HTTP service: worker threads pulling from one listener.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl HttpServer {
    /// Binds `listen` (use port 0 for an ephemeral port) and serves each
    /// request on one of `workers` threads via `handle`.
    pub fn spawn<F>(listen: &str, workers: usize, handle: F) -> anyhow::Result<Self>
    where
        F: Fn(tiny_http::Request) + Send + Sync + 'static,
    {
        let server = Arc::new(
            tiny_http::Server::http(listen)
                .map_err(|e| anyhow::anyhow!("bind {listen}: {e}"))?,
        );
        let addr = match server.server_addr() {
            tiny_http::ListenAddr::IP(a) => a,
            other => anyhow::bail!("unsupported listen address {other:?}"),
        };
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = Arc::new(handle);
        let threads = (0..workers.max(1))
            .map(|_| {
                let server = server.clone();
                let shutdown = shutdown.clone();
                let handle = handle.clone();
                std::thread::spawn(move || {
                    while !shutdown.load(Ordering::SeqCst) {
                        match server.recv_timeout(Duration::from_millis(200)) {
                            Ok(Some(request)) => handle(request),
                            Ok(None) => {}
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(HttpServer { server, addr, shutdown, workers: threads })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("127.0.0.1:{}", self.addr.port())
    }

    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.server.unblock();
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.shutdown();
        for t in self.workers.drain(..) {
            let _ = t.join();
        }
    }
}

/// Transport-level failure; HTTP statuses come back as [`WireResponse`]s.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct WireError(pub String);

#[derive(Debug, Clone)]
pub struct WireResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl WireResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn ok(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn json<T: serde::de::DeserializeOwned>(&self) -> Result<T, WireError> {
        serde_json::from_slice(&self.body).map_err(|e| WireError(format!("bad JSON body: {e}")))
    }
}

/// HTTP client with fixed timeouts, optionally routed through a forward
/// proxy.
#[derive(Clone)]
pub struct Wire {
    agent: ureq::Agent,
}

/// Upper bound on response bodies read into memory (dataset files at
/// desk scale plus headroom).
const BODY_LIMIT: u64 = 512 * 1024 * 1024;

impl Wire {
    pub fn new(connect_timeout: Duration, total_timeout: Option<Duration>) -> Self {
        Self::build(connect_timeout, total_timeout, None).expect("proxy-less agent")
    }

    fn build(
        connect_timeout: Duration,
        total_timeout: Option<Duration>,
        proxy: Option<&str>,
    ) -> Result<Self, WireError> {
        debug_assert!(proxy.is_none(), "proxied requests go through ProxyClient");
        let cfg = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(connect_timeout))
            .timeout_global(total_timeout)
            .max_redirects(0);
        let _ = proxy;
        Ok(Wire { agent: cfg.build().into() })
    }

    pub fn get(&self, url: &str, headers: &[(&str, &str)]) -> Result<WireResponse, WireError> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        Self::finish(req.call())
    }

    pub fn head(&self, url: &str) -> Result<WireResponse, WireError> {
        Self::finish(self.agent.head(url).call())
    }

    pub fn post_json(
        &self,
        url: &str,
        body: &impl serde::Serialize,
    ) -> Result<WireResponse, WireError> {
        let data = serde_json::to_vec(body).expect("JSON serialization");
        let req = self.agent.post(url).header("Content-Type", "application/json");
        Self::finish(req.send(&data[..]))
    }

    fn finish(
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<WireResponse, WireError> {
        let resp = result.map_err(|e| WireError(e.to_string()))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| v.to_str().ok().map(|v| (k.as_str().to_string(), v.to_string())))
            .collect();
        let body = resp
            .into_body()
            .into_with_config()
            .limit(BODY_LIMIT)
            .read_to_vec()
            .map_err(|e| WireError(format!("body read: {e}")))?;
        Ok(WireResponse { status, headers, body })
    }
}

/// Plain forward-proxy client: sends `GET <absolute-url>` to the proxy
/// with close-delimited framing and returns the proxied response.
/// (Tunneling clients speak CONNECT, which squid-style object caches —
/// and this artifact's proxy — do not use for plain HTTP.)
#[derive(Debug, Clone)]
pub struct ProxyClient {
    proxy: String,
    connect_timeout: Duration,
    read_timeout: Duration,
}

impl ProxyClient {
    pub fn new(proxy_endpoint: &str, connect_timeout: Duration) -> Self {
        ProxyClient {
            proxy: proxy_endpoint.trim_start_matches("http://").trim_end_matches('/').to_string(),
            connect_timeout,
            read_timeout: Duration::from_secs(120),
        }
    }

    pub fn get(&self, absolute_url: &str) -> Result<WireResponse, WireError> {
        use std::io::Write;

        let host = absolute_url
            .strip_prefix("http://")
            .and_then(|rest| rest.split('/').next())
            .ok_or_else(|| WireError(format!("unsupported proxy target {absolute_url}")))?;
        let addr: std::net::SocketAddr = self
            .proxy
            .parse()
            .map_err(|e| WireError(format!("bad proxy endpoint {}: {e}", self.proxy)))?;
        let mut stream = std::net::TcpStream::connect_timeout(&addr, self.connect_timeout)
            .map_err(|e| WireError(format!("proxy connect: {e}")))?;
        stream
            .set_read_timeout(Some(self.read_timeout))
            .map_err(|e| WireError(e.to_string()))?;
        let request =
            format!("GET {absolute_url} HTTP/1.1\r\nHost: {host}\r\nConnection: close\r\n\r\n");
        stream
            .write_all(request.as_bytes())
            .map_err(|e| WireError(format!("proxy write: {e}")))?;

        let mut raw = Vec::new();
        stream
            .read_to_end(&mut raw)
            .map_err(|e| WireError(format!("proxy read: {e}")))?;
        parse_http_response(&raw)
    }
}

fn parse_http_response(raw: &[u8]) -> Result<WireResponse, WireError> {
    let header_end = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| WireError("truncated response: no header terminator".to_string()))?;
    let head = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| WireError("non-UTF-8 response headers".to_string()))?;
    let mut lines = head.split("\r\n");
    let status_line = lines.next().unwrap_or_default();
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| WireError(format!("bad status line {status_line:?}")))?;
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut body = raw[header_end + 4..].to_vec();
    if let Some(cl) = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
    {
        if body.len() < cl {
            return Err(WireError(format!("short body: {} of {cl} bytes", body.len())));
        }
        body.truncate(cl);
    }
    Ok(WireResponse { status, headers, body })
}

/// Reads a request body capped at `limit` bytes.
pub fn read_body(request: &mut tiny_http::Request, limit: usize) -> Result<Vec<u8>, std::io::Error> {
    let mut buf = Vec::new();
    request.as_reader().take(limit as u64 + 1).read_to_end(&mut buf)?;
    if buf.len() > limit {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "body too large"));
    }
    Ok(buf)
}

pub fn request_header(request: &tiny_http::Request, name: &str) -> Option<String> {
    request
        .headers()
        .iter()
        .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case(name))
        .map(|h| h.value.as_str().to_string())
}
