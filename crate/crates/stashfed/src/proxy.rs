//! A minimal caching forward proxy: absolute-URL GETs, object caching
//! below a size ceiling, TTL expiration, and LRU capacity enforcement.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use stashfed_core::proxy_policy::{Lookup, ObjectLedger, ProxyPolicy};

use crate::clock::Clock;
use crate::httpd::{empty_response, header, json_response, split_target, HttpServer, Wire};
use crate::origin::sleep_until_stop;

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub listen: String,
    pub capacity: u64,
    pub max_object_size: u64,
    pub object_ttl: Duration,
    pub clock: Clock,
    pub sweep_interval: Duration,
    pub workers: usize,
}

impl ProxyConfig {
    pub fn new(capacity: u64, max_object_size: u64, object_ttl: Duration) -> Self {
        ProxyConfig {
            listen: "127.0.0.1:0".to_string(),
            capacity,
            max_object_size,
            object_ttl,
            clock: Clock::system(),
            sweep_interval: Duration::from_millis(200),
            workers: 8,
        }
    }
}

struct StoredObject {
    body: Arc<Vec<u8>>,
    content_type: Option<String>,
}

struct Store {
    ledger: ObjectLedger,
    bytes: HashMap<String, StoredObject>,
    inflight: HashSet<String>,
}

#[derive(Debug, Default)]
struct ProxyCounters {
    hits: AtomicU64,
    misses: AtomicU64,
    uncacheable: AtomicU64,
    expired: AtomicU64,
    evictions: AtomicU64,
    gateway_errors: AtomicU64,
}

struct ProxyState {
    cfg: ProxyConfig,
    store: Mutex<Store>,
    inflight_done: Condvar,
    counters: ProxyCounters,
    wire: Wire,
}

pub struct ProxyHandle {
    http: HttpServer,
    state: Arc<ProxyState>,
    shutdown: Arc<AtomicBool>,
    background: Vec<std::thread::JoinHandle<()>>,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ProxyStats {
    pub usage_bytes: u64,
    pub capacity: u64,
    pub entries: u64,
    pub hits: u64,
    pub misses: u64,
    pub uncacheable: u64,
    pub expired: u64,
    pub evictions: u64,
    pub gateway_errors: u64,
}

impl ProxyHandle {
    pub fn endpoint(&self) -> String {
        self.http.endpoint()
    }

    pub fn proxy_url(&self) -> String {
        format!("http://{}", self.endpoint())
    }

    pub fn stats(&self) -> ProxyStats {
        stats_snapshot(&self.state)
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.http.shutdown();
        for t in self.background.drain(..) {
            let _ = t.join();
        }
    }
}

fn stats_snapshot(state: &ProxyState) -> ProxyStats {
    let store = state.store.lock().expect("store lock");
    ProxyStats {
        usage_bytes: store.ledger.usage(),
        capacity: store.ledger.policy().capacity,
        entries: store.ledger.len() as u64,
        hits: state.counters.hits.load(Ordering::SeqCst),
        misses: state.counters.misses.load(Ordering::SeqCst),
        uncacheable: state.counters.uncacheable.load(Ordering::SeqCst),
        expired: state.counters.expired.load(Ordering::SeqCst),
        evictions: state.counters.evictions.load(Ordering::SeqCst),
        gateway_errors: state.counters.gateway_errors.load(Ordering::SeqCst),
    }
}

pub fn spawn(cfg: ProxyConfig) -> anyhow::Result<ProxyHandle> {
    let policy = ProxyPolicy::new(cfg.capacity, cfg.max_object_size, cfg.object_ttl.as_millis() as u64)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let state = Arc::new(ProxyState {
        store: Mutex::new(Store {
            ledger: ObjectLedger::new(policy),
            bytes: HashMap::new(),
            inflight: HashSet::new(),
        }),
        inflight_done: Condvar::new(),
        counters: ProxyCounters::default(),
        wire: Wire::new(Duration::from_secs(2), None),
        cfg,
    });

    let listen = state.cfg.listen.clone();
    let workers = state.cfg.workers;
    let handler_state = state.clone();
    let http = HttpServer::spawn(&listen, workers, move |request| {
        handle_request(&handler_state, request);
    })?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let sweeper_state = state.clone();
    let stop = shutdown.clone();
    let sweeper = std::thread::spawn(move || {
        while !sleep_until_stop(&stop, sweeper_state.cfg.sweep_interval) {
            run_sweep(&sweeper_state);
        }
    });

    Ok(ProxyHandle { http, state, shutdown, background: vec![sweeper] })
}

/// TTL expiry plus LRU capacity enforcement; both drop stored bytes.
fn run_sweep(state: &ProxyState) {
    let now = state.cfg.clock.now_ms();
    let mut store = state.store.lock().expect("store lock");
    let (expired, lru) = store.ledger.expire_sweep(now);
    for key in &expired {
        store.bytes.remove(key);
    }
    for key in &lru {
        store.bytes.remove(key);
    }
    state.counters.expired.fetch_add(expired.len() as u64, Ordering::SeqCst);
    state.counters.evictions.fetch_add(lru.len() as u64, Ordering::SeqCst);
}

fn handle_request(state: &ProxyState, request: tiny_http::Request) {
    let target = request.url().to_string();
    let method = request.method().as_str().to_string();

    let outcome = if target.starts_with("http://") {
        if method == "GET" {
            proxy_get(state, request, &target)
        } else {
            request.respond(empty_response(405))
        }
    } else {
        let (path, _) = split_target(&target);
        match (method.as_str(), path) {
            ("GET", "/stats") => request.respond(json_response(200, &stats_snapshot(state))),
            _ => request.respond(empty_response(404)),
        }
    };
    if let Err(e) = outcome {
        log::debug!("response write failed: {e}");
    }
}

/// Removes the in-flight marker even when the fetch path errors out.
struct InflightGuard<'a> {
    state: &'a ProxyState,
    url: String,
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        let mut store = self.state.store.lock().expect("store lock");
        store.inflight.remove(&self.url);
        self.state.inflight_done.notify_all();
    }
}

fn proxy_get(
    state: &ProxyState,
    request: tiny_http::Request,
    url: &str,
) -> Result<(), std::io::Error> {
    // Cached path, with single-flight on concurrent misses for one URL.
    let mut store = state.store.lock().expect("store lock");
    loop {
        let now = state.cfg.clock.now_ms();
        match store.ledger.lookup(url, now) {
            Lookup::Fresh => {
                let obj = store.bytes.get(url).expect("ledger and bytes agree");
                let body = obj.body.clone();
                let content_type = obj.content_type.clone();
                drop(store);
                state.counters.hits.fetch_add(1, Ordering::SeqCst);
                return respond_bytes(request, 200, &body, content_type.as_deref(), "HIT");
            }
            Lookup::Expired => {
                store.bytes.remove(url);
                state.counters.expired.fetch_add(1, Ordering::SeqCst);
            }
            Lookup::Absent => {}
        }
        if store.inflight.contains(url) {
            store = state.inflight_done.wait(store).expect("store lock");
            continue;
        }
        store.inflight.insert(url.to_string());
        break;
    }
    drop(store);
    let _guard = InflightGuard { state, url: url.to_string() };

    let upstream = match state.wire.get(url, &[]) {
        Ok(resp) => resp,
        Err(e) => {
            state.counters.gateway_errors.fetch_add(1, Ordering::SeqCst);
            let resp = empty_response(502).with_header(header("X-Error", "upstream-unreachable"));
            log::debug!("upstream fetch failed for {url}: {e}");
            return request.respond(resp);
        }
    };
    let content_type = upstream.header("Content-Type").map(|s| s.to_string());

    let size = upstream.body.len() as u64;
    let status = upstream.status;
    let body = Arc::new(upstream.body);
    if status != 200 {
        // Pass errors through untouched and uncached.
        state.counters.misses.fetch_add(1, Ordering::SeqCst);
        return respond_bytes(request, status, &body, content_type.as_deref(), "MISS");
    }

    if state.cfg.max_object_size >= size {
        let mut store = state.store.lock().expect("store lock");
        let now = state.cfg.clock.now_ms();
        let victims = store.ledger.insert(url.to_string(), size, now);
        store.bytes.insert(
            url.to_string(),
            StoredObject { body: body.clone(), content_type: content_type.clone() },
        );
        for key in &victims {
            store.bytes.remove(key);
        }
        state.counters.evictions.fetch_add(victims.len() as u64, Ordering::SeqCst);
        drop(store);
        state.counters.misses.fetch_add(1, Ordering::SeqCst);
        respond_bytes(request, 200, &body, content_type.as_deref(), "MISS")
    } else {
        state.counters.uncacheable.fetch_add(1, Ordering::SeqCst);
        respond_bytes(request, 200, &body, content_type.as_deref(), "UNCACHEABLE")
    }
}

fn respond_bytes(
    request: tiny_http::Request,
    status: u16,
    body: &Arc<Vec<u8>>,
    content_type: Option<&str>,
    cache_status: &str,
) -> Result<(), std::io::Error> {
    let mut response = tiny_http::Response::from_data(body.as_slice().to_vec())
        .with_status_code(status)
        .with_chunked_threshold(usize::MAX)
        .with_header(header("X-Proxy-Cache", cache_status));
    if let Some(ct) = content_type {
        response = response.with_header(header("Content-Type", ct));
    }
    request.respond(response)
}
