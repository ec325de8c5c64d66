//! The data-discovery service: origins register namespace prefixes, caches
//! register themselves for the directory, and locate answers by longest
//! matching prefix confirmed against the origin's catalog.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use stashfed_core::geo::CacheDescriptor;
use stashfed_core::path::FederationPath;
use stashfed_core::routing::PrefixMap;

use crate::clock::Clock;
use crate::httpd::{
    empty_response, encode_query_value, json_response, query_param, read_body, split_target,
    HttpServer, Wire,
};

#[derive(Debug, Clone)]
pub struct RedirectorConfig {
    pub listen: String,
    /// Expected heartbeat interval; an origin is stale after missing three.
    pub heartbeat_ttl: Duration,
    /// Per-origin confirmation budget during locate.
    pub confirm_timeout: Duration,
    pub clock: Clock,
    pub workers: usize,
}

impl Default for RedirectorConfig {
    fn default() -> Self {
        RedirectorConfig {
            listen: "127.0.0.1:0".to_string(),
            heartbeat_ttl: Duration::from_secs(60),
            confirm_timeout: Duration::from_secs(2),
            clock: Clock::system(),
            workers: 8,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OriginRegistration {
    pub prefix: FederationPath,
    pub endpoint: String,
    pub last_heartbeat_ms: u64,
}

struct RedirectorState {
    cfg: RedirectorConfig,
    origins: RwLock<PrefixMap<OriginRegistration>>,
    caches: RwLock<BTreeMap<String, CacheDescriptor>>,
    wire: Wire,
}

impl RedirectorState {
    fn stale(&self, reg: &OriginRegistration, now_ms: u64) -> bool {
        now_ms.saturating_sub(reg.last_heartbeat_ms) > 3 * self.cfg.heartbeat_ttl.as_millis() as u64
    }
}

pub struct RedirectorHandle {
    http: HttpServer,
    state: Arc<RedirectorState>,
}

impl RedirectorHandle {
    pub fn endpoint(&self) -> String {
        self.http.endpoint()
    }

    pub fn origin_registrations(&self) -> Vec<OriginRegistration> {
        self.state
            .origins
            .read()
            .expect("origins lock")
            .iter()
            .map(|(_, r)| r.clone())
            .collect()
    }

    pub fn shutdown(self) {
        self.http.shutdown();
    }
}

pub fn spawn(cfg: RedirectorConfig) -> anyhow::Result<RedirectorHandle> {
    let confirm_timeout = cfg.confirm_timeout;
    let state = Arc::new(RedirectorState {
        origins: RwLock::new(PrefixMap::new()),
        caches: RwLock::new(BTreeMap::new()),
        wire: Wire::new(confirm_timeout, Some(confirm_timeout)),
        cfg,
    });
    let listen = state.cfg.listen.clone();
    let workers = state.cfg.workers;
    let handler_state = state.clone();
    let http = HttpServer::spawn(&listen, workers, move |request| {
        handle_request(&handler_state, request);
    })?;
    Ok(RedirectorHandle { http, state })
}

#[derive(serde::Deserialize)]
struct RegisterOriginBody {
    prefix: String,
    endpoint: String,
}

fn handle_request(state: &RedirectorState, mut request: tiny_http::Request) {
    let method = request.method().as_str().to_string();
    let target = request.url().to_string();
    let (path, query) = split_target(&target);

    let outcome = match (method.as_str(), path) {
        ("POST", "/register/origin") => {
            let response = match read_body(&mut request, 64 * 1024)
                .ok()
                .and_then(|b| serde_json::from_slice::<RegisterOriginBody>(&b).ok())
            {
                Some(body) => register_origin(state, &body),
                None => empty_response(400),
            };
            request.respond(response)
        }
        ("POST", "/register/cache") => {
            let response = match read_body(&mut request, 64 * 1024) {
                Ok(bytes) => match serde_json::from_slice::<CacheDescriptor>(&bytes) {
                    Ok(descriptor) => {
                        state
                            .caches
                            .write()
                            .expect("caches lock")
                            .insert(descriptor.cache_id.clone(), descriptor);
                        empty_response(200)
                    }
                    // Malformed descriptor (including out-of-range coordinates).
                    Err(_) => empty_response(400),
                },
                Err(_) => empty_response(400),
            };
            request.respond(response)
        }
        ("GET", "/locate") => {
            let response = match query_param(query, "path")
                .and_then(|raw| FederationPath::parse(&raw).ok())
            {
                Some(fed_path) => match locate(state, &fed_path) {
                    Some(endpoint) => json_response(200, &serde_json::json!({ "origin": endpoint })),
                    None => empty_response(404),
                },
                None => empty_response(400),
            };
            request.respond(response)
        }
        ("GET", "/caches") => {
            let list: Vec<CacheDescriptor> =
                state.caches.read().expect("caches lock").values().cloned().collect();
            request.respond(json_response(200, &list))
        }
        _ => request.respond(empty_response(404)),
    };
    if let Err(e) = outcome {
        log::debug!("response write failed: {e}");
    }
}

fn register_origin(
    state: &RedirectorState,
    body: &RegisterOriginBody,
) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let Ok(prefix) = FederationPath::parse(&body.prefix) else {
        return empty_response(400);
    };
    if body.endpoint.is_empty() {
        return empty_response(400);
    }
    let now_ms = state.cfg.clock.now_ms();
    let mut origins = state.origins.write().expect("origins lock");
    if let Some(existing) = origins.get_mut(&prefix) {
        if existing.endpoint == body.endpoint {
            existing.last_heartbeat_ms = now_ms;
            return empty_response(200);
        }
        if !state.stale(existing, now_ms) {
            // Prefix ownership is exclusive while the holder is live.
            return empty_response(409);
        }
    }
    origins.insert(prefix.clone(), OriginRegistration {
        prefix,
        endpoint: body.endpoint.clone(),
        last_heartbeat_ms: now_ms,
    });
    empty_response(200)
}

/// Longest-prefix candidates, live only, each confirmed against the
/// origin's own catalog before being returned.
fn locate(state: &RedirectorState, path: &FederationPath) -> Option<String> {
    let now_ms = state.cfg.clock.now_ms();
    let candidates: Vec<(FederationPath, String)> = {
        let origins = state.origins.read().expect("origins lock");
        origins
            .matches(path)
            .into_iter()
            .filter(|(_, reg)| !state.stale(reg, now_ms))
            .map(|(p, reg)| (p.clone(), reg.endpoint.clone()))
            .collect()
    };
    for (_, endpoint) in candidates {
        let url = format!(
            "http://{endpoint}/locate?path={}",
            encode_query_value(path.as_str())
        );
        match state.wire.get(&url, &[]) {
            Ok(resp) if resp.status == 200 => return Some(endpoint),
            // 404, errors, and timeouts all mean "try the next candidate".
            _ => {}
        }
    }
    None
}
