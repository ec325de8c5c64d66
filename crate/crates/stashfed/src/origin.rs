//! The data origin: authoritative byte source for a namespace subtree,
//! with the indexer that builds and refreshes the file catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Seek, SeekFrom};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use stashfed_core::catalog::{encode_catalog, FileCatalogEntry};
use stashfed_core::chunk::{chunk_checksum, chunk_layout, ChunkDigest, CHUNK_SIZE};
use stashfed_core::path::FederationPath;

use crate::clock::epoch_seconds;
use crate::httpd::{
    decode_percent, empty_response, header, json_response, query_param, request_header,
    resolve_range, split_target, text_response, HttpServer, RangeOutcome, Wire,
};
use crate::telemetry::TelemetryEmitter;

#[derive(Debug, Clone)]
pub struct OriginConfig {
    pub namespace_prefix: FederationPath,
    pub root_dir: PathBuf,
    pub listen: String,
    /// Endpoint registered with the redirector; defaults to the bound
    /// listen address.
    pub advertise: Option<String>,
    pub redirectors: Vec<String>,
    pub reindex_interval: Duration,
    pub heartbeat_interval: Duration,
    pub monitor: Option<String>,
    pub workers: usize,
}

impl OriginConfig {
    pub fn new(prefix: FederationPath, root_dir: impl Into<PathBuf>) -> Self {
        OriginConfig {
            namespace_prefix: prefix,
            root_dir: root_dir.into(),
            listen: "127.0.0.1:0".to_string(),
            advertise: None,
            redirectors: Vec::new(),
            reindex_interval: Duration::from_secs(30),
            heartbeat_interval: Duration::from_secs(60),
            monitor: None,
            workers: 8,
        }
    }
}

/// Immutable catalog snapshot published by the indexer.
#[derive(Debug, Clone, Default)]
pub struct IndexState {
    pub catalog: BTreeMap<FederationPath, FileCatalogEntry>,
    pub last_scan: u64,
}

/// Stat-level view of one file, used for change detection without reading
/// content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileStat {
    pub rel: PathBuf,
    pub size: u64,
    pub mtime: u64,
    pub mode: u32,
}

/// Paths to (re)index: new files, deleted files, and files whose
/// `(mtime, size)` pair changed. Content is never read here.
pub fn detect_changes(
    previous: &BTreeMap<FederationPath, FileCatalogEntry>,
    current: &BTreeMap<FederationPath, FileStat>,
) -> BTreeSet<FederationPath> {
    let mut changed = BTreeSet::new();
    for (path, stat) in current {
        match previous.get(path) {
            Some(entry) if entry.size == stat.size && entry.mtime == stat.mtime => {}
            _ => {
                changed.insert(path.clone());
            }
        }
    }
    for path in previous.keys() {
        if !current.contains_key(path) {
            changed.insert(path.clone());
        }
    }
    changed
}

pub struct Indexer {
    root: PathBuf,
    prefix: FederationPath,
    /// Files whose content was hashed; change detection must not move it.
    files_hashed: AtomicU64,
}

impl Indexer {
    pub fn new(root: impl Into<PathBuf>, prefix: FederationPath) -> Self {
        Indexer { root: root.into(), prefix, files_hashed: AtomicU64::new(0) }
    }

    pub fn files_hashed(&self) -> u64 {
        self.files_hashed.load(Ordering::SeqCst)
    }

    /// Stat scan of the whole tree. Symlinks and non-regular files are
    /// skipped; directory order is name-sorted so scans are deterministic.
    pub fn scan_stats(&self) -> std::io::Result<BTreeMap<FederationPath, FileStat>> {
        let mut stats = BTreeMap::new();
        let mut pending = vec![PathBuf::new()];
        while let Some(rel_dir) = pending.pop() {
            let abs = self.root.join(&rel_dir);
            let mut entries: Vec<_> = std::fs::read_dir(&abs)?.collect::<Result<_, _>>()?;
            entries.sort_by_key(|e| e.file_name());
            for entry in entries {
                let file_type = entry.file_type()?;
                if file_type.is_symlink() {
                    continue;
                }
                let rel = rel_dir.join(entry.file_name());
                if file_type.is_dir() {
                    pending.push(rel);
                    continue;
                }
                if !file_type.is_file() {
                    continue;
                }
                let Some(rel_str) = rel.to_str() else {
                    log::warn!("skipping non-UTF-8 file name {:?}", rel);
                    continue;
                };
                let Ok(path) = self.prefix.join(rel_str) else {
                    continue;
                };
                let md = entry.metadata()?;
                stats.insert(path, FileStat {
                    rel,
                    size: md.len(),
                    mtime: file_mtime(&md),
                    mode: file_mode(&md),
                });
            }
        }
        Ok(stats)
    }

    fn hash_file(&self, stat: &FileStat) -> std::io::Result<Vec<ChunkDigest>> {
        self.files_hashed.fetch_add(1, Ordering::SeqCst);
        let mut file = std::fs::File::open(self.root.join(&stat.rel))?;
        let mut digests = Vec::with_capacity(chunk_layout(stat.size).len());
        let mut buf = vec![0u8; CHUNK_SIZE.min(stat.size.max(1)) as usize];
        for spec in chunk_layout(stat.size) {
            let dst = &mut buf[..spec.length as usize];
            file.read_exact(dst)?;
            digests.push(chunk_checksum(dst).expect("chunk length bounded"));
        }
        Ok(digests)
    }

    fn entry_for(&self, path: &FederationPath, stat: &FileStat) -> std::io::Result<FileCatalogEntry> {
        Ok(FileCatalogEntry {
            path: path.clone(),
            size: stat.size,
            mtime: stat.mtime,
            permissions: stat.mode,
            chunk_digests: self.hash_file(stat)?,
        })
    }

    /// Full scan and hash of every file.
    pub fn index_tree(&self) -> std::io::Result<IndexState> {
        let stats = self.scan_stats()?;
        let mut catalog = BTreeMap::new();
        for (path, stat) in &stats {
            catalog.insert(path.clone(), self.entry_for(path, stat)?);
        }
        Ok(IndexState { catalog, last_scan: epoch_seconds() })
    }

    /// Incremental pass: rehashes only what [`detect_changes`] reports,
    /// carrying unchanged entries over untouched.
    pub fn refresh(&self, previous: &IndexState) -> std::io::Result<IndexState> {
        let stats = self.scan_stats()?;
        let changed = detect_changes(&previous.catalog, &stats);
        let mut catalog = BTreeMap::new();
        for (path, stat) in &stats {
            if changed.contains(path) {
                catalog.insert(path.clone(), self.entry_for(path, stat)?);
            } else {
                let entry = previous.catalog.get(path).expect("unchanged entry exists");
                catalog.insert(path.clone(), entry.clone());
            }
        }
        Ok(IndexState { catalog, last_scan: epoch_seconds() })
    }
}

fn file_mtime(md: &std::fs::Metadata) -> u64 {
    md.modified()
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs())
}

#[cfg(unix)]
fn file_mode(md: &std::fs::Metadata) -> u32 {
    use std::os::unix::fs::PermissionsExt;
    md.permissions().mode() & 0o7777
}

#[cfg(not(unix))]
fn file_mode(_md: &std::fs::Metadata) -> u32 {
    0o644
}

#[derive(Debug, Default)]
pub struct OriginStats {
    pub requests: AtomicU64,
    pub bytes_served: AtomicU64,
}

struct OriginState {
    cfg: OriginConfig,
    advertised: String,
    index: RwLock<Arc<IndexState>>,
    indexer: Indexer,
    stats: OriginStats,
    emitter: Option<TelemetryEmitter>,
}

pub struct OriginHandle {
    http: HttpServer,
    state: Arc<OriginState>,
    shutdown: Arc<AtomicBool>,
    background: Vec<std::thread::JoinHandle<()>>,
}

impl OriginHandle {
    /// The endpoint this origin registers with redirectors.
    pub fn endpoint(&self) -> String {
        self.state.advertised.clone()
    }

    pub fn listen_endpoint(&self) -> String {
        self.http.endpoint()
    }

    pub fn index_snapshot(&self) -> Arc<IndexState> {
        self.state.index.read().expect("index lock").clone()
    }

    /// Runs one incremental index pass synchronously.
    pub fn reindex_now(&self) -> std::io::Result<()> {
        reindex(&self.state)
    }

    pub fn files_hashed(&self) -> u64 {
        self.state.indexer.files_hashed()
    }

    pub fn request_count(&self) -> u64 {
        self.state.stats.requests.load(Ordering::SeqCst)
    }

    pub fn bytes_served(&self) -> u64 {
        self.state.stats.bytes_served.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.http.shutdown();
        for t in self.background.drain(..) {
            let _ = t.join();
        }
    }
}

fn reindex(state: &OriginState) -> std::io::Result<()> {
    let previous = state.index.read().expect("index lock").clone();
    match state.indexer.refresh(&previous) {
        Ok(next) => {
            *state.index.write().expect("index lock") = Arc::new(next);
            Ok(())
        }
        // A failed scan leaves the previous snapshot in place.
        Err(e) => Err(e),
    }
}

pub fn spawn(cfg: OriginConfig) -> anyhow::Result<OriginHandle> {
    if !cfg.root_dir.is_dir() {
        anyhow::bail!("root dir {:?} is not a readable directory", cfg.root_dir);
    }
    let indexer = Indexer::new(&cfg.root_dir, cfg.namespace_prefix.clone());
    let initial = indexer.index_tree()?;

    let emitter = match &cfg.monitor {
        Some(target) => Some(TelemetryEmitter::new(
            &format!("origin:{}", cfg.namespace_prefix),
            target,
        )?),
        None => None,
    };

    // Two-phase construction: the HTTP handler needs the state, the state
    // needs the bound address for its advertised endpoint.
    let state_slot: Arc<RwLock<Option<Arc<OriginState>>>> = Arc::new(RwLock::new(None));
    let handler_slot = state_slot.clone();
    let http = HttpServer::spawn(&cfg.listen, cfg.workers, move |request| {
        let state = handler_slot.read().expect("state slot").clone();
        match state {
            Some(state) => handle_request(&state, request),
            None => {
                let _ = request.respond(empty_response(503));
            }
        }
    })?;

    let advertised = cfg.advertise.clone().unwrap_or_else(|| http.endpoint());
    let state = Arc::new(OriginState {
        advertised,
        index: RwLock::new(Arc::new(initial)),
        indexer,
        stats: OriginStats::default(),
        emitter,
        cfg,
    });
    *state_slot.write().expect("state slot") = Some(state.clone());

    let shutdown = Arc::new(AtomicBool::new(false));
    let mut background = Vec::new();

    {
        let state = state.clone();
        let stop = shutdown.clone();
        background.push(std::thread::spawn(move || {
            let interval = state.cfg.reindex_interval;
            while !sleep_until_stop(&stop, interval) {
                if let Err(e) = reindex(&state) {
                    log::warn!("reindex failed, keeping previous catalog: {e}");
                }
            }
        }));
    }

    if !state.cfg.redirectors.is_empty() {
        let state = state.clone();
        let stop = shutdown.clone();
        background.push(std::thread::spawn(move || {
            let wire = Wire::new(Duration::from_secs(2), Some(Duration::from_secs(5)));
            loop {
                register_with_redirectors(&state, &wire);
                if sleep_until_stop(&stop, state.cfg.heartbeat_interval) {
                    break;
                }
            }
        }));
    }

    Ok(OriginHandle { http, state, shutdown, background })
}

/// Sleeps in short slices so shutdown stays responsive; true means stop.
pub(crate) fn sleep_until_stop(stop: &AtomicBool, total: Duration) -> bool {
    let mut remaining = total;
    while remaining > Duration::ZERO {
        if stop.load(Ordering::SeqCst) {
            return true;
        }
        let slice = remaining.min(Duration::from_millis(50));
        std::thread::sleep(slice);
        remaining -= slice;
    }
    stop.load(Ordering::SeqCst)
}

#[derive(serde::Serialize)]
struct RegisterOrigin<'a> {
    prefix: &'a str,
    endpoint: &'a str,
}

fn register_with_redirectors(state: &OriginState, wire: &Wire) {
    for redirector in &state.cfg.redirectors {
        let url = format!("http://{redirector}/register/origin");
        let body = RegisterOrigin {
            prefix: state.cfg.namespace_prefix.as_str(),
            endpoint: &state.advertised,
        };
        match wire.post_json(&url, &body) {
            Ok(resp) if resp.ok() => {}
            Ok(resp) => log::warn!("redirector {redirector} rejected registration: {}", resp.status),
            Err(e) => log::debug!("redirector {redirector} unreachable: {e}"),
        }
    }
}

fn handle_request(state: &OriginState, request: tiny_http::Request) {
    let method = request.method().clone();
    let target = request.url().to_string();
    let (path, query) = split_target(&target);

    let outcome = match (method.as_str(), path) {
        ("GET", "/catalog") => {
            let snapshot = state.index.read().expect("index lock").clone();
            let body = encode_catalog(snapshot.catalog.values());
            request.respond(text_response(200, body))
        }
        ("GET", "/locate") => {
            let response = match locate(state, query) {
                Some(true) => empty_response(200),
                Some(false) => empty_response(404),
                None => empty_response(400),
            };
            request.respond(response)
        }
        ("GET", "/stats") => {
            let snapshot = state.index.read().expect("index lock").clone();
            let body = serde_json::json!({
                "requests": state.stats.requests.load(Ordering::SeqCst),
                "bytes_served": state.stats.bytes_served.load(Ordering::SeqCst),
                "files_indexed": snapshot.catalog.len(),
            });
            request.respond(json_response(200, &body))
        }
        ("GET", p) if p.starts_with("/data/") => serve_data(state, request, p, false),
        ("HEAD", p) if p.starts_with("/data/") => serve_data(state, request, p, true),
        _ => request.respond(empty_response(404)),
    };
    if let Err(e) = outcome {
        log::debug!("response write failed: {e}");
    }
}

fn locate(state: &OriginState, query: Option<&str>) -> Option<bool> {
    let raw = query_param(query, "path")?;
    let path = FederationPath::parse(&raw).ok()?;
    let snapshot = state.index.read().expect("index lock").clone();
    Some(snapshot.catalog.contains_key(&path))
}

/// Resolves `/data/<path>` to a file under the namespace; answers ranged
/// and whole reads from disk.
fn serve_data(
    state: &OriginState,
    request: tiny_http::Request,
    url_path: &str,
    head_only: bool,
) -> Result<(), std::io::Error> {
    state.stats.requests.fetch_add(1, Ordering::SeqCst);
    let Some(decoded) = decode_percent(&url_path["/data".len()..]) else {
        return request.respond(empty_response(400));
    };
    let Ok(path) = FederationPath::parse(&decoded) else {
        return request.respond(empty_response(400));
    };
    if !state.cfg.namespace_prefix.is_prefix_of(&path) {
        return request.respond(empty_response(404));
    }
    let rel = path.as_str()[state.cfg.namespace_prefix.as_str().len()..].trim_start_matches('/');
    let fs_path = state.cfg.root_dir.join(rel);
    let md = match std::fs::metadata(&fs_path) {
        Ok(md) if md.is_file() => md,
        _ => return request.respond(empty_response(404)),
    };
    let size = md.len();
    let mtime = file_mtime(&md);

    let base_headers = |resp: tiny_http::Response<std::io::Cursor<Vec<u8>>>| {
        resp.with_header(header("X-Total-Size", &size.to_string()))
            .with_header(header("X-Mtime", &mtime.to_string()))
    };

    let range_header = request_header(&request, "Range");
    let (start, end, partial) = match resolve_range(range_header.as_deref(), size) {
        RangeOutcome::Whole => (0, size, false),
        RangeOutcome::Slice { start, end } => (start, end, true),
        RangeOutcome::Unsatisfiable => {
            let resp = base_headers(empty_response(416))
                .with_header(header("Content-Range", &format!("bytes */{size}")));
            return request.respond(resp);
        }
        RangeOutcome::Malformed => return request.respond(empty_response(400)),
    };
    let len = end - start;

    if head_only {
        let resp = base_headers(empty_response(200));
        return request.respond(resp);
    }

    let file_id = state.emitter.as_ref().map(|em| {
        let federation = request_header(&request, "X-Stashfed-Agent").is_some();
        em.file_open(request.remote_addr(), federation, path.as_str(), size)
    });

    let mut file = std::fs::File::open(&fs_path)?;
    file.seek(SeekFrom::Start(start))?;
    let reader = file.take(len);
    let status = if partial { 206 } else { 200 };
    let mut response = tiny_http::Response::new(
        tiny_http::StatusCode(status),
        vec![
            header("X-Total-Size", &size.to_string()),
            header("X-Mtime", &mtime.to_string()),
        ],
        reader,
        Some(len as usize),
        None,
    )
    .with_chunked_threshold(usize::MAX);
    if partial {
        response.add_header(header(
            "Content-Range",
            &format!("bytes {}-{}/{}", start, end.saturating_sub(1), size),
        ));
    }
    let outcome = request.respond(response);
    state.stats.bytes_served.fetch_add(len, Ordering::SeqCst);
    if let (Some(em), Some(fid)) = (state.emitter.as_ref(), file_id) {
        em.file_close(fid, len, 1);
    }
    outcome
}
