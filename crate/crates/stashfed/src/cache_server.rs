//! The regional cache: serves client reads from local chunk storage,
//! fetches missing chunks from the located origin (single-flight per
//! chunk, digest-verified), and reclaims space with watermark LRU
//! eviction over whole files.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use stashfed_core::catalog::{parse_catalog, FileCatalogEntry};
use stashfed_core::chunk::{chunks_overlapping, ChunkBitmap, ChunkDigest, chunk_checksum, chunk_count, CHUNK_SIZE};
use stashfed_core::eviction::WatermarkLru;
use stashfed_core::geo::{CacheDescriptor, GeoCoordinate};
use stashfed_core::path::FederationPath;

use crate::httpd::{
    self, decode_percent, empty_response, encode_query_value, encode_url_path, header,
    json_response, range_header_for_chunk, request_header, resolve_range, split_target,
    HttpServer, RangeOutcome, Wire,
};
use crate::origin::sleep_until_stop;
use crate::telemetry::TelemetryEmitter;

#[derive(Debug, Clone)]
pub struct CacheConfig {
    pub cache_id: String,
    pub listen: String,
    pub advertise: Option<String>,
    pub redirectors: Vec<String>,
    pub storage_dir: PathBuf,
    pub capacity: u64,
    pub high_watermark: f64,
    pub low_watermark: f64,
    pub location: GeoCoordinate,
    pub heartbeat_interval: Duration,
    pub monitor: Option<String>,
    pub workers: usize,
}

impl CacheConfig {
    pub fn new(cache_id: impl Into<String>, storage_dir: impl Into<PathBuf>, capacity: u64) -> Self {
        CacheConfig {
            cache_id: cache_id.into(),
            listen: "127.0.0.1:0".to_string(),
            advertise: None,
            redirectors: Vec::new(),
            storage_dir: storage_dir.into(),
            capacity,
            high_watermark: 0.90,
            low_watermark: 0.70,
            location: GeoCoordinate::new(0.0, 0.0).expect("origin of coordinates"),
            heartbeat_interval: Duration::from_secs(60),
            monitor: None,
            workers: 16,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum CacheError {
    #[error("not found")]
    NotFound,
    #[error("origin unreachable: {0}")]
    OriginUnreachable(String),
    #[error("integrity error on chunk {chunk}")]
    Integrity { chunk: u32 },
    #[error("cache full")]
    CacheFull,
    #[error("io error: {0}")]
    Io(String),
}

impl CacheError {
    fn http_status(&self) -> u16 {
        match self {
            CacheError::NotFound => 404,
            CacheError::OriginUnreachable(_) => 502,
            CacheError::Integrity { .. } => 502,
            CacheError::CacheFull => 507,
            CacheError::Io(_) => 500,
        }
    }

    fn wire_tag(&self) -> &'static str {
        match self {
            CacheError::NotFound => "not-found",
            CacheError::OriginUnreachable(_) => "origin-unreachable",
            CacheError::Integrity { .. } => "integrity-error",
            CacheError::CacheFull => "cache-full",
            CacheError::Io(_) => "io-error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Partial,
}

impl CacheStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CacheStatus::Hit => "HIT",
            CacheStatus::Miss => "MISS",
            CacheStatus::Partial => "PARTIAL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitState {
    Empty,
    Pending,
    Ready,
}

struct EntryMeta {
    init: InitState,
    total_size: u64,
    mtime: u64,
    origin: String,
    catalog: Option<FileCatalogEntry>,
    chunks: ChunkBitmap,
    fetching: HashSet<u32>,
}

impl EntryMeta {
    fn new() -> Self {
        EntryMeta {
            init: InitState::Empty,
            total_size: 0,
            mtime: 0,
            origin: String::new(),
            catalog: None,
            chunks: ChunkBitmap::new(0),
            fetching: HashSet::new(),
        }
    }
}

struct EntryState {
    meta: Mutex<EntryMeta>,
    cond: Condvar,
}

#[derive(Debug, Default)]
struct CacheCounters {
    hits: AtomicU64,
    misses: AtomicU64,
    partials: AtomicU64,
    origin_fetches: AtomicU64,
    unverified: AtomicU64,
}

struct CacheState {
    cfg: CacheConfig,
    advertised: String,
    entries: RwLock<HashMap<FederationPath, Arc<EntryState>>>,
    ledger: Mutex<WatermarkLru>,
    counters: CacheCounters,
    wire_data: Wire,
    wire_ctl: Wire,
    emitter: Option<TelemetryEmitter>,
}

pub struct CacheHandle {
    http: HttpServer,
    state: Arc<CacheState>,
    shutdown: Arc<AtomicBool>,
    background: Vec<std::thread::JoinHandle<()>>,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CacheStats {
    pub usage_bytes: u64,
    pub capacity: u64,
    pub entries: u64,
    pub hits: u64,
    pub misses: u64,
    pub partials: u64,
    pub origin_fetches: u64,
    pub evictions: u64,
    pub unverified: u64,
}

impl CacheHandle {
    pub fn endpoint(&self) -> String {
        self.state.advertised.clone()
    }

    pub fn listen_endpoint(&self) -> String {
        self.http.endpoint()
    }

    pub fn descriptor(&self) -> CacheDescriptor {
        CacheDescriptor {
            cache_id: self.state.cfg.cache_id.clone(),
            endpoint: self.endpoint(),
            location: self.state.cfg.location,
        }
    }

    pub fn stats(&self) -> CacheStats {
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

fn stats_snapshot(state: &CacheState) -> CacheStats {
    let ledger = state.ledger.lock().expect("ledger lock");
    CacheStats {
        usage_bytes: ledger.usage(),
        capacity: ledger.capacity(),
        entries: ledger.len() as u64,
        hits: state.counters.hits.load(Ordering::SeqCst),
        misses: state.counters.misses.load(Ordering::SeqCst),
        partials: state.counters.partials.load(Ordering::SeqCst),
        origin_fetches: state.counters.origin_fetches.load(Ordering::SeqCst),
        evictions: ledger.eviction_count(),
        unverified: state.counters.unverified.load(Ordering::SeqCst),
    }
}

pub fn spawn(cfg: CacheConfig) -> anyhow::Result<CacheHandle> {
    anyhow::ensure!(cfg.capacity > CHUNK_SIZE, "capacity must exceed one chunk");
    let ledger = WatermarkLru::new(cfg.capacity, cfg.high_watermark, cfg.low_watermark)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    std::fs::create_dir_all(&cfg.storage_dir)?;

    let emitter = match &cfg.monitor {
        Some(target) => Some(TelemetryEmitter::new(&format!("cache:{}", cfg.cache_id), target)?),
        None => None,
    };

    let state_slot: Arc<RwLock<Option<Arc<CacheState>>>> = Arc::new(RwLock::new(None));
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
    let state = Arc::new(CacheState {
        advertised,
        entries: RwLock::new(HashMap::new()),
        ledger: Mutex::new(ledger),
        counters: CacheCounters::default(),
        wire_data: Wire::new(Duration::from_secs(2), None),
        wire_ctl: Wire::new(Duration::from_secs(2), Some(Duration::from_secs(5))),
        emitter,
        cfg,
    });
    *state_slot.write().expect("state slot") = Some(state.clone());

    let shutdown = Arc::new(AtomicBool::new(false));
    let mut background = Vec::new();
    if !state.cfg.redirectors.is_empty() {
        let state = state.clone();
        let stop = shutdown.clone();
        background.push(std::thread::spawn(move || loop {
            register_with_redirectors(&state);
            if sleep_until_stop(&stop, state.cfg.heartbeat_interval) {
                break;
            }
        }));
    }

    Ok(CacheHandle { http, state, shutdown, background })
}

fn register_with_redirectors(state: &CacheState) {
    let descriptor = CacheDescriptor {
        cache_id: state.cfg.cache_id.clone(),
        endpoint: state.advertised.clone(),
        location: state.cfg.location,
    };
    for redirector in &state.cfg.redirectors {
        let url = format!("http://{redirector}/register/cache");
        match state.wire_ctl.post_json(&url, &descriptor) {
            Ok(resp) if resp.ok() => {}
            Ok(resp) => log::warn!("redirector {redirector} rejected cache registration: {}", resp.status),
            Err(e) => log::debug!("redirector {redirector} unreachable: {e}"),
        }
    }
}

/// Filesystem key for one cached file: the whole federation path collapsed
/// into a single directory name.
fn object_key(path: &FederationPath) -> String {
    utf8_percent_encode(path.as_str(), NON_ALPHANUMERIC).to_string()
}

fn entry_dir(state: &CacheState, path: &FederationPath) -> PathBuf {
    state.cfg.storage_dir.join(object_key(path))
}

fn chunk_file(state: &CacheState, path: &FederationPath, index: u32) -> PathBuf {
    entry_dir(state, path).join(format!("c{index:06}"))
}

/// Unpins its entry when the request finishes, whatever the outcome.
struct PinGuard<'a> {
    state: &'a CacheState,
    path: FederationPath,
}

impl Drop for PinGuard<'_> {
    fn drop(&mut self) {
        self.state.ledger.lock().expect("ledger lock").unpin(&self.path);
    }
}

/// Gets or creates the entry, marks it most recently used, and pins it
/// against eviction for the duration of the request.
fn lookup_and_pin<'a>(
    state: &'a CacheState,
    path: &FederationPath,
) -> (Arc<EntryState>, PinGuard<'a>) {
    let mut entries = state.entries.write().expect("entries lock");
    let entry = entries
        .entry(path.clone())
        .or_insert_with(|| Arc::new(EntryState { meta: Mutex::new(EntryMeta::new()), cond: Condvar::new() }))
        .clone();
    let mut ledger = state.ledger.lock().expect("ledger lock");
    ledger.touch(path);
    ledger.pin(path);
    drop(ledger);
    drop(entries);
    (entry, PinGuard { state, path: path.clone() })
}

/// Initializes entry metadata on first touch: locate the origin, read the
/// file's size and mtime, and pull its catalog entry for digests. Returns
/// `(total_size, cold)` where `cold` means this call did the
/// initialization.
fn ensure_meta(
    state: &CacheState,
    path: &FederationPath,
    entry: &EntryState,
) -> Result<(u64, bool), CacheError> {
    let mut meta = entry.meta.lock().expect("meta lock");
    loop {
        match meta.init {
            InitState::Ready => return Ok((meta.total_size, false)),
            InitState::Pending => {
                meta = entry.cond.wait(meta).expect("meta lock");
            }
            InitState::Empty => {
                meta.init = InitState::Pending;
                break;
            }
        }
    }
    drop(meta);

    let result = init_meta_io(state, path);
    let mut meta = entry.meta.lock().expect("meta lock");
    match result {
        Ok((size, mtime, origin, catalog)) => {
            meta.total_size = size;
            meta.mtime = mtime;
            meta.origin = origin;
            if catalog.is_none() {
                state.counters.unverified.fetch_add(1, Ordering::SeqCst);
            }
            meta.catalog = catalog;
            meta.chunks = ChunkBitmap::new(chunk_count(size));
            meta.init = InitState::Ready;
            entry.cond.notify_all();
            Ok((size, true))
        }
        Err(e) => {
            meta.init = InitState::Empty;
            entry.cond.notify_all();
            Err(e)
        }
    }
}

fn init_meta_io(
    state: &CacheState,
    path: &FederationPath,
) -> Result<(u64, u64, String, Option<FileCatalogEntry>), CacheError> {
    let origin = locate_origin(state, path)?;
    let head_url = format!("http://{origin}/data{}", encode_url_path(path));
    let head = state
        .wire_ctl
        .head(&head_url)
        .map_err(|e| CacheError::OriginUnreachable(e.to_string()))?;
    if head.status == 404 {
        return Err(CacheError::NotFound);
    }
    if !head.ok() {
        return Err(CacheError::OriginUnreachable(format!("origin HEAD status {}", head.status)));
    }
    let size: u64 = head
        .header("X-Total-Size")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CacheError::OriginUnreachable("origin omitted X-Total-Size".into()))?;
    let mtime: u64 = head.header("X-Mtime").and_then(|v| v.parse().ok()).unwrap_or(0);

    // One catalog read per file; entries indexed after the last scan come
    // back absent and are served unverified.
    let catalog_url = format!("http://{origin}/catalog");
    let catalog = match state.wire_ctl.get(&catalog_url, &[]) {
        Ok(resp) if resp.ok() => String::from_utf8(resp.body)
            .ok()
            .and_then(|text| parse_catalog(&text).ok())
            .and_then(|entries| entries.into_iter().find(|e| &e.path == path))
            .filter(|e| e.size == size),
        _ => None,
    };
    Ok((size, mtime, origin, catalog))
}

fn locate_origin(state: &CacheState, path: &FederationPath) -> Result<String, CacheError> {
    let mut last_err = String::from("no redirectors configured");
    for redirector in &state.cfg.redirectors {
        let url = format!(
            "http://{redirector}/locate?path={}",
            encode_query_value(path.as_str())
        );
        match state.wire_ctl.get(&url, &[]) {
            Ok(resp) if resp.status == 200 => {
                #[derive(serde::Deserialize)]
                struct Located {
                    origin: String,
                }
                let located: Located =
                    resp.json().map_err(|e| CacheError::OriginUnreachable(e.to_string()))?;
                return Ok(located.origin);
            }
            Ok(resp) if resp.status == 404 => return Err(CacheError::NotFound),
            Ok(resp) => last_err = format!("redirector status {}", resp.status),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(CacheError::OriginUnreachable(last_err))
}

/// Guarantees chunk `index` is committed locally, fetching it from the
/// origin if needed. Concurrent callers for the same chunk coalesce into
/// one origin fetch.
fn ensure_chunk(
    state: &CacheState,
    path: &FederationPath,
    entry: &EntryState,
    index: u32,
) -> Result<(), CacheError> {
    loop {
        let mut meta = entry.meta.lock().expect("meta lock");
        if meta.chunks.contains(index) {
            return Ok(());
        }
        if meta.fetching.contains(&index) {
            let _guard: MutexGuard<'_, EntryMeta> = entry.cond.wait(meta).expect("meta lock");
            continue;
        }
        meta.fetching.insert(index);
        let size = meta.total_size;
        let origin = meta.origin.clone();
        let expected = meta
            .catalog
            .as_ref()
            .and_then(|c| c.chunk_digests.get(index as usize).copied());
        drop(meta);

        let result = fetch_and_commit(state, path, index, size, &origin, expected);
        let mut meta = entry.meta.lock().expect("meta lock");
        meta.fetching.remove(&index);
        let out = match result {
            Ok(()) => {
                meta.chunks.set(index);
                Ok(())
            }
            Err(e) => Err(e),
        };
        entry.cond.notify_all();
        return out;
    }
}

fn fetch_and_commit(
    state: &CacheState,
    path: &FederationPath,
    index: u32,
    size: u64,
    origin: &str,
    expected: Option<ChunkDigest>,
) -> Result<(), CacheError> {
    let start = index as u64 * CHUNK_SIZE;
    let end = (start + CHUNK_SIZE).min(size);
    let url = format!("http://{origin}/data{}", encode_url_path(path));

    // A corrupted chunk is discarded and refetched once before giving up.
    let mut last_integrity = false;
    for _attempt in 0..2 {
        state.counters.origin_fetches.fetch_add(1, Ordering::SeqCst);
        let resp = state
            .wire_data
            .get(&url, &[("Range", &range_header_for_chunk(start, end)), ("X-Stashfed-Agent", "cache")])
            .map_err(|e| CacheError::OriginUnreachable(e.to_string()))?;
        if resp.status == 404 {
            return Err(CacheError::NotFound);
        }
        if !resp.ok() {
            return Err(CacheError::OriginUnreachable(format!("origin status {}", resp.status)));
        }
        if resp.body.len() as u64 != end - start {
            last_integrity = true;
            continue;
        }
        if let Some(expected) = expected {
            let actual = chunk_checksum(&resp.body).expect("chunk-sized body");
            if actual != expected {
                last_integrity = true;
                continue;
            }
        }
        make_room(state, end - start)?;
        let dir = entry_dir(state, path);
        std::fs::create_dir_all(&dir).map_err(|e| CacheError::Io(e.to_string()))?;
        std::fs::write(chunk_file(state, path, index), &resp.body)
            .map_err(|e| CacheError::Io(e.to_string()))?;
        let mut ledger = state.ledger.lock().expect("ledger lock");
        ledger.add_bytes(path, end - start);
        return Ok(());
    }
    debug_assert!(last_integrity);
    Err(CacheError::Integrity { chunk: index })
}

/// Runs watermark eviction if committing `incoming` bytes would cross the
/// high watermark. Victim entries vanish from the entry map, the ledger,
/// and disk.
fn make_room(state: &CacheState, incoming: u64) -> Result<(), CacheError> {
    let victims = {
        let mut entries = state.entries.write().expect("entries lock");
        let mut ledger = state.ledger.lock().expect("ledger lock");
        if !ledger.over_high(incoming) {
            return Ok(());
        }
        let victims = ledger.evict_for(incoming).map_err(|_| CacheError::CacheFull)?;
        for (path, _) in &victims {
            entries.remove(path);
        }
        victims
    };
    for (path, _) in victims {
        if let Err(e) = std::fs::remove_dir_all(entry_dir(state, &path)) {
            log::warn!("failed to remove evicted entry {path}: {e}");
        }
    }
    Ok(())
}

/// Streams a byte range, materializing each chunk on first need so the
/// client sees data as soon as a chunk commits.
struct RangeReader {
    state: Arc<CacheState>,
    path: FederationPath,
    entry: Arc<EntryState>,
    pos: u64,
    end: u64,
    current: Option<(u32, std::fs::File)>,
}

impl Read for RangeReader {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.pos >= self.end {
            return Ok(0);
        }
        let index = (self.pos / CHUNK_SIZE) as u32;
        if self.current.as_ref().map(|(i, _)| *i) != Some(index) {
            ensure_chunk(&self.state, &self.path, &self.entry, index)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            let mut file = std::fs::File::open(chunk_file(&self.state, &self.path, index))?;
            let offset_in_chunk = self.pos - index as u64 * CHUNK_SIZE;
            use std::io::Seek;
            file.seek(std::io::SeekFrom::Start(offset_in_chunk))?;
            self.current = Some((index, file));
        }
        let chunk_end = ((index as u64 + 1) * CHUNK_SIZE).min(self.end);
        let want = ((chunk_end - self.pos) as usize).min(buf.len());
        let (_, file) = self.current.as_mut().expect("current chunk file");
        let n = file.read(&mut buf[..want])?;
        if n == 0 {
            return Err(std::io::Error::other("chunk file truncated"));
        }
        self.pos += n as u64;
        if self.pos >= chunk_end {
            self.current = None;
        }
        Ok(n)
    }
}

fn handle_request(state: &Arc<CacheState>, request: tiny_http::Request) {
    let method = request.method().as_str().to_string();
    let target = request.url().to_string();
    let (path, _query) = split_target(&target);

    let outcome = match (method.as_str(), path) {
        ("GET", "/stats") => request.respond(json_response(200, &stats_snapshot(state))),
        ("GET", p) if p.starts_with("/data/") => serve_data(state, request, p, false),
        ("HEAD", p) if p.starts_with("/data/") => serve_data(state, request, p, true),
        _ => request.respond(empty_response(404)),
    };
    if let Err(e) = outcome {
        log::debug!("response write failed: {e}");
    }
}

fn error_response(err: &CacheError) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let mut resp = httpd::text_response(err.http_status(), err.to_string())
        .with_header(header("X-Error", err.wire_tag()));
    if let CacheError::Integrity { chunk } = err {
        resp = resp.with_header(header("X-Error-Chunk", &chunk.to_string()));
    }
    resp
}

fn serve_data(
    state: &Arc<CacheState>,
    request: tiny_http::Request,
    url_path: &str,
    head_only: bool,
) -> Result<(), std::io::Error> {
    let Some(decoded) = decode_percent(&url_path["/data".len()..]) else {
        return request.respond(empty_response(400));
    };
    let Ok(path) = FederationPath::parse(&decoded) else {
        return request.respond(empty_response(400));
    };

    let (entry, _pin) = lookup_and_pin(state, &path);
    let (size, cold) = match ensure_meta(state, &path, &entry) {
        Ok(v) => v,
        Err(e) => return request.respond(error_response(&e)),
    };

    let range_header = request_header(&request, "Range");
    let (start, end, partial) = match resolve_range(range_header.as_deref(), size) {
        RangeOutcome::Whole => (0, size, false),
        RangeOutcome::Slice { start, end } => (start, end, true),
        RangeOutcome::Unsatisfiable => {
            let resp = empty_response(416)
                .with_header(header("Content-Range", &format!("bytes */{size}")))
                .with_header(header("X-Total-Size", &size.to_string()));
            return request.respond(resp);
        }
        RangeOutcome::Malformed => return request.respond(empty_response(400)),
    };

    // Cache status is decided by what was present before this request.
    let overlap = chunks_overlapping(size, start, end);
    let status = {
        let meta = entry.meta.lock().expect("meta lock");
        let total = overlap.len() as u32;
        let present = overlap.clone().filter(|i| meta.chunks.contains(*i)).count() as u32;
        if total == 0 {
            if cold { CacheStatus::Miss } else { CacheStatus::Hit }
        } else if present == total {
            CacheStatus::Hit
        } else if present == 0 {
            CacheStatus::Miss
        } else {
            CacheStatus::Partial
        }
    };
    let meta_headers = |resp: tiny_http::Response<std::io::Cursor<Vec<u8>>>| {
        resp.with_header(header("X-Total-Size", &size.to_string()))
            .with_header(header("X-Cache", status.as_str()))
    };
    // Metadata probes answer with the would-be status but only data
    // requests move the hit/miss counters.
    if head_only {
        return request.respond(meta_headers(empty_response(200)));
    }
    match status {
        CacheStatus::Hit => state.counters.hits.fetch_add(1, Ordering::SeqCst),
        CacheStatus::Miss => state.counters.misses.fetch_add(1, Ordering::SeqCst),
        CacheStatus::Partial => state.counters.partials.fetch_add(1, Ordering::SeqCst),
    };

    // Materialize the first needed chunk before committing to a status
    // line, so fetch failures surface as clean HTTP errors.
    if let Some(first) = overlap.clone().next() {
        if let Err(e) = ensure_chunk(state, &path, &entry, first) {
            return request.respond(error_response(&e));
        }
    }

    let len = end - start;
    let file_id = state.emitter.as_ref().map(|em| {
        let federation = request_header(&request, "X-Stashfed-Agent").is_some();
        em.file_open(request.remote_addr(), federation, path.as_str(), size)
    });

    let reader = RangeReader {
        state: state.clone(),
        path: path.clone(),
        entry: entry.clone(),
        pos: start,
        end,
        current: None,
    };
    let mut response = tiny_http::Response::new(
        tiny_http::StatusCode(if partial { 206 } else { 200 }),
        vec![
            header("X-Total-Size", &size.to_string()),
            header("X-Cache", status.as_str()),
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
    if let (Some(em), Some(fid)) = (state.emitter.as_ref(), file_id) {
        em.file_close(fid, len, overlap.len() as u32);
    }
    outcome
}
