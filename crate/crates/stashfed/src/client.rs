//! The downloader: ranks caches by distance, then walks the fallback
//! chain — federation caches, direct origin read, plain fetch through a
//! forward proxy — verifying integrity against the origin catalog when
//! one is reachable.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use stashfed_core::catalog::{parse_catalog, FileCatalogEntry};
use stashfed_core::chunk::{chunk_checksum, chunk_layout, ChunkSpec};
use stashfed_core::geo::{rank_caches, CacheDescriptor, GeoCoordinate};
use stashfed_core::path::FederationPath;

use crate::httpd::{encode_query_value, encode_url_path, range_header_for_chunk, ProxyClient, Wire, WireResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CacheFederation,
    DirectOrigin,
    ProxyHttp,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CacheFederation => "cache-federation",
            Method::DirectOrigin => "direct-origin",
            Method::ProxyHttp => "proxy-http",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalCacheConfig {
    pub dir: PathBuf,
    pub capacity: u64,
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub redirectors: Vec<String>,
    /// Explicit cache endpoints; bypasses the directory and ranking.
    pub caches: Vec<String>,
    pub location: GeoCoordinate,
    pub methods: Vec<Method>,
    pub proxy: Option<String>,
    /// Upstream for the proxy method when no locate has succeeded.
    pub origin_hint: Option<String>,
    /// Caches tried before falling to the next method.
    pub cache_attempts: usize,
    pub chunk_parallelism: usize,
    pub connect_timeout: Duration,
    pub local_cache: Option<LocalCacheConfig>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            redirectors: Vec::new(),
            caches: Vec::new(),
            location: GeoCoordinate::new(0.0, 0.0).expect("origin of coordinates"),
            methods: vec![Method::CacheFederation, Method::DirectOrigin, Method::ProxyHttp],
            proxy: None,
            origin_hint: None,
            cache_attempts: 2,
            chunk_parallelism: 4,
            connect_timeout: Duration::from_secs(2),
            local_cache: None,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Attempt {
    pub method: Method,
    pub endpoint: String,
    pub outcome: String,
    pub ok: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TransferReport {
    pub path: String,
    pub bytes: u64,
    pub duration_seconds: f64,
    /// Ranking and lookup cost, separate from the transfer itself — the
    /// startup overhead a plain proxy client does not pay.
    pub lookup_seconds: f64,
    pub transfer_seconds: f64,
    pub method_used: Option<Method>,
    pub cache_status: Option<String>,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    NotFound,
    Integrity { chunk: Option<u32> },
    AllMethodsFailed,
}

#[derive(Debug)]
pub struct DownloadFailure {
    pub kind: FailureKind,
    pub report: TransferReport,
}

impl std::fmt::Display for DownloadFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            FailureKind::NotFound => write!(f, "not found"),
            FailureKind::Integrity { chunk: Some(c) } => write!(f, "integrity error on chunk {c}"),
            FailureKind::Integrity { chunk: None } => write!(f, "integrity error"),
            FailureKind::AllMethodsFailed => write!(f, "all methods failed"),
        }
    }
}

impl std::error::Error for DownloadFailure {}

#[derive(Debug, Clone, thiserror::Error)]
pub enum VerifyError {
    #[error("size mismatch: expected {expected}, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("chunk {chunk} digest mismatch")]
    ChunkMismatch { chunk: u32 },
    #[error("io error: {0}")]
    Io(String),
}

/// Checks a downloaded file against its catalog entry: size first, then
/// every chunk digest in order, reporting the first mismatch.
pub fn verify_download(local: &Path, entry: &FileCatalogEntry) -> Result<(), VerifyError> {
    let map_io = |e: std::io::Error| VerifyError::Io(e.to_string());
    let md = std::fs::metadata(local).map_err(map_io)?;
    if md.len() != entry.size {
        return Err(VerifyError::SizeMismatch { expected: entry.size, actual: md.len() });
    }
    let mut file = std::fs::File::open(local).map_err(map_io)?;
    use std::io::Read;
    for spec in chunk_layout(entry.size) {
        let mut buf = vec![0u8; spec.length as usize];
        file.read_exact(&mut buf).map_err(map_io)?;
        let digest = chunk_checksum(&buf).expect("chunk length bounded");
        if digest != entry.chunk_digests[spec.index as usize] {
            return Err(VerifyError::ChunkMismatch { chunk: spec.index });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no caches available")]
pub struct NoCaches;

/// Caches ordered ascending by distance from the client, ties broken by
/// cache id.
pub fn select_nearest_cache(
    location: GeoCoordinate,
    directory: &[CacheDescriptor],
) -> Result<Vec<CacheDescriptor>, NoCaches> {
    if directory.is_empty() {
        return Err(NoCaches);
    }
    Ok(rank_caches(location, directory))
}

#[derive(Debug, Clone)]
enum AttemptError {
    NotFound,
    Integrity { chunk: Option<u32> },
    Failed(String),
}

impl AttemptError {
    fn outcome(&self) -> String {
        match self {
            AttemptError::NotFound => "not-found".to_string(),
            AttemptError::Integrity { chunk: Some(c) } => format!("integrity-error (chunk {c})"),
            AttemptError::Integrity { chunk: None } => "integrity-error".to_string(),
            AttemptError::Failed(msg) => msg.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Located {
    Found(String),
    /// A live redirector answered: no origin holds this path.
    NotFound,
    Unreachable,
}

struct Lookup {
    origin: Located,
    entry: Option<FileCatalogEntry>,
    ranked_caches: Vec<String>,
}

pub fn download(
    cfg: &ClientConfig,
    path: &FederationPath,
    dest: &Path,
) -> Result<TransferReport, DownloadFailure> {
    let started = Instant::now();
    let wire = Wire::new(cfg.connect_timeout, None);

    let lookup = run_lookup(cfg, &wire, path);
    let lookup_seconds = started.elapsed().as_secs_f64();

    let mut report = TransferReport {
        path: path.as_str().to_string(),
        bytes: 0,
        duration_seconds: 0.0,
        lookup_seconds,
        transfer_seconds: 0.0,
        method_used: None,
        cache_status: None,
        attempts: Vec::new(),
    };

    let transfer_started = Instant::now();
    let mut success = false;
    for method in &cfg.methods {
        match method {
            Method::CacheFederation => {
                if try_cache_method(cfg, &wire, path, dest, &lookup, &mut report) {
                    success = true;
                }
            }
            Method::DirectOrigin => {
                if try_origin_method(cfg, &wire, path, dest, &lookup, &mut report) {
                    success = true;
                }
            }
            Method::ProxyHttp => {
                if try_proxy_method(cfg, path, dest, &lookup, &mut report) {
                    success = true;
                }
            }
        }
        if success {
            report.method_used = Some(*method);
            break;
        }
    }
    report.transfer_seconds = transfer_started.elapsed().as_secs_f64();
    report.duration_seconds = started.elapsed().as_secs_f64();

    if success {
        return Ok(report);
    }
    let attempts = &report.attempts;
    let kind = if let Some(chunk) = attempts.iter().find_map(|a| integrity_chunk(&a.outcome)) {
        FailureKind::Integrity { chunk }
    } else if !attempts.is_empty() && attempts.iter().all(|a| a.outcome == "not-found") {
        FailureKind::NotFound
    } else {
        FailureKind::AllMethodsFailed
    };
    Err(DownloadFailure { kind, report })
}

fn integrity_chunk(outcome: &str) -> Option<Option<u32>> {
    if !outcome.starts_with("integrity-error") {
        return None;
    }
    let chunk = outcome
        .split_once("chunk ")
        .and_then(|(_, rest)| rest.trim_end_matches(')').parse().ok());
    Some(chunk)
}

fn run_lookup(cfg: &ClientConfig, wire: &Wire, path: &FederationPath) -> Lookup {
    let origin = locate_origin(cfg, wire, path);
    let entry = match &origin {
        Located::Found(origin) => fetch_catalog_entry(wire, origin, path),
        _ => None,
    };

    let ranked_caches = if !cfg.caches.is_empty() {
        cfg.caches.clone()
    } else {
        fetch_cache_directory(cfg, wire)
            .and_then(|dir| select_nearest_cache(cfg.location, &dir).ok())
            .map(|ranked| ranked.into_iter().map(|c| c.endpoint).collect())
            .unwrap_or_default()
    };
    Lookup { origin, entry, ranked_caches }
}

fn locate_origin(cfg: &ClientConfig, wire: &Wire, path: &FederationPath) -> Located {
    for redirector in &cfg.redirectors {
        let url = format!(
            "http://{redirector}/locate?path={}",
            encode_query_value(path.as_str())
        );
        if let Ok(resp) = wire.get(&url, &[]) {
            if resp.status == 200 {
                #[derive(serde::Deserialize)]
                struct Answer {
                    origin: String,
                }
                if let Ok(answer) = resp.json::<Answer>() {
                    return Located::Found(answer.origin);
                }
            }
            if resp.status == 404 {
                return Located::NotFound;
            }
        }
    }
    Located::Unreachable
}

fn fetch_catalog_entry(wire: &Wire, origin: &str, path: &FederationPath) -> Option<FileCatalogEntry> {
    let resp = wire.get(&format!("http://{origin}/catalog"), &[]).ok()?;
    if !resp.ok() {
        return None;
    }
    let text = String::from_utf8(resp.body).ok()?;
    parse_catalog(&text).ok()?.into_iter().find(|e| &e.path == path)
}

fn fetch_cache_directory(cfg: &ClientConfig, wire: &Wire) -> Option<Vec<CacheDescriptor>> {
    for redirector in &cfg.redirectors {
        if let Ok(resp) = wire.get(&format!("http://{redirector}/caches"), &[]) {
            if resp.ok() {
                if let Ok(list) = resp.json::<Vec<CacheDescriptor>>() {
                    return Some(list);
                }
            }
        }
    }
    None
}

fn record(report: &mut TransferReport, method: Method, endpoint: &str, result: &Result<(u64, Option<String>), AttemptError>) {
    match result {
        Ok((bytes, status)) => {
            report.bytes = *bytes;
            report.cache_status = status.clone();
            report.attempts.push(Attempt {
                method,
                endpoint: endpoint.to_string(),
                outcome: "ok".to_string(),
                ok: true,
            });
        }
        Err(e) => report.attempts.push(Attempt {
            method,
            endpoint: endpoint.to_string(),
            outcome: e.outcome(),
            ok: false,
        }),
    }
}

fn try_cache_method(
    cfg: &ClientConfig,
    wire: &Wire,
    path: &FederationPath,
    dest: &Path,
    lookup: &Lookup,
    report: &mut TransferReport,
) -> bool {
    if lookup.ranked_caches.is_empty() {
        report.attempts.push(Attempt {
            method: Method::CacheFederation,
            endpoint: "-".to_string(),
            outcome: "cache directory unavailable".to_string(),
            ok: false,
        });
        return false;
    }
    for cache in lookup.ranked_caches.iter().take(cfg.cache_attempts.max(1)) {
        let result = chunked_download(cfg, wire, cache, path, dest, lookup.entry.as_ref());
        record(report, Method::CacheFederation, cache, &result);
        if result.is_ok() {
            return true;
        }
    }
    false
}

fn try_origin_method(
    cfg: &ClientConfig,
    wire: &Wire,
    path: &FederationPath,
    dest: &Path,
    lookup: &Lookup,
    report: &mut TransferReport,
) -> bool {
    // The earlier locate may have run while the redirector was down.
    let located = match lookup.origin.clone() {
        Located::Found(o) => Located::Found(o),
        _ => locate_origin(cfg, wire, path),
    };
    let origin = match located {
        Located::Found(o) => o,
        not_found_or_down => {
            let endpoint = cfg.redirectors.join(",");
            report.attempts.push(Attempt {
                method: Method::DirectOrigin,
                endpoint: if endpoint.is_empty() { "-".to_string() } else { endpoint },
                outcome: if not_found_or_down == Located::NotFound {
                    "not-found".to_string()
                } else {
                    "locate failed".to_string()
                },
                ok: false,
            });
            return false;
        }
    };
    let url = format!("http://{origin}/data{}", encode_url_path(path));
    let result = whole_download(wire, &url, dest, lookup.entry.as_ref()).map(|b| (b, None));
    record(report, Method::DirectOrigin, &origin, &result);
    result.is_ok()
}

fn try_proxy_method(
    cfg: &ClientConfig,
    path: &FederationPath,
    dest: &Path,
    lookup: &Lookup,
    report: &mut TransferReport,
) -> bool {
    let Some(proxy) = &cfg.proxy else { return false };
    let located_upstream = match &lookup.origin {
        Located::Found(o) => Some(o.clone()),
        _ => None,
    };
    let upstream = match cfg.origin_hint.clone().or(located_upstream) {
        Some(u) => u,
        None => {
            report.attempts.push(Attempt {
                method: Method::ProxyHttp,
                endpoint: proxy.clone(),
                outcome: "skipped: no origin hint".to_string(),
                ok: false,
            });
            return false;
        }
    };
    let proxy_client = ProxyClient::new(proxy, cfg.connect_timeout);
    let url = format!("http://{upstream}/data{}", encode_url_path(path));
    let result = proxy_client
        .get(&url)
        .map_err(|e| AttemptError::Failed(format!("transfer failed: {e}")))
        .and_then(|resp| store_and_verify(resp, dest, lookup.entry.as_ref()))
        .map(|b| (b, None));
    record(report, Method::ProxyHttp, proxy, &result);
    result.is_ok()
}

fn classify_response(resp: &WireResponse) -> Result<(), AttemptError> {
    if resp.ok() {
        return Ok(());
    }
    if resp.status == 404 {
        return Err(AttemptError::NotFound);
    }
    if resp.header("X-Error") == Some("integrity-error") {
        let chunk = resp.header("X-Error-Chunk").and_then(|v| v.parse().ok());
        return Err(AttemptError::Integrity { chunk });
    }
    let tag = resp.header("X-Error").unwrap_or("error");
    Err(AttemptError::Failed(format!("{tag} (status {})", resp.status)))
}

/// Single-request whole-file fetch used by the origin and proxy methods.
fn whole_download(
    wire: &Wire,
    url: &str,
    dest: &Path,
    entry: Option<&FileCatalogEntry>,
) -> Result<u64, AttemptError> {
    let resp = wire
        .get(url, &[("X-Stashfed-Agent", "client")])
        .map_err(|e| AttemptError::Failed(format!("transfer failed: {e}")))?;
    store_and_verify(resp, dest, entry)
}

fn store_and_verify(
    resp: WireResponse,
    dest: &Path,
    entry: Option<&FileCatalogEntry>,
) -> Result<u64, AttemptError> {
    classify_response(&resp)?;
    let mut file = std::fs::File::create(dest)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))?;
    file.write_all(&resp.body)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))?;
    drop(file);
    if let Some(entry) = entry {
        verify_download(dest, entry).map_err(|e| match e {
            VerifyError::ChunkMismatch { chunk } => AttemptError::Integrity { chunk: Some(chunk) },
            VerifyError::SizeMismatch { .. } => AttemptError::Integrity { chunk: None },
            VerifyError::Io(msg) => AttemptError::Failed(msg),
        })?;
    }
    Ok(resp.body.len() as u64)
}

/// Chunk-wise ranged download from one cache, up to
/// `chunk_parallelism` chunks in flight, each verified as it lands.
fn chunked_download(
    cfg: &ClientConfig,
    wire: &Wire,
    cache: &str,
    path: &FederationPath,
    dest: &Path,
    entry: Option<&FileCatalogEntry>,
) -> Result<(u64, Option<String>), AttemptError> {
    let head_url = format!("http://{cache}/data{}", encode_url_path(path));
    let head = wire
        .head(&head_url)
        .map_err(|e| AttemptError::Failed(format!("connect: {e}")))?;
    classify_response(&head)?;
    let size: u64 = head
        .header("X-Total-Size")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| AttemptError::Failed("cache omitted X-Total-Size".to_string()))?;

    let file = std::fs::File::create(dest)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))?;
    file.set_len(size)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))?;
    drop(file);

    let chunks = chunk_layout(size);
    if chunks.is_empty() {
        let status = head.header("X-Cache").map(|s| s.to_string());
        if let Some(entry) = entry {
            verify_entry(dest, entry)?;
        }
        return Ok((0, status));
    }

    let queue: Mutex<Vec<ChunkSpec>> = Mutex::new(chunks.iter().rev().copied().collect());
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<AttemptError>> = Mutex::new(None);
    let statuses: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let local = LocalChunkStore::open(cfg, path);

    let workers = cfg.chunk_parallelism.clamp(1, chunks.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                loop {
                    if failed.load(Ordering::SeqCst) {
                        return;
                    }
                    let Some(spec) = queue.lock().expect("queue lock").pop() else {
                        return;
                    };
                    match fetch_chunk(wire, cache, path, dest, spec, entry, local.as_ref()) {
                        Ok(status) => {
                            if let Some(s) = status {
                                statuses.lock().expect("statuses lock").push(s);
                            }
                        }
                        Err(e) => {
                            let mut slot = first_error.lock().expect("error lock");
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            failed.store(true, Ordering::SeqCst);
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(err) = first_error.into_inner().expect("error lock") {
        return Err(err);
    }
    if let Some(entry) = entry {
        verify_entry(dest, entry)?;
    }
    let statuses = statuses.into_inner().expect("statuses lock");
    let status = aggregate_status(&statuses);
    Ok((size, status))
}

fn verify_entry(dest: &Path, entry: &FileCatalogEntry) -> Result<(), AttemptError> {
    verify_download(dest, entry).map_err(|e| match e {
        VerifyError::ChunkMismatch { chunk } => AttemptError::Integrity { chunk: Some(chunk) },
        VerifyError::SizeMismatch { .. } => AttemptError::Integrity { chunk: None },
        VerifyError::Io(msg) => AttemptError::Failed(msg),
    })
}

fn aggregate_status(statuses: &[String]) -> Option<String> {
    if statuses.is_empty() {
        return None;
    }
    let hits = statuses.iter().filter(|s| s.as_str() == "HIT").count();
    Some(if hits == statuses.len() {
        "HIT".to_string()
    } else if hits == 0 && statuses.iter().all(|s| s.as_str() == "MISS") {
        "MISS".to_string()
    } else {
        "PARTIAL".to_string()
    })
}

fn fetch_chunk(
    wire: &Wire,
    cache: &str,
    path: &FederationPath,
    dest: &Path,
    spec: ChunkSpec,
    entry: Option<&FileCatalogEntry>,
    local: Option<&LocalChunkStore>,
) -> Result<Option<String>, AttemptError> {
    let expected = entry.map(|e| e.chunk_digests[spec.index as usize]);

    if let (Some(local), Some(expected)) = (local, expected) {
        if let Some(bytes) = local.load(spec.index, &expected, spec.length) {
            write_at(dest, spec.offset, &bytes)?;
            return Ok(None);
        }
    }

    let url = format!("http://{cache}/data{}", encode_url_path(path));
    let (start, end) = spec.byte_range();
    let resp = wire
        .get(&url, &[
            ("Range", &range_header_for_chunk(start, end)),
            ("X-Stashfed-Agent", "client"),
        ])
        .map_err(|e| AttemptError::Failed(format!("transfer failed: {e}")))?;
    classify_response(&resp)?;
    if resp.body.len() as u64 != spec.length {
        return Err(AttemptError::Failed(format!(
            "short chunk {}: got {} of {} bytes",
            spec.index,
            resp.body.len(),
            spec.length
        )));
    }
    if let Some(expected) = expected {
        let actual = chunk_checksum(&resp.body).expect("chunk length bounded");
        if actual != expected {
            return Err(AttemptError::Integrity { chunk: Some(spec.index) });
        }
    }
    write_at(dest, spec.offset, &resp.body)?;
    if let Some(local) = local {
        local.store(spec.index, expected, &resp.body);
    }
    Ok(resp.header("X-Cache").map(|s| s.to_string()))
}

#[cfg(unix)]
fn write_at(dest: &Path, offset: u64, data: &[u8]) -> Result<(), AttemptError> {
    use std::os::unix::fs::FileExt;
    let file = std::fs::File::options()
        .write(true)
        .open(dest)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))?;
    file.write_all_at(data, offset)
        .map_err(|e| AttemptError::Failed(format!("destination: {e}")))
}

/// Optional local chunk cache (the "1 GB on the local hard drive"
/// setting): chunk files keyed by path and digest, pruned oldest-first
/// when over capacity.
struct LocalChunkStore {
    dir: PathBuf,
    capacity: u64,
    key: String,
}

impl LocalChunkStore {
    fn open(cfg: &ClientConfig, path: &FederationPath) -> Option<Self> {
        let lc = cfg.local_cache.as_ref()?;
        std::fs::create_dir_all(&lc.dir).ok()?;
        let key = percent_encoding::utf8_percent_encode(
            path.as_str(),
            percent_encoding::NON_ALPHANUMERIC,
        )
        .to_string();
        Some(LocalChunkStore { dir: lc.dir.clone(), capacity: lc.capacity, key })
    }

    fn chunk_path(&self, index: u32, digest: &stashfed_core::chunk::ChunkDigest) -> PathBuf {
        let tag = &digest.to_hex()[..16];
        self.dir.join(format!("{}.c{index:06}.{tag}", self.key))
    }

    fn load(
        &self,
        index: u32,
        expected: &stashfed_core::chunk::ChunkDigest,
        length: u64,
    ) -> Option<Vec<u8>> {
        let path = self.chunk_path(index, expected);
        let bytes = std::fs::read(&path).ok()?;
        if bytes.len() as u64 != length || chunk_checksum(&bytes).ok()? != *expected {
            let _ = std::fs::remove_file(&path);
            return None;
        }
        Some(bytes)
    }

    fn store(
        &self,
        index: u32,
        digest: Option<stashfed_core::chunk::ChunkDigest>,
        bytes: &[u8],
    ) {
        let Some(digest) = digest else { return };
        let _ = std::fs::write(self.chunk_path(index, &digest), bytes);
        self.prune();
    }

    fn prune(&self) {
        let Ok(entries) = std::fs::read_dir(&self.dir) else { return };
        let mut files: Vec<(std::time::SystemTime, PathBuf, u64)> = entries
            .flatten()
            .filter_map(|e| {
                let md = e.metadata().ok()?;
                md.is_file().then(|| {
                    (md.modified().unwrap_or(std::time::UNIX_EPOCH), e.path(), md.len())
                })
            })
            .collect();
        let mut usage: u64 = files.iter().map(|(_, _, len)| len).sum();
        if usage <= self.capacity {
            return;
        }
        files.sort_by_key(|(mtime, _, _)| *mtime);
        for (_, path, len) in files {
            if usage <= self.capacity {
                break;
            }
            if std::fs::remove_file(&path).is_ok() {
                usage -= len;
            }
        }
    }
}
