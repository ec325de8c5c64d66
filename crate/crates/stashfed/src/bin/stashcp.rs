use std::time::Duration;

use clap::Parser;
use stashfed::cli::{parse_bytes, parse_endpoints, parse_methods};
use stashfed::client::{self, ClientConfig, FailureKind, LocalCacheConfig, Method};
use stashfed_core::geo::GeoCoordinate;
use stashfed_core::path::FederationPath;

/// Copies one federation path to a local destination, trying the caches
/// nearest to the client first and falling back to a direct origin read,
/// then a fetch through a forward proxy.
///
/// Exit codes: 0 success, 2 not found, 3 integrity error, 4 all methods
/// failed.
#[derive(Parser)]
#[command(name = "stashcp", version)]
struct Args {
    /// Federation path, e.g. /exp1/dataset/file.bin
    path: String,
    /// Local destination file
    dest: std::path::PathBuf,
    /// Redirector endpoints, comma separated
    #[arg(long, env = "STASHCP_REDIRECTORS", default_value = "")]
    redirectors: String,
    /// Explicit cache endpoints (skips ranking), comma separated
    #[arg(long, env = "STASHCP_CACHES", default_value = "")]
    caches: String,
    /// Client latitude
    #[arg(long, env = "STASHCP_LAT", default_value_t = 0.0)]
    lat: f64,
    /// Client longitude
    #[arg(long, env = "STASHCP_LON", default_value_t = 0.0)]
    lon: f64,
    /// Method chain, e.g. cache,origin,proxy
    #[arg(long, env = "STASHCP_METHODS", default_value = "cache,origin,proxy")]
    methods: String,
    /// Forward proxy URL for the proxy method
    #[arg(long, env = "STASHCP_PROXY")]
    proxy: Option<String>,
    /// Origin endpoint hint, used as the proxy method's upstream
    #[arg(long, env = "STASHCP_ORIGIN")]
    origin: Option<String>,
    /// Write the transfer report as JSON to this file
    #[arg(long, env = "STASHCP_JSON_REPORT")]
    json_report: Option<std::path::PathBuf>,
    /// Caches tried before falling back to the next method
    #[arg(long, env = "STASHCP_CACHE_ATTEMPTS", default_value_t = 2)]
    cache_attempts: usize,
    /// Concurrent chunk fetches within the cache method
    #[arg(long, env = "STASHCP_CHUNK_PARALLELISM", default_value_t = 4)]
    chunk_parallelism: usize,
    /// Connect timeout in seconds
    #[arg(long, env = "STASHCP_CONNECT_TIMEOUT", default_value_t = 2)]
    connect_timeout: u64,
    /// Local chunk-cache directory (off by default)
    #[arg(long, env = "STASHCP_LOCAL_CACHE")]
    local_cache: Option<std::path::PathBuf>,
    /// Local chunk-cache capacity
    #[arg(long, env = "STASHCP_LOCAL_CACHE_CAP", default_value = "1GiB", value_parser = parse_bytes)]
    local_cache_cap: u64,
}

fn main() {
    env_logger::init();
    let args = Args::parse();
    std::process::exit(run(args));
}

fn run(args: Args) -> i32 {
    let path = match FederationPath::parse(&args.path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("stashcp: bad path: {e}");
            return 2;
        }
    };
    let location = match GeoCoordinate::new(args.lat, args.lon) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("stashcp: {e}");
            return 4;
        }
    };
    let methods: Vec<Method> = match parse_methods(&args.methods) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("stashcp: --methods: {e}");
            return 4;
        }
    };

    let cfg = ClientConfig {
        redirectors: parse_endpoints(&args.redirectors),
        caches: parse_endpoints(&args.caches),
        location,
        methods,
        proxy: args.proxy,
        origin_hint: args.origin,
        cache_attempts: args.cache_attempts,
        chunk_parallelism: args.chunk_parallelism,
        connect_timeout: Duration::from_secs(args.connect_timeout),
        local_cache: args
            .local_cache
            .map(|dir| LocalCacheConfig { dir, capacity: args.local_cache_cap }),
    };

    let outcome = client::download(&cfg, &path, &args.dest);
    let (report, code) = match &outcome {
        Ok(report) => (report, 0),
        Err(failure) => {
            eprintln!("stashcp: {failure}");
            for attempt in &failure.report.attempts {
                eprintln!(
                    "  attempt {} via {}: {}",
                    attempt.method.as_str(),
                    attempt.endpoint,
                    attempt.outcome
                );
            }
            let code = match failure.kind {
                FailureKind::NotFound => 2,
                FailureKind::Integrity { .. } => 3,
                FailureKind::AllMethodsFailed => 4,
            };
            (&failure.report, code)
        }
    };
    if let Some(path) = &args.json_report {
        match serde_json::to_string_pretty(report) {
            Ok(json) => {
                if let Err(e) = std::fs::write(path, json) {
                    eprintln!("stashcp: cannot write report: {e}");
                }
            }
            Err(e) => eprintln!("stashcp: cannot serialize report: {e}"),
        }
    }
    if code == 0 {
        println!(
            "{} -> {} ({} bytes in {:.3}s via {}{})",
            report.path,
            args.dest.display(),
            report.bytes,
            report.duration_seconds,
            report.method_used.map(|m| m.as_str()).unwrap_or("?"),
            report
                .cache_status
                .as_deref()
                .map(|s| format!(", cache {s}"))
                .unwrap_or_default()
        );
    }
    code
}
