use std::time::Duration;

use clap::Parser;
use stashfed::cache_server::{self, CacheConfig};
use stashfed::cli::{parse_bytes, parse_endpoints};
use stashfed_core::geo::GeoCoordinate;

/// Regional cache: serves clients from local storage, fills misses from
/// origins, evicts with high/low watermarks.
#[derive(Parser)]
#[command(name = "stashfed-cache", version)]
struct Args {
    /// Cache id, unique within the federation
    #[arg(long)]
    id: String,
    /// Listen address, host:port
    #[arg(long, default_value = "127.0.0.1:7200")]
    listen: String,
    /// Redirector endpoints, comma separated
    #[arg(long)]
    redirectors: String,
    /// Storage directory
    #[arg(long)]
    dir: std::path::PathBuf,
    /// Storage capacity in bytes (supports K/M/G and Ki/Mi/Gi suffixes)
    #[arg(long, value_parser = parse_bytes)]
    capacity: u64,
    /// High watermark fraction
    #[arg(long, default_value_t = 0.9)]
    high: f64,
    /// Low watermark fraction
    #[arg(long, default_value_t = 0.7)]
    low: f64,
    /// Cache latitude
    #[arg(long, default_value_t = 0.0)]
    lat: f64,
    /// Cache longitude
    #[arg(long, default_value_t = 0.0)]
    lon: f64,
    /// Endpoint to advertise if it differs from --listen
    #[arg(long)]
    advertise: Option<String>,
    /// Seconds between registration heartbeats
    #[arg(long, default_value_t = 60)]
    heartbeat_interval: u64,
    /// Monitoring collector UDP address
    #[arg(long)]
    monitor: Option<String>,
    #[arg(long, default_value_t = 16)]
    workers: usize,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let mut cfg = CacheConfig::new(args.id, args.dir, args.capacity);
    cfg.listen = args.listen;
    cfg.redirectors = parse_endpoints(&args.redirectors);
    cfg.high_watermark = args.high;
    cfg.low_watermark = args.low;
    cfg.location = GeoCoordinate::new(args.lat, args.lon).map_err(|e| anyhow::anyhow!("{e}"))?;
    cfg.advertise = args.advertise;
    cfg.heartbeat_interval = Duration::from_secs(args.heartbeat_interval);
    cfg.monitor = args.monitor;
    cfg.workers = args.workers;

    let handle = cache_server::spawn(cfg)?;
    println!("cache listening on {}", handle.listen_endpoint());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
