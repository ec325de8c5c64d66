use std::time::Duration;

use clap::Parser;
use stashfed::cli::parse_bytes;
use stashfed::proxy::{self, ProxyConfig};

/// Caching forward proxy: objects at or below --max-object are cached for
/// --ttl seconds; larger objects stream through uncached.
#[derive(Parser)]
#[command(name = "stashfed-proxy", version)]
struct Args {
    /// Listen address, host:port
    #[arg(long, default_value = "127.0.0.1:7300")]
    listen: String,
    /// Cache capacity in bytes
    #[arg(long, value_parser = parse_bytes)]
    capacity: u64,
    /// Largest cacheable object in bytes
    #[arg(long = "max-object", value_parser = parse_bytes)]
    max_object: u64,
    /// Object TTL in seconds
    #[arg(long, default_value_t = 300)]
    ttl: u64,
    #[arg(long, default_value_t = 8)]
    workers: usize,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let mut cfg = ProxyConfig::new(args.capacity, args.max_object, Duration::from_secs(args.ttl));
    cfg.listen = args.listen;
    cfg.workers = args.workers;
    let handle = proxy::spawn(cfg)?;
    println!("proxy listening on {}", handle.endpoint());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
