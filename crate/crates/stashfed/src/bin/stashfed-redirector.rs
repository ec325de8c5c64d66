use std::time::Duration;

use clap::Parser;
use stashfed::redirector::{self, RedirectorConfig};

/// Data-discovery redirector: origin registry, cache directory, locate.
#[derive(Parser)]
#[command(name = "stashfed-redirector", version)]
struct Args {
    /// Listen address, host:port
    #[arg(long, default_value = "127.0.0.1:7000")]
    listen: String,
    /// Expected heartbeat interval in seconds; stale after 3 missed beats
    #[arg(long, default_value_t = 60)]
    heartbeat_ttl: u64,
    /// Per-origin confirmation timeout in seconds
    #[arg(long, default_value_t = 2)]
    confirm_timeout: u64,
    #[arg(long, default_value_t = 8)]
    workers: usize,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let cfg = RedirectorConfig {
        listen: args.listen,
        heartbeat_ttl: Duration::from_secs(args.heartbeat_ttl),
        confirm_timeout: Duration::from_secs(args.confirm_timeout),
        workers: args.workers,
        ..RedirectorConfig::default()
    };
    let handle = redirector::spawn(cfg)?;
    println!("redirector listening on {}", handle.endpoint());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
