use std::time::Duration;

use clap::Parser;
use stashfed::origin::{self, OriginConfig};
use stashfed_core::path::FederationPath;

/// Data origin: serves a namespace subtree and keeps its catalog indexed.
#[derive(Parser)]
#[command(name = "stashfed-origin", version)]
struct Args {
    /// Namespace prefix this origin is authoritative for, e.g. /exp1
    #[arg(long)]
    prefix: String,
    /// Directory exported under the prefix
    #[arg(long)]
    root: std::path::PathBuf,
    /// Listen address, host:port
    #[arg(long, default_value = "127.0.0.1:7100")]
    listen: String,
    /// Redirector to register with (repeatable)
    #[arg(long = "redirector")]
    redirectors: Vec<String>,
    /// Seconds between index passes
    #[arg(long, default_value_t = 30)]
    reindex_interval: u64,
    /// Endpoint to advertise if it differs from --listen
    #[arg(long)]
    advertise: Option<String>,
    /// Seconds between registration heartbeats
    #[arg(long, default_value_t = 60)]
    heartbeat_interval: u64,
    /// Monitoring collector UDP address
    #[arg(long)]
    monitor: Option<String>,
    #[arg(long, default_value_t = 8)]
    workers: usize,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let prefix = FederationPath::parse(&args.prefix)
        .map_err(|e| anyhow::anyhow!("--prefix: {e}"))?;
    let mut cfg = OriginConfig::new(prefix, args.root);
    cfg.listen = args.listen;
    cfg.redirectors = args.redirectors;
    cfg.reindex_interval = Duration::from_secs(args.reindex_interval);
    cfg.heartbeat_interval = Duration::from_secs(args.heartbeat_interval);
    cfg.advertise = args.advertise;
    cfg.monitor = args.monitor;
    cfg.workers = args.workers;

    let handle = origin::spawn(cfg)?;
    println!(
        "origin serving {} files on {}",
        handle.index_snapshot().catalog.len(),
        handle.listen_endpoint()
    );
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
