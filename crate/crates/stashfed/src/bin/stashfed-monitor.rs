use std::time::Duration;

use clap::Parser;
use stashfed::monitor_svc::{self, MonitorConfig, SinkConfig};
use stashfed_core::monitor::CollectorConfig;

/// Monitoring collector: joins login/open/close UDP packets into
/// per-transfer JSON records and forwards them to a sink.
#[derive(Parser)]
#[command(name = "stashfed-monitor", version)]
struct Args {
    /// UDP listen address for telemetry packets
    #[arg(long, default_value = "127.0.0.1:9930")]
    listen: String,
    /// Record sink: file:PATH or tcp:HOST:PORT
    #[arg(long, value_parser = SinkConfig::parse)]
    sink: SinkConfig,
    /// Admin HTTP address (GET /stats)
    #[arg(long, default_value = "127.0.0.1:9931")]
    admin: String,
    /// Grace period for reordered packets, milliseconds
    #[arg(long, default_value_t = 5_000)]
    grace_ms: u64,
    /// Login session TTL, seconds
    #[arg(long, default_value_t = 3_600)]
    login_ttl: u64,
    /// Unclosed-open TTL, seconds
    #[arg(long, default_value_t = 86_400)]
    open_ttl: u64,
    /// Sink queue bound; further records are dropped and counted
    #[arg(long, default_value_t = 10_000)]
    queue: usize,
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args = Args::parse();
    let mut cfg = MonitorConfig::new(args.sink);
    cfg.udp_listen = args.listen;
    cfg.admin_listen = args.admin;
    cfg.collector = CollectorConfig {
        grace_ms: args.grace_ms,
        login_ttl_ms: args.login_ttl * 1_000,
        open_ttl_ms: args.open_ttl * 1_000,
    };
    cfg.queue_capacity = args.queue;
    let handle = monitor_svc::spawn(cfg)?;
    println!(
        "collector on udp {} (admin {})",
        handle.udp_endpoint(),
        handle.admin_endpoint()
    );
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
