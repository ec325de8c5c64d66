use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};
use stashfed::bench::{
    generate_dataset, render_report, run_matrix, BenchResult, DatasetSpec, Manifest,
    PhaseOrdering, RunConfig,
};
use stashfed::cli::parse_endpoints;
use stashfed_core::path::FederationPath;

/// Benchmark harness: generate the percentile dataset, run the four-phase
/// proxy-vs-federation matrix, and render reports.
#[derive(Parser)]
#[command(name = "stashfed-bench", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset under an origin root and write a manifest.
    Gen {
        /// Origin root directory to write files into
        #[arg(long)]
        root: PathBuf,
        /// Size divisor (1 = the full-size dataset)
        #[arg(long, default_value_t = 1_000)]
        scale: u64,
        /// Content seed; a fresh seed yields fresh, guaranteed-cold files
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Manifest output path
        #[arg(long, default_value = "manifest.json")]
        manifest: PathBuf,
    },
    /// Run the download matrix against a live federation and proxy.
    Run {
        /// Manifest written by `gen`
        #[arg(long)]
        manifest: PathBuf,
        /// Forward proxy endpoint, host:port
        #[arg(long)]
        proxy: Option<String>,
        /// Redirector endpoints, comma separated
        #[arg(long)]
        redirectors: String,
        /// Cache endpoints, comma separated
        #[arg(long)]
        caches: String,
        /// Repetitions of the four-phase cycle per file
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Output directory for results.jsonl
        #[arg(long)]
        out: PathBuf,
        /// Namespace prefix the origin exports the dataset under
        #[arg(long, default_value = "/")]
        prefix: String,
        /// Site label for the report rows
        #[arg(long, default_value = "local")]
        site: String,
        /// Replay the original per-pass ordering (demonstrates proxy
        /// expiration) instead of the corrected per-file ordering
        #[arg(long)]
        per_pass: bool,
        /// Pause between downloads, milliseconds
        #[arg(long, default_value_t = 0)]
        pace_ms: u64,
    },
    /// Render table3.csv, throughput CSVs, and plots from results.
    Report {
        /// Directory holding results.jsonl (from `run`)
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for the report files
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    match Args::parse().command {
        Command::Gen { root, scale, seed, manifest } => {
            let spec = DatasetSpec { scale, seed };
            let m = generate_dataset(&spec, &root)?;
            std::fs::write(&manifest, serde_json::to_string_pretty(&m)?)?;
            println!(
                "wrote {} files ({} bytes total) under {}; manifest at {}",
                m.entries.len(),
                m.entries.iter().map(|e| e.size).sum::<u64>(),
                root.display(),
                manifest.display()
            );
        }
        Command::Run {
            manifest,
            proxy,
            redirectors,
            caches,
            reps,
            out,
            prefix,
            site,
            per_pass,
            pace_ms,
        } => {
            let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest)?)?;
            let prefix =
                FederationPath::parse(&prefix).map_err(|e| anyhow::anyhow!("--prefix: {e}"))?;
            std::fs::create_dir_all(&out)?;
            let cfg = RunConfig {
                manifest,
                prefix,
                proxy,
                redirectors: parse_endpoints(&redirectors),
                caches: parse_endpoints(&caches),
                reps,
                site,
                ordering: if per_pass { PhaseOrdering::PerPass } else { PhaseOrdering::PerFile },
                pace: Duration::from_millis(pace_ms),
                dest_dir: out.join("downloads"),
            };
            let results = run_matrix(&cfg)?;
            let path = out.join("results.jsonl");
            let mut text = String::new();
            for r in &results {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            std::fs::write(&path, text)?;
            let failures = results.iter().filter(|r| !r.ok).count();
            println!("{} results ({} failures) -> {}", results.len(), failures, path.display());
        }
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(input.join("results.jsonl"))?;
            let results: Vec<BenchResult> = text
                .lines()
                .filter(|l| !l.is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()?;
            let paths = render_report(&results, &out)?;
            println!("report written:");
            println!("  {}", paths.results_jsonl.display());
            println!("  {}", paths.table3_csv.display());
            for p in paths.throughput_csvs.iter().chain(paths.plots.iter()) {
                println!("  {}", p.display());
            }
        }
    }
    Ok(())
}
