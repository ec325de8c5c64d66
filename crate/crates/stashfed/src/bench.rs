//! The benchmark harness: builds the percentile dataset, drives the
//! four-phase proxy-vs-federation download matrix, and renders
//! percent-difference tables plus per-site throughput charts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use stashfed_core::path::FederationPath;
use stashfed_core::report::percent_diff;

use crate::client::{self, ClientConfig, Method};
use crate::httpd::{encode_query_value, encode_url_path, ProxyClient, Wire};

/// File-size percentiles of the production workload, plus one extra-large
/// file probing future sizes. Values in bytes, unscaled.
pub const DATASET_ENTRIES: [(&str, u64); 7] = [
    ("P1", 5_797),
    ("P5", 22_801_000),
    ("P25", 170_131_000),
    ("P50", 467_852_000),
    ("P75", 493_337_000),
    ("P95", 2_335_000_000),
    ("XL", 10_000_000_000),
];

#[derive(Debug, Clone, Copy)]
pub struct DatasetSpec {
    /// Divisor applied to every size; 1 reproduces the full-size dataset.
    pub scale: u64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn scaled_size(&self, unscaled: u64) -> u64 {
        (unscaled / self.scale).max(1)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    /// Path of the file relative to the origin root.
    pub rel_path: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub scale: u64,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

/// Writes one file per dataset entry under `root/bench-<seed>/`, with
/// seeded pseudorandom content. Re-running with the same seed produces
/// byte-identical files; a fresh seed produces fresh names, which is what
/// makes the first benchmark pass verifiably cold.
pub fn generate_dataset(spec: &DatasetSpec, root: &Path) -> anyhow::Result<Manifest> {
    anyhow::ensure!(spec.scale >= 1, "scale must be at least 1");
    let dir_name = format!("bench-{}", spec.seed);
    let dir = root.join(&dir_name);
    std::fs::create_dir_all(&dir)?;

    let mut entries = Vec::new();
    for (label, unscaled) in DATASET_ENTRIES {
        let size = spec.scaled_size(unscaled);
        let file_path = dir.join(format!("{label}.bin"));
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ label_salt(label));
        let mut hasher = Sha256::new();
        let mut file = std::fs::File::create(&file_path)?;
        let mut remaining = size;
        let mut buf = vec![0u8; (1 << 20).min(size as usize).max(1)];
        while remaining > 0 {
            let n = buf.len().min(remaining as usize);
            rng.fill_bytes(&mut buf[..n]);
            hasher.update(&buf[..n]);
            file.write_all(&buf[..n])?;
            remaining -= n as u64;
        }
        entries.push(ManifestEntry {
            label: label.to_string(),
            rel_path: format!("{dir_name}/{label}.bin"),
            size,
            sha256: hex::encode(hasher.finalize()),
        });
    }
    Ok(Manifest { scale: spec.scale, seed: spec.seed, entries })
}

fn label_salt(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMethod {
    Proxy,
    Federation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cold,
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseOrdering {
    /// All four phases of one file before the next file (the corrected
    /// ordering).
    PerFile,
    /// All files per phase, then the next phase — the ordering that lets
    /// early proxy entries expire before their warm pass.
    PerPass,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BenchResult {
    pub site: String,
    pub file_label: String,
    pub method: BenchMethod,
    pub phase: Phase,
    pub rep: u32,
    pub duration_seconds: f64,
    pub bytes: u64,
    pub status: Option<String>,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: Manifest,
    /// Namespace prefix the origin exports the dataset under.
    pub prefix: FederationPath,
    pub proxy: Option<String>,
    pub redirectors: Vec<String>,
    pub caches: Vec<String>,
    pub reps: u32,
    pub site: String,
    pub ordering: PhaseOrdering,
    /// Sleep between downloads; stands in for the WAN gaps of the original
    /// runs and is what lets the per-pass ordering hit proxy TTLs.
    pub pace: Duration,
    pub dest_dir: PathBuf,
}

impl RunConfig {
    pub fn federation_path(&self, entry: &ManifestEntry) -> FederationPath {
        self.prefix.join(&entry.rel_path).expect("manifest paths stay in scope")
    }
}

struct Plan<'a> {
    entry: &'a ManifestEntry,
    method: BenchMethod,
    phase: Phase,
    rep: u32,
}

pub fn run_matrix(cfg: &RunConfig) -> anyhow::Result<Vec<BenchResult>> {
    anyhow::ensure!(cfg.reps >= 1, "reps must be at least 1");
    std::fs::create_dir_all(&cfg.dest_dir)?;
    let wire = Wire::new(Duration::from_secs(2), None);

    // Preflight: every file must resolve to an origin, and the proxy must
    // answer, before any timing starts.
    let mut origins: BTreeMap<&str, String> = BTreeMap::new();
    for entry in &cfg.manifest.entries {
        let path = cfg.federation_path(entry);
        let origin = locate(&wire, &cfg.redirectors, &path)
            .ok_or_else(|| anyhow::anyhow!("preflight: cannot locate {path}"))?;
        origins.insert(entry.label.as_str(), origin);
    }
    if let Some(proxy) = &cfg.proxy {
        let stats_url = format!("http://{proxy}/stats");
        anyhow::ensure!(
            wire.get(&stats_url, &[]).map(|r| r.ok()).unwrap_or(false),
            "preflight: proxy {proxy} unreachable"
        );
    }

    let mut plans: Vec<Plan> = Vec::new();
    let phases = [
        (BenchMethod::Proxy, Phase::Cold),
        (BenchMethod::Proxy, Phase::Warm),
        (BenchMethod::Federation, Phase::Cold),
        (BenchMethod::Federation, Phase::Warm),
    ];
    for rep in 0..cfg.reps {
        match cfg.ordering {
            PhaseOrdering::PerFile => {
                for entry in &cfg.manifest.entries {
                    for (method, phase) in phases {
                        plans.push(Plan { entry, method, phase, rep });
                    }
                }
            }
            PhaseOrdering::PerPass => {
                for (method, phase) in phases {
                    for entry in &cfg.manifest.entries {
                        plans.push(Plan { entry, method, phase, rep });
                    }
                }
            }
        }
    }

    let mut results = Vec::with_capacity(plans.len());
    let mut failed_files: std::collections::BTreeSet<(String, u32)> = Default::default();
    for plan in plans {
        let key = (plan.entry.label.clone(), plan.rep);
        if failed_files.contains(&key) {
            continue;
        }
        let result = run_one(cfg, &origins, &plan);
        if !result.ok {
            // A transfer failure aborts this file for this repetition, not
            // the whole run.
            failed_files.insert(key);
        }
        results.push(result);
        if !cfg.pace.is_zero() {
            std::thread::sleep(cfg.pace);
        }
    }
    Ok(results)
}

fn locate(wire: &Wire, redirectors: &[String], path: &FederationPath) -> Option<String> {
    for redirector in redirectors {
        let url = format!(
            "http://{redirector}/locate?path={}",
            encode_query_value(path.as_str())
        );
        if let Ok(resp) = wire.get(&url, &[]) {
            if resp.status == 200 {
                if let Ok(v) = resp.json::<serde_json::Value>() {
                    if let Some(origin) = v.get("origin").and_then(|o| o.as_str()) {
                        return Some(origin.to_string());
                    }
                }
            }
        }
    }
    None
}

fn run_one(
    cfg: &RunConfig,
    origins: &BTreeMap<&str, String>,
    plan: &Plan<'_>,
) -> BenchResult {
    let path = cfg.federation_path(plan.entry);
    let mut result = BenchResult {
        site: cfg.site.clone(),
        file_label: plan.entry.label.clone(),
        method: plan.method,
        phase: plan.phase,
        rep: plan.rep,
        duration_seconds: 0.0,
        bytes: 0,
        status: None,
        ok: false,
        error: None,
    };

    match plan.method {
        BenchMethod::Proxy => {
            let Some(proxy) = cfg.proxy.as_deref() else {
                result.error = Some("no proxy configured".to_string());
                return result;
            };
            let origin = &origins[plan.entry.label.as_str()];
            let url = format!("http://{origin}/data{}", encode_url_path(&path));
            let started = Instant::now();
            let fetched = ProxyClient::new(proxy, Duration::from_secs(2))
                .get(&url)
                .map_err(|e| e.to_string());
            result.duration_seconds = started.elapsed().as_secs_f64();
            match fetched {
                Ok(resp) if resp.status == 200 => {
                    result.status = resp.header("X-Proxy-Cache").map(|s| s.to_string());
                    result.bytes = resp.body.len() as u64;
                    if sha256_hex(&resp.body) == plan.entry.sha256 {
                        result.ok = true;
                    } else {
                        result.error = Some("proxy bytes differ from manifest".to_string());
                    }
                }
                Ok(resp) => result.error = Some(format!("proxy fetch status {}", resp.status)),
                Err(e) => result.error = Some(e),
            }
        }
        BenchMethod::Federation => {
            let dest = cfg.dest_dir.join(format!(
                "{}-{}-r{}-{:?}.bin",
                cfg.site, plan.entry.label, plan.rep, plan.phase
            ));
            let client_cfg = ClientConfig {
                redirectors: cfg.redirectors.clone(),
                caches: cfg.caches.clone(),
                methods: vec![Method::CacheFederation],
                ..ClientConfig::default()
            };
            // Timed around the whole invocation, lookup and ranking
            // included, so small-file startup overhead stays visible.
            let started = Instant::now();
            let outcome = client::download(&client_cfg, &path, &dest);
            result.duration_seconds = started.elapsed().as_secs_f64();
            match outcome {
                Ok(report) => {
                    result.status = report.cache_status.clone();
                    result.bytes = report.bytes;
                    let same = std::fs::read(&dest)
                        .map(|data| sha256_hex(&data) == plan.entry.sha256)
                        .unwrap_or(false);
                    if same {
                        result.ok = true;
                    } else {
                        result.error = Some("federation bytes differ from manifest".to_string());
                    }
                }
                Err(failure) => {
                    result.error = Some(failure.to_string());
                }
            }
            let _ = std::fs::remove_file(&dest);
        }
    }
    result
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Labels whose full-size originals exceed a gigabyte — the Table-3
/// columns.
pub const LARGE_FILE_LABELS: [&str; 2] = ["P95", "XL"];

/// Mean duration per (site, label, method) over every ok sample, and the
/// percent-difference cells derived from them. This is the single
/// definition both the renderer and its fidelity check use.
pub fn table3_cells(results: &[BenchResult]) -> BTreeMap<(String, String), f64> {
    let mut sums: BTreeMap<(String, String, BenchMethod), (f64, u32)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.ok) {
        let key = (r.site.clone(), r.file_label.clone(), r.method);
        let slot = sums.entry(key).or_insert((0.0, 0));
        slot.0 += r.duration_seconds;
        slot.1 += 1;
    }
    let mean = |site: &str, label: &str, method: BenchMethod| -> Option<f64> {
        let (total, n) = sums.get(&(site.to_string(), label.to_string(), method))?;
        Some(total / f64::from(*n))
    };

    let mut cells = BTreeMap::new();
    let sites: std::collections::BTreeSet<&str> = results.iter().map(|r| r.site.as_str()).collect();
    for site in sites {
        for label in LARGE_FILE_LABELS {
            let (Some(t_proxy), Some(t_fed)) = (
                mean(site, label, BenchMethod::Proxy),
                mean(site, label, BenchMethod::Federation),
            ) else {
                continue;
            };
            if let Ok(pct) = percent_diff(t_proxy, t_fed) {
                cells.insert((site.to_string(), label.to_string()), pct);
            }
        }
    }
    cells
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub results_jsonl: PathBuf,
    pub table3_csv: PathBuf,
    pub throughput_csvs: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

/// Renders raw results, the percent-difference table, and per-site
/// throughput data with bar charts.
pub fn render_report(results: &[BenchResult], out_dir: &Path) -> anyhow::Result<ReportPaths> {
    anyhow::ensure!(!results.is_empty(), "no results to report");
    std::fs::create_dir_all(out_dir)?;

    let results_jsonl = out_dir.join("results.jsonl");
    {
        let mut f = std::fs::File::create(&results_jsonl)?;
        for r in results {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
    }

    let sites: Vec<String> = {
        let mut seen = Vec::new();
        for r in results {
            if !seen.contains(&r.site) {
                seen.push(r.site.clone());
            }
        }
        seen
    };

    // Table 3 shape: rows = sites, columns = the large-file labels,
    // cells = percent difference (negative: federation faster). Missing
    // measurements stay empty rather than reading as zero.
    let cells = table3_cells(results);
    let table3_csv = out_dir.join("table3.csv");
    {
        let mut f = std::fs::File::create(&table3_csv)?;
        writeln!(f, "site,{}", LARGE_FILE_LABELS.join(","))?;
        for site in &sites {
            let row: Vec<String> = LARGE_FILE_LABELS
                .iter()
                .map(|label| {
                    cells
                        .get(&(site.clone(), label.to_string()))
                        .map(|pct| format!("{pct:+.1}%"))
                        .unwrap_or_default()
                })
                .collect();
            writeln!(f, "{site},{}", row.join(","))?;
        }
    }

    let mut throughput_csvs = Vec::new();
    let mut plots = Vec::new();
    for site in &sites {
        let rows = throughput_rows(results, site);
        let csv_path = out_dir.join(format!("throughput_{site}.csv"));
        {
            let mut f = std::fs::File::create(&csv_path)?;
            writeln!(f, "file,method,phase,mean_mb_per_s,mean_seconds,bytes")?;
            for row in &rows {
                writeln!(
                    f,
                    "{},{},{},{:.3},{:.6},{}",
                    row.label, row.method, row.phase, row.mb_per_s, row.seconds, row.bytes
                )?;
            }
        }
        let plot_path = out_dir.join(format!("throughput_{site}.svg"));
        draw_throughput_chart(&rows, site, &plot_path)?;
        throughput_csvs.push(csv_path);
        plots.push(plot_path);
    }

    Ok(ReportPaths { results_jsonl, table3_csv, throughput_csvs, plots })
}

struct ThroughputRow {
    label: String,
    method: &'static str,
    phase: &'static str,
    mb_per_s: f64,
    seconds: f64,
    bytes: u64,
}

fn throughput_rows(results: &[BenchResult], site: &str) -> Vec<ThroughputRow> {
    let mut rows = Vec::new();
    for (label, _) in DATASET_ENTRIES {
        for (method, method_name) in [(BenchMethod::Proxy, "proxy"), (BenchMethod::Federation, "federation")] {
            for (phase, phase_name) in [(Phase::Cold, "cold"), (Phase::Warm, "warm")] {
                let samples: Vec<&BenchResult> = results
                    .iter()
                    .filter(|r| {
                        r.ok && r.site == site
                            && r.file_label == label
                            && r.method == method
                            && r.phase == phase
                    })
                    .collect();
                if samples.is_empty() {
                    continue;
                }
                let mean_s =
                    samples.iter().map(|r| r.duration_seconds).sum::<f64>() / samples.len() as f64;
                let bytes = samples[0].bytes;
                rows.push(ThroughputRow {
                    label: label.to_string(),
                    method: method_name,
                    phase: phase_name,
                    mb_per_s: if mean_s > 0.0 { bytes as f64 / mean_s / 1e6 } else { 0.0 },
                    seconds: mean_s,
                    bytes,
                });
            }
        }
    }
    rows
}

/// Grouped bar chart, one group per file, four bars (method × phase).
/// Higher is better.
fn draw_throughput_chart(rows: &[ThroughputRow], site: &str, path: &Path) -> anyhow::Result<()> {
    use plotters::prelude::*;

    let labels: Vec<String> = {
        let mut seen = Vec::new();
        for row in rows {
            if !seen.contains(&row.label) {
                seen.push(row.label.clone());
            }
        }
        seen
    };
    let max_tp = rows.iter().map(|r| r.mb_per_s).fold(1.0_f64, f64::max) * 1.15;

    let root = SVGBackend::new(path, (900, 520)).into_drawing_area();
    root.fill(&WHITE)?;
    let caption = format!("{site}: mean download throughput (higher is better)");
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..labels.len() as f64, 0f64..max_tp)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .y_desc("MB/s")
        .x_desc("file")
        .x_labels(labels.len())
        .x_label_formatter(&|x| {
            let idx = *x as usize;
            labels.get(idx).cloned().unwrap_or_default()
        })
        .draw()?;

    let series = [
        ("proxy", "cold", RGBColor(178, 34, 34)),
        ("proxy", "warm", RGBColor(244, 164, 96)),
        ("federation", "cold", RGBColor(25, 25, 112)),
        ("federation", "warm", RGBColor(100, 149, 237)),
    ];
    for (slot, (method, phase, color)) in series.into_iter().enumerate() {
        let bars: Vec<Rectangle<(f64, f64)>> = rows
            .iter()
            .filter(|r| r.method == method && r.phase == phase)
            .filter_map(|r| {
                let group = labels.iter().position(|l| *l == r.label)? as f64;
                let x0 = group + 0.12 + slot as f64 * 0.19;
                Some(Rectangle::new(
                    [(x0, 0.0), (x0 + 0.17, r.mb_per_s)],
                    color.filled(),
                ))
            })
            .collect();
        chart
            .draw_series(bars)?
            .label(format!("{method} {phase}"))
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()?;
    root.present()?;
    Ok(())
}
