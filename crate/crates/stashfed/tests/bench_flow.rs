//! The benchmark harness against a live mini-federation.

mod common;

use std::time::Duration;

use common::*;
use stashfed::bench::{
    generate_dataset, render_report, run_matrix, BenchMethod, DatasetSpec, Phase, PhaseOrdering,
    RunConfig,
};
use stashfed::cache_server;
use stashfed::origin;
use stashfed::proxy::{self, ProxyConfig};

struct BenchRig {
    fed: Federation,
    proxy: proxy::ProxyHandle,
    manifest: stashfed::bench::Manifest,
    out: tempfile::TempDir,
}

/// Proxy size ceiling calibrated between the scaled P75 and P95 sizes, so
/// the two largest files are uncacheable.
fn rig(scale: u64, seed: u64, ttl: Duration) -> BenchRig {
    let redirector = spawn_redirector();
    let tree = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&DatasetSpec { scale, seed }, tree.path()).unwrap();
    let origin = origin::spawn(origin_config("/exp1", tree.path(), &redirector.endpoint())).unwrap();

    let cache_dir = tempfile::tempdir().unwrap();
    let cache = cache_server::spawn(cache_config(
        "bench-cache",
        cache_dir.path(),
        &redirector.endpoint(),
        256 << 20,
    ))
    .unwrap();
    wait_for("origin registration", Duration::from_secs(5), || {
        !redirector.origin_registrations().is_empty()
    });

    let p75 = manifest.entries.iter().find(|e| e.label == "P75").unwrap().size;
    let p95 = manifest.entries.iter().find(|e| e.label == "P95").unwrap().size;
    let max_object = (p75 + p95) / 2;
    let proxy = proxy::spawn(ProxyConfig::new(64 << 20, max_object, ttl)).unwrap();

    BenchRig {
        fed: Federation {
            redirector,
            origins: vec![origin],
            caches: vec![cache],
            dirs: vec![tree, cache_dir],
        },
        proxy,
        manifest,
        out: tempfile::tempdir().unwrap(),
    }
}

impl BenchRig {
    fn run_config(&self, reps: u32, ordering: PhaseOrdering, pace: Duration) -> RunConfig {
        RunConfig {
            manifest: self.manifest.clone(),
            prefix: fed_path("/exp1"),
            proxy: Some(self.proxy.endpoint()),
            redirectors: self.fed.redirectors(),
            caches: self.fed.cache_endpoints(),
            reps,
            site: "local".to_string(),
            ordering,
            pace,
            dest_dir: self.out.path().join("downloads"),
        }
    }

    fn shutdown(self) {
        self.proxy.shutdown();
        self.fed.shutdown();
    }
}

#[test]
fn four_phase_matrix_reproduces_expected_statuses() {
    let rig = rig(1_000, 71, Duration::from_secs(600));
    let results = run_matrix(&rig.run_config(1, PhaseOrdering::PerFile, Duration::ZERO)).unwrap();

    // 7 files x 4 phases.
    assert_eq!(results.len(), 28);
    assert!(results.iter().all(|r| r.ok), "failures: {:?}",
        results.iter().filter(|r| !r.ok).collect::<Vec<_>>());

    for entry in &rig.manifest.entries {
        let status = |method, phase| {
            results
                .iter()
                .find(|r| r.file_label == entry.label && r.method == method && r.phase == phase)
                .and_then(|r| r.status.clone())
                .unwrap()
        };
        let uncacheable = entry.label == "P95" || entry.label == "XL";
        if uncacheable {
            assert_eq!(status(BenchMethod::Proxy, Phase::Cold), "UNCACHEABLE");
            assert_eq!(status(BenchMethod::Proxy, Phase::Warm), "UNCACHEABLE");
        } else {
            assert_eq!(status(BenchMethod::Proxy, Phase::Cold), "MISS");
            assert_eq!(status(BenchMethod::Proxy, Phase::Warm), "HIT");
        }
        // The federation caches everything, large files included.
        assert_eq!(status(BenchMethod::Federation, Phase::Cold), "MISS");
        assert_eq!(status(BenchMethod::Federation, Phase::Warm), "HIT");

        // All four phases moved the full file.
        for r in results.iter().filter(|r| r.file_label == entry.label) {
            assert_eq!(r.bytes, entry.size);
        }
    }
    rig.shutdown();
}

#[test]
fn per_pass_ordering_expires_early_proxy_entries() {
    // TTL 500 ms, pace 150 ms: a full 7-file pass takes over a second, so
    // the first file has expired by the time its warm pass arrives. The
    // corrected per-file ordering revisits each file immediately and sees
    // a HIT instead.
    let rig = rig(100_000, 72, Duration::from_millis(500));
    let results =
        run_matrix(&rig.run_config(1, PhaseOrdering::PerPass, Duration::from_millis(150))).unwrap();

    let warm_p1 = results
        .iter()
        .find(|r| {
            r.file_label == "P1" && r.method == BenchMethod::Proxy && r.phase == Phase::Warm
        })
        .unwrap();
    assert_eq!(warm_p1.status.as_deref(), Some("MISS"), "first file must have expired");
    rig.shutdown();
}

#[test]
fn repetitions_multiply_results() {
    let rig = rig(1_000_000, 73, Duration::from_secs(600));
    let results = run_matrix(&rig.run_config(3, PhaseOrdering::PerFile, Duration::ZERO)).unwrap();
    assert_eq!(results.len(), 7 * 4 * 3);
    rig.shutdown();
}

#[test]
fn report_cells_match_recomputation() {
    let rig = rig(10_000, 74, Duration::from_secs(600));
    let results = run_matrix(&rig.run_config(2, PhaseOrdering::PerFile, Duration::ZERO)).unwrap();
    let report_dir = rig.out.path().join("report");
    let paths = render_report(&results, &report_dir).unwrap();

    let cells = stashfed::bench::table3_cells(&results);
    let table = std::fs::read_to_string(&paths.table3_csv).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("local,"));
    for label in ["P95", "XL"] {
        let pct = cells[&("local".to_string(), label.to_string())];
        assert!(row.contains(&format!("{pct:+.1}%")), "row {row} missing {label} cell {pct}");
    }
    assert!(paths.plots.iter().all(|p| p.exists()));
    rig.shutdown();
}
