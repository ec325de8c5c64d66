//! Origin, redirector, and cache working together on loopback.

mod common;

use std::time::Duration;

use common::*;
use stashfed::cache_server::{self};
use stashfed::faults::{spawn_relay, FlipMode, FlipSpec};
use stashfed::httpd::encode_query_value;
use stashfed::origin;
use stashfed::redirector::{self, RedirectorConfig};
use stashfed::clock::Clock;
use stashfed_core::chunk::CHUNK_SIZE;

fn get(wire: &stashfed::httpd::Wire, url: &str) -> stashfed::httpd::WireResponse {
    wire.get(url, &[]).unwrap()
}

#[test]
fn origin_serves_ranges_and_metadata() {
    let body = content(1, 10_000);
    let fed = quick_federation("/exp1", &[("a.bin", &body)], 0);
    let origin_ep = fed.origins[0].endpoint();
    let w = wire();

    let whole = get(&w, &format!("http://{origin_ep}/data/exp1/a.bin"));
    assert_eq!(whole.status, 200);
    assert_eq!(whole.body, body);
    assert_eq!(whole.header("X-Total-Size").unwrap(), "10000");

    let part = w
        .get(&format!("http://{origin_ep}/data/exp1/a.bin"), &[("Range", "bytes=100-199")])
        .unwrap();
    assert_eq!(part.status, 206);
    assert_eq!(part.body, &body[100..200]);
    assert_eq!(part.header("Content-Range").unwrap(), "bytes 100-199/10000");

    let beyond = w
        .get(&format!("http://{origin_ep}/data/exp1/a.bin"), &[("Range", "bytes=10000-")])
        .unwrap();
    assert_eq!(beyond.status, 416);

    // Outside the namespace and absent files are both 404.
    assert_eq!(get(&w, &format!("http://{origin_ep}/data/other/ns/x")).status, 404);
    assert_eq!(get(&w, &format!("http://{origin_ep}/data/exp1/missing")).status, 404);

    let stats = get(&w, &format!("http://{origin_ep}/stats"));
    let v: serde_json::Value = stats.json().unwrap();
    assert_eq!(v["files_indexed"], 1);
    assert!(v["requests"].as_u64().unwrap() >= 2);
    fed.shutdown();
}

#[test]
fn locate_answers_from_catalog_not_filesystem() {
    let fed = quick_federation("/exp1", &[("a.bin", b"data")], 0);
    let origin = &fed.origins[0];
    let w = wire();
    let ep = origin.endpoint();

    let url = |p: &str| format!("http://{ep}/locate?path={}", encode_query_value(p));
    assert_eq!(get(&w, &url("/exp1/a.bin")).status, 200);
    assert_eq!(get(&w, &url("/exp1/nope")).status, 404);

    // A file created after the last scan is invisible until the next pass.
    std::fs::write(fed.dirs[0].path().join("late.bin"), b"late").unwrap();
    assert_eq!(get(&w, &url("/exp1/late.bin")).status, 404);
    origin.reindex_now().unwrap();
    assert_eq!(get(&w, &url("/exp1/late.bin")).status, 200);
    fed.shutdown();
}

#[test]
fn redirector_longest_prefix_and_conflicts() {
    let redirector = spawn_redirector();
    let w = wire();
    let rd = redirector.endpoint();

    let t1 = tempfile::tempdir().unwrap();
    write_tree(t1.path(), &[("a/f.bin", b"from o1"), ("sub/f.bin", b"o1 shadow")]);
    let o1 = origin::spawn(origin_config("/exp1", t1.path(), &rd)).unwrap();

    let t2 = tempfile::tempdir().unwrap();
    write_tree(t2.path(), &[("f.bin", b"from o2")]);
    let o2 = origin::spawn(origin_config("/exp1/sub", t2.path(), &rd)).unwrap();

    wait_for("both registrations", Duration::from_secs(5), || {
        redirector.origin_registrations().len() == 2
    });

    let locate = |p: &str| {
        let resp = get(&w, &format!("http://{rd}/locate?path={}", encode_query_value(p)));
        (resp.status, resp.json::<serde_json::Value>().ok().and_then(|v| {
            v.get("origin").and_then(|o| o.as_str()).map(String::from)
        }))
    };

    // Longest prefix wins when the nested origin confirms.
    assert_eq!(locate("/exp1/sub/f.bin"), (200, Some(o2.endpoint())));
    // Shorter prefix serves the rest.
    assert_eq!(locate("/exp1/a/f.bin"), (200, Some(o1.endpoint())));
    // Longest match misses, next-longest confirms (fallback).
    assert_eq!(locate("/exp1/sub/only-in-o1"), (404, None));
    assert_eq!(locate("/nowhere/f"), (404, None));

    // Same prefix, different endpoint: conflict while the holder is live.
    let resp = w
        .post_json(
            &format!("http://{rd}/register/origin"),
            &serde_json::json!({"prefix": "/exp1", "endpoint": "10.0.0.9:9999"}),
        )
        .unwrap();
    assert_eq!(resp.status, 409);
    // Same pair is idempotent.
    let resp = w
        .post_json(
            &format!("http://{rd}/register/origin"),
            &serde_json::json!({"prefix": "/exp1", "endpoint": o1.endpoint()}),
        )
        .unwrap();
    assert_eq!(resp.status, 200);
    assert_eq!(redirector.origin_registrations().len(), 2);

    o1.shutdown();
    o2.shutdown();
    redirector.shutdown();
}

#[test]
fn stale_origins_are_excluded_and_replaceable() {
    let (clock, manual) = Clock::manual(1_000_000);
    let redirector = redirector::spawn(RedirectorConfig {
        heartbeat_ttl: Duration::from_secs(10),
        confirm_timeout: Duration::from_millis(300),
        clock,
        ..RedirectorConfig::default()
    })
    .unwrap();
    let rd = redirector.endpoint();
    let w = wire();

    let tree = tempfile::tempdir().unwrap();
    write_tree(tree.path(), &[("f.bin", b"x")]);
    let mut cfg = origin_config("/exp1", tree.path(), &rd);
    cfg.heartbeat_interval = Duration::from_secs(3600); // one registration only
    let origin = origin::spawn(cfg).unwrap();
    wait_for("registration", Duration::from_secs(5), || {
        !redirector.origin_registrations().is_empty()
    });

    let locate_url = format!("http://{rd}/locate?path={}", encode_query_value("/exp1/f.bin"));
    assert_eq!(get(&w, &locate_url).status, 200);

    // Three missed heartbeats: never returned by locate again.
    manual.advance_ms(31_000);
    assert_eq!(get(&w, &locate_url).status, 404);

    // A stale prefix can be taken over by a new endpoint.
    let resp = w
        .post_json(
            &format!("http://{rd}/register/origin"),
            &serde_json::json!({"prefix": "/exp1", "endpoint": origin.endpoint()}),
        )
        .unwrap();
    assert_eq!(resp.status, 200);
    assert_eq!(get(&w, &locate_url).status, 200);

    origin.shutdown();
    redirector.shutdown();
}

#[test]
fn two_redirectors_answer_identically_from_one_stream() {
    // High availability is client-side failover; replaying one
    // registration stream into two redirectors must give identical
    // answers.
    let r1 = spawn_redirector();
    let r2 = spawn_redirector();
    let tree = tempfile::tempdir().unwrap();
    write_tree(tree.path(), &[("a.bin", b"a"), ("sub/b.bin", b"b")]);
    let mut cfg = origin_config("/exp1", tree.path(), &r1.endpoint());
    cfg.redirectors = vec![r1.endpoint(), r2.endpoint()];
    let origin = origin::spawn(cfg).unwrap();
    wait_for("both redirectors", Duration::from_secs(5), || {
        !r1.origin_registrations().is_empty() && !r2.origin_registrations().is_empty()
    });

    let w = wire();
    for path in ["/exp1/a.bin", "/exp1/sub/b.bin", "/exp1/nope", "/elsewhere/x"] {
        let q = encode_query_value(path);
        let a = get(&w, &format!("http://{}/locate?path={q}", r1.endpoint()));
        let b = get(&w, &format!("http://{}/locate?path={q}", r2.endpoint()));
        assert_eq!(a.status, b.status, "disagreement on {path}");
        if a.status == 200 {
            let va: serde_json::Value = a.json().unwrap();
            let vb: serde_json::Value = b.json().unwrap();
            assert_eq!(va["origin"], vb["origin"]);
        }
    }
    origin.shutdown();
    r1.shutdown();
    r2.shutdown();
}

#[test]
fn cache_miss_then_hit_with_exact_counters() {
    let body = content(7, 123_456);
    let fed = quick_federation("/exp1", &[("d/f.bin", &body)], 1);
    let cache = &fed.caches[0];
    let w = wire();
    let url = format!("http://{}/data/exp1/d/f.bin", cache.endpoint());

    let first = get(&w, &url);
    assert_eq!(first.status, 200);
    assert_eq!(first.header("X-Cache").unwrap(), "MISS");
    assert_eq!(first.body, body);
    let stats = cache.stats();
    assert_eq!((stats.misses, stats.hits, stats.origin_fetches), (1, 0, 1));

    let second = get(&w, &url);
    assert_eq!(second.header("X-Cache").unwrap(), "HIT");
    assert_eq!(second.body, body);
    let stats = cache.stats();
    assert_eq!((stats.misses, stats.hits, stats.origin_fetches), (1, 1, 1));

    // Ranged warm read stays local.
    let part = w.get(&url, &[("Range", "bytes=0-99")]).unwrap();
    assert_eq!(part.status, 206);
    assert_eq!(part.body, &body[..100]);
    assert_eq!(part.header("X-Cache").unwrap(), "HIT");
    assert_eq!(cache.stats().origin_fetches, 1);

    // Unknown path propagates not-found from the redirector.
    let missing = get(&w, &format!("http://{}/data/exp1/ghost", cache.endpoint()));
    assert_eq!(missing.status, 404);
    fed.shutdown();
}

#[test]
fn concurrent_identical_misses_fetch_each_chunk_once() {
    let body = content(9, 64_000);
    let fed = quick_federation("/exp1", &[("f.bin", &body)], 1);
    let cache = &fed.caches[0];
    let url = format!("http://{}/data/exp1/f.bin", cache.endpoint());

    std::thread::scope(|scope| {
        for _ in 0..10 {
            let url = &url;
            let body = &body;
            scope.spawn(move || {
                let w = wire();
                let resp = w.get(url, &[]).unwrap();
                assert_eq!(resp.status, 200);
                assert_eq!(&resp.body, body);
            });
        }
    });
    // One chunk in the file; ten concurrent readers; one origin fetch.
    assert_eq!(cache.stats().origin_fetches, 1);
    // The origin saw the metadata HEAD plus exactly one data GET.
    assert_eq!(fed.origins[0].request_count(), 2);
    fed.shutdown();
}

#[test]
fn corrupted_origin_chunk_is_retried_then_fails_clean() {
    let body = content(11, 50_000);

    // A relay between cache and origin flips one body byte, once.
    let redirector = spawn_redirector();
    let tree = tempfile::tempdir().unwrap();
    write_tree(tree.path(), &[("f.bin", &body)]);

    let mut cfg = origin_config("/exp1", tree.path(), &redirector.endpoint());
    cfg.redirectors = vec![]; // register manually through the relay
    let origin = origin::spawn(cfg).unwrap();
    let relay = spawn_relay(
        origin.listen_endpoint(),
        FlipMode::Once(FlipSpec::at(100).on_path("/data/")),
    )
    .unwrap();

    let w = wire();
    let resp = w
        .post_json(
            &format!("http://{}/register/origin", redirector.endpoint()),
            &serde_json::json!({"prefix": "/exp1", "endpoint": relay.endpoint()}),
        )
        .unwrap();
    assert_eq!(resp.status, 200);

    let dir = tempfile::tempdir().unwrap();
    let cache =
        cache_server::spawn(cache_config("c", dir.path(), &redirector.endpoint(), 256 << 20))
            .unwrap();

    let url = format!("http://{}/data/exp1/f.bin", cache.endpoint());
    let resp = get(&w, &url);
    assert_eq!(resp.status, 200);
    assert_eq!(resp.body, body, "retry must deliver intact bytes");
    assert_eq!(relay.flips(), 1);
    // One corrupted fetch plus one clean retry.
    assert_eq!(cache.stats().origin_fetches, 2);

    cache.shutdown();
    relay.shutdown();

    // Persistent corruption surfaces as a distinct integrity status.
    let relay = spawn_relay(
        origin.listen_endpoint(),
        FlipMode::Always(FlipSpec::at(100).on_path("/data/")),
    )
    .unwrap();
    let resp = w
        .post_json(
            &format!("http://{}/register/origin", redirector.endpoint()),
            &serde_json::json!({"prefix": "/exp1", "endpoint": relay.endpoint()}),
        )
        .unwrap();
    // The old registration is still live; same prefix + new endpoint is a
    // conflict, so spin up a fresh redirector instead.
    assert_eq!(resp.status, 409);
    let redirector2 = spawn_redirector();
    let resp = w
        .post_json(
            &format!("http://{}/register/origin", redirector2.endpoint()),
            &serde_json::json!({"prefix": "/exp1", "endpoint": relay.endpoint()}),
        )
        .unwrap();
    assert_eq!(resp.status, 200);

    let dir2 = tempfile::tempdir().unwrap();
    let cache2 =
        cache_server::spawn(cache_config("c2", dir2.path(), &redirector2.endpoint(), 256 << 20))
            .unwrap();
    let url = format!("http://{}/data/exp1/f.bin", cache2.endpoint());
    let resp = get(&w, &url);
    assert_eq!(resp.status, 502);
    assert_eq!(resp.header("X-Error").unwrap(), "integrity-error");
    assert_eq!(resp.header("X-Error-Chunk").unwrap(), "0");

    cache2.shutdown();
    origin.shutdown();
    redirector.shutdown();
    redirector2.shutdown();
}

#[test]
fn eviction_keeps_usage_under_watermarks() {
    // Capacity 25 MiB + 3 files of 10 MiB: storing a third file must evict
    // the least recently used one.
    let f1 = content(21, 10 << 20);
    let f2 = content(22, 10 << 20);
    let f3 = content(23, 10 << 20);
    let fed = quick_federation(
        "/exp1",
        &[("f1.bin", &f1), ("f2.bin", &f2), ("f3.bin", &f3)],
        0,
    );
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cache_config("small", dir.path(), &fed.redirector.endpoint(), 25 << 20);
    cfg.high_watermark = 0.9;
    cfg.low_watermark = 0.5;
    let cache = cache_server::spawn(cfg).unwrap();
    let w = wire();
    let url = |n: &str| format!("http://{}/data/exp1/{n}", cache.endpoint());

    assert_eq!(get(&w, &url("f1.bin")).body, f1);
    assert_eq!(get(&w, &url("f2.bin")).body, f2);
    let high = (25 << 20) as f64 * 0.9;
    assert!((cache.stats().usage_bytes as f64) <= high + CHUNK_SIZE as f64);

    assert_eq!(get(&w, &url("f3.bin")).body, f3);
    let stats = cache.stats();
    assert!(stats.evictions >= 1, "stats: {stats:?}");
    assert!((stats.usage_bytes as f64) <= high + CHUNK_SIZE as f64);

    // f1 was the least recently used entry, so it must re-miss now.
    let again = get(&w, &url("f1.bin"));
    assert_eq!(again.header("X-Cache").unwrap(), "MISS");
    assert_eq!(again.body, f1);

    cache.shutdown();
    fed.shutdown();
}

#[test]
fn multi_chunk_files_round_trip_with_partial_status() {
    // 2.5 chunks worth of data exercises multi-chunk layout end to end.
    let len = (2 * CHUNK_SIZE + CHUNK_SIZE / 2) as usize;
    let body = content(31, len);
    let fed = quick_federation("/exp1", &[("big.bin", &body)], 1);
    let cache = &fed.caches[0];
    let w = wire();
    let url = format!("http://{}/data/exp1/big.bin", cache.endpoint());

    // Warm only chunk 0 via a ranged read.
    let part = w.get(&url, &[("Range", "bytes=0-9")]).unwrap();
    assert_eq!(part.status, 206);
    assert_eq!(part.header("X-Cache").unwrap(), "MISS");
    assert_eq!(cache.stats().origin_fetches, 1);

    // Whole-file read: chunk 0 present, chunks 1-2 missing.
    let whole = get(&w, &url);
    assert_eq!(whole.header("X-Cache").unwrap(), "PARTIAL");
    assert_eq!(whole.body.len(), len);
    assert_eq!(whole.body, body);
    assert_eq!(cache.stats().origin_fetches, 3);

    let warm = get(&w, &url);
    assert_eq!(warm.header("X-Cache").unwrap(), "HIT");
    assert_eq!(cache.stats().origin_fetches, 3);
    fed.shutdown();
}
