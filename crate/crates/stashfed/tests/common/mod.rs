//! Shared fixtures: a loopback mini-federation with fast heartbeats.

#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stashfed::cache_server::{self, CacheConfig, CacheHandle};
use stashfed::httpd::Wire;
use stashfed::origin::{self, OriginConfig, OriginHandle};
use stashfed::redirector::{self, RedirectorConfig, RedirectorHandle};
use stashfed_core::geo::GeoCoordinate;
use stashfed_core::path::FederationPath;

pub fn wire() -> Wire {
    Wire::new(Duration::from_millis(500), Some(Duration::from_secs(30)))
}

pub fn fed_path(s: &str) -> FederationPath {
    FederationPath::parse(s).unwrap()
}

/// Deterministic pseudorandom file content.
pub fn content(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0u8; len];
    rng.fill_bytes(&mut buf);
    buf
}

pub fn write_tree(root: &Path, files: &[(&str, &[u8])]) {
    for (rel, data) in files {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, data).unwrap();
    }
}

pub fn wait_for(what: &str, timeout: Duration, mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + timeout;
    while Instant::now() < deadline {
        if cond() {
            return;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("timed out waiting for {what}");
}

pub struct Federation {
    pub redirector: RedirectorHandle,
    pub origins: Vec<OriginHandle>,
    pub caches: Vec<CacheHandle>,
    pub dirs: Vec<tempfile::TempDir>,
}

impl Federation {
    pub fn redirectors(&self) -> Vec<String> {
        vec![self.redirector.endpoint()]
    }

    pub fn cache_endpoints(&self) -> Vec<String> {
        self.caches.iter().map(|c| c.endpoint()).collect()
    }

    pub fn shutdown(self) {
        for c in self.caches {
            c.shutdown();
        }
        for o in self.origins {
            o.shutdown();
        }
        self.redirector.shutdown();
    }
}

pub fn spawn_redirector() -> RedirectorHandle {
    redirector::spawn(RedirectorConfig {
        heartbeat_ttl: Duration::from_secs(60),
        confirm_timeout: Duration::from_millis(500),
        ..RedirectorConfig::default()
    })
    .unwrap()
}

pub fn origin_config(prefix: &str, root: &Path, redirector: &str) -> OriginConfig {
    let mut cfg = OriginConfig::new(fed_path(prefix), root);
    cfg.redirectors = vec![redirector.to_string()];
    cfg.heartbeat_interval = Duration::from_millis(100);
    cfg.reindex_interval = Duration::from_secs(3600); // tests reindex on demand
    cfg
}

pub fn cache_config(id: &str, dir: &Path, redirector: &str, capacity: u64) -> CacheConfig {
    let mut cfg = CacheConfig::new(id, dir, capacity);
    cfg.redirectors = vec![redirector.to_string()];
    cfg.heartbeat_interval = Duration::from_millis(100);
    cfg
}

/// One redirector, one origin over `files` at `prefix`, `n_caches` caches.
pub fn quick_federation(prefix: &str, files: &[(&str, &[u8])], n_caches: usize) -> Federation {
    let redirector = spawn_redirector();
    let tree = tempfile::tempdir().unwrap();
    write_tree(tree.path(), files);
    let origin = origin::spawn(origin_config(prefix, tree.path(), &redirector.endpoint())).unwrap();

    let mut caches = Vec::new();
    let mut dirs = vec![tree];
    for i in 0..n_caches {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cache_config(&format!("cache-{i}"), dir.path(), &redirector.endpoint(), 256 << 20);
        cfg.location = GeoCoordinate::new(10.0 * i as f64, 0.0).unwrap();
        caches.push(cache_server::spawn(cfg).unwrap());
        dirs.push(dir);
    }

    wait_for("origin registration", Duration::from_secs(5), || {
        !redirector.origin_registrations().is_empty()
    });
    Federation { redirector, origins: vec![origin], caches, dirs }
}
