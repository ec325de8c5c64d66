//! Services, client, and benchmark harness for the stashfed caching
//! federation: data origins with an indexer, the discovery redirector,
//! regional caches with watermark eviction, the fallback-chain client,
//! a UDP monitoring pipeline, a caching forward proxy, and the
//! proxy-vs-federation benchmark.
//!
//! Every service spawns in-process behind a handle (ephemeral ports, easy
//! shutdown), which is how the integration tests compose a whole
//! federation on loopback; the CLI binaries wrap the same handles.

pub mod bench;
pub mod cache_server;
pub mod cli;
pub mod client;
pub mod clock;
pub mod faults;
pub mod httpd;
pub mod monitor_svc;
pub mod origin;
pub mod proxy;
pub mod redirector;
pub mod telemetry;

pub use stashfed_core as core;
