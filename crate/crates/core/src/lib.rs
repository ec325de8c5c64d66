//! Domain types and pure algorithms shared by every stashfed component:
//! namespace paths, chunk layout and checksums, geographic ranking, the
//! catalog line format, longest-prefix routing, cache ledgers, and the
//! monitoring packet codec with its collector join.
//!
//! Everything in this crate is deterministic and side-effect free. Values
//! are immutable after construction and the state machines take explicit
//! `now` arguments, so services and tests drive them the same way.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod catalog;
pub mod chunk;
pub mod eviction;
pub mod geo;
pub mod monitor;
pub mod path;
pub mod proxy_policy;
pub mod report;
pub mod routing;

pub use catalog::FileCatalogEntry;
pub use chunk::{chunk_count, chunk_layout, chunk_checksum, ChunkBitmap, ChunkDigest, ChunkSpec, CHUNK_SIZE};
pub use geo::{haversine_km, rank_caches, CacheDescriptor, GeoCoordinate};
pub use path::FederationPath;
pub use routing::PrefixMap;
