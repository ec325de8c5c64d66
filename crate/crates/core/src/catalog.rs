//! The catalog line format: one JSON object per file, sorted by path.
//!
//! A catalog file is UTF-8, LF-terminated lines of
//! `{"path":…,"size":…,"mtime":…,"mode":…,"chunks":[hex digest,…]}`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::chunk::{chunk_count, ChunkDigest};
use crate::path::FederationPath;

/// Authoritative per-file metadata gathered by the origin indexer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FileCatalogEntry {
    pub path: FederationPath,
    pub size: u64,
    pub mtime: u64,
    #[serde(rename = "mode")]
    pub permissions: u32,
    #[serde(rename = "chunks")]
    pub chunk_digests: Vec<ChunkDigest>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogError {
    /// Line failed to parse as a catalog entry.
    Malformed { line: usize, reason: String },
    /// Digest list length disagrees with ceil(size / CHUNK_SIZE).
    ChunkCountMismatch { line: usize },
}

impl fmt::Display for CatalogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogError::Malformed { line, reason } => {
                write!(f, "catalog line {line}: {reason}")
            }
            CatalogError::ChunkCountMismatch { line } => {
                write!(f, "catalog line {line}: chunk digest count disagrees with size")
            }
        }
    }
}

impl core::error::Error for CatalogError {}

impl FileCatalogEntry {
    /// True when the digest list length matches the file's chunk layout.
    pub fn chunk_count_consistent(&self) -> bool {
        self.chunk_digests.len() == chunk_count(self.size) as usize
    }

    pub fn encode_line(&self) -> String {
        serde_json::to_string(self).expect("catalog entry serialization cannot fail")
    }

    pub fn decode_line(line: &str) -> Result<Self, CatalogError> {
        let entry: FileCatalogEntry =
            serde_json::from_str(line).map_err(|e| CatalogError::Malformed {
                line: 0,
                reason: alloc::format!("{e}"),
            })?;
        if !entry.chunk_count_consistent() {
            return Err(CatalogError::ChunkCountMismatch { line: 0 });
        }
        Ok(entry)
    }
}

/// Renders entries as a catalog file: sorted by path, one JSON object per
/// line, LF endings (including the final line).
pub fn encode_catalog<'a, I>(entries: I) -> String
where
    I: IntoIterator<Item = &'a FileCatalogEntry>,
{
    let mut sorted: Vec<&FileCatalogEntry> = entries.into_iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut out = String::new();
    for entry in sorted {
        out.push_str(&entry.encode_line());
        out.push('\n');
    }
    out
}

/// Parses a catalog file produced by [`encode_catalog`]. Blank lines are
/// ignored; entry order is preserved.
pub fn parse_catalog(text: &str) -> Result<Vec<FileCatalogEntry>, CatalogError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let entry = FileCatalogEntry::decode_line(line).map_err(|e| match e {
            CatalogError::Malformed { reason, .. } => {
                CatalogError::Malformed { line: idx + 1, reason }
            }
            CatalogError::ChunkCountMismatch { .. } => {
                CatalogError::ChunkCountMismatch { line: idx + 1 }
            }
        })?;
        entries.push(entry);
    }
    Ok(entries)
}
