//! Fixed-size chunk layout and per-chunk checksums.
//!
//! Files are cut into aligned 24 MiB chunks; the chunk is the unit of
//! transfer, checksumming, and cache accounting.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use sha2::{Digest, Sha256};

/// Chunk size in bytes: 24 MiB.
pub const CHUNK_SIZE: u64 = 24 * (1 << 20);

/// One aligned segment of a file: `offset = index * CHUNK_SIZE`, and every
/// chunk except the last has `length = CHUNK_SIZE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpec {
    pub index: u32,
    pub offset: u64,
    pub length: u64,
}

impl ChunkSpec {
    /// Half-open byte interval `[offset, offset + length)`.
    pub fn byte_range(&self) -> (u64, u64) {
        (self.offset, self.offset + self.length)
    }
}

/// Number of chunks covering a file of `file_size` bytes; zero for empty
/// files.
pub fn chunk_count(file_size: u64) -> u32 {
    file_size.div_ceil(CHUNK_SIZE) as u32
}

/// The ordered chunk layout covering `[0, file_size)` exactly and
/// contiguously. Empty for size 0.
pub fn chunk_layout(file_size: u64) -> Vec<ChunkSpec> {
    let n = chunk_count(file_size);
    (0..n)
        .map(|index| {
            let offset = index as u64 * CHUNK_SIZE;
            ChunkSpec {
                index,
                offset,
                length: (file_size - offset).min(CHUNK_SIZE),
            }
        })
        .collect()
}

/// The chunk indices whose byte ranges intersect the half-open interval
/// `[start, end)`, clamped to the file. Empty when the interval is empty.
pub fn chunks_overlapping(file_size: u64, start: u64, end: u64) -> core::ops::Range<u32> {
    let end = end.min(file_size);
    if start >= end {
        return 0..0;
    }
    let first = (start / CHUNK_SIZE) as u32;
    let last = ((end - 1) / CHUNK_SIZE) as u32;
    first..last + 1
}

/// A 32-byte chunk digest, rendered as lowercase hex in the catalog format.
#[derive(Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "alloc::string::String", into = "alloc::string::String")]
pub struct ChunkDigest(pub [u8; 32]);

impl ChunkDigest {
    pub fn to_hex(&self) -> alloc::string::String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, DigestParseError> {
        let bytes = hex::decode(s).map_err(|_| DigestParseError)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| DigestParseError)?;
        Ok(ChunkDigest(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigestParseError;

impl fmt::Display for DigestParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "digest must be 64 hex characters")
    }
}

impl core::error::Error for DigestParseError {}

impl TryFrom<alloc::string::String> for ChunkDigest {
    type Error = DigestParseError;
    fn try_from(s: alloc::string::String) -> Result<Self, DigestParseError> {
        ChunkDigest::from_hex(&s)
    }
}

impl From<ChunkDigest> for alloc::string::String {
    fn from(d: ChunkDigest) -> Self {
        d.to_hex()
    }
}

impl fmt::Debug for ChunkDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChunkDigest({})", self.to_hex())
    }
}

impl fmt::Display for ChunkDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OversizedChunk {
    pub len: usize,
}

impl fmt::Display for OversizedChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chunk of {} bytes exceeds CHUNK_SIZE ({CHUNK_SIZE})", self.len)
    }
}

impl core::error::Error for OversizedChunk {}

/// SHA-256 of one chunk's bytes. Errors if `data` is longer than a chunk.
pub fn chunk_checksum(data: &[u8]) -> Result<ChunkDigest, OversizedChunk> {
    if data.len() as u64 > CHUNK_SIZE {
        return Err(OversizedChunk { len: data.len() });
    }
    Ok(ChunkDigest(Sha256::digest(data).into()))
}

/// Presence bitset over a file's chunk indices.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChunkBitmap {
    words: Vec<u64>,
    len: u32,
}

impl ChunkBitmap {
    pub fn new(chunks: u32) -> Self {
        ChunkBitmap {
            words: vec![0; (chunks as usize).div_ceil(64)],
            len: chunks,
        }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, index: u32) {
        assert!(index < self.len, "chunk index {index} out of range {}", self.len);
        self.words[(index / 64) as usize] |= 1 << (index % 64);
    }

    pub fn clear(&mut self, index: u32) {
        assert!(index < self.len);
        self.words[(index / 64) as usize] &= !(1 << (index % 64));
    }

    pub fn contains(&self, index: u32) -> bool {
        index < self.len && self.words[(index / 64) as usize] & (1 << (index % 64)) != 0
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn all_present(&self) -> bool {
        self.count() == self.len
    }

    pub fn none_present(&self) -> bool {
        self.count() == 0
    }
}

/// The chunk indices overlapping `[start, end)` that are absent from
/// `present` — exactly what a cache must fetch to serve that range.
pub fn needed_chunks(file_size: u64, present: &ChunkBitmap, start: u64, end: u64) -> Vec<u32> {
    chunks_overlapping(file_size, start, end)
        .filter(|i| !present.contains(*i))
        .collect()
}
