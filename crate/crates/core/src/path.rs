//! Canonical absolute paths within the global federation namespace.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// A canonical absolute path in the federation namespace, e.g.
/// `/experiment/dataset/file.bin`.
///
/// Canonical form: starts with `/`, no empty segments, no `.` or `..`
/// segments, no trailing `/` except the root itself. Two paths are equal
/// iff their canonical texts are byte-equal, so the derived `Eq`/`Ord`
/// are the namespace ordering.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FederationPath(String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathError {
    Empty,
    NotAbsolute,
    EscapesRoot,
    EmbeddedNul,
}

impl fmt::Display for PathError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathError::Empty => write!(f, "malformed path: empty input"),
            PathError::NotAbsolute => write!(f, "malformed path: must begin with '/'"),
            PathError::EscapesRoot => write!(f, "malformed path: '..' escapes the root"),
            PathError::EmbeddedNul => write!(f, "malformed path: embedded NUL byte"),
        }
    }
}

impl core::error::Error for PathError {}

/// Canonicalizes `raw` into a [`FederationPath`].
///
/// Idempotent: normalizing a canonical path returns it unchanged.
pub fn normalize_path(raw: &str) -> Result<FederationPath, PathError> {
    if raw.is_empty() {
        return Err(PathError::Empty);
    }
    if raw.contains('\0') {
        return Err(PathError::EmbeddedNul);
    }
    if !raw.starts_with('/') {
        return Err(PathError::NotAbsolute);
    }
    let mut segments: Vec<&str> = Vec::new();
    for seg in raw.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                if segments.pop().is_none() {
                    return Err(PathError::EscapesRoot);
                }
            }
            s => segments.push(s),
        }
    }
    if segments.is_empty() {
        return Ok(FederationPath("/".to_string()));
    }
    let mut text = String::with_capacity(raw.len());
    for seg in segments {
        text.push('/');
        text.push_str(seg);
    }
    Ok(FederationPath(text))
}

impl FederationPath {
    /// Parses and canonicalizes `raw`; alias for [`normalize_path`].
    pub fn parse(raw: &str) -> Result<Self, PathError> {
        normalize_path(raw)
    }

    /// The root of the namespace, `/`.
    pub fn root() -> Self {
        FederationPath("/".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == "/"
    }

    /// Path segments in order; empty iterator for the root.
    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('/').filter(|s| !s.is_empty())
    }

    /// Segment-aware prefix test: `/exp1` is a prefix of `/exp1/a` and of
    /// itself, but not of `/exp10/a`. The root is a prefix of everything.
    pub fn is_prefix_of(&self, other: &FederationPath) -> bool {
        if self.is_root() {
            return true;
        }
        let p = self.0.as_bytes();
        let o = other.0.as_bytes();
        o.starts_with(p) && (o.len() == p.len() || o[p.len()] == b'/')
    }

    /// Appends a relative fragment (which may contain `/`) and
    /// re-canonicalizes. Errors if the fragment escapes this path's scope
    /// via `..`.
    pub fn join(&self, rel: &str) -> Result<FederationPath, PathError> {
        let mut raw = self.0.clone();
        if !raw.ends_with('/') {
            raw.push('/');
        }
        raw.push_str(rel);
        let joined = normalize_path(&raw)?;
        if !self.is_prefix_of(&joined) {
            return Err(PathError::EscapesRoot);
        }
        Ok(joined)
    }
}

impl fmt::Display for FederationPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for FederationPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FederationPath({})", self.0)
    }
}

impl TryFrom<String> for FederationPath {
    type Error = PathError;
    fn try_from(raw: String) -> Result<Self, PathError> {
        normalize_path(&raw)
    }
}

impl From<FederationPath> for String {
    fn from(p: FederationPath) -> String {
        p.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_redundant_segments() {
        assert_eq!(normalize_path("/a//b/./c").unwrap().as_str(), "/a/b/c");
        assert_eq!(normalize_path("/a/b/../c").unwrap().as_str(), "/a/c");
        assert_eq!(normalize_path("/a/b/").unwrap().as_str(), "/a/b");
    }

    #[test]
    fn root_is_a_fixed_point() {
        assert_eq!(normalize_path("/").unwrap().as_str(), "/");
        assert_eq!(normalize_path("///").unwrap().as_str(), "/");
        assert_eq!(normalize_path("/a/..").unwrap().as_str(), "/");
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(normalize_path(""), Err(PathError::Empty));
        assert_eq!(normalize_path("a/b"), Err(PathError::NotAbsolute));
        assert_eq!(normalize_path("/a/../../b"), Err(PathError::EscapesRoot));
        assert_eq!(normalize_path("/a\0b"), Err(PathError::EmbeddedNul));
    }

    #[test]
    fn prefix_is_segment_aware() {
        let exp1 = FederationPath::parse("/exp1").unwrap();
        let nested = FederationPath::parse("/exp1/a/f").unwrap();
        let sibling = FederationPath::parse("/exp10/a").unwrap();
        assert!(exp1.is_prefix_of(&nested));
        assert!(exp1.is_prefix_of(&exp1));
        assert!(!exp1.is_prefix_of(&sibling));
        assert!(FederationPath::root().is_prefix_of(&nested));
        assert!(!nested.is_prefix_of(&exp1));
    }

    #[test]
    fn join_stays_inside_scope() {
        let base = FederationPath::parse("/exp1").unwrap();
        assert_eq!(base.join("a/b.bin").unwrap().as_str(), "/exp1/a/b.bin");
        assert_eq!(base.join("a/../b").unwrap().as_str(), "/exp1/b");
        assert_eq!(base.join("../other"), Err(PathError::EscapesRoot));
    }
}
