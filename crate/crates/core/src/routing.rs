//! Longest-prefix routing over the federation namespace.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::path::FederationPath;

/// A map from namespace prefixes to values, queried by longest matching
/// prefix. Backed by an ordered map, so iteration order is deterministic.
#[derive(Debug, Clone, Default)]
pub struct PrefixMap<V> {
    entries: BTreeMap<FederationPath, V>,
}

impl<V> PrefixMap<V> {
    pub fn new() -> Self {
        PrefixMap { entries: BTreeMap::new() }
    }

    /// Inserts or replaces the value for an exact prefix.
    pub fn insert(&mut self, prefix: FederationPath, value: V) -> Option<V> {
        self.entries.insert(prefix, value)
    }

    pub fn remove(&mut self, prefix: &FederationPath) -> Option<V> {
        self.entries.remove(prefix)
    }

    pub fn get(&self, prefix: &FederationPath) -> Option<&V> {
        self.entries.get(prefix)
    }

    pub fn get_mut(&mut self, prefix: &FederationPath) -> Option<&mut V> {
        self.entries.get_mut(prefix)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FederationPath, &V)> {
        self.entries.iter()
    }

    /// All registered prefixes that are prefixes of `path`, longest first.
    ///
    /// Matching prefixes of one path are necessarily nested, so "longest
    /// first" is a total order and the first element is the unique longest
    /// match.
    pub fn matches(&self, path: &FederationPath) -> Vec<(&FederationPath, &V)> {
        let mut found: Vec<(&FederationPath, &V)> = self
            .entries
            .iter()
            .filter(|(prefix, _)| prefix.is_prefix_of(path))
            .collect();
        found.sort_by(|(a, _), (b, _)| b.as_str().len().cmp(&a.as_str().len()));
        found
    }

    /// The single longest matching prefix, if any.
    pub fn longest_match(&self, path: &FederationPath) -> Option<(&FederationPath, &V)> {
        self.matches(path).into_iter().next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> FederationPath {
        FederationPath::parse(s).unwrap()
    }

    #[test]
    fn longest_prefix_wins() {
        let mut map = PrefixMap::new();
        map.insert(p("/exp1"), "o1");
        map.insert(p("/exp1/sub"), "o2");
        map.insert(p("/other"), "o3");

        let hits = map.matches(&p("/exp1/sub/f"));
        assert_eq!(hits.len(), 2);
        assert_eq!(*hits[0].1, "o2");
        assert_eq!(*hits[1].1, "o1");

        assert_eq!(map.longest_match(&p("/exp1/a/f")).unwrap().1, &"o1");
        assert!(map.longest_match(&p("/nowhere/f")).is_none());
    }

    #[test]
    fn sibling_prefixes_do_not_match() {
        let mut map = PrefixMap::new();
        map.insert(p("/exp1"), 1);
        assert!(map.matches(&p("/exp10/f")).is_empty());
    }

    #[test]
    fn insert_is_replace_per_exact_prefix() {
        let mut map = PrefixMap::new();
        assert_eq!(map.insert(p("/exp1"), 1), None);
        assert_eq!(map.insert(p("/exp1"), 2), Some(1));
        assert_eq!(map.len(), 1);
    }
}
