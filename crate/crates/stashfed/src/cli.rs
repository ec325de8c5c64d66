//! Argument parsing helpers shared by the binaries.

use crate::client::Method;

/// Parses a byte count, plain or with a K/M/G (decimal) or Ki/Mi/Gi
/// (binary) suffix, e.g. `1073741824`, `64MiB`, `2G`.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, multiplier) = match s.find(|c: char| !c.is_ascii_digit()) {
        None => (s, 1),
        Some(idx) => {
            let mult = match s[idx..].trim().to_ascii_lowercase().as_str() {
                "k" | "kb" => 1_000,
                "m" | "mb" => 1_000_000,
                "g" | "gb" => 1_000_000_000,
                "ki" | "kib" => 1 << 10,
                "mi" | "mib" => 1 << 20,
                "gi" | "gib" => 1 << 30,
                other => return Err(format!("unknown size suffix {other:?}")),
            };
            (&s[..idx], mult)
        }
    };
    let value: u64 = digits.parse().map_err(|e| format!("bad byte count {s:?}: {e}"))?;
    value.checked_mul(multiplier).ok_or_else(|| format!("byte count {s:?} overflows"))
}

/// Parses the method chain, e.g. `cache,origin,proxy`.
pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    let mut methods = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let method = match part {
            "cache" | "cache-federation" => Method::CacheFederation,
            "origin" | "direct-origin" => Method::DirectOrigin,
            "proxy" | "proxy-http" => Method::ProxyHttp,
            other => return Err(format!("unknown method {other:?}")),
        };
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err("method list is empty".to_string());
    }
    Ok(methods)
}

/// Splits a comma-separated endpoint list.
pub fn parse_endpoints(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
}
