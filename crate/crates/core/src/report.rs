//! Percent-difference arithmetic for the proxy-vs-federation comparison.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UndefinedBaseline {
    pub t_proxy: f64,
}

impl fmt::Display for UndefinedBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "percent difference undefined for proxy baseline {}", self.t_proxy)
    }
}

impl core::error::Error for UndefinedBaseline {}

/// `(t_federation − t_proxy) / t_proxy × 100`.
///
/// Negative means the federation download was faster than the proxy
/// baseline.
pub fn percent_diff(t_proxy: f64, t_federation: f64) -> Result<f64, UndefinedBaseline> {
    if !(t_proxy > 0.0) {
        return Err(UndefinedBaseline { t_proxy });
    }
    Ok((t_federation - t_proxy) / t_proxy * 100.0)
}
