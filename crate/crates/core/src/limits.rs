//! Enumeration caps shared by the exact routines.

use std::sync::OnceLock;

/// Default bound on enumerated entries (blocks, trajectories, policies).
pub const DEFAULT_CAP: usize = 10_000_000;

/// Environment variable overriding [`DEFAULT_CAP`].
pub const CAP_ENV: &str = "DECODABLE_ORACLE_CAP";

/// The cap in effect for this process.
pub fn oracle_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_CAP)
    })
}

pub(crate) fn check(what: &'static str, size: f64, cap: usize) -> crate::Result<()> {
    if size > cap as f64 {
        Err(crate::Error::CapExceeded { what, size, cap })
    } else {
        Ok(())
    }
}
