//! Memory guard shared by every builder that materializes dense operators.
//!
//! The limit defaults to 2048 MiB and can be overridden with the
//! `HOQT_BUDGET_MB` environment variable.

use crate::error::{HoqtError, Result};

/// Default budget in MiB.
pub const DEFAULT_BUDGET_MB: usize = 2048;

/// Bytes of one complex double.
pub const COMPLEX_BYTES: usize = 16;

/// Current budget in bytes.
pub fn budget_bytes() -> usize {
    std::env::var("HOQT_BUDGET_MB")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(DEFAULT_BUDGET_MB)
        .saturating_mul(1 << 20)
}

/// Reject an allocation of `elements` complex numbers that would not fit.
pub fn check_complex(elements: usize, what: &str) -> Result<()> {
    let bytes = elements.saturating_mul(COMPLEX_BYTES);
    if bytes > budget_bytes() {
        return Err(HoqtError::Budget(format!(
            "{what} needs {:.1} MiB, budget is {} MiB (set HOQT_BUDGET_MB to raise it)",
            bytes as f64 / (1u64 << 20) as f64,
            budget_bytes() >> 20
        )));
    }
    Ok(())
}
