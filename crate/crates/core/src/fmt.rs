//! Shared numeric formatting for text outputs.

/// Fixed 6-decimal rendering used by every CSV the crate writes.
pub fn fixed6(value: f64) -> String {
    format!("{value:.6}")
}

/// Rounds to the same 6 decimals `fixed6` prints, for JSON fields.
pub fn round6(value: f64) -> f64 {
    (value * 1e6).round() / 1e6
}
