//! Lossless decimal formatting for CSV output.

/// Shortest decimal string that parses back to exactly `x`.
///
/// Moderate magnitudes use plain notation, the rest scientific notation;
/// both forms round-trip.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
