//! Fixed-precision text encoding for floating-point report values.
//!
//! Every float written to a report goes through [`format_f64`], which rounds to
//! 12 significant digits and prints the shortest string that parses back to the
//! rounded value. [`quantize`] applies the same rounding in memory so a value
//! that is written and re-read compares equal to one that never left memory.

/// Number of significant digits kept in emitted reports.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `x` to 12 significant digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    s.parse().expect("scientific notation always parses")
}

/// Formats `x` with 12 significant digits; `inf`, `-inf` and `nan` are literal.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let r = quantize(x);
    if r == 0.0 {
        return "0".to_string();
    }
    let a = r.abs();
    if (1e-6..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// Parses a report float, accepting the `inf`/`nan` literals.
pub fn parse_f64(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse().ok()
}
