//! Shared formatting for CSV and report files.

/// Shortest decimal string that parses back to the same `f64`.
///
/// ```
/// use inn::report::fmt_f64;
/// assert_eq!(fmt_f64(-12.0), "-12");
/// assert_eq!(fmt_f64(0.1), "0.1");
/// ```
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
