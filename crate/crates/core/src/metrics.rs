//! Small summaries of learning curves.

/// One-based index of the first entry after which every entry (itself
/// included) is at most `threshold`; `None` if the last entry exceeds it.
pub fn settle_point(gaps: &[f64], threshold: f64) -> Option<usize> {
    let mut k = gaps.len();
    while k > 0 && gaps[k - 1] <= threshold {
        k -= 1;
    }
    (k < gaps.len()).then_some(k + 1)
}
