//! Deterministic reductions.

/// Chunk below which summation falls back to a plain sequential loop.
const PAIRWISE_LEAF: usize = 128;

/// Pairwise-tree summation. The reduction tree depends only on the slice
/// length, so results are bit-identical regardless of how callers partition
/// work, and rounding error grows as O(log n) instead of O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise-tree sum of `f(i)` over `0..n` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64 + Copy>(n: usize, f: F) -> f64 {
    fn go<F: Fn(usize) -> f64 + Copy>(lo: usize, hi: usize, f: F) -> f64 {
        if hi - lo <= PAIRWISE_LEAF {
            (lo..hi).map(f).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    if n == 0 {
        0.0
    } else {
        go(0, n, f)
    }
}
