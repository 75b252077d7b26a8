//! Independent oracles shared by the property and acceptance suites.
//!
//! These deliberately avoid the implementation's recurrences: the full-DTW
//! oracle enumerates monotone paths directly, and the streaming oracle
//! reduces subsequence matching to many full-matrix problems.

use pulsedtw::dtw::{dtw_full, Band};

/// Exhaustive minimum-cost monotone alignment by depth-first enumeration
/// with branch-and-bound pruning (costs are non-negative, so any partial
/// sum at or above the incumbent can be cut).
pub fn enumerate_dtw(x: &[f64], y: &[f64]) -> f64 {
    fn go(x: &[f64], y: &[f64], t: usize, i: usize, partial: f64, best: &mut f64) {
        let cost = partial + (x[t] - y[i]).abs();
        if cost >= *best {
            return;
        }
        if t == x.len() - 1 && i == y.len() - 1 {
            *best = cost;
            return;
        }
        if t + 1 < x.len() && i + 1 < y.len() {
            go(x, y, t + 1, i + 1, cost, best);
        }
        if i + 1 < y.len() {
            go(x, y, t, i + 1, cost, best);
        }
        if t + 1 < x.len() {
            go(x, y, t + 1, i, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    go(x, y, 0, 0, 0.0, &mut best);
    best
}

/// Best full-template alignment cost over all window starts, for every
/// window end: `out[t] = min over s <= t of DTW(stream[s..=t], template)`.
/// Each start contributes one full unbanded matrix.
pub fn min_over_starts(stream: &[f64], template: &[f64]) -> Vec<f64> {
    let n = stream.len();
    let m = template.len();
    let mut best = vec![f64::INFINITY; n];
    for s in 0..n {
        let matrix = dtw_full(&stream[s..], template, Band::Unconstrained).unwrap();
        for t in s..n {
            let c = matrix.get(t - s, m - 1);
            if c < best[t] {
                best[t] = c;
            }
        }
    }
    best
}
