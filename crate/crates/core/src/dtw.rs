//! Dynamic-time-warping kernels: banded full-matrix DTW, streaming
//! subsequence matching with per-cell start bookkeeping, and warping-path
//! traceback.
//!
//! All comparisons are over scalar series; the pairwise cost is the absolute
//! difference. Cells excluded by the band constraint hold `f64::INFINITY`,
//! which is strictly greater than any achievable accumulated cost and
//! saturates under addition and `min`.

use crate::error::{Error, Result};

/// Absolute difference between two samples.
///
/// Symmetric, non-negative, zero iff the samples are equal.
#[inline]
pub fn pairwise_dist(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Warping-path search-space constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// Every cell is admissible.
    Unconstrained,
    /// Sakoe-Chiba band: cell (t, i) is admissible iff |t - i| <= half_width.
    SakoeChiba(usize),
}

impl Band {
    /// Default band for aligning a detected cycle against a template:
    /// 10% of the longer sequence, widened to |n - m| so the corner cell
    /// stays reachable when lengths differ by more than 10%.
    pub fn default_for(n: usize, m: usize) -> Band {
        let tenth = (0.10 * n.max(m) as f64).ceil() as usize;
        Band::SakoeChiba(tenth.max(n.abs_diff(m)))
    }

    #[inline]
    fn admits(&self, t: usize, i: usize) -> bool {
        match *self {
            Band::Unconstrained => true,
            Band::SakoeChiba(w) => t.abs_diff(i) <= w,
        }
    }
}

/// Accumulated-cost matrix for a full DTW alignment of `x` (rows) to `y`
/// (columns).
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub n: usize,
    pub m: usize,
    pub band: Band,
    cells: Vec<f64>,
}

impl CostMatrix {
    /// Accumulated cost at stream index `t`, template index `i`.
    /// Out-of-band cells read as +infinity.
    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.cells[t * self.m + i]
    }

    /// Cost of the best full alignment (bottom-right cell).
    pub fn final_cost(&self) -> f64 {
        self.get(self.n - 1, self.m - 1)
    }
}

/// Full-matrix DTW with a generic pairwise cost.
///
/// Recurrence: `cells[t][i] = cost(x[t], y[i]) + min(left, down, diag)` with
/// out-of-range and out-of-band predecessors infinite, anchored at
/// `cells[0][0] = cost(x[0], y[0])`.
pub fn dtw_full_with<F>(x: &[f64], y: &[f64], band: Band, cost: F) -> Result<CostMatrix>
where
    F: Fn(f64, f64) -> f64,
{
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("dtw_full requires nonempty sequences".into()));
    }
    if let Band::SakoeChiba(w) = band {
        if w < n.abs_diff(m) {
            return Err(Error::NoPath(format!(
                "band half-width {w} < |n-m| = {}; no monotone path reaches the corner",
                n.abs_diff(m)
            )));
        }
    }

    let mut cells = vec![f64::INFINITY; n * m];
    for t in 0..n {
        for i in 0..m {
            if !band.admits(t, i) {
                continue;
            }
            let d = cost(x[t], y[i]);
            let acc = if t == 0 && i == 0 {
                d
            } else {
                let diag = if t > 0 && i > 0 { cells[(t - 1) * m + i - 1] } else { f64::INFINITY };
                let vert = if i > 0 { cells[t * m + i - 1] } else { f64::INFINITY };
                let horiz = if t > 0 { cells[(t - 1) * m + i] } else { f64::INFINITY };
                d + diag.min(vert).min(horiz)
            };
            cells[t * m + i] = acc;
        }
    }

    let matrix = CostMatrix { n, m, band, cells };
    if !matrix.final_cost().is_finite() {
        return Err(Error::NoPath("no admissible path reaches the final cell".into()));
    }
    Ok(matrix)
}

/// Full-matrix DTW under the absolute-difference cost.
pub fn dtw_full(x: &[f64], y: &[f64], band: Band) -> Result<CostMatrix> {
    dtw_full_with(x, y, band, pairwise_dist)
}

/// An alignment extracted from a cost matrix.
///
/// `pairs` is ordered, starts at `(s, 0)`, ends at `(e, m-1)`, and each step
/// moves by (+1,0), (0,+1) or (+1,+1). `cost` is the accumulated cell value
/// at the endpoint.
#[derive(Debug, Clone)]
pub struct WarpingPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpingPath {
    pub fn start(&self) -> (usize, usize) {
        self.pairs[0]
    }

    pub fn end(&self) -> (usize, usize) {
        *self.pairs.last().expect("path is nonempty")
    }
}

/// Backward walk from `(end_stream_index, m-1)` through locally minimal
/// predecessors. Ties break diagonal, then vertical, then horizontal, which
/// keeps paths short and fiducial mapping stable.
pub fn traceback(matrix: &CostMatrix, end_stream_index: usize) -> Result<WarpingPath> {
    let m = matrix.m;
    if end_stream_index >= matrix.n {
        return Err(Error::NoPath(format!(
            "endpoint {end_stream_index} outside matrix of {} rows",
            matrix.n
        )));
    }
    let cost = matrix.get(end_stream_index, m - 1);
    if !cost.is_finite() {
        return Err(Error::NoPath(format!(
            "endpoint ({end_stream_index}, {}) lies outside the band",
            m - 1
        )));
    }

    let mut pairs = Vec::with_capacity(matrix.n.max(m));
    let (mut t, mut i) = (end_stream_index, m - 1);
    loop {
        pairs.push((t, i));
        if i == 0 {
            if t == 0 {
                break;
            }
            t -= 1; // row 0 accumulates horizontally back to the anchor
            continue;
        }
        if t == 0 {
            i -= 1;
            continue;
        }
        let diag = matrix.get(t - 1, i - 1);
        let vert = matrix.get(t, i - 1);
        let horiz = matrix.get(t - 1, i);
        if diag <= vert && diag <= horiz {
            t -= 1;
            i -= 1;
        } else if vert <= horiz {
            i -= 1;
        } else {
            t -= 1;
        }
    }
    pairs.reverse();
    Ok(WarpingPath { pairs, cost })
}

/// Streaming subsequence-matching column state against one template.
///
/// After processing stream samples `x_0..=x_t`, `acc[i]` holds the minimum
/// accumulated cost of aligning some suffix window `x_s..=x_t` to the
/// template prefix `y_0..=y_i`, and `start[i]` holds that window's `s`.
/// `acc[m-1]` is therefore the best subsequence match ending at `t`.
#[derive(Debug, Clone)]
pub struct SpringState {
    acc: Vec<f64>,
    start: Vec<usize>,
    processed: usize,
}

impl SpringState {
    pub fn new(template_len: usize) -> SpringState {
        assert!(template_len > 0, "template must be nonempty");
        SpringState {
            acc: vec![f64::INFINITY; template_len],
            start: vec![0; template_len],
            processed: 0,
        }
    }

    pub fn template_len(&self) -> usize {
        self.acc.len()
    }

    /// Number of stream samples consumed so far.
    pub fn samples_seen(&self) -> usize {
        self.processed
    }

    /// Best accumulated cost of a subsequence ending at the current sample.
    pub fn best_cost(&self) -> f64 {
        *self.acc.last().expect("nonempty template")
    }

    /// Stream index where the best subsequence ending at the current sample
    /// begins.
    pub fn best_start(&self) -> usize {
        *self.start.last().expect("nonempty template")
    }

    /// Consume one stream sample; O(m).
    ///
    /// Row 0 restarts the subsequence at the current index (a restart is
    /// never costlier than extending because costs are non-negative). Start
    /// indices propagate along the argmin predecessor with ties broken
    /// diagonal, vertical, horizontal.
    pub fn update(&mut self, x_t: f64, y: &[f64]) {
        let m = self.acc.len();
        assert_eq!(y.len(), m, "template length must match state");
        let t = self.processed;
        let first_column = t == 0;

        let mut prev_diag_acc = f64::INFINITY;
        let mut prev_diag_start = 0usize;
        for i in 0..m {
            let d = pairwise_dist(x_t, y[i]);
            let horiz_acc = if first_column { f64::INFINITY } else { self.acc[i] };
            let horiz_start = self.start[i];

            let (new_acc, new_start) = if i == 0 {
                (d, t)
            } else {
                let diag = prev_diag_acc;
                let vert = self.acc[i - 1]; // already updated this column
                if diag <= vert && diag <= horiz_acc {
                    (d + diag, prev_diag_start)
                } else if vert <= horiz_acc {
                    (d + vert, self.start[i - 1])
                } else {
                    (d + horiz_acc, horiz_start)
                }
            };

            prev_diag_acc = horiz_acc;
            prev_diag_start = horiz_start;
            self.acc[i] = new_acc;
            self.start[i] = new_start;
        }
        self.processed += 1;
    }
}
