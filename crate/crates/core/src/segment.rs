//! The probabilistic endpoint decision core: cycle-length estimation,
//! candidate enumeration, likelihood fusion, and the windowed search state
//! machine that turns a stream into tiled cycle segments.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dtw::{dtw_full, traceback, Band, SpringState, WarpingPath};
use crate::error::{Error, Result};
use crate::fiducial::Template;
use crate::signal::{comparison_series, DerivedViews, SignalBatch};

/// Peak magnitude must exceed this multiple of the in-band median magnitude
/// to count as a dominant frequency rather than noise.
const NOISE_FLOOR_FACTOR: f64 = 4.0;

/// Average cycle length estimated from the dominant frequency of one batch.
#[derive(Debug, Clone, Copy)]
pub struct CycleLengthEstimate {
    /// Average cycle length, in samples.
    pub l_x: f64,
    /// Dominant frequency, Hz.
    pub f_star: f64,
    /// Span of the batch the estimate came from, seconds.
    pub batch_span_s: f64,
}

/// Dominant-frequency cycle-length estimate over a batch.
///
/// The batch is mean-removed, Hann-windowed, and zero-padded to 4x its
/// length so the spectral peak resolves to a fraction of a bin; a parabolic
/// fit on the peak's neighbours refines it further. The search is
/// restricted to `f_band` to keep respiratory and harmonic peaks out.
pub fn estimate_cycle_length(
    batch: &SignalBatch,
    f_band: (f64, f64),
) -> Result<CycleLengthEstimate> {
    let (f_lo, f_hi) = f_band;
    let fs = batch.fs();
    if !(f_lo > 0.0) || f_lo >= f_hi || f_hi > fs / 2.0 {
        return Err(Error::Config(format!(
            "frequency band must satisfy 0 < lo < hi <= fs/2, got [{f_lo}, {f_hi}] at fs={fs}"
        )));
    }
    // At least two complete cycles of the slowest plausible rhythm.
    let min_span = 2.0 / f_lo;
    if batch.duration_s() < min_span {
        return Err(Error::InsufficientData(format!(
            "batch spans {:.2}s but {min_span:.2}s is needed for two cycles at {f_lo} Hz",
            batch.duration_s()
        )));
    }

    let x = batch.samples();
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let nfft = 4 * n;
    let mut buf: Vec<Complex64> = Vec::with_capacity(nfft);
    for (i, &v) in x.iter().enumerate() {
        let w = if n > 1 {
            let arg = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
            0.5 - 0.5 * arg.cos()
        } else {
            1.0
        };
        buf.push(Complex64::new((v - mean) * w, 0.0));
    }
    buf.resize(nfft, Complex64::new(0.0, 0.0));

    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);

    let bin_hz = fs / nfft as f64;
    let k_lo = ((f_lo / bin_hz).ceil() as usize).max(1);
    let k_hi = ((f_hi / bin_hz).floor() as usize).min(nfft / 2);
    if k_lo >= k_hi {
        return Err(Error::Config("frequency band narrower than one bin".into()));
    }

    let mags: Vec<f64> = (k_lo..=k_hi).map(|k| buf[k].norm()).collect();
    let (off, peak) = mags
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let mut sorted = mags.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    if !(peak > NOISE_FLOOR_FACTOR * median) || peak <= 0.0 {
        return Err(Error::NoDominantFrequency);
    }

    // Parabolic refinement around the peak bin.
    let k_star = k_lo + off;
    let delta = if k_star > k_lo && k_star < k_hi {
        let (a, b, c) = (buf[k_star - 1].norm(), peak, buf[k_star + 1].norm());
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };

    let f_star = (k_star as f64 + delta) * bin_hz;
    Ok(CycleLengthEstimate {
        l_x: fs / f_star,
        f_star,
        batch_span_s: batch.duration_s(),
    })
}

/// A local minimum of the signal, scored by the steepness of the upstroke
/// that follows it.
#[derive(Debug, Clone, Copy)]
pub struct CandidateEndpoint {
    /// Sample index of the minimum.
    pub idx: usize,
    /// Scaled derivative value at the following slope peak, in [0, 1].
    pub g_t: f64,
    /// Heuristic endpoint likelihood, in [0, 1].
    pub p_c: f64,
}

/// Every strict local minimum of the batch becomes a candidate; plateaus
/// contribute their last index. A candidate's score comes from the first
/// local maximum of the scaled derivative at or after it; candidates whose
/// upstroke never crests before the batch ends keep the rising tail value,
/// and candidates with no rise at all are dropped.
pub fn detect_candidates(
    batch: &SignalBatch,
    views: &DerivedViews,
) -> Result<Vec<CandidateEndpoint>> {
    if views.degenerate {
        return Err(Error::DegenerateBatch(
            "constant batch has no candidate endpoints".into(),
        ));
    }
    let x = batch.samples();
    let deriv = &views.deriv;
    let lo = deriv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = deriv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut out = Vec::new();
    let mut last_dir = 0i8;
    for i in 1..x.len() {
        let step = x[i] - x[i - 1];
        if step > 0.0 {
            if last_dir < 0 {
                // x[i-1] ends a descending run: a local minimum.
                if let Some(peak) = next_slope_peak(&views.deriv_scaled, i - 1) {
                    let g_t = views.deriv_scaled[peak];
                    let p_c = heuristic_likelihood(deriv[peak], lo, hi)?;
                    out.push(CandidateEndpoint { idx: i - 1, g_t, p_c });
                }
            }
            last_dir = 1;
        } else if step < 0.0 {
            last_dir = -1;
        }
    }
    Ok(out)
}

/// First local maximum of `series` at or after `from`, where `from` sits on
/// a rising edge by construction. A series still rising at its end counts
/// its last sample as the peak.
fn next_slope_peak(series: &[f64], from: usize) -> Option<usize> {
    let mut dir = 1i8;
    for j in from..series.len().saturating_sub(1) {
        let step = series[j + 1] - series[j];
        if step > 0.0 {
            dir = 1;
        } else if step < 0.0 {
            if dir > 0 {
                return Some(j);
            }
            dir = -1;
        }
    }
    if dir > 0 && from < series.len() {
        Some(series.len() - 1)
    } else {
        None
    }
}

/// Linear min-max score of a slope value against the batch extremes.
pub fn heuristic_likelihood(g: f64, batch_min: f64, batch_max: f64) -> Result<f64> {
    if !(batch_max > batch_min) {
        return Err(Error::DegenerateBatch(format!(
            "derivative extremes collapsed: min={batch_min}, max={batch_max}"
        )));
    }
    Ok((g - batch_min) / (batch_max - batch_min))
}

/// Morphology likelihood of an accumulated DTW distance: exp(-gamma * d).
pub fn morphology_likelihood(d: f64, gamma: f64) -> f64 {
    debug_assert!(d >= 0.0 && gamma > 0.0);
    (-gamma * d).exp()
}

/// Endpoint probability: the heuristic and morphology likelihoods fused by
/// product.
pub fn endpoint_probability(p_c: f64, p_d: f64) -> f64 {
    p_c * p_d
}

/// Endpoint score in log domain: ln(p_c) - gamma * d. Ordering matches
/// `endpoint_probability` wherever the product is representable, and stays
/// meaningful when exp(-gamma * d) underflows.
fn log_endpoint_score(p_c: f64, d: f64, gamma: f64) -> f64 {
    p_c.ln() - gamma * d
}

/// Per-candidate likelihood record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub idx: usize,
    pub d: f64,
    pub p_c: f64,
    pub p_d: f64,
    pub p_e: f64,
}

/// Diagnostic trace of one segmentation pass: every candidate's likelihoods
/// plus the running subsequence distance per derivative sample.
#[derive(Debug, Clone, Default)]
pub struct EndpointTrace {
    pub candidates: Vec<TraceRecord>,
    pub distance: Vec<f64>,
}

/// A detected cycle.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_s: usize,
    pub t_e: usize,
    pub template_id: u32,
    /// Alignment of the segment's comparison series to the template's,
    /// with stream indices local to the segment.
    pub path: WarpingPath,
    pub p_e_at_end: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.t_e - self.t_s
    }

    pub fn is_empty(&self) -> bool {
        false // t_s < t_e enforced at construction
    }
}

#[derive(Debug, Clone, Copy)]
struct ScoredCandidate {
    idx: usize,
    p_c: f64,
    score: f64,
    p_e: f64,
}

/// Segment one batch against one template.
///
/// The search anchors at the earliest candidate. A candidate inside the
/// exclusion zone `(anchor, anchor + alpha*l_x)` supersedes the anchor only
/// when it scores a strictly higher heuristic likelihood — an unconditional
/// reset would chain through every dicrotic-notch minimum and never emit a
/// segment. Among candidates in `[anchor + alpha*l_x, anchor + beta*l_x]`
/// the one with the greatest endpoint probability becomes the endpoint and
/// the next anchor; an empty window re-anchors at the first candidate
/// beyond it. A window still open when the batch ends is left unsettled so
/// the caller can carry the tail into the next batch.
pub fn segment_stream(
    batch: &SignalBatch,
    views: &DerivedViews,
    template: &Template,
    l_x: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<(Vec<Segment>, EndpointTrace)> {
    if !(alpha < 1.0 && 1.0 < beta) {
        return Err(Error::Config(format!(
            "window factors must satisfy alpha < 1 < beta, got alpha={alpha}, beta={beta}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    if !(l_x > 1.0) {
        return Err(Error::Config(format!("cycle length {l_x} is not usable")));
    }
    if views.degenerate {
        return Err(Error::DegenerateBatch(
            "constant batch cannot be segmented".into(),
        ));
    }

    let candidates = detect_candidates(batch, views)?;
    let stream = views.dtw_series();
    let t_cmp = template.cmp();

    // One spring column update per derivative sample; candidates read the
    // distance of the window ending at their own index.
    let mut spring = SpringState::new(t_cmp.len());
    let mut distance = Vec::with_capacity(stream.len());
    for &v in &stream {
        spring.update(v, t_cmp);
        distance.push(spring.best_cost());
    }

    let mut trace = EndpointTrace {
        candidates: Vec::with_capacity(candidates.len()),
        distance,
    };
    let mut scored = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let d = trace.distance[c.idx - 1]; // derivative sample ending at c.idx
        let p_d = morphology_likelihood(d, gamma);
        let p_e = endpoint_probability(c.p_c, p_d);
        trace.candidates.push(TraceRecord {
            idx: c.idx,
            d,
            p_c: c.p_c,
            p_d,
            p_e,
        });
        scored.push(ScoredCandidate {
            idx: c.idx,
            p_c: c.p_c,
            score: log_endpoint_score(c.p_c, d, gamma),
            p_e,
        });
    }
    if scored.is_empty() {
        return Ok((Vec::new(), trace));
    }

    let lo = alpha * l_x;
    let hi = beta * l_x;
    let stream_end = batch.len() - 1;

    let mut segments = Vec::new();
    let mut anchor = 0usize;
    let mut window: Vec<usize> = Vec::new();
    let mut ci = 1usize;
    while ci < scored.len() {
        let gap = (scored[ci].idx - scored[anchor].idx) as f64;
        if gap < lo {
            if scored[ci].p_c > scored[anchor].p_c {
                anchor = ci;
                window.clear();
            }
            ci += 1;
        } else if gap <= hi {
            window.push(ci);
            ci += 1;
        } else if let Some(best) = settle_window(&scored, &window) {
            emit_segment(batch, template, &scored[anchor], &scored[best], &mut segments)?;
            anchor = best;
            window.clear();
            // Reconsider the current candidate against the new anchor.
        } else {
            anchor = ci;
            window.clear();
            ci += 1;
        }
    }
    // Settle the tail only if the whole window fit inside the batch.
    if !window.is_empty() && (stream_end - scored[anchor].idx) as f64 >= hi {
        if let Some(best) = settle_window(&scored, &window) {
            emit_segment(batch, template, &scored[anchor], &scored[best], &mut segments)?;
        }
    }

    Ok((segments, trace))
}

/// Argmax of the endpoint score over the window; ties keep the earlier
/// candidate so cycles are not stretched.
fn settle_window(scored: &[ScoredCandidate], window: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &ci in window {
        match best {
            None => best = Some(ci),
            Some(b) => {
                if scored[ci].score > scored[b].score {
                    best = Some(ci);
                }
            }
        }
    }
    best
}

fn emit_segment(
    batch: &SignalBatch,
    template: &Template,
    start: &ScoredCandidate,
    end: &ScoredCandidate,
    segments: &mut Vec<Segment>,
) -> Result<()> {
    let seg_cmp = comparison_series(&batch.samples()[start.idx..=end.idx]);
    let band = Band::default_for(seg_cmp.len(), template.cmp().len());
    let matrix = dtw_full(&seg_cmp, template.cmp(), band)?;
    let path = traceback(&matrix, seg_cmp.len() - 1)?;
    segments.push(Segment {
        t_s: start.idx,
        t_e: end.idx,
        template_id: template.id(),
        path,
        p_e_at_end: end.p_e,
    });
    Ok(())
}
