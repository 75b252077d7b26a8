//! Reference comparison methods: threshold-gated streaming subsequence
//! matching, and amplitude/distance-heuristic adaptive thresholding.

use crate::dtw::{dtw_full, traceback, Band, SpringState};
use crate::error::{Error, Result};
use crate::fiducial::{annotate_stream, AnnotatedStream, FiducialClass, FiducialEvent, Template};
use crate::segment::Segment;
use crate::signal::{DerivedViews, SignalBatch};
use crate::template::smooth;

/// Threshold configuration for the streaming matcher.
#[derive(Debug, Clone, Copy)]
pub struct SpringConfig {
    /// Maximum accumulated subsequence distance for a match report.
    pub epsilon: f64,
}

impl SpringConfig {
    pub fn new(epsilon: f64) -> Result<SpringConfig> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {epsilon}")));
        }
        Ok(SpringConfig { epsilon })
    }
}

/// Running subsequence distance of the batch against the template, one
/// value per derivative sample.
fn distance_series(views: &DerivedViews, template: &Template) -> Vec<f64> {
    let stream = views.dtw_series();
    let t_cmp = template.cmp();
    let mut spring = SpringState::new(t_cmp.len());
    let mut out = Vec::with_capacity(stream.len());
    for &v in &stream {
        spring.update(v, t_cmp);
        out.push(spring.best_cost());
    }
    out
}

/// Default threshold rule: half the median subsequence distance over a
/// warm-up pass of the stream. The method's sensitivity to this choice is
/// the reason it serves as a baseline.
pub fn calibrate_epsilon(views: &DerivedViews, template: &Template) -> f64 {
    let mut d = distance_series(views, template);
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    0.5 * d[d.len() / 2]
}

/// Streaming subsequence matching: report a segment wherever the running
/// distance is a strict local minimum at or under epsilon. Fiducials are
/// mapped through the same banded-path machinery as the main pipeline.
pub fn springdtw_segment(
    batch: &SignalBatch,
    views: &DerivedViews,
    template: &Template,
    config: SpringConfig,
) -> Result<(Vec<Segment>, AnnotatedStream)> {
    if views.degenerate {
        return Ok((Vec::new(), AnnotatedStream::default()));
    }
    let stream = views.dtw_series();
    let t_cmp = template.cmp();

    let mut spring = SpringState::new(t_cmp.len());
    let mut cost = Vec::with_capacity(stream.len());
    let mut starts = Vec::with_capacity(stream.len());
    for &v in &stream {
        spring.update(v, t_cmp);
        cost.push(spring.best_cost());
        starts.push(spring.best_start());
    }

    let mut segments = Vec::new();
    let mut last_dir = 0i8;
    for t in 1..cost.len() {
        let step = cost[t] - cost[t - 1];
        if step > 0.0 {
            if last_dir < 0 && cost[t - 1] <= config.epsilon {
                report_match(batch, template, starts[t - 1], t - 1, cost[t - 1], &mut segments);
            }
            last_dir = 1;
        } else if step < 0.0 {
            last_dir = -1;
        }
    }

    let events = annotate_stream(batch, &segments, std::slice::from_ref(template));
    Ok((segments, events))
}

fn report_match(
    batch: &SignalBatch,
    template: &Template,
    cmp_start: usize,
    cmp_end: usize,
    _cost: f64,
    segments: &mut Vec<Segment>,
) {
    // A window over derivative samples [s, t] spans raw samples [s, t+1].
    let t_s = cmp_start;
    let t_e = cmp_end + 1;
    if t_e - t_s < 3 {
        return; // too short to align or annotate
    }
    let seg_cmp = crate::signal::comparison_series(&batch.samples()[t_s..=t_e]);
    let band = Band::default_for(seg_cmp.len(), template.cmp().len());
    let Ok(matrix) = dtw_full(&seg_cmp, template.cmp(), band) else {
        return;
    };
    let Ok(path) = traceback(&matrix, seg_cmp.len() - 1) else {
        return;
    };
    segments.push(Segment {
        t_s,
        t_e,
        template_id: template.id(),
        path,
        // The matcher carries no heuristic likelihood.
        p_e_at_end: 0.0,
    });
}

/// Adaptive-thresholding configuration.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdConfig {
    /// Fraction of the running amplitude a peak must clear.
    pub peak_fraction: f64,
    /// Refractory spacing as a fraction of the running cycle length.
    pub refractory_fraction: f64,
    /// Moving-average width applied to the derivative before slope-peak
    /// detection, in samples.
    pub slope_window: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            peak_fraction: 0.5,
            refractory_fraction: 0.4,
            slope_window: 5,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_fraction > 0.0 && self.peak_fraction < 1.0) {
            return Err(Error::Config("peak_fraction must lie in (0, 1)".into()));
        }
        if !(self.refractory_fraction > 0.0 && self.refractory_fraction < 1.0) {
            return Err(Error::Config("refractory_fraction must lie in (0, 1)".into()));
        }
        if self.slope_window == 0 {
            return Err(Error::Config("slope_window must be positive".into()));
        }
        Ok(())
    }
}

/// Strict local maxima (plateau-last) of a series, as (index, value).
fn local_maxima(series: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut last_dir = 0i8;
    for i in 1..series.len() {
        let step = series[i] - series[i - 1];
        if step < 0.0 {
            if last_dir > 0 {
                out.push((i - 1, series[i - 1]));
            }
            last_dir = -1;
        } else if step > 0.0 {
            last_dir = 1;
        }
    }
    out
}

/// Decaying-threshold peak picker with amplitude and spacing heuristics.
///
/// A peak is accepted when its height above `baseline` clears
/// `peak_fraction` of the running amplitude; the threshold holds until
/// 1.2 cycle lengths after the last beat, then decays linearly to zero by
/// 2.5 cycle lengths so the detector can re-lock after amplitude drops.
fn pick_peaks(
    series: &[f64],
    baseline: f64,
    fs: f64,
    cfg: &ThresholdConfig,
) -> Vec<usize> {
    let peaks = local_maxima(series);
    if peaks.is_empty() {
        return Vec::new();
    }

    // Seed the running amplitude from the strongest peak in the first two
    // seconds (falling back to the first peak).
    let warmup_end = (2.0 * fs) as usize;
    let mut amp = peaks
        .iter()
        .take_while(|(i, _)| *i < warmup_end)
        .map(|(_, h)| h - baseline)
        .fold(f64::NEG_INFINITY, f64::max);
    if !amp.is_finite() {
        amp = peaks[0].1 - baseline;
    }
    if amp <= 0.0 {
        return Vec::new();
    }

    let mut ibi_est = fs * 60.0 / 75.0; // neutral prior until spacing locks in
    let mut last: Option<usize> = None;
    let mut accepted = Vec::new();
    for &(idx, height) in &peaks {
        let rel = height - baseline;
        if rel <= 0.0 {
            continue;
        }
        let threshold = match last {
            None => cfg.peak_fraction * amp,
            Some(prev) => {
                let dt = (idx - prev) as f64;
                if dt < cfg.refractory_fraction * ibi_est {
                    continue; // inside the refractory window
                }
                let decay = if dt <= 1.2 * ibi_est {
                    1.0
                } else {
                    (1.0 - (dt - 1.2 * ibi_est) / (1.3 * ibi_est)).max(0.0)
                };
                cfg.peak_fraction * amp * decay
            }
        };
        if rel > threshold {
            if let Some(prev) = last {
                let dt = (idx - prev) as f64;
                if dt > 0.4 * ibi_est && dt < 1.8 * ibi_est {
                    ibi_est = 0.8 * ibi_est + 0.2 * dt;
                }
            }
            amp = 0.8 * amp + 0.2 * rel;
            last = Some(idx);
            accepted.push(idx);
        }
    }
    accepted
}

/// Walk left from a peak to the valley that precedes it.
fn preceding_valley(x: &[f64], peak: usize) -> usize {
    let mut j = peak;
    while j > 0 && x[j - 1] <= x[j] {
        j -= 1;
    }
    j
}

/// Heuristic fiducial detector over one batch: systolic peaks from the
/// amplitude regime, max-slope points from the same regime on the smoothed
/// derivative, onsets as the valley preceding each systolic peak.
pub fn adaptive_threshold_detect(
    batch: &SignalBatch,
    views: &DerivedViews,
    config: &ThresholdConfig,
) -> Result<Vec<FiducialEvent>> {
    config.validate()?;
    if views.degenerate {
        return Ok(Vec::new());
    }
    let x = batch.samples();
    let fs = batch.fs();
    let baseline = x.iter().sum::<f64>() / x.len() as f64;

    let sys = pick_peaks(x, baseline, fs, config);

    let smoothed = smooth(&views.deriv, config.slope_window);
    let d_baseline = smoothed.iter().sum::<f64>() / smoothed.len() as f64;
    let ms = pick_peaks(&smoothed, d_baseline, fs, config);

    let mut onsets: Vec<usize> = sys.iter().map(|&p| preceding_valley(x, p)).collect();
    onsets.dedup();

    let mut events = Vec::new();
    for (ord, idx) in sys.iter().enumerate() {
        events.push(FiducialEvent {
            class: FiducialClass::Sys,
            stream_idx: *idx,
            time_s: batch.time_of(*idx),
            segment_id: ord,
        });
    }
    for (ord, idx) in ms.iter().enumerate() {
        events.push(FiducialEvent {
            class: FiducialClass::Ms,
            stream_idx: *idx,
            time_s: batch.time_of(*idx),
            segment_id: ord,
        });
    }
    for (ord, idx) in onsets.iter().enumerate() {
        events.push(FiducialEvent {
            class: FiducialClass::Onset,
            stream_idx: *idx,
            time_s: batch.time_of(*idx),
            segment_id: ord,
        });
    }
    events.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).unwrap().then(a.class.cmp(&b.class)));
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiducial::{Provenance, TemplateAnnotations};
    use crate::signal::{derive_views, synth_ppg, SynthParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Template whose raw samples start and end at the same level, so the
    /// comparison-series mean is exactly zero and a verbatim embedding
    /// matches at distance zero.
    fn closed_template() -> Template {
        let m = 40;
        let samples: Vec<f64> = (0..m)
            .map(|i| {
                let z = (i as f64 - 19.5) / 4.0;
                (-0.5 * z * z).exp()
            })
            .collect();
        let sys = 19;
        let mut ms = 0;
        for j in 0..sys {
            if samples[j + 1] - samples[j] > samples[ms + 1] - samples[ms] {
                ms = j;
            }
        }
        Template::new(3, samples, 300.0, TemplateAnnotations { onset: 0, ms, sys }, Provenance::Prime)
            .unwrap()
    }

    #[test]
    fn exact_embedding_is_detected_at_distance_zero() {
        let template = closed_template();
        let level = template.samples()[0];
        let mut raw = vec![level; 25];
        raw.extend_from_slice(template.samples());
        raw.extend(vec![level; 25]);
        // Same first and last value: the stream's comparison mean is zero too.
        let batch = SignalBatch::new(raw, 300.0, 0.0).unwrap();
        let views = derive_views(&batch).unwrap();

        let (segments, _) =
            springdtw_segment(&batch, &views, &template, SpringConfig::new(1e-6).unwrap()).unwrap();
        assert_eq!(segments.len(), 1);
        assert_eq!(segments[0].t_s, 25);
        assert_eq!(segments[0].t_e, 25 + template.samples().len() - 1);
    }

    #[test]
    fn zero_epsilon_on_noise_detects_nothing() {
        let template = closed_template();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = SignalBatch::new(raw, 300.0, 0.0).unwrap();
        let views = derive_views(&batch).unwrap();
        let (segments, _) =
            springdtw_segment(&batch, &views, &template, SpringConfig::new(0.0).unwrap()).unwrap();
        assert!(segments.is_empty());
    }

    #[test]
    fn detection_count_is_monotone_in_epsilon() {
        let template = closed_template();
        let (batch, _) = synth_ppg(&SynthParams {
            duration_s: 20.0,
            noise_sigma: 0.02,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let views = derive_views(&batch).unwrap();
        let mut last = 0usize;
        for epsilon in [0.0, 0.05, 0.2, 1.0, f64::INFINITY] {
            let (segments, _) =
                springdtw_segment(&batch, &views, &template, SpringConfig { epsilon }).unwrap();
            assert!(segments.len() >= last, "count dropped at epsilon={epsilon}");
            last = segments.len();
        }
        // epsilon = infinity reports at every strict local minimum long
        // enough to align.
        assert!(last > 0);
    }

    /// Greedy one-to-one count of detections within `tol` of truths.
    fn hits(pred: &[usize], truth: &[usize], tol: i64) -> usize {
        let mut used = vec![false; pred.len()];
        let mut tp = 0;
        for &t in truth {
            let mut best: Option<(i64, usize)> = None;
            for (j, &p) in pred.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = (p as i64 - t as i64).abs();
                if d <= tol && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            if let Some((_, j)) = best {
                used[j] = true;
                tp += 1;
            }
        }
        tp
    }

    #[test]
    fn adaptive_detector_handles_clean_synth() {
        let (batch, truth) = synth_ppg(&SynthParams {
            duration_s: 60.0,
            ..Default::default()
        })
        .unwrap();
        let views = derive_views(&batch).unwrap();
        let events = adaptive_threshold_detect(&batch, &views, &ThresholdConfig::default()).unwrap();
        let sys: Vec<usize> = events
            .iter()
            .filter(|e| e.class == FiducialClass::Sys)
            .map(|e| e.stream_idx)
            .collect();
        let tol = (0.1 * batch.fs()) as i64;
        let tp = hits(&sys, &truth.sys_idx, tol) as f64;
        let precision = tp / sys.len().max(1) as f64;
        let recall = tp / truth.sys_idx.len() as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        assert!(f1 >= 0.9, "clean-synth Sys F1 = {f1}");
    }

    #[test]
    fn amplitude_halving_costs_recall() {
        let (batch, truth) = synth_ppg(&SynthParams {
            duration_s: 60.0,
            ..Default::default()
        })
        .unwrap();
        let views_clean = derive_views(&batch).unwrap();
        let cfg = ThresholdConfig::default();
        let tol = (0.1 * batch.fs()) as i64;

        let recall_of = |b: &SignalBatch, v: &DerivedViews| {
            let events = adaptive_threshold_detect(b, v, &cfg).unwrap();
            let sys: Vec<usize> = events
                .iter()
                .filter(|e| e.class == FiducialClass::Sys)
                .map(|e| e.stream_idx)
                .collect();
            hits(&sys, &truth.sys_idx, tol) as f64 / truth.sys_idx.len() as f64
        };

        let clean_recall = recall_of(&batch, &views_clean);

        let half = batch.len() / 2;
        let mut degraded = batch.samples().to_vec();
        for v in degraded.iter_mut().skip(half) {
            *v *= 0.5;
        }
        let degraded = SignalBatch::new(degraded, batch.fs(), 0.0).unwrap();
        let views_deg = derive_views(&degraded).unwrap();
        let degraded_recall = recall_of(&degraded, &views_deg);

        assert!(
            degraded_recall < clean_recall,
            "degraded {degraded_recall} vs clean {clean_recall}"
        );
    }

    #[test]
    fn flat_signal_detects_nothing() {
        let batch = SignalBatch::new(vec![1.0; 600], 300.0, 0.0).unwrap();
        let views = derive_views(&batch).unwrap();
        let events = adaptive_threshold_detect(&batch, &views, &ThresholdConfig::default()).unwrap();
        assert!(events.is_empty());
    }
}
