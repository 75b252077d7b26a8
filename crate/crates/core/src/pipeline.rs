//! Record-level orchestration: preprocessing, batch cadence with tail
//! carry-over, method dispatch, ensemble maintenance, template
//! bootstrapping, and the scaling benchmark.

use std::time::Instant;

use crate::baseline::{
    adaptive_threshold_detect, calibrate_epsilon, springdtw_segment, SpringConfig, ThresholdConfig,
};
use crate::dtw::Band;
use crate::error::{Error, Result};
use crate::fiducial::{annotate_stream, FiducialClass, FiducialEvent, Provenance, Template, TemplateAnnotations};
use crate::segment::{estimate_cycle_length, segment_stream, EndpointTrace, Segment};
use crate::signal::{bandpass_filter, derive_views, synth_ppg, DerivedViews, SignalBatch, SynthParams};
use crate::template::{select_optimal, update_ensemble, Ensemble, RegionAnalysis, RegionConfig, UpdateOutcome};

/// Which extraction method a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Boosted endpoint search with the single prime template.
    BoostedSt,
    /// Boosted endpoint search with the self-updating template ensemble.
    BoostedDt,
    /// Threshold-gated streaming subsequence matching.
    Spring,
    /// Amplitude/distance-heuristic adaptive thresholding.
    Adaptive,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "boosted-st" => Ok(Method::BoostedSt),
            "boosted-dt" => Ok(Method::BoostedDt),
            "spring" => Ok(Method::Spring),
            "adaptive" => Ok(Method::Adaptive),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected boosted-st, boosted-dt, spring, adaptive)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::BoostedSt => "boosted-st",
            Method::BoostedDt => "boosted-dt",
            Method::Spring => "spring",
            Method::Adaptive => "adaptive",
        }
    }
}

/// All tunables of a record run.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub batch_seconds: f64,
    /// Dominant-frequency search band, Hz.
    pub f_band: (f64, f64),
    pub filter_low_hz: f64,
    pub filter_high_hz: f64,
    pub filter_order: usize,
    /// Disable to feed a record through unfiltered.
    pub apply_filter: bool,
    /// Ensemble capacity for the dynamic-template method.
    pub ensemble_k: usize,
    pub region: RegionConfig,
    /// Subsequence threshold for the spring baseline; calibrated from the
    /// first batch when absent.
    pub spring_epsilon: Option<f64>,
    pub threshold: ThresholdConfig,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            alpha: 0.7,
            beta: 1.3,
            gamma: 5000.0,
            batch_seconds: 60.0,
            f_band: (0.5, 3.0),
            filter_low_hz: 0.5,
            filter_high_hz: 5.0,
            filter_order: 4,
            apply_filter: true,
            ensemble_k: 3,
            region: RegionConfig::default(),
            spring_epsilon: None,
            threshold: ThresholdConfig::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 1.0 {
            return Err(Error::Config(format!(
                "alpha must be below 1 (the window must open before one average cycle), got {}",
                self.alpha
            )));
        }
        if self.alpha >= self.beta {
            return Err(Error::Config(format!(
                "alpha ({}) must be smaller than beta ({})",
                self.alpha, self.beta
            )));
        }
        if self.beta <= 1.0 {
            return Err(Error::Config(format!(
                "beta must exceed 1 (the window must cover one average cycle), got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.batch_seconds > 0.0) {
            return Err(Error::Config("batch length must be positive".into()));
        }
        if self.ensemble_k < 1 {
            return Err(Error::Config("ensemble capacity must be at least 1".into()));
        }
        if !(self.region.region_s > 0.0) || self.region.dba_iters == 0 {
            return Err(Error::Config("region length and averaging iterations must be positive".into()));
        }
        if let Some(e) = self.spring_epsilon {
            if !(e >= 0.0) {
                return Err(Error::Config("epsilon must be non-negative".into()));
            }
        }
        self.threshold.validate()?;
        if !(self.f_band.0 > 0.0 && self.f_band.0 < self.f_band.1) {
            return Err(Error::Config("frequency band must satisfy 0 < lo < hi".into()));
        }
        Ok(())
    }
}

/// One diagnostic trace row, keyed by the derivative timestamp the distance
/// was computed at. Candidate likelihoods sit on the row whose distance
/// they consumed.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub sample_index: usize,
    pub d: f64,
    pub p_c: Option<f64>,
    pub p_d: Option<f64>,
    pub p_e: Option<f64>,
}

/// Everything a record run produces.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub segments: Vec<Segment>,
    pub events: Vec<FiducialEvent>,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
    /// Templates generated by the dynamic-template method, for export.
    pub generated_templates: Vec<Template>,
}

struct BatchAnalysis {
    template: Template,
    segments: Vec<Segment>,
    trace: EndpointTrace,
    avg_path_cost: f64,
}

fn analyze_with(
    batch: &SignalBatch,
    views: &DerivedViews,
    template: &Template,
    l_x: f64,
    params: &PipelineParams,
) -> Result<BatchAnalysis> {
    let (segments, trace) = segment_stream(
        batch,
        views,
        template,
        l_x,
        params.alpha,
        params.beta,
        params.gamma,
    )?;
    let avg_path_cost = if segments.is_empty() {
        f64::INFINITY
    } else {
        segments.iter().map(|s| s.path.cost).sum::<f64>() / segments.len() as f64
    };
    Ok(BatchAnalysis {
        template: template.clone(),
        segments,
        trace,
        avg_path_cost,
    })
}

/// Run one record with the selected method.
///
/// The record is processed in batches. For the boosted methods, samples
/// after the last accepted endpoint are carried into the next batch so no
/// segment straddles a seam; onsets shared across seams deduplicate in the
/// aggregated event list.
pub fn run_record(
    record: &SignalBatch,
    prime: &Template,
    method: Method,
    params: &PipelineParams,
) -> Result<RunOutput> {
    params.validate()?;
    let filtered = if params.apply_filter {
        bandpass_filter(record, params.filter_low_hz, params.filter_high_hz, params.filter_order)?
    } else {
        record.clone()
    };

    match method {
        Method::BoostedSt | Method::BoostedDt => run_boosted(&filtered, prime, method, params),
        Method::Spring => run_spring(&filtered, prime, params),
        Method::Adaptive => run_adaptive(&filtered, params),
    }
}

fn run_boosted(
    record: &SignalBatch,
    prime: &Template,
    method: Method,
    params: &PipelineParams,
) -> Result<RunOutput> {
    let fs = record.fs();
    let n = record.len();
    let batch_len = ((params.batch_seconds * fs).round() as usize).max(16);
    let k = if method == Method::BoostedDt { params.ensemble_k } else { 1 };
    let mut ensemble = Ensemble::new(prime.clone(), k)?;
    let update_every = (params.region.region_s / params.batch_seconds).ceil().max(1.0) as usize;

    let mut out = RunOutput::default();
    let mut pos = 0usize;
    let mut batch_no = 0usize;
    let mut last_lx: Option<f64> = None;
    let mut trace_written_until = 0usize;

    while pos < n {
        let end = (pos + batch_len).min(n);
        if end - pos < 16 {
            break;
        }
        let batch = record.slice(pos, end)?;
        let views = derive_views(&batch)?;
        if views.degenerate {
            out.warnings.push(format!("batch at sample {pos}: constant signal, skipped"));
            pos = end;
            continue;
        }

        let l_x = match estimate_cycle_length(&batch, params.f_band) {
            Ok(est) => {
                last_lx = Some(est.l_x);
                est.l_x
            }
            Err(e) => match last_lx {
                Some(lx) => {
                    out.warnings.push(format!(
                        "batch at sample {pos}: cycle-length estimate failed ({e}); reusing previous"
                    ));
                    lx
                }
                None => {
                    out.warnings.push(format!(
                        "batch at sample {pos}: cycle-length estimate failed ({e}); skipped"
                    ));
                    pos = end;
                    continue;
                }
            },
        };

        // Every member analyzes the batch; the best one's results are kept.
        let mut analyses = Vec::new();
        for member in ensemble.members() {
            analyses.push(analyze_with(&batch, &views, member, l_x, params)?);
        }
        let results: Vec<RegionAnalysis> = analyses
            .iter()
            .map(|a| RegionAnalysis {
                template_id: a.template.id(),
                avg_path_cost: a.avg_path_cost,
                segment_count: a.segments.len(),
            })
            .collect();

        let chosen = match select_optimal(&ensemble, &results) {
            Ok(id) => id,
            Err(_) => {
                out.warnings.push(format!("batch at sample {pos}: no template found any segment"));
                pos = end;
                batch_no += 1;
                continue;
            }
        };
        ensemble.record_win(chosen);
        let mut adopted = analyses
            .into_iter()
            .find(|a| a.template.id() == chosen)
            .expect("chosen analysis exists");

        if method == Method::BoostedDt && (batch_no + 1) % update_every == 0 {
            let cycles: Vec<Vec<f64>> = adopted
                .segments
                .iter()
                .map(|s| batch.samples()[s.t_s..=s.t_e].to_vec())
                .collect();
            let target_len = (l_x.round() as usize).max(8);
            match update_ensemble(
                &mut ensemble,
                &cycles,
                chosen,
                target_len,
                batch_no,
                params.region.dba_iters,
            ) {
                UpdateOutcome::Added { id } | UpdateOutcome::Replaced { id, .. } => {
                    let fresh = ensemble
                        .members()
                        .iter()
                        .find(|t| t.id() == id)
                        .expect("new member present")
                        .clone();
                    out.generated_templates.push(fresh.clone());
                    // A replacement was triggered by drift: re-analyze the
                    // region with the fresh template and keep the better pass.
                    if ensemble.len() == ensemble.capacity() {
                        if let Ok(again) = analyze_with(&batch, &views, &fresh, l_x, params) {
                            if again.avg_path_cost <= adopted.avg_path_cost
                                && !again.segments.is_empty()
                            {
                                adopted = again;
                            }
                        }
                    }
                }
                UpdateOutcome::Skipped { reason } => {
                    out.warnings.push(format!("batch at sample {pos}: template update skipped: {reason}"));
                }
                UpdateOutcome::Unchanged => {}
            }
        }

        let annotated = annotate_stream(&batch, &adopted.segments, std::slice::from_ref(&adopted.template));
        out.warnings.extend(annotated.warnings);
        for mut ev in annotated.events {
            ev.stream_idx += pos;
            out.events.push(ev);
        }
        for t in 0..adopted.trace.distance.len() {
            let global = pos + t;
            if global < trace_written_until {
                continue;
            }
            out.trace.push(TraceRow {
                sample_index: global,
                d: adopted.trace.distance[t],
                p_c: None,
                p_d: None,
                p_e: None,
            });
        }
        trace_written_until = pos + adopted.trace.distance.len();
        for rec in &adopted.trace.candidates {
            let row_idx = pos + rec.idx - 1;
            if let Some(row) = out.trace.iter_mut().rev().find(|r| r.sample_index == row_idx) {
                row.p_c = Some(rec.p_c);
                row.p_d = Some(rec.p_d);
                row.p_e = Some(rec.p_e);
            }
        }

        let advanced_to = adopted.segments.last().map(|s| pos + s.t_e);
        for mut seg in adopted.segments {
            seg.t_s += pos;
            seg.t_e += pos;
            out.segments.push(seg);
        }

        batch_no += 1;
        pos = match advanced_to {
            // Carry the incomplete tail cycle into the next batch.
            Some(t_e) if t_e > pos && end < n => t_e,
            _ => end,
        };
    }

    dedup_events(&mut out.events);
    Ok(out)
}

fn run_spring(record: &SignalBatch, prime: &Template, params: &PipelineParams) -> Result<RunOutput> {
    let fs = record.fs();
    let n = record.len();
    let batch_len = ((params.batch_seconds * fs).round() as usize).max(16);

    let mut out = RunOutput::default();
    let mut epsilon = params.spring_epsilon;
    let mut pos = 0usize;
    while pos < n {
        let end = (pos + batch_len).min(n);
        if end - pos < 16 {
            break;
        }
        let batch = record.slice(pos, end)?;
        let views = derive_views(&batch)?;
        if views.degenerate {
            out.warnings.push(format!("batch at sample {pos}: constant signal, skipped"));
            pos = end;
            continue;
        }
        let eps = *epsilon.get_or_insert_with(|| calibrate_epsilon(&views, prime));
        let (segments, annotated) = springdtw_segment(&batch, &views, prime, SpringConfig::new(eps)?)?;
        out.warnings.extend(annotated.warnings);
        for mut seg in segments {
            seg.t_s += pos;
            seg.t_e += pos;
            out.segments.push(seg);
        }
        for mut ev in annotated.events {
            ev.stream_idx += pos;
            out.events.push(ev);
        }
        pos = end;
    }

    if out.events.is_empty() {
        out.warnings.push(format!(
            "spring matcher reported nothing (epsilon = {:?})",
            epsilon
        ));
    }
    dedup_events(&mut out.events);
    Ok(out)
}

fn run_adaptive(record: &SignalBatch, params: &PipelineParams) -> Result<RunOutput> {
    let fs = record.fs();
    let n = record.len();
    let batch_len = ((params.batch_seconds * fs).round() as usize).max(16);

    let mut out = RunOutput::default();
    let mut pos = 0usize;
    while pos < n {
        let end = (pos + batch_len).min(n);
        if end - pos < 16 {
            break;
        }
        let batch = record.slice(pos, end)?;
        let views = derive_views(&batch)?;
        if views.degenerate {
            pos = end;
            continue;
        }
        for mut ev in adaptive_threshold_detect(&batch, &views, &params.threshold)? {
            ev.stream_idx += pos;
            out.events.push(ev);
        }
        pos = end;
    }
    dedup_events(&mut out.events);
    Ok(out)
}

fn dedup_events(events: &mut Vec<FiducialEvent>) {
    events.sort_by(|a, b| {
        a.stream_idx
            .cmp(&b.stream_idx)
            .then(a.class.cmp(&b.class))
    });
    events.dedup_by(|a, b| a.stream_idx == b.stream_idx && a.class == b.class);
    events.sort_by(|a, b| {
        a.time_s
            .partial_cmp(&b.time_s)
            .unwrap()
            .then(a.class.cmp(&b.class))
    });
}

/// Derive a prime template from a record by taking the first clean cycle
/// the heuristic detector finds: a cycle whose length sits within 10% of
/// the median onset spacing and contains a systolic peak. Annotations are
/// read off the cycle itself and should be confirmed offline.
pub fn bootstrap_prime(record: &SignalBatch, params: &PipelineParams) -> Result<Template> {
    params.validate()?;
    let filtered = if params.apply_filter {
        bandpass_filter(record, params.filter_low_hz, params.filter_high_hz, params.filter_order)?
    } else {
        record.clone()
    };
    let fs = filtered.fs();
    let batch_len = ((params.batch_seconds * fs).round() as usize).min(filtered.len());
    let batch = filtered.slice(0, batch_len)?;
    let views = derive_views(&batch)?;
    let events = adaptive_threshold_detect(&batch, &views, &params.threshold)?;

    let onsets: Vec<usize> = events
        .iter()
        .filter(|e| e.class == FiducialClass::Onset)
        .map(|e| e.stream_idx)
        .collect();
    if onsets.len() < 3 {
        return Err(Error::InsufficientData(
            "bootstrap needs at least three detected onsets".into(),
        ));
    }
    let mut spacings: Vec<usize> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    spacings.sort_unstable();
    let median = spacings[spacings.len() / 2] as f64;

    let sys_times: Vec<usize> = events
        .iter()
        .filter(|e| e.class == FiducialClass::Sys)
        .map(|e| e.stream_idx)
        .collect();

    for w in onsets.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a) as f64;
        if (len - median).abs() > 0.1 * median {
            continue;
        }
        if !sys_times.iter().any(|&s| s > a && s < b) {
            continue;
        }
        // Same smoothing generated templates receive before labeling.
        let cycle = crate::template::smooth(&batch.samples()[a..=b], 5);
        let mut sys = 0;
        for j in 0..cycle.len() {
            if cycle[j] > cycle[sys] {
                sys = j;
            }
        }
        let mut ms = 0;
        for j in 0..sys.max(1) {
            if cycle[j + 1] - cycle[j] > cycle[ms + 1] - cycle[ms] {
                ms = j;
            }
        }
        if !(0 < ms && ms < sys) {
            continue;
        }
        return Template::new(
            0,
            cycle,
            fs,
            TemplateAnnotations { onset: 0, ms, sys },
            Provenance::Prime,
        );
    }
    Err(Error::InsufficientData(
        "no clean cycle found to bootstrap a template from".into(),
    ))
}

/// One scaling measurement.
#[derive(Debug, Clone, Copy)]
pub struct BenchRow {
    pub duration_s: f64,
    pub n_samples: usize,
    pub wall_ms: f64,
}

/// Time the single-template pipeline over synthetic records of increasing
/// length at a fixed template length. Each duration is run `repeats` times
/// and the median wall time is kept.
pub fn bench_scaling(
    durations_s: &[f64],
    params: &PipelineParams,
    seed: u64,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    params.validate()?;
    let repeats = repeats.max(1);

    // Fixed template from a reference record so m stays constant.
    let (reference, _) = synth_ppg(&SynthParams {
        duration_s: 60.0,
        noise_sigma: 0.01,
        seed,
        ..Default::default()
    })?;
    let prime = bootstrap_prime(&reference, params)?;

    let mut rows = Vec::with_capacity(durations_s.len());
    for &duration in durations_s {
        let (record, _) = synth_ppg(&SynthParams {
            duration_s: duration,
            noise_sigma: 0.01,
            seed,
            ..Default::default()
        })?;
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let out = run_record(&record, &prime, Method::BoostedSt, params)?;
            let elapsed = start.elapsed().as_secs_f64() * 1000.0;
            assert!(!out.segments.is_empty() || duration < 5.0);
            times.push(elapsed);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BenchRow {
            duration_s: duration,
            n_samples: record.len(),
            wall_ms: times[times.len() / 2],
        });
    }
    Ok(rows)
}

/// Default band used when aligning a detected cycle to a template outside
/// the segmenter (exposed for diagnostics and tests).
pub fn alignment_band(n: usize, m: usize) -> Band {
    Band::default_for(n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Profile;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::BoostedSt, Method::BoostedDt, Method::Spring, Method::Adaptive] {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }

    #[test]
    fn params_validation_catches_bad_windows() {
        let mut p = PipelineParams::default();
        p.alpha = 1.3;
        p.beta = 0.9;
        assert!(matches!(p.validate(), Err(Error::Config(_))));

        let mut p = PipelineParams::default();
        p.alpha = 0.9;
        p.beta = 0.9;
        assert!(p.validate().is_err());

        assert!(PipelineParams::default().validate().is_ok());
    }

    #[test]
    fn bootstrap_finds_a_plausible_cycle() {
        let (record, truth) = synth_ppg(&SynthParams {
            duration_s: 30.0,
            noise_sigma: 0.005,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let prime = bootstrap_prime(&record, &PipelineParams::default()).unwrap();
        let expected = (truth.ibi_ms[0] / 1000.0 * record.fs()) as f64;
        let m = prime.samples().len() as f64;
        assert!(
            (m - expected).abs() < 0.2 * expected,
            "template length {m} vs cycle length {expected}"
        );
        let ann = prime.annotations();
        assert!(ann.onset < ann.ms && ann.ms < ann.sys);
    }

    #[test]
    fn single_template_run_covers_a_clean_record() {
        let (record, truth) = synth_ppg(&SynthParams {
            duration_s: 90.0,
            noise_sigma: 0.01,
            seed: 7,
            ..Default::default()
        })
        .unwrap();
        let params = PipelineParams::default();
        let prime = bootstrap_prime(&record, &params).unwrap();
        let out = run_record(&record, &prime, Method::BoostedSt, &params).unwrap();

        let expected = truth.cycle_count() as f64;
        let got = out.segments.len() as f64;
        assert!(
            (got - expected).abs() <= 3.0,
            "{got} segments for {expected} cycles"
        );
        // Batch seams must not duplicate onsets.
        let onsets: Vec<usize> = out
            .events
            .iter()
            .filter(|e| e.class == FiducialClass::Onset)
            .map(|e| e.stream_idx)
            .collect();
        for w in onsets.windows(2) {
            assert!(w[0] < w[1], "duplicate onset at {}", w[0]);
        }
    }

    #[test]
    fn dynamic_run_with_unit_capacity_matches_single_template() {
        let (record, _) = synth_ppg(&SynthParams {
            duration_s: 80.0,
            noise_sigma: 0.01,
            seed: 12,
            ..Default::default()
        })
        .unwrap();
        let mut params = PipelineParams::default();
        params.ensemble_k = 1;
        let prime = bootstrap_prime(&record, &params).unwrap();

        let st = run_record(&record, &prime, Method::BoostedSt, &params).unwrap();
        let dt = run_record(&record, &prime, Method::BoostedDt, &params).unwrap();
        assert_eq!(st.segments.len(), dt.segments.len());
        let st_ev: Vec<(usize, FiducialClass)> =
            st.events.iter().map(|e| (e.stream_idx, e.class)).collect();
        let dt_ev: Vec<(usize, FiducialClass)> =
            dt.events.iter().map(|e| (e.stream_idx, e.class)).collect();
        assert_eq!(st_ev, dt_ev);
        assert!(dt.generated_templates.is_empty());
    }

    #[test]
    fn dynamic_run_grows_the_ensemble() {
        let (record, _) = synth_ppg(&SynthParams {
            duration_s: 180.0,
            noise_sigma: 0.01,
            dicrotic_strength: Profile::Ramp { start: 0.1, end: 0.5 },
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let params = PipelineParams::default();
        let prime = bootstrap_prime(&record, &params).unwrap();
        let out = run_record(&record, &prime, Method::BoostedDt, &params).unwrap();
        assert!(
            !out.generated_templates.is_empty(),
            "three regions should have generated at least one template"
        );
        for t in &out.generated_templates {
            assert!(matches!(t.provenance(), Provenance::Generated { .. }));
        }
    }

    #[test]
    fn trace_rows_cover_the_record_once() {
        let (record, _) = synth_ppg(&SynthParams {
            duration_s: 70.0,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let params = PipelineParams::default();
        let prime = bootstrap_prime(&record, &params).unwrap();
        let out = run_record(&record, &prime, Method::BoostedSt, &params).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[0].sample_index < w[1].sample_index);
        }
        assert!(out.trace.len() > record.len() / 2);
    }
}
