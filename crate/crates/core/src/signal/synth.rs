//! Synthetic quasi-periodic pulse waveform generator with exact ground
//! truth, used as the desk-scale oracle for the whole pipeline.
//!
//! Each cycle is two Gaussian bumps on a zero baseline: a dominant systolic
//! pulse and a smaller dicrotic pulse. Respiration sinusoidally modulates
//! amplitude and period; heart rate and dicrotic strength may ramp over the
//! record. Ground truth is read off the noise-free samples, so it stays
//! valid under every parameter setting: the onset is the sample minimum at
//! the cycle seam, MS is the steepest first difference in the cycle, Sys is
//! the cycle maximum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::SignalBatch;

/// A scalar parameter that is either fixed or ramps linearly over the
/// record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Constant(f64),
    Ramp { start: f64, end: f64 },
}

impl Profile {
    /// Value at a record fraction in [0, 1].
    pub fn at(&self, frac: f64) -> f64 {
        match *self {
            Profile::Constant(v) => v,
            Profile::Ramp { start, end } => start + (end - start) * frac.clamp(0.0, 1.0),
        }
    }

    fn lo(&self) -> f64 {
        match *self {
            Profile::Constant(v) => v,
            Profile::Ramp { start, end } => start.min(end),
        }
    }

    fn hi(&self) -> f64 {
        match *self {
            Profile::Constant(v) => v,
            Profile::Ramp { start, end } => start.max(end),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub hr_bpm: Profile,
    pub fs: f64,
    pub duration_s: f64,
    /// Fractional depth of the respiratory amplitude modulation; half of it
    /// modulates the period.
    pub resp_mod_depth: f64,
    pub resp_rate_hz: f64,
    /// Dicrotic bump amplitude relative to the systolic bump.
    pub dicrotic_strength: Profile,
    /// Additive white noise, absolute units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            hr_bpm: Profile::Constant(72.0),
            fs: 300.0,
            duration_s: 60.0,
            resp_mod_depth: 0.0,
            resp_rate_hz: 0.25,
            dicrotic_strength: Profile::Constant(0.3),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Exact fiducial ground truth for a synthetic record.
///
/// `onset_idx` has one trailing entry beyond the last complete cycle, so
/// cycle `i` spans `[onset_idx[i], onset_idx[i+1]]` and contains
/// `ms_idx[i]` and `sys_idx[i]`.
#[derive(Debug, Clone)]
pub struct SynthGroundTruth {
    pub sys_idx: Vec<usize>,
    pub ms_idx: Vec<usize>,
    pub onset_idx: Vec<usize>,
    /// Cycle lengths in milliseconds (consecutive onset spacing).
    pub ibi_ms: Vec<f64>,
}

impl SynthGroundTruth {
    pub fn cycle_count(&self) -> usize {
        self.sys_idx.len()
    }
}

// Bump placement within a cycle, as phase fractions.
const SYS_CENTER: f64 = 0.30;
const SYS_WIDTH: f64 = 0.10;
const DIC_CENTER: f64 = 0.65;
const DIC_WIDTH: f64 = 0.14;

#[inline]
fn bump(phase: f64, center: f64, width: f64) -> f64 {
    let z = (phase - center) / width;
    (-0.5 * z * z).exp()
}

/// Generate a synthetic record and its ground truth. Deterministic in
/// `seed`.
pub fn synth_ppg(params: &SynthParams) -> Result<(SignalBatch, SynthGroundTruth)> {
    let p = params;
    if p.hr_bpm.lo() < 40.0 || p.hr_bpm.hi() > 180.0 {
        return Err(Error::Config(format!(
            "heart rate profile must stay within [40, 180] bpm, got [{}, {}]",
            p.hr_bpm.lo(),
            p.hr_bpm.hi()
        )));
    }
    if p.fs < 100.0 {
        return Err(Error::Config(format!("fs must be >= 100 Hz, got {}", p.fs)));
    }
    if p.duration_s <= 0.0 {
        return Err(Error::Config("duration must be positive".into()));
    }
    if !(0.0..1.0).contains(&p.resp_mod_depth) {
        return Err(Error::Config("resp_mod_depth must be in [0, 1)".into()));
    }
    if p.dicrotic_strength.lo() < 0.0 || p.dicrotic_strength.hi() >= 1.0 {
        return Err(Error::Config(
            "dicrotic_strength must be in [0, 1) so the systolic apex dominates".into(),
        ));
    }
    if p.noise_sigma < 0.0 {
        return Err(Error::Config("noise_sigma must be non-negative".into()));
    }

    // Cycle seams in continuous time, one cycle beyond the record end so
    // the trailing partial cycle still has shape.
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut seams = vec![0.0f64];
    loop {
        let t = *seams.last().unwrap();
        let hr = p.hr_bpm.at(t / p.duration_s);
        let mut period = 60.0 / hr;
        period *= 1.0 + 0.5 * p.resp_mod_depth * (two_pi * p.resp_rate_hz * t).sin();
        seams.push(t + period);
        if t > p.duration_s {
            break;
        }
    }

    let n = (p.duration_s * p.fs).round() as usize;
    let mut clean = vec![0.0f64; n];
    let mut seam_of = 0usize; // index of the seam at or before the current time
    for (i, sample) in clean.iter_mut().enumerate() {
        let t = i as f64 / p.fs;
        while seam_of + 1 < seams.len() && seams[seam_of + 1] <= t {
            seam_of += 1;
        }
        // Bump tails are negligible beyond one neighbouring cycle.
        let lo = seam_of.saturating_sub(1);
        let hi = (seam_of + 1).min(seams.len() - 2);
        let mut v = 0.0;
        for k in lo..=hi {
            let period = seams[k + 1] - seams[k];
            let phase = (t - seams[k]) / period;
            let amp = 1.0 + p.resp_mod_depth * (two_pi * p.resp_rate_hz * seams[k]).sin();
            let dic = p.dicrotic_strength.at(seams[k] / p.duration_s);
            v += amp * (bump(phase, SYS_CENTER, SYS_WIDTH) + dic * bump(phase, DIC_CENTER, DIC_WIDTH));
        }
        *sample = v;
    }

    // Ground-truth onsets: the sample minimum in a window straddling each
    // interior seam. The window stays clear of the dicrotic dip.
    let mut onset_idx = Vec::new();
    for k in 1..seams.len() - 1 {
        let period = seams[k + 1] - seams[k];
        let lo = ((seams[k] - 0.10 * period) * p.fs).floor().max(1.0) as usize;
        let hi_f = ((seams[k] + 0.25 * period) * p.fs).ceil() as usize;
        let hi = hi_f.min(n.saturating_sub(2));
        if lo >= hi {
            continue;
        }
        let mut best = lo;
        for j in lo..=hi {
            if clean[j] < clean[best] {
                best = j;
            }
        }
        onset_idx.push(best);
    }
    onset_idx.dedup();
    if onset_idx.len() < 2 {
        return Err(Error::InsufficientData(
            "record too short for a complete cycle".into(),
        ));
    }

    let mut sys_idx = Vec::with_capacity(onset_idx.len() - 1);
    let mut ms_idx = Vec::with_capacity(onset_idx.len() - 1);
    let mut ibi_ms = Vec::with_capacity(onset_idx.len() - 1);
    for w in onset_idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut sys = a;
        for j in a..=b {
            if clean[j] > clean[sys] {
                sys = j;
            }
        }
        let mut ms = a;
        let mut best_rise = f64::NEG_INFINITY;
        for j in a..b {
            let rise = clean[j + 1] - clean[j];
            if rise > best_rise {
                best_rise = rise;
                ms = j;
            }
        }
        debug_assert!(a < ms && ms < sys, "fiducial ordering violated");
        sys_idx.push(sys);
        ms_idx.push(ms);
        ibi_ms.push((b - a) as f64 * 1000.0 / p.fs);
    }

    let mut samples = clean;
    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        for s in samples.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }

    let batch = SignalBatch::new(samples, p.fs, 0.0)?;
    Ok((
        batch,
        SynthGroundTruth {
            sys_idx,
            ms_idx,
            onset_idx,
            ibi_ms,
        },
    ))
}
