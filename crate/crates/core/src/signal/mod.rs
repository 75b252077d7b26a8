//! Signal ingestion and derived views.
//!
//! A [`SignalBatch`] is an immutable uniformly sampled scalar stream. All
//! derived representations (first difference, min-max scaled difference,
//! mean-normalized samples) are produced here so the rest of the pipeline
//! agrees on one definition of each.

mod filter;
mod synth;

pub use filter::{bandpass_filter, sos_response, BandpassDesign};
pub use synth::{synth_ppg, Profile, SynthGroundTruth, SynthParams};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A uniformly sampled scalar stream.
#[derive(Debug, Clone)]
pub struct SignalBatch {
    samples: Vec<f64>,
    fs: f64,
    /// Offset of the first sample within the parent stream, in seconds.
    t0: f64,
}

impl SignalBatch {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64) -> Result<SignalBatch> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("signal batch has no samples".into()));
        }
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("non-finite sample {}", samples[i]),
            });
        }
        Ok(SignalBatch { samples, fs, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced nonempty at construction
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Absolute time of sample `i` in seconds.
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs
    }

    /// A view of `self.samples[range]` re-anchored at the proper t0.
    pub fn slice(&self, start: usize, end: usize) -> Result<SignalBatch> {
        SignalBatch::new(
            self.samples[start..end].to_vec(),
            self.fs,
            self.time_of(start),
        )
    }
}

/// Derived representations of one batch.
#[derive(Debug, Clone)]
pub struct DerivedViews {
    /// Forward first difference, `deriv[i] = samples[i+1] - samples[i]`,
    /// timestamped at sample `i`.
    pub deriv: Vec<f64>,
    /// Min-max scaling of `deriv` over the batch, in [0, 1]. All zeros when
    /// the batch is constant (see `degenerate`).
    pub deriv_scaled: Vec<f64>,
    /// Samples minus the batch mean.
    pub normalized: Vec<f64>,
    /// Set when the derivative is identically zero; such a batch carries no
    /// usable structure and is rejected by the segmenter.
    pub degenerate: bool,
}

impl DerivedViews {
    /// The series every DTW comparison runs on: the first difference with
    /// its own mean removed. Amplitude bias is gone and comparisons weigh
    /// morphology only.
    pub fn dtw_series(&self) -> Vec<f64> {
        mean_normalize(&self.deriv)
    }
}

/// Remove the mean of `seq`.
pub fn mean_normalize(seq: &[f64]) -> Vec<f64> {
    if seq.is_empty() {
        return Vec::new();
    }
    let mean = seq.iter().sum::<f64>() / seq.len() as f64;
    seq.iter().map(|v| v - mean).collect()
}

/// The comparison form of a waveform: its first difference with the mean
/// removed. Every DTW comparison in the pipeline runs on this form, so
/// amplitude offsets and scale bias drop out and alignment weighs
/// morphology. Length is `raw.len() - 1`; index `i` is timestamped at
/// sample `i`.
pub fn comparison_series(raw: &[f64]) -> Vec<f64> {
    let deriv: Vec<f64> = raw.windows(2).map(|w| w[1] - w[0]).collect();
    mean_normalize(&deriv)
}

/// Compute the derived views of a batch. Requires at least two samples.
pub fn derive_views(batch: &SignalBatch) -> Result<DerivedViews> {
    let x = batch.samples();
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 samples to differentiate".into(),
        ));
    }
    let deriv: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let lo = deriv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = deriv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // A constant signal (derivative identically zero) carries no usable
    // structure; a constant nonzero slope merely has no scale to normalise.
    let degenerate = hi == lo && lo == 0.0;
    let deriv_scaled = if hi == lo {
        vec![0.0; deriv.len()]
    } else {
        deriv.iter().map(|v| (v - lo) / (hi - lo)).collect()
    };
    let normalized = mean_normalize(x);
    Ok(DerivedViews {
        deriv,
        deriv_scaled,
        normalized,
        degenerate,
    })
}

/// Load a batch from a CSV file holding one sample per line, with an
/// optional `fs=<value>` first line. `fs_override` wins when both are given.
pub fn load_csv(path: &Path, fs_override: Option<f64>) -> Result<SignalBatch> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, fs_override)
        .map_err(|e| annotate_path(e, path))
}

fn annotate_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{} ({})", msg, path.display()),
        },
        other => other,
    }
}

/// Parse CSV text in the one-sample-per-line format.
pub fn parse_csv(text: &str, fs_override: Option<f64>) -> Result<SignalBatch> {
    let mut header_fs = None;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if let Some(rest) = line.strip_prefix("fs=") {
                header_fs = Some(rest.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("invalid fs header value '{rest}'"),
                })?);
                continue;
            }
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("cannot parse sample '{line}'"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("non-finite sample '{line}'"),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("CSV contains no samples".into()));
    }
    let fs = fs_override.or(header_fs).ok_or(Error::MissingSampleRate)?;
    SignalBatch::new(samples, fs, 0.0)
}
