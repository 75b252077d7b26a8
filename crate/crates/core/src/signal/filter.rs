//! Butterworth bandpass design and zero-phase application.
//!
//! The filter is designed as second-order sections via the analog prototype,
//! a lowpass-to-bandpass transform, and the bilinear transform, then applied
//! forward-backward so fiducial timestamps are not shifted.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::SignalBatch;

/// One biquad, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Sos {
    b: [f64; 3],
    a: [f64; 3],
}

/// A designed bandpass filter ready to apply.
#[derive(Debug, Clone)]
pub struct BandpassDesign {
    sections: Vec<Sos>,
    low_hz: f64,
    fs: f64,
}

impl BandpassDesign {
    /// Design a Butterworth bandpass of the given (even) order. `order` is
    /// the order of the final bandpass filter; order/2 analog prototype
    /// poles are transformed into order poles.
    pub fn new(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<BandpassDesign> {
        if !(low_hz > 0.0) || low_hz >= high_hz {
            return Err(Error::Config(format!(
                "bandpass cutoffs must satisfy 0 < low < high, got [{low_hz}, {high_hz}]"
            )));
        }
        if high_hz >= fs / 2.0 {
            return Err(Error::Config(format!(
                "high cutoff {high_hz} Hz is at or above Nyquist ({} Hz)",
                fs / 2.0
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::Config(format!(
                "bandpass order must be even and positive, got {order}"
            )));
        }
        let n = order / 2;

        // Pre-warped analog band edges (rad/s).
        let fs2 = 2.0 * fs;
        let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
        let (wl, wh) = (warp(low_hz), warp(high_hz));
        let bw = wh - wl;
        let w0 = (wl * wh).sqrt();

        // Butterworth prototype poles on the left unit semicircle.
        let mut analog_poles = Vec::with_capacity(order);
        for k in 0..n {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = Complex64::new(theta.cos(), theta.sin());
            // Lowpass-to-bandpass: each prototype pole splits into two.
            let s = p * (bw / 2.0);
            let disc = (s * s - Complex64::new(w0 * w0, 0.0)).sqrt();
            analog_poles.push(s + disc);
            analog_poles.push(s - disc);
        }

        // Bilinear transform.
        let digital_poles: Vec<Complex64> = analog_poles
            .iter()
            .map(|&s| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s))
            .collect();

        // Group into real-coefficient quadratics. Complex poles pair with
        // their conjugates; real poles pair with each other.
        let tol = 1e-10;
        let mut complex_upper: Vec<Complex64> = Vec::new();
        let mut reals: Vec<f64> = Vec::new();
        for p in &digital_poles {
            if p.im > tol {
                complex_upper.push(*p);
            } else if p.im >= -tol {
                reals.push(p.re);
            }
        }
        reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let mut sections = Vec::with_capacity(n);
        for p in complex_upper {
            sections.push(Sos {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            });
        }
        for pair in reals.chunks(2) {
            if pair.len() == 2 {
                sections.push(Sos {
                    b: [1.0, 0.0, -1.0],
                    a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]],
                });
            }
        }
        debug_assert_eq!(sections.len(), n);

        let mut design = BandpassDesign { sections, low_hz, fs };
        // Normalize to unit gain at the geometric center of the passband.
        let center = (low_hz * high_hz).sqrt();
        let g = design.response_at(center);
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::Config(
                "bandpass design produced no passband gain; check cutoffs".into(),
            ));
        }
        for c in design.sections[0].b.iter_mut() {
            *c /= g;
        }
        Ok(design)
    }

    /// Magnitude response of a single forward pass at frequency `f` (Hz).
    pub fn response_at(&self, f: f64) -> f64 {
        let theta = 2.0 * std::f64::consts::PI * f / self.fs;
        let z1 = Complex64::from_polar(1.0, -theta);
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b[0], 0.0) + z1 * s.b[1] + z2 * s.b[2];
            let den = Complex64::new(s.a[0], 0.0) + z1 * s.a[1] + z2 * s.a[2];
            h *= num / den;
        }
        h.norm()
    }

    /// One forward pass (direct form II transposed), zero initial state.
    fn run_forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0f64, 0.0f64);
            for v in y.iter_mut() {
                let out = s.b[0] * *v + z1;
                z1 = s.b[1] * *v - s.a[1] * out + z2;
                z2 = s.b[2] * *v - s.a[2] * out;
                *v = out;
            }
        }
        y
    }

    /// Forward-backward application with odd-extension padding, so the
    /// result has zero phase and settled edges. The pad length covers the
    /// slow transient set by the low cutoff.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = ((3.0 * self.fs / self.low_hz).ceil() as usize).min(n - 1);

        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let mut y = self.run_forward(&ext);
        y.reverse();
        y = self.run_forward(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase Butterworth bandpass of a whole batch.
pub fn bandpass_filter(
    batch: &SignalBatch,
    low_hz: f64,
    high_hz: f64,
    order: usize,
) -> Result<SignalBatch> {
    let design = BandpassDesign::new(low_hz, high_hz, order, batch.fs())?;
    SignalBatch::new(design.filtfilt(batch.samples()), batch.fs(), batch.t0())
}

/// Magnitude response helper for tests and diagnostics: the effective
/// forward-backward response is the square of the single-pass response.
pub fn sos_response(design: &BandpassDesign, f: f64) -> f64 {
    let h = design.response_at(f);
    h * h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect()
    }

    /// Peak amplitude over the middle half of a series.
    fn mid_amplitude(y: &[f64]) -> f64 {
        let n = y.len();
        y[n / 4..3 * n / 4]
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn dc_is_rejected() {
        let fs = 300.0;
        let batch = SignalBatch::new(vec![1.0; (20.0 * fs) as usize], fs, 0.0).unwrap();
        let out = bandpass_filter(&batch, 0.5, 5.0, 4).unwrap();
        assert!(mid_amplitude(out.samples()) < 1e-6);
    }

    #[test]
    fn passband_sinusoid_amplitude_matches_response() {
        let fs = 300.0;
        let design = BandpassDesign::new(0.5, 5.0, 4, fs).unwrap();
        let expected = sos_response(&design, 2.0);
        assert!(expected > 0.95, "designed response at 2 Hz was {expected}");

        let x = sinusoid(2.0, fs, (40.0 * fs) as usize);
        let y = design.filtfilt(&x);
        let amp = mid_amplitude(&y);
        assert!(
            (amp - expected).abs() < 0.02,
            "measured {amp}, response oracle {expected}"
        );
        assert!((amp - 1.0).abs() < 0.05);
    }

    #[test]
    fn stopband_sinusoid_is_attenuated_40db() {
        let fs = 300.0;
        let design = BandpassDesign::new(0.5, 5.0, 4, fs).unwrap();
        let expected = sos_response(&design, 50.0);
        assert!(expected < 1e-2, "designed response at 50 Hz was {expected}");

        let x = sinusoid(50.0, fs, (40.0 * fs) as usize);
        let y = design.filtfilt(&x);
        assert!(mid_amplitude(&y) < 1e-2);
    }

    #[test]
    fn cutoff_at_nyquist_is_rejected() {
        let err = BandpassDesign::new(0.5, 150.0, 4, 300.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn odd_order_is_rejected() {
        let err = BandpassDesign::new(0.5, 5.0, 3, 300.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn double_filtering_is_stable() {
        let fs = 300.0;
        let batch = SignalBatch::new(sinusoid(2.0, fs, (40.0 * fs) as usize), fs, 0.0).unwrap();
        let once = bandpass_filter(&batch, 0.5, 5.0, 4).unwrap();
        let twice = bandpass_filter(&once, 0.5, 5.0, 4).unwrap();
        let a1 = mid_amplitude(once.samples());
        let a2 = mid_amplitude(twice.samples());
        assert!((a2 - a1).abs() / a1 < 0.10, "a1={a1} a2={a2}");
    }
}
