//! Run configuration: defaults, `key=value` config files, and CLI-flag
//! overrides, merged in that order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use pulsedtw::baseline::ThresholdConfig;
use pulsedtw::pipeline::{Method, PipelineParams};
use pulsedtw::template::RegionConfig;

use crate::CliError;

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub method: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub batch_seconds: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub filter_low: f64,
    pub filter_high: f64,
    pub filter_order: usize,
    pub apply_filter: bool,
    pub ensemble_k: usize,
    pub region_seconds: f64,
    pub dba_iters: usize,
    pub epsilon: Option<f64>,
    pub peak_fraction: f64,
    pub refractory_fraction: f64,
    pub slope_window: usize,
    pub tol_ms: f64,
    pub ibi_min_ms: f64,
    pub ibi_max_ms: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineParams::default();
        let t = ThresholdConfig::default();
        RunConfig {
            method: "boosted-st".into(),
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            batch_seconds: p.batch_seconds,
            f_lo: p.f_band.0,
            f_hi: p.f_band.1,
            filter_low: p.filter_low_hz,
            filter_high: p.filter_high_hz,
            filter_order: p.filter_order,
            apply_filter: p.apply_filter,
            ensemble_k: p.ensemble_k,
            region_seconds: p.region.region_s,
            dba_iters: p.region.dba_iters,
            epsilon: p.spring_epsilon,
            peak_fraction: t.peak_fraction,
            refractory_fraction: t.refractory_fraction,
            slope_window: t.slope_window,
            tol_ms: 100.0,
            ibi_min_ms: 600.0,
            ibi_max_ms: 1500.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |k: &str, v: &str| CliError::Config(format!("invalid value '{v}' for key '{k}'"));
        match key {
            "method" => self.method = value.to_string(),
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key, value))?,
            "beta" => self.beta = value.parse().map_err(|_| bad(key, value))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad(key, value))?,
            "batch_seconds" => self.batch_seconds = value.parse().map_err(|_| bad(key, value))?,
            "f_lo" => self.f_lo = value.parse().map_err(|_| bad(key, value))?,
            "f_hi" => self.f_hi = value.parse().map_err(|_| bad(key, value))?,
            "filter_low" => self.filter_low = value.parse().map_err(|_| bad(key, value))?,
            "filter_high" => self.filter_high = value.parse().map_err(|_| bad(key, value))?,
            "filter_order" => self.filter_order = value.parse().map_err(|_| bad(key, value))?,
            "apply_filter" => self.apply_filter = value.parse().map_err(|_| bad(key, value))?,
            "k" | "ensemble_k" => self.ensemble_k = value.parse().map_err(|_| bad(key, value))?,
            "region_seconds" => self.region_seconds = value.parse().map_err(|_| bad(key, value))?,
            "dba_iters" => self.dba_iters = value.parse().map_err(|_| bad(key, value))?,
            "epsilon" => self.epsilon = Some(value.parse().map_err(|_| bad(key, value))?),
            "peak_fraction" => self.peak_fraction = value.parse().map_err(|_| bad(key, value))?,
            "refractory_fraction" => {
                self.refractory_fraction = value.parse().map_err(|_| bad(key, value))?
            }
            "slope_window" => self.slope_window = value.parse().map_err(|_| bad(key, value))?,
            "tol_ms" => self.tol_ms = value.parse().map_err(|_| bad(key, value))?,
            "ibi_min_ms" => self.ibi_min_ms = value.parse().map_err(|_| bad(key, value))?,
            "ibi_max_ms" => self.ibi_max_ms = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Merge a `key=value` config file (`#` starts a comment).
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Method, CliError> {
        Method::parse(&self.method).map_err(CliError::from)
    }

    /// Validate and convert into pipeline parameters.
    pub fn pipeline_params(&self) -> Result<PipelineParams, CliError> {
        if !(self.tol_ms > 0.0) {
            return Err(CliError::Config("tol_ms must be positive".into()));
        }
        if !(self.ibi_min_ms > 0.0 && self.ibi_min_ms < self.ibi_max_ms) {
            return Err(CliError::Config(
                "interval bounds must satisfy 0 < ibi_min_ms < ibi_max_ms".into(),
            ));
        }
        let params = PipelineParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            batch_seconds: self.batch_seconds,
            f_band: (self.f_lo, self.f_hi),
            filter_low_hz: self.filter_low,
            filter_high_hz: self.filter_high,
            filter_order: self.filter_order,
            apply_filter: self.apply_filter,
            ensemble_k: self.ensemble_k,
            region: RegionConfig {
                region_s: self.region_seconds,
                dba_iters: self.dba_iters,
            },
            spring_epsilon: self.epsilon,
            threshold: ThresholdConfig {
                peak_fraction: self.peak_fraction,
                refractory_fraction: self.refractory_fraction,
                slope_window: self.slope_window,
            },
        };
        params.validate()?;
        self.method()?;
        Ok(params)
    }

    /// Flat echo of every setting, for the run manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("method".into(), self.method.clone());
        map.insert("alpha".into(), self.alpha.to_string());
        map.insert("beta".into(), self.beta.to_string());
        map.insert("gamma".into(), self.gamma.to_string());
        map.insert("batch_seconds".into(), self.batch_seconds.to_string());
        map.insert("f_lo".into(), self.f_lo.to_string());
        map.insert("f_hi".into(), self.f_hi.to_string());
        map.insert("filter_low".into(), self.filter_low.to_string());
        map.insert("filter_high".into(), self.filter_high.to_string());
        map.insert("filter_order".into(), self.filter_order.to_string());
        map.insert("apply_filter".into(), self.apply_filter.to_string());
        map.insert("ensemble_k".into(), self.ensemble_k.to_string());
        map.insert("region_seconds".into(), self.region_seconds.to_string());
        map.insert("dba_iters".into(), self.dba_iters.to_string());
        map.insert(
            "epsilon".into(),
            self.epsilon.map_or("auto".into(), |e| e.to_string()),
        );
        map.insert("peak_fraction".into(), self.peak_fraction.to_string());
        map.insert(
            "refractory_fraction".into(),
            self.refractory_fraction.to_string(),
        );
        map.insert("slope_window".into(), self.slope_window.to_string());
        map.insert("tol_ms".into(), self.tol_ms.to_string());
        map.insert("ibi_min_ms".into(), self.ibi_min_ms.to_string());
        map.insert("ibi_max_ms".into(), self.ibi_max_ms.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        assert!(cfg.pipeline_params().is_ok());
        assert_eq!(cfg.alpha, 0.7);
        assert_eq!(cfg.beta, 1.3);
        assert_eq!(cfg.gamma, 5000.0);
        assert_eq!(cfg.batch_seconds, 60.0);
    }

    #[test]
    fn alpha_at_least_beta_is_rejected_with_a_message() {
        let mut cfg = RunConfig::default();
        cfg.set("alpha", "1.4").unwrap();
        cfg.set("beta", "1.2").unwrap();
        let err = cfg.pipeline_params().unwrap_err();
        let msg = format!("{err:?}");
        assert!(msg.contains("alpha"), "unhelpful message: {msg}");
    }

    #[test]
    fn alpha_of_one_or_more_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.set("alpha", "1.0").unwrap();
        assert!(cfg.pipeline_params().is_err());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("no_such_key", "1"),
            Err(CliError::Config(_))
        ));
    }
}
