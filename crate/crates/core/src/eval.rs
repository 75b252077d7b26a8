//! Scoring of predicted fiducials against ground truth: classification and
//! timing metrics per class, plus interbeat-interval estimation quality.

use serde::Serialize;

use crate::fiducial::{FiducialClass, FiducialEvent};

/// One-to-one matching of predictions to truths within a tolerance.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Matched `(pred_time, truth_time)` pairs, seconds.
    pub matched: Vec<(f64, f64)>,
}

/// Greedy nearest-neighbour one-to-one matching: candidate pairs within
/// `tol_s` are taken in order of ascending time offset, each prediction and
/// truth used at most once. Both inputs must be time-sorted.
pub fn match_events(pred: &[f64], truth: &[f64], tol_s: f64) -> MatchResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    let mut j0 = 0usize;
    for (ti, &t) in truth.iter().enumerate() {
        while j0 < pred.len() && pred[j0] < t - tol_s {
            j0 += 1;
        }
        let mut j = j0;
        while j < pred.len() && pred[j] <= t + tol_s {
            pairs.push(((pred[j] - t).abs(), ti, j));
            j += 1;
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut truth_used = vec![false; truth.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut matched = Vec::new();
    for (_, ti, pj) in pairs {
        if truth_used[ti] || pred_used[pj] {
            continue;
        }
        truth_used[ti] = true;
        pred_used[pj] = true;
        matched.push((pred[pj], truth[ti]));
    }
    matched.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());

    let tp = matched.len();
    MatchResult {
        tp,
        fp: pred.len() - tp,
        fn_: truth.len() - tp,
        matched,
    }
}

/// Precision/recall/F1 with explicit degenerate-denominator flags.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassificationScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision or recall had an empty denominator and was
    /// reported as zero.
    pub degenerate: bool,
}

pub fn classification_scores(m: &MatchResult) -> ClassificationScores {
    let mut degenerate = false;
    let precision = if m.tp + m.fp > 0 {
        m.tp as f64 / (m.tp + m.fp) as f64
    } else {
        degenerate = true;
        0.0
    };
    let recall = if m.tp + m.fn_ > 0 {
        m.tp as f64 / (m.tp + m.fn_) as f64
    } else {
        degenerate = true;
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassificationScores {
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// Root-mean-square timing offset over matched pairs, in milliseconds.
/// Absent when nothing matched.
pub fn timing_rmse(m: &MatchResult) -> Option<f64> {
    if m.matched.is_empty() {
        return None;
    }
    let sum_sq: f64 = m
        .matched
        .iter()
        .map(|(p, t)| {
            let d_ms = (p - t) * 1000.0;
            d_ms * d_ms
        })
        .sum();
    Some((sum_sq / m.matched.len() as f64).sqrt())
}

/// Interbeat intervals derived from one class's event times.
#[derive(Debug, Clone, Default)]
pub struct IbiSeries {
    /// `(time_s, ibi_ms)`, stamped at the later event of each pair.
    pub points: Vec<(f64, f64)>,
}

/// Consecutive differences of event times; fewer than two events yield an
/// empty series.
pub fn compute_ibi(times: &[f64]) -> IbiSeries {
    let points = times
        .windows(2)
        .map(|w| (w[1], (w[1] - w[0]) * 1000.0))
        .collect();
    IbiSeries { points }
}

/// Drop implausible intervals and report how many survived.
pub fn plausibility_filter(series: &IbiSeries, min_ms: f64, max_ms: f64) -> (IbiSeries, usize) {
    let total = series.points.len();
    let points: Vec<(f64, f64)> = series
        .points
        .iter()
        .copied()
        .filter(|&(_, ibi)| ibi >= min_ms && ibi <= max_ms)
        .collect();
    let _ = total;
    (IbiSeries { points }, total)
}

/// Agreement between predicted and reference interval series.
#[derive(Debug, Clone, Copy, Serialize, Default)]
pub struct IbiAgreement {
    pub mae_ms: Option<f64>,
    /// Standard error of the mean absolute error.
    pub mae_sem_ms: Option<f64>,
    /// MAE over the mean reference interval of the paired set, percent.
    pub mae_pct: Option<f64>,
    pub pearson_r: Option<f64>,
    pub pair_count: usize,
    pub unpaired_truths: usize,
}

/// Pair each reference interval with the time-closest prediction within
/// `max_gap_s`; predictions may serve several references. Unpaired
/// references are excluded from the error statistics but counted.
pub fn ibi_agreement(pred: &IbiSeries, truth: &IbiSeries, max_gap_s: f64) -> IbiAgreement {
    let mut pairs: Vec<(f64, f64)> = Vec::new(); // (pred_ibi, truth_ibi)
    let mut unpaired = 0usize;
    for &(tt, tv) in &truth.points {
        let mut best: Option<(f64, f64)> = None;
        for &(pt, pv) in &pred.points {
            let gap = (pt - tt).abs();
            if gap <= max_gap_s && best.map_or(true, |(bg, _)| gap < bg) {
                best = Some((gap, pv));
            }
        }
        match best {
            Some((_, pv)) => pairs.push((pv, tv)),
            None => unpaired += 1,
        }
    }
    if pairs.is_empty() {
        return IbiAgreement {
            unpaired_truths: unpaired,
            ..Default::default()
        };
    }

    let n = pairs.len() as f64;
    let abs_errors: Vec<f64> = pairs.iter().map(|(p, t)| (p - t).abs()).collect();
    let mae = abs_errors.iter().sum::<f64>() / n;
    let sem = if pairs.len() > 1 {
        let var = abs_errors.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / (n - 1.0);
        Some((var / n).sqrt())
    } else {
        None
    };
    let truth_mean = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    let mae_pct = if truth_mean > 0.0 {
        Some(100.0 * mae / truth_mean)
    } else {
        None
    };

    IbiAgreement {
        mae_ms: Some(mae),
        mae_sem_ms: sem,
        mae_pct,
        pearson_r: pearson(&pairs),
        pair_count: pairs.len(),
        unpaired_truths: unpaired,
    }
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pairs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Rows of `(mean of pair, pred - truth)` for external difference plotting.
pub fn difference_plot_data(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pairs
        .iter()
        .map(|&(p, t)| ((p + t) / 2.0, p - t))
        .collect()
}

/// Evaluation parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalConfig {
    /// Matching window for true positives, milliseconds.
    pub tol_ms: f64,
    /// Plausible interval bounds, milliseconds.
    pub ibi_min_ms: f64,
    pub ibi_max_ms: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        // 40-100 bpm plausible heart rates give 600-1500 ms intervals.
        EvalConfig {
            tol_ms: 100.0,
            ibi_min_ms: 600.0,
            ibi_max_ms: 1500.0,
        }
    }
}

/// Per-class evaluation block.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: FiducialClass,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub rmse_ms: Option<f64>,
    pub ibi: IbiAgreement,
    pub ibi_predicted: usize,
    pub ibi_valid: usize,
    #[serde(skip)]
    pub ibi_pairs: Vec<(f64, f64)>,
}

/// Whole-record evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub classes: Vec<ClassReport>,
    /// Intervals surviving the plausibility filter, summed over classes.
    pub valid_prediction_count: usize,
    pub valid_prediction_fraction: Option<f64>,
}

impl EvalReport {
    pub fn class(&self, class: FiducialClass) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == class)
    }
}

fn times_of(events: &[FiducialEvent], class: FiducialClass) -> Vec<f64> {
    let mut t: Vec<f64> = events
        .iter()
        .filter(|e| e.class == class)
        .map(|e| e.time_s)
        .collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t
}

/// Score predictions against truth for the three annotated classes.
pub fn evaluate(
    pred: &[FiducialEvent],
    truth: &[FiducialEvent],
    config: &EvalConfig,
) -> EvalReport {
    let mut classes = Vec::new();
    let mut valid_total = 0usize;
    let mut predicted_total = 0usize;
    for class in FiducialClass::ANNOTATED {
        let p_times = times_of(pred, class);
        let t_times = times_of(truth, class);
        let matching = match_events(&p_times, &t_times, config.tol_ms / 1000.0);
        let scores = classification_scores(&matching);
        let rmse_ms = timing_rmse(&matching);

        let raw_ibi = compute_ibi(&p_times);
        let predicted = raw_ibi.points.len();
        let (valid_ibi, _) = plausibility_filter(&raw_ibi, config.ibi_min_ms, config.ibi_max_ms);
        let truth_ibi = compute_ibi(&t_times);
        let agreement = ibi_agreement(&valid_ibi, &truth_ibi, 1.0);

        // Pairs retained for difference plots.
        let mut pairs = Vec::new();
        for &(tt, tv) in &truth_ibi.points {
            let mut best: Option<(f64, f64)> = None;
            for &(pt, pv) in &valid_ibi.points {
                let gap = (pt - tt).abs();
                if gap <= 1.0 && best.map_or(true, |(bg, _)| gap < bg) {
                    best = Some((gap, pv));
                }
            }
            if let Some((_, pv)) = best {
                pairs.push((pv, tv));
            }
        }

        valid_total += valid_ibi.points.len();
        predicted_total += predicted;
        classes.push(ClassReport {
            class,
            tp: matching.tp,
            fp: matching.fp,
            fn_: matching.fn_,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            degenerate: scores.degenerate,
            rmse_ms,
            ibi: agreement,
            ibi_predicted: predicted,
            ibi_valid: valid_ibi.points.len(),
            ibi_pairs: pairs,
        });
    }

    EvalReport {
        config: *config,
        classes,
        valid_prediction_count: valid_total,
        valid_prediction_fraction: if predicted_total > 0 {
            Some(valid_total as f64 / predicted_total as f64)
        } else {
            None
        },
    }
}
