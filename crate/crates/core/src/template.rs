//! Template ensemble maintenance: consensus generation by barycenter
//! averaging, automatic labeling from the prime template, optimal-template
//! selection, and the update/eviction protocol.

use std::collections::BTreeMap;

use crate::dtw::{dtw_full, dtw_full_with, traceback, Band};
use crate::error::{Error, Result};
use crate::fiducial::{FiducialClass, Provenance, Template, TemplateAnnotations};
use crate::signal::comparison_series;

/// Region cadence and consensus parameters. The consensus length is always
/// the region's average cycle length.
#[derive(Debug, Clone, Copy)]
pub struct RegionConfig {
    /// Region length in seconds.
    pub region_s: f64,
    /// Barycenter-averaging iteration cap.
    pub dba_iters: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        // One region per one-minute batch keeps template cadence aligned
        // with cycle-length estimation.
        RegionConfig {
            region_s: 60.0,
            dba_iters: 10,
        }
    }
}

/// Linear-interpolation resample onto a uniform grid of `new_len` points,
/// endpoints preserved.
pub fn resample(seq: &[f64], new_len: usize) -> Vec<f64> {
    assert!(new_len >= 2, "resample target must be at least 2");
    assert!(!seq.is_empty(), "cannot resample an empty sequence");
    let n = seq.len();
    if n == 1 {
        return vec![seq[0]; new_len];
    }
    let scale = (n - 1) as f64 / (new_len - 1) as f64;
    (0..new_len)
        .map(|j| {
            let pos = j as f64 * scale;
            let i = (pos.floor() as usize).min(n - 2);
            let frac = pos - i as f64;
            seq[i] + frac * (seq[i + 1] - seq[i])
        })
        .collect()
}

/// Centered moving average with shrinking edge windows.
pub fn smooth(seq: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = seq.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            seq[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn sq_cost(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

/// Squared-cost DTW distance used inside barycenter averaging; the mean
/// update step is the exact minimizer under this cost, which is what makes
/// the objective non-increasing.
fn sq_dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    let band = Band::default_for(a.len(), b.len());
    Ok(dtw_full_with(a, b, band, sq_cost)?.final_cost())
}

/// Barycenter-averaging result.
#[derive(Debug, Clone)]
pub struct DbaResult {
    pub consensus: Vec<f64>,
    /// Frechet objective (sum of squared-cost DTW distances) per iteration.
    pub objective: Vec<f64>,
    /// Set when fewer than two cycles were available.
    pub degenerate: bool,
}

/// Consensus morphology of a set of cycles.
///
/// Initialized with the medoid resampled to `target_len`, then refined by
/// aligning every cycle to the running average and re-estimating each
/// average sample as the mean of the cycle samples warped onto it. Stops
/// after `max_iters` iterations or when the objective improves by less than
/// 1e-6 relatively.
pub fn dba_consensus(cycles: &[Vec<f64>], target_len: usize, max_iters: usize) -> Result<DbaResult> {
    if cycles.is_empty() {
        return Err(Error::EmptyInput("no cycles to average".into()));
    }
    if target_len < 2 {
        return Err(Error::Config(format!("consensus length {target_len} too short")));
    }
    if max_iters == 0 {
        return Err(Error::Config("at least one averaging iteration required".into()));
    }
    if cycles.len() == 1 {
        return Ok(DbaResult {
            consensus: resample(&cycles[0], target_len),
            objective: Vec::new(),
            degenerate: true,
        });
    }

    // Medoid: the member closest to all others.
    let mut medoid = 0usize;
    let mut best_sum = f64::INFINITY;
    for (i, a) in cycles.iter().enumerate() {
        let mut sum = 0.0;
        for (j, b) in cycles.iter().enumerate() {
            if i != j {
                sum += sq_dtw(a, b)?;
            }
        }
        if sum < best_sum {
            best_sum = sum;
            medoid = i;
        }
    }

    let mut avg = resample(&cycles[medoid], target_len);
    let mut objective = Vec::with_capacity(max_iters);
    let mut prev_obj = f64::INFINITY;
    for _ in 0..max_iters {
        let mut sums = vec![0.0f64; target_len];
        let mut counts = vec![0usize; target_len];
        let mut obj = 0.0;
        for cycle in cycles {
            let band = Band::default_for(cycle.len(), target_len);
            let matrix = dtw_full_with(cycle, &avg, band, sq_cost)?;
            obj += matrix.final_cost();
            let path = traceback(&matrix, cycle.len() - 1)?;
            for &(t, i) in &path.pairs {
                sums[i] += cycle[t];
                counts[i] += 1;
            }
        }
        objective.push(obj);
        if prev_obj.is_finite() && prev_obj - obj < 1e-6 * prev_obj.abs().max(1e-12) {
            break;
        }
        prev_obj = obj;
        for i in 0..target_len {
            debug_assert!(counts[i] > 0, "every average index lies on every path");
            avg[i] = sums[i] / counts[i] as f64;
        }
    }

    Ok(DbaResult {
        consensus: avg,
        objective,
        degenerate: false,
    })
}

/// Label a freshly generated consensus sequence by aligning a resampled
/// copy of the prime template against it and carrying each annotation
/// through the warping path (minimum pairwise distance, tie earliest).
pub fn label_template(
    prime: &Template,
    new_seq: &[f64],
    id: u32,
    region: usize,
) -> Result<Template> {
    let new_len = new_seq.len();
    if new_len < 3 {
        return Err(Error::Config(format!("consensus of {new_len} samples cannot be labeled")));
    }
    let resampled_prime = resample(prime.samples(), new_len);
    let scale = (new_len - 1) as f64 / (prime.samples().len() - 1) as f64;

    let c_r = comparison_series(&resampled_prime);
    let c_u = comparison_series(new_seq);
    let band = Band::default_for(c_r.len(), c_u.len());
    let matrix = dtw_full(&c_r, &c_u, band)?;
    let path = traceback(&matrix, c_r.len() - 1)?;

    let mut mapped = BTreeMap::new();
    for class in FiducialClass::ANNOTATED {
        let ann = prime.annotations().get(class).expect("annotated class");
        let target = ((ann as f64 * scale).round() as usize).min(c_r.len() - 1);
        let mut best: Option<(f64, usize)> = None;
        for &(r, u) in &path.pairs {
            if r != target {
                continue;
            }
            let d = (c_r[r] - c_u[u]).abs();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, u));
            }
        }
        let Some((_, u)) = best else {
            return Err(Error::Mapping {
                class,
                msg: "annotation index missing from the labeling path".into(),
            });
        };
        mapped.insert(class, u);
    }

    let ann = TemplateAnnotations {
        onset: mapped[&FiducialClass::Onset],
        ms: mapped[&FiducialClass::Ms],
        sys: mapped[&FiducialClass::Sys],
    };
    if !(ann.onset < ann.ms && ann.ms < ann.sys) {
        return Err(Error::Mapping {
            class: FiducialClass::Ms,
            msg: format!(
                "labeled annotations lost their order: onset={}, ms={}, sys={}",
                ann.onset, ann.ms, ann.sys
            ),
        });
    }
    Template::new(id, new_seq.to_vec(), prime.fs(), ann, Provenance::Generated { region })
}

/// One template's performance over a region.
#[derive(Debug, Clone, Copy)]
pub struct RegionAnalysis {
    pub template_id: u32,
    /// Mean warping-path cost over the region's accepted segments;
    /// infinite when the template produced no segments.
    pub avg_path_cost: f64,
    pub segment_count: usize,
}

/// The template ensemble.
#[derive(Debug, Clone)]
pub struct Ensemble {
    k: usize,
    members: Vec<Template>,
    usage: BTreeMap<u32, u64>,
    prime_id: u32,
    next_id: u32,
}

impl Ensemble {
    pub fn new(prime: Template, k: usize) -> Result<Ensemble> {
        if k < 1 {
            return Err(Error::Config("ensemble capacity must be at least 1".into()));
        }
        if !prime.is_prime() {
            return Err(Error::Config("the seed template must have prime provenance".into()));
        }
        let prime_id = prime.id();
        let next_id = prime_id + 1;
        let mut usage = BTreeMap::new();
        usage.insert(prime_id, 0);
        Ok(Ensemble {
            k,
            members: vec![prime],
            usage,
            prime_id,
            next_id,
        })
    }

    pub fn members(&self) -> &[Template] {
        &self.members
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the prime is always a member
    }

    pub fn prime_id(&self) -> u32 {
        self.prime_id
    }

    pub fn prime(&self) -> &Template {
        self.members
            .iter()
            .find(|t| t.id() == self.prime_id)
            .expect("prime is never evicted")
    }

    pub fn usage_of(&self, id: u32) -> u64 {
        self.usage.get(&id).copied().unwrap_or(0)
    }

    /// Record that `id` won a region as the optimal template.
    pub fn record_win(&mut self, id: u32) {
        *self.usage.entry(id).or_insert(0) += 1;
    }
}

/// Optimal template for a region: the member with the lowest average
/// warping-path cost. Exact ties go to the prime, then to the lowest id.
pub fn select_optimal(ensemble: &Ensemble, results: &[RegionAnalysis]) -> Result<u32> {
    let mut best: Option<&RegionAnalysis> = None;
    for r in results {
        if !r.avg_path_cost.is_finite() {
            continue;
        }
        let replace = match best {
            None => true,
            Some(b) => {
                r.avg_path_cost < b.avg_path_cost
                    || (r.avg_path_cost == b.avg_path_cost
                        && tie_rank(ensemble, r.template_id) < tie_rank(ensemble, b.template_id))
            }
        };
        if replace {
            best = Some(r);
        }
    }
    best.map(|r| r.template_id)
        .ok_or_else(|| Error::InsufficientData("no completed region analyses".into()))
}

fn tie_rank(ensemble: &Ensemble, id: u32) -> u64 {
    if id == ensemble.prime_id() {
        0
    } else {
        1 + id as u64
    }
}

/// What an ensemble update did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// The prime stayed optimal and the ensemble is full: nothing changed.
    Unchanged,
    /// Growth phase: a new consensus template joined.
    Added { id: u32 },
    /// Drift: the least-frequently-used non-prime member was replaced and
    /// the caller should re-analyze the most recent region with `id`.
    Replaced { evicted: u32, id: u32 },
    /// Consensus generation or labeling failed; ensemble unchanged.
    Skipped { reason: String },
}

/// Apply the update protocol after a region's analyses are complete.
///
/// While the ensemble is below capacity a new consensus template is always
/// generated from the region's cycles. At capacity, an update triggers only
/// when a generated template out-performed the prime; the prime itself is
/// exempt from eviction because every future labeling depends on it.
pub fn update_ensemble(
    ensemble: &mut Ensemble,
    region_cycles: &[Vec<f64>],
    y_opt: u32,
    target_len: usize,
    region: usize,
    dba_iters: usize,
) -> UpdateOutcome {
    let below_capacity = ensemble.len() < ensemble.capacity();
    if !below_capacity && y_opt == ensemble.prime_id() {
        return UpdateOutcome::Unchanged;
    }
    if region_cycles.is_empty() {
        return UpdateOutcome::Skipped {
            reason: "region produced no cycles to average".into(),
        };
    }

    let consensus = match dba_consensus(region_cycles, target_len, dba_iters) {
        Ok(r) => smooth(&r.consensus, 5),
        Err(e) => {
            return UpdateOutcome::Skipped {
                reason: format!("consensus generation failed: {e}"),
            }
        }
    };
    let id = ensemble.next_id;
    let prime = ensemble.prime().clone();
    let template = match label_template(&prime, &consensus, id, region) {
        Ok(t) => t,
        Err(e) => {
            return UpdateOutcome::Skipped {
                reason: format!("labeling failed: {e}"),
            }
        }
    };

    ensemble.next_id += 1;
    ensemble.usage.insert(id, 0);
    if below_capacity {
        ensemble.members.push(template);
        return UpdateOutcome::Added { id };
    }

    // Evict the least-frequently-used non-prime member (tie: lowest id).
    let evicted = ensemble
        .members
        .iter()
        .filter(|t| t.id() != ensemble.prime_id)
        .min_by_key(|t| (ensemble.usage_of(t.id()), t.id()))
        .map(|t| t.id())
        .expect("a full ensemble with k >= 2 has a non-prime member");
    ensemble.members.retain(|t| t.id() != evicted);
    ensemble.usage.remove(&evicted);
    ensemble.members.push(template);
    UpdateOutcome::Replaced { evicted, id }
}
