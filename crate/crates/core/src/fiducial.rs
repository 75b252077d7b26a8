//! Fiducial classes, annotated templates, and warping-path-based mapping of
//! template annotations onto detected segments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Segment;
use crate::signal::{comparison_series, SignalBatch};

/// The fiducial point classes scored by the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FiducialClass {
    /// Systolic peak: the cycle's main amplitude maximum.
    Sys,
    /// Max-slope point: the steepest upstroke sample.
    Ms,
    /// Cycle endpoint: the local minimum starting (and ending) a cycle.
    Onset,
    /// Non-fiducial.
    Nf,
}

impl FiducialClass {
    /// The classes a template must annotate.
    pub const ANNOTATED: [FiducialClass; 3] =
        [FiducialClass::Onset, FiducialClass::Ms, FiducialClass::Sys];
}

impl fmt::Display for FiducialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FiducialClass::Sys => "sys",
            FiducialClass::Ms => "ms",
            FiducialClass::Onset => "onset",
            FiducialClass::Nf => "nf",
        };
        f.write_str(s)
    }
}

impl FromStr for FiducialClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<FiducialClass> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sys" => Ok(FiducialClass::Sys),
            "ms" => Ok(FiducialClass::Ms),
            "onset" | "ep" => Ok(FiducialClass::Onset),
            "nf" => Ok(FiducialClass::Nf),
            other => Err(Error::Config(format!("unknown fiducial class '{other}'"))),
        }
    }
}

/// Sample indices of the annotated fiducials within a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateAnnotations {
    pub onset: usize,
    pub ms: usize,
    pub sys: usize,
}

impl TemplateAnnotations {
    pub fn get(&self, class: FiducialClass) -> Option<usize> {
        match class {
            FiducialClass::Onset => Some(self.onset),
            FiducialClass::Ms => Some(self.ms),
            FiducialClass::Sys => Some(self.sys),
            FiducialClass::Nf => None,
        }
    }
}

/// Where a template came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// The manually validated seed template.
    Prime,
    /// Consensus generated from the cycles of a region.
    Generated { region: usize },
}

/// An annotated exemplar cycle.
///
/// `samples` is the waveform in the same (filtered) domain as the stream it
/// is matched against; `cmp` is the mean-normalized first difference every
/// DTW comparison uses.
#[derive(Debug, Clone)]
pub struct Template {
    id: u32,
    samples: Vec<f64>,
    cmp: Vec<f64>,
    fs: f64,
    ann: TemplateAnnotations,
    provenance: Provenance,
}

impl Template {
    pub fn new(
        id: u32,
        samples: Vec<f64>,
        fs: f64,
        ann: TemplateAnnotations,
        provenance: Provenance,
    ) -> Result<Template> {
        if samples.len() < 3 {
            return Err(Error::Config(format!(
                "template needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        let m = samples.len();
        for class in FiducialClass::ANNOTATED {
            let idx = ann.get(class).expect("annotated class");
            if idx >= m {
                return Err(Error::Config(format!(
                    "annotation {class} at {idx} outside template of length {m}"
                )));
            }
        }
        let cmp = comparison_series(&samples);
        Ok(Template {
            id,
            samples,
            cmp,
            fs,
            ann,
            provenance,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// The comparison-domain series (length `samples.len() - 1`).
    pub fn cmp(&self) -> &[f64] {
        &self.cmp
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn annotations(&self) -> TemplateAnnotations {
        self.ann
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_prime(&self) -> bool {
        self.provenance == Provenance::Prime
    }
}

/// One detected fiducial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialEvent {
    pub class: FiducialClass,
    pub stream_idx: usize,
    pub time_s: f64,
    pub segment_id: usize,
}

/// Result of mapping one segment: the events that mapped plus the classes
/// that could not be carried through the path.
#[derive(Debug, Clone)]
pub struct MappedFiducials {
    pub events: Vec<FiducialEvent>,
    pub failed: Vec<FiducialClass>,
}

/// Annotation index in the comparison domain: the first difference at `i`
/// is timestamped at sample `i`, so indices carry over directly, clamped to
/// the shorter series.
fn cmp_index(ann_idx: usize, cmp_len: usize) -> usize {
    ann_idx.min(cmp_len - 1)
}

/// Map the template's Sys and MS annotations onto a segment through its
/// warping path; the Onset is the segment boundary itself.
///
/// When the warp pairs several stream samples with the annotated template
/// sample, the one with the smallest pairwise distance wins (tie: earliest).
pub fn map_fiducials(
    segment: &Segment,
    template: &Template,
    batch: &SignalBatch,
    segment_id: usize,
) -> MappedFiducials {
    let seg_cmp = comparison_series(&batch.samples()[segment.t_s..=segment.t_e]);
    let t_cmp = template.cmp();

    let mut events = vec![FiducialEvent {
        class: FiducialClass::Onset,
        stream_idx: segment.t_s,
        time_s: batch.time_of(segment.t_s),
        segment_id,
    }];
    let mut failed = Vec::new();

    for class in [FiducialClass::Ms, FiducialClass::Sys] {
        let ann = template.annotations().get(class).expect("annotated class");
        let target = cmp_index(ann, t_cmp.len());
        let mut best: Option<(f64, usize)> = None;
        for &(s, i) in &segment.path.pairs {
            if i != target {
                continue;
            }
            let d = (seg_cmp[s] - t_cmp[i]).abs();
            let better = match best {
                None => true,
                Some((bd, _)) => d < bd,
            };
            if better {
                best = Some((d, s));
            }
        }
        match best {
            Some((_, s)) => {
                let idx = segment.t_s + s;
                events.push(FiducialEvent {
                    class,
                    stream_idx: idx,
                    time_s: batch.time_of(idx),
                    segment_id,
                });
            }
            None => failed.push(class),
        }
    }

    MappedFiducials { events, failed }
}

/// Fiducial events for a whole batch of segments, time-sorted, with onset
/// events deduplicated at shared segment boundaries. Mapping failures become
/// warnings, never aborts.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedStream {
    pub events: Vec<FiducialEvent>,
    pub warnings: Vec<String>,
}

pub fn annotate_stream(
    batch: &SignalBatch,
    segments: &[Segment],
    templates: &[Template],
) -> AnnotatedStream {
    let mut out = AnnotatedStream::default();
    let mut onset_indices: Vec<(usize, usize)> = Vec::new(); // (stream_idx, segment_id)

    for (segment_id, segment) in segments.iter().enumerate() {
        let Some(template) = templates.iter().find(|t| t.id() == segment.template_id) else {
            out.warnings.push(format!(
                "segment {segment_id}: template {} not found",
                segment.template_id
            ));
            continue;
        };
        let mapped = map_fiducials(segment, template, batch, segment_id);
        for ev in mapped.events {
            if ev.class == FiducialClass::Onset {
                onset_indices.push((ev.stream_idx, segment_id));
            } else {
                out.events.push(ev);
            }
        }
        for class in mapped.failed {
            out.warnings.push(format!(
                "segment {segment_id}: template index for {class} excluded by the band"
            ));
        }
        // The segment end opens the next cycle; shared boundaries dedup below.
        onset_indices.push((segment.t_e, segment_id));
    }

    onset_indices.sort_unstable();
    onset_indices.dedup_by_key(|(idx, _)| *idx);
    for (idx, segment_id) in onset_indices {
        out.events.push(FiducialEvent {
            class: FiducialClass::Onset,
            stream_idx: idx,
            time_s: batch.time_of(idx),
            segment_id,
        });
    }

    out.events.sort_by(|a, b| {
        a.time_s
            .partial_cmp(&b.time_s)
            .unwrap()
            .then(a.class.cmp(&b.class))
    });
    out
}
