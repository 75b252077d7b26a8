//! File formats: sample CSVs, event CSVs, segment/trace/report tables, and
//! annotated template files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use pulsedtw::eval::{difference_plot_data, EvalReport};
use pulsedtw::fiducial::{
    FiducialClass, FiducialEvent, Provenance, Template, TemplateAnnotations,
};
use pulsedtw::pipeline::{BenchRow, RunOutput};
use pulsedtw::segment::Segment;
use pulsedtw::signal::{SignalBatch, SynthGroundTruth};

use crate::CliError;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// One sample per line with an `fs=` header.
pub fn write_signal_csv(path: &Path, batch: &SignalBatch) -> Result<(), CliError> {
    let mut out = format!("fs={}\n", batch.fs());
    for v in batch.samples() {
        writeln!(out, "{v}").unwrap();
    }
    write(path, &out)
}

/// Ground truth rows: `class,sample_index,time_s`.
pub fn write_truth_csv(path: &Path, truth: &SynthGroundTruth, fs: f64) -> Result<(), CliError> {
    let mut rows: Vec<(usize, FiducialClass)> = Vec::new();
    rows.extend(truth.onset_idx.iter().map(|&i| (i, FiducialClass::Onset)));
    rows.extend(truth.ms_idx.iter().map(|&i| (i, FiducialClass::Ms)));
    rows.extend(truth.sys_idx.iter().map(|&i| (i, FiducialClass::Sys)));
    rows.sort();

    let mut out = String::from("class,sample_index,time_s\n");
    for (idx, class) in rows {
        writeln!(out, "{class},{idx},{}", idx as f64 / fs).unwrap();
    }
    write(path, &out)
}

/// Predicted events: `class,sample_index,time_s,segment_id`.
pub fn write_events_csv(path: &Path, events: &[FiducialEvent]) -> Result<(), CliError> {
    let mut out = String::from("class,sample_index,time_s,segment_id\n");
    for e in events {
        writeln!(out, "{},{},{},{}", e.class, e.stream_idx, e.time_s, e.segment_id).unwrap();
    }
    write(path, &out)
}

/// Read an event CSV (predicted or ground truth; the `segment_id` column is
/// optional). The header must name the expected columns.
pub fn read_events_csv(path: &Path) -> Result<Vec<FiducialEvent>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(CliError::Input(format!("{}: empty file", path.display())));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (i, expected) in ["class", "sample_index", "time_s"].iter().enumerate() {
        if cols.get(i).copied() != Some(*expected) {
            return Err(CliError::Input(format!(
                "{}: expected column {} to be '{expected}', found '{}'",
                path.display(),
                i + 1,
                cols.get(i).copied().unwrap_or("<missing>")
            )));
        }
    }

    let mut events = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(CliError::Input(format!(
                "{}:{}: expected at least 3 fields",
                path.display(),
                lineno + 1
            )));
        }
        let class = FiducialClass::from_str(fields[0])
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let stream_idx: usize = fields[1].parse().map_err(|_| {
            CliError::Input(format!(
                "{}:{}: bad sample_index '{}'",
                path.display(),
                lineno + 1,
                fields[1]
            ))
        })?;
        let time_s: f64 = fields[2].parse().map_err(|_| {
            CliError::Input(format!(
                "{}:{}: bad time_s '{}'",
                path.display(),
                lineno + 1,
                fields[2]
            ))
        })?;
        let segment_id = fields
            .get(3)
            .and_then(|f| f.parse().ok())
            .unwrap_or(usize::MAX);
        events.push(FiducialEvent {
            class,
            stream_idx,
            time_s,
            segment_id,
        });
    }
    Ok(events)
}

pub fn write_segments_csv(path: &Path, segments: &[Segment], fs: f64) -> Result<(), CliError> {
    let mut out =
        String::from("segment_id,t_s,t_e,start_time_s,end_time_s,template_id,p_e,path_cost\n");
    for (id, s) in segments.iter().enumerate() {
        writeln!(
            out,
            "{id},{},{},{},{},{},{},{}",
            s.t_s,
            s.t_e,
            s.t_s as f64 / fs,
            s.t_e as f64 / fs,
            s.template_id,
            s.p_e_at_end,
            s.path.cost
        )
        .unwrap();
    }
    write(path, &out)
}

pub fn write_trace_csv(path: &Path, out_run: &RunOutput) -> Result<(), CliError> {
    let mut out = String::from("sample_index,d,p_c,p_d,p_e\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in &out_run.trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.sample_index,
            row.d,
            opt(row.p_c),
            opt(row.p_d),
            opt(row.p_e)
        )
        .unwrap();
    }
    write(path, &out)
}

/// Template samples plus a `.ann.csv` sidecar of `class,index` rows.
pub fn write_template_csv(path: &Path, template: &Template) -> Result<(), CliError> {
    let mut out = format!("fs={}\n", template.fs());
    for v in template.samples() {
        writeln!(out, "{v}").unwrap();
    }
    write(path, &out)?;

    let ann = template.annotations();
    let sidecar = format!(
        "class,index\nonset,{}\nms,{}\nsys,{}\n",
        ann.onset, ann.ms, ann.sys
    );
    write(&sidecar_path(path), &sidecar)
}

pub fn sidecar_path(template_path: &Path) -> std::path::PathBuf {
    let mut s = template_path.as_os_str().to_os_string();
    s.push(".ann.csv");
    std::path::PathBuf::from(s)
}

/// Load a template written by [`write_template_csv`].
pub fn read_template_csv(path: &Path, id: u32) -> Result<Template, CliError> {
    let batch = pulsedtw::signal::load_csv(path, None).map_err(CliError::from)?;
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", sidecar.display())))?;

    let (mut onset, mut ms, mut sys) = (None, None, None);
    for (lineno, raw) in text.lines().enumerate().skip(1) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some((class, idx)) = line.split_once(',') else {
            return Err(CliError::Input(format!(
                "{}:{}: expected class,index",
                sidecar.display(),
                lineno + 1
            )));
        };
        let idx: usize = idx.trim().parse().map_err(|_| {
            CliError::Input(format!("{}:{}: bad index '{idx}'", sidecar.display(), lineno + 1))
        })?;
        match FiducialClass::from_str(class).map_err(CliError::from)? {
            FiducialClass::Onset => onset = Some(idx),
            FiducialClass::Ms => ms = Some(idx),
            FiducialClass::Sys => sys = Some(idx),
            FiducialClass::Nf => {}
        }
    }
    let (Some(onset), Some(ms), Some(sys)) = (onset, ms, sys) else {
        return Err(CliError::Input(format!(
            "{}: sidecar must annotate onset, ms and sys",
            sidecar.display()
        )));
    };
    Template::new(
        id,
        batch.samples().to_vec(),
        batch.fs(),
        TemplateAnnotations { onset, ms, sys },
        Provenance::Prime,
    )
    .map_err(CliError::from)
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Input(format!("cannot serialize report: {e}")))?;
    write(path, &json)
}

/// Per-class fiducial table (classification and timing).
pub fn write_fiducial_table(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut out = String::from("class,precision,recall,f1,rmse_ms,tp,fp,fn,degenerate\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in &report.classes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.class,
            c.precision,
            c.recall,
            c.f1,
            opt(c.rmse_ms),
            c.tp,
            c.fp,
            c.fn_,
            c.degenerate
        )
        .unwrap();
    }
    write(path, &out)
}

/// Per-class interval-estimation table.
pub fn write_ibi_table(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut out = String::from(
        "class,mae_ms,mae_sem_ms,mae_pct,pearson_r,pairs,unpaired_truths,valid,predicted\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in &report.classes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.class,
            opt(c.ibi.mae_ms),
            opt(c.ibi.mae_sem_ms),
            opt(c.ibi.mae_pct),
            opt(c.ibi.pearson_r),
            c.ibi.pair_count,
            c.ibi.unpaired_truths,
            c.ibi_valid,
            c.ibi_predicted
        )
        .unwrap();
    }
    write(path, &out)
}

/// `(mean, pred - truth)` rows per class for difference plots.
pub fn write_difference_csv(dir: &Path, report: &EvalReport) -> Result<(), CliError> {
    for c in &report.classes {
        let rows = difference_plot_data(&c.ibi_pairs);
        let mut out = String::from("mean_ms,diff_ms\n");
        for (mean, diff) in rows {
            writeln!(out, "{mean},{diff}").unwrap();
        }
        write(&dir.join(format!("difference_{}.csv", c.class)), &out)?;
    }
    Ok(())
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<(), CliError> {
    let mut out = String::from("duration_s,n_samples,wall_ms\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.duration_s, r.n_samples, r.wall_ms).unwrap();
    }
    write(path, &out)
}

pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> Result<(), CliError> {
    write(path, &serde_json::to_string_pretty(manifest).unwrap())
}
