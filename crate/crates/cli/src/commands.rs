//! Subcommand implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pulsedtw::eval::{evaluate, EvalConfig};
use pulsedtw::pipeline::{bench_scaling, bootstrap_prime, run_record};
use pulsedtw::signal::{load_csv, synth_ppg, Profile, SynthParams};

use crate::config::RunConfig;
use crate::files;
use crate::CliError;

/// Segmentation and fiducial-point extraction for quasi-periodic signals.
#[derive(Debug, Parser)]
#[command(name = "pulsedtw", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic pulse record plus its ground truth.
    Synth(SynthArgs),
    /// Segment a record and extract fiducial events.
    Segment(SegmentArgs),
    /// Score predicted events against ground truth.
    Evaluate(EvaluateArgs),
    /// Time segmentation across record lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output record CSV; the ground truth lands next to it as
    /// `<stem>.truth.csv` unless --truth-out is given.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    /// Heart rate in bpm (start of ramp when --hr-end is set).
    #[arg(long, default_value_t = 72.0)]
    pub hr: f64,
    #[arg(long)]
    pub hr_end: Option<f64>,
    #[arg(long, default_value_t = 300.0)]
    pub fs: f64,
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.0)]
    pub resp_depth: f64,
    #[arg(long, default_value_t = 0.25)]
    pub resp_rate: f64,
    /// Dicrotic bump strength (start of ramp when --dicrotic-end is set).
    #[arg(long, default_value_t = 0.3)]
    pub dicrotic: f64,
    #[arg(long)]
    pub dicrotic_end: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// boosted-st | boosted-dt | spring | adaptive
    #[arg(long)]
    pub method: Option<String>,
    /// key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Annotated template CSV (with `.ann.csv` sidecar). Bootstrapped from
    /// the record when omitted.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Sampling-rate override when the record has no fs= header.
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_seconds: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub region_seconds: Option<f64>,
    #[arg(long)]
    pub dba_iters: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Skip the bandpass preprocessing stage.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tol_ms: Option<f64>,
    #[arg(long)]
    pub ibi_min: Option<f64>,
    #[arg(long)]
    pub ibi_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated record durations in seconds.
    #[arg(long, default_value = "30,60,120,240")]
    pub durations: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Segment(args) => cmd_segment(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn profile(start: f64, end: Option<f64>) -> Profile {
    match end {
        Some(end) => Profile::Ramp { start, end },
        None => Profile::Constant(start),
    }
}

pub fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let params = SynthParams {
        hr_bpm: profile(args.hr, args.hr_end),
        fs: args.fs,
        duration_s: args.duration,
        resp_mod_depth: args.resp_depth,
        resp_rate_hz: args.resp_rate,
        dicrotic_strength: profile(args.dicrotic, args.dicrotic_end),
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let (batch, truth) = synth_ppg(&params)?;

    files::write_signal_csv(&args.out, &batch)?;
    let truth_path = args.truth_out.unwrap_or_else(|| {
        let stem = args.out.file_stem().unwrap_or_default().to_string_lossy();
        args.out.with_file_name(format!("{stem}.truth.csv"))
    });
    files::write_truth_csv(&truth_path, &truth, batch.fs())?;

    println!(
        "wrote {} ({} samples at {} Hz) and {} ({} cycles)",
        args.out.display(),
        batch.len(),
        batch.fs(),
        truth_path.display(),
        truth.cycle_count()
    );
    Ok(())
}

pub fn cmd_segment(args: SegmentArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    if let Some(m) = &args.method {
        cfg.method = m.clone();
    }
    for (key, value) in [
        ("alpha", args.alpha),
        ("beta", args.beta),
        ("gamma", args.gamma),
        ("batch_seconds", args.batch_seconds),
        ("region_seconds", args.region_seconds),
        ("epsilon", args.epsilon),
    ] {
        if let Some(v) = value {
            cfg.set(key, &v.to_string())?;
        }
    }
    if let Some(k) = args.k {
        cfg.set("k", &k.to_string())?;
    }
    if let Some(e) = args.dba_iters {
        cfg.set("dba_iters", &e.to_string())?;
    }
    if args.no_filter {
        cfg.set("apply_filter", "false")?;
    }

    let params = cfg.pipeline_params()?;
    let method = cfg.method()?;

    let record = load_csv(&args.input, args.fs)?;
    let prime = match &args.template {
        Some(path) => files::read_template_csv(path, 0)?,
        None => {
            eprintln!(
                "note: no template given; bootstrapping one from the record \
                 (confirm its annotations offline)"
            );
            bootstrap_prime(&record, &params)?
        }
    };

    let out = run_record(&record, &prime, method, &params)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }

    let dir = &args.out_dir;
    files::write_events_csv(&dir.join("events.csv"), &out.events)?;
    files::write_segments_csv(&dir.join("segments.csv"), &out.segments, record.fs())?;
    files::write_trace_csv(&dir.join("trace.csv"), &out)?;
    files::write_template_csv(&dir.join("prime_template.csv"), &prime)?;
    for t in &out.generated_templates {
        files::write_template_csv(&dir.join(format!("templates/gen_{:03}.csv", t.id())), t)?;
    }

    let manifest = json!({
        "tool": "pulsedtw",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "segment",
        "input": args.input.display().to_string(),
        "template": args.template.as_ref().map(|p| p.display().to_string()),
        "config": cfg.echo(),
        "events": out.events.len(),
        "segments": out.segments.len(),
        "warnings": out.warnings,
    });
    files::write_manifest(&dir.join("manifest.json"), &manifest)?;

    println!(
        "{}: {} segments, {} events -> {}",
        method.name(),
        out.segments.len(),
        out.events.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    if let Some(v) = args.tol_ms {
        cfg.set("tol_ms", &v.to_string())?;
    }
    if let Some(v) = args.ibi_min {
        cfg.set("ibi_min_ms", &v.to_string())?;
    }
    if let Some(v) = args.ibi_max {
        cfg.set("ibi_max_ms", &v.to_string())?;
    }
    if !(cfg.tol_ms > 0.0) || !(cfg.ibi_min_ms > 0.0 && cfg.ibi_min_ms < cfg.ibi_max_ms) {
        return Err(CliError::Config(
            "evaluation needs tol_ms > 0 and 0 < ibi_min_ms < ibi_max_ms".into(),
        ));
    }

    let pred = files::read_events_csv(&args.events)?;
    let truth = files::read_events_csv(&args.truth)?;
    let report = evaluate(
        &pred,
        &truth,
        &EvalConfig {
            tol_ms: cfg.tol_ms,
            ibi_min_ms: cfg.ibi_min_ms,
            ibi_max_ms: cfg.ibi_max_ms,
        },
    );

    let dir = &args.out_dir;
    files::write_report_json(&dir.join("report.json"), &report)?;
    files::write_fiducial_table(&dir.join("report_fiducial.csv"), &report)?;
    files::write_ibi_table(&dir.join("report_ibi.csv"), &report)?;
    files::write_difference_csv(dir, &report)?;

    let manifest = json!({
        "tool": "pulsedtw",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "evaluate",
        "events": args.events.display().to_string(),
        "truth": args.truth.display().to_string(),
        "config": cfg.echo(),
    });
    files::write_manifest(&dir.join("manifest.json"), &manifest)?;

    for c in &report.classes {
        println!(
            "{}: P={:.3} R={:.3} F1={:.3} rmse={} mae={}",
            c.class,
            c.precision,
            c.recall,
            c.f1,
            c.rmse_ms.map_or("n/a".into(), |v| format!("{v:.1}ms")),
            c.ibi.mae_ms.map_or("n/a".into(), |v| format!("{v:.1}ms")),
        );
    }
    if let Some(f) = report.valid_prediction_fraction {
        println!(
            "valid interval predictions: {} ({:.1}%)",
            report.valid_prediction_count,
            100.0 * f
        );
    }
    Ok(())
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let durations: Vec<f64> = args
        .durations
        .split(',')
        .map(|d| {
            d.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad duration '{d}'")))
        })
        .collect::<Result<_, _>>()?;
    if durations.is_empty() {
        return Err(CliError::Config("no durations given".into()));
    }

    let params = RunConfig::default().pipeline_params()?;
    let rows = bench_scaling(&durations, &params, args.seed, args.repeats)?;
    files::write_bench_csv(&args.out_dir.join("bench.csv"), &rows)?;

    for r in &rows {
        println!("{:>8.1}s  {:>9} samples  {:>10.2} ms", r.duration_s, r.n_samples, r.wall_ms);
    }
    for pair in rows.windows(2) {
        if (pair[1].n_samples as f64 / pair[0].n_samples as f64 - 2.0).abs() < 0.1 {
            println!(
                "ratio {:.0}s/{:.0}s = {:.2}",
                pair[1].duration_s,
                pair[0].duration_s,
                pair[1].wall_ms / pair[0].wall_ms
            );
        }
    }
    Ok(())
}

/// Re-exported for integration tests.
pub fn segment_defaults_for_tests(input: &Path, out_dir: &Path, method: &str) -> SegmentArgs {
    SegmentArgs {
        input: input.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        method: Some(method.to_string()),
        config: None,
        template: None,
        fs: None,
        alpha: None,
        beta: None,
        gamma: None,
        batch_seconds: None,
        k: None,
        region_seconds: None,
        dba_iters: None,
        epsilon: None,
        no_filter: false,
    }
}
