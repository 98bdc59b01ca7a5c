//! Command-line front end: validate, sample, split, conflict, calibrate,
//! report, batch and corpus listing.
//!
//! Exit codes: 0 success, 1 conflict flagged (with `--gate`), 2 usage or
//! I/O error, 3 numerical failure.

mod manifest;

pub use manifest::RunManifest;

use crate::calibration::{self, ks_uniformity, run_calibration, CalibrationError, CalibrationScenario};
use crate::conflict::{self, density_grid, ConflictError, ConflictResult, KdeConfig, Selection};
use crate::corpus::{self, CorpusError};
use crate::graph::io::{self as model_io, ModelIoError};
use crate::graph::DagModel;
use crate::inference::{run_mcmc, ConvergenceReport, InferenceError, SamplerConfig, Trace, TraceError};
use crate::split::{delta_samples, split_node, SplitError, SplitModel, SplitSpec};
use crate::util::write_atomic;
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FLAGGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// R̂ above which `sample` fails unless `--no-rhat-gate` is given.
pub const RHAT_GATE: f64 = 1.1;
/// Report flag thresholds.
pub const THRESHOLDS: [f64; 2] = [0.05, 0.1];

#[derive(Parser, Debug)]
#[command(name = "nodesplit", version, about = "Node-splitting conflict diagnostics for Bayesian evidence synthesis")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a model.
    Validate {
        /// Model file or `corpus:<id>`.
        model: String,
    },
    /// Run the sampler on a model, optionally after splitting it.
    Sample(SampleArgs),
    /// Split a model and write the split model and partition labels.
    Split(SplitArgs),
    /// Compute a conflict p-value from a trace of a split model.
    Conflict(ConflictArgs),
    /// Run a null-model calibration and test the p-values for uniformity.
    Calibrate(CalibrateArgs),
    /// Collect every conflict result under a run directory into one table.
    Report(ReportArgs),
    /// Split, sample and test many splits of one model in parallel.
    Batch(BatchArgs),
    /// Built-in models and split specs.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand, Debug)]
enum CorpusCommand {
    /// List built-in models, split ids and calibration scenarios.
    List,
}

#[derive(Args, Debug, Clone)]
struct SamplerFlags {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    chains: usize,
    /// Iterations kept per chain after burn-in (before thinning).
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

impl SamplerFlags {
    fn config(&self) -> SamplerConfig {
        SamplerConfig { thin: self.thin, ..SamplerConfig::new(self.chains, self.burnin, self.iters, self.seed) }
    }
}

#[derive(Args, Debug, Clone)]
struct SplitSelect {
    /// Split spec file or corpus split id (`hiv-b:2`, `rats:9`).
    #[arg(long)]
    split: Option<String>,
    /// Shorthand for `--split rats:<n>`.
    #[arg(long)]
    holdout: Option<usize>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    model: String,
    #[command(flatten)]
    select: SplitSelect,
    #[command(flatten)]
    sampler: SamplerFlags,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_rhat_gate: bool,
}

#[derive(Args, Debug)]
struct SplitArgs {
    model: String,
    #[command(flatten)]
    select: SplitSelect,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct MethodFlags {
    /// `auto`, `two-sided`, `one-sided-lower`, `one-sided-upper`, `kde`,
    /// `chi2`, `mahalanobis` or `kde-multivariate`.
    #[arg(long, default_value = "auto")]
    method: String,
    /// Fixed KDE bandwidth; Silverman's rule when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Exit with code 1 when the p-value is below `--alpha`.
    #[arg(long)]
    gate: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

impl MethodFlags {
    fn selection(&self) -> Result<Selection, CliError> {
        self.method.parse().map_err(CliError::Usage)
    }

    fn kde(&self) -> KdeConfig {
        self.bandwidth.map(KdeConfig::fixed).unwrap_or_default()
    }
}

#[derive(Args, Debug)]
struct ConflictArgs {
    /// Trace CSV written by `sample`.
    trace: PathBuf,
    /// Unsplit model; `model.json` next to the trace when absent.
    #[arg(long)]
    model: Option<String>,
    /// Split spec; `split.json` next to the trace when absent.
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    method: MethodFlags,
    /// Output directory; `conflict/` next to the trace when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Scenario JSON file or `corpus:<name>`.
    #[arg(long)]
    scenario: String,
    /// Output CSV of p-values.
    #[arg(long, default_value = "pvals.csv")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Exit with code 1 when uniformity is rejected at α = 0.01.
    #[arg(long)]
    gate: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    run_dir: PathBuf,
    /// Output directory; the run directory when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BatchArgs {
    model: String,
    /// Split spec files or corpus split ids; repeatable.
    #[arg(long)]
    split: Vec<String>,
    /// Every corpus split defined on the model.
    #[arg(long)]
    all_splits: bool,
    #[command(flatten)]
    sampler: SamplerFlags,
    #[command(flatten)]
    method: MethodFlags,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    no_rhat_gate: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error("model is invalid:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("R̂ = {rhat:.3} for {column} exceeds {RHAT_GATE}; rerun with more iterations or --no-rhat-gate")]
    RhatGate { column: String, rhat: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Inference(InferenceError::InvalidConfig(_) | InferenceError::UnknownMonitor(_)) => EXIT_USAGE,
            CliError::Inference(_) | CliError::RhatGate { .. } => EXIT_NUMERICAL,
            CliError::Conflict(ConflictError::Dimension { .. }) => EXIT_USAGE,
            CliError::Conflict(_) => EXIT_NUMERICAL,
            CliError::Calibration(CalibrationError::InvalidScenario(_) | CalibrationError::Io { .. }) => EXIT_USAGE,
            CliError::Calibration(_) => EXIT_NUMERICAL,
            CliError::Split(SplitError::NonFinite { .. }) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Sample(a) => cmd_sample(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Conflict(a) => cmd_conflict(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Report(a) => cmd_report(&a.run_dir, a.out.as_deref()).map(|_| EXIT_OK),
        Command::Batch(a) => cmd_batch(&a),
        Command::Corpus { command: CorpusCommand::List } => {
            print!("{}", corpus_listing());
            Ok(EXIT_OK)
        }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::FileNotFound(path.to_path_buf()))
    }
}

/// `corpus:<id>` or a model file.
fn load_model(src: &str) -> Result<DagModel, CliError> {
    if let Some(id) = src.strip_prefix("corpus:") {
        return Ok(corpus::model(id)?);
    }
    let path = Path::new(src);
    require_file(path)?;
    Ok(model_io::from_path(path)?)
}

/// A split spec file or a corpus split id.
fn load_split(src: &str) -> Result<SplitSpec, CliError> {
    let path = Path::new(src);
    if path.is_file() {
        return Ok(SplitSpec::from_path(path)?);
    }
    if src.contains(':') && !src.ends_with(".json") {
        return Ok(corpus::split(src)?);
    }
    Err(CliError::FileNotFound(path.to_path_buf()))
}

fn select_split(sel: &SplitSelect) -> Result<Option<SplitSpec>, CliError> {
    match (&sel.split, sel.holdout) {
        (Some(_), Some(_)) => Err(CliError::Usage("give either --split or --holdout, not both".into())),
        (Some(s), None) => load_split(s).map(Some),
        (None, Some(h)) => Ok(Some(corpus::rats_split(h)?)),
        (None, None) => Ok(None),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn checked(model: &DagModel) -> Result<(), CliError> {
    let report = model.validate();
    if report.is_ok() {
        Ok(())
    } else {
        Err(CliError::Invalid(report.to_string()))
    }
}

fn cmd_validate(src: &str) -> Result<i32, CliError> {
    let model = load_model(src)?;
    let report = model.validate();
    print!("{report}");
    if !report.is_ok() {
        return Err(CliError::Invalid(report.to_string()));
    }
    println!("ok: {} nodes, hash {}", model.nodes().len(), model.hash());
    Ok(EXIT_OK)
}

/// Formats the per-column diagnostics table.
fn rhat_table(report: &ConvergenceReport) -> String {
    let mut s = format!("{:<24} {:>12} {:>12} {:>8} {:>9}\n", "column", "mean", "sd", "rhat", "ess");
    for c in &report.columns {
        let rhat = c.rhat.map_or("-".to_string(), |r| format!("{:.3}", r.value));
        let ess = c.ess.map_or("-".to_string(), |e| format!("{e:.0}"));
        let _ = writeln!(s, "{:<24} {:>12.5} {:>12.5} {:>8} {:>9}", c.column, c.mean, c.sd, rhat, ess);
    }
    s
}

struct SampleOutcome {
    split: Option<SplitModel>,
    trace: Trace,
    report: ConvergenceReport,
}

/// Samples `model` (split by `spec` if given) and writes trace, model,
/// spec, diagnostics and manifest into `out`.
fn sample_into(
    model: &DagModel,
    spec: Option<&SplitSpec>,
    config: &SamplerConfig,
    out: &Path,
    command: &str,
) -> Result<SampleOutcome, CliError> {
    checked(model)?;
    let split = spec.map(|s| split_node(model, s)).transpose()?;
    let target = split.as_ref().map_or(model, |s| &s.model);
    let trace = run_mcmc(target, config)?;
    create_dir(out)?;
    let trace_path = out.join("trace.csv");
    trace.write(&trace_path)?;
    let report = ConvergenceReport::from_trace(&trace);
    let mut manifest = RunManifest::new(command, target, Some(config.seed));
    write(&out.join("model.json"), model_io::to_json_pretty(model).as_bytes())?;
    manifest.outputs.extend(["trace.csv".into(), "trace.meta.json".into(), "model.json".into()]);
    if let Some(s) = spec {
        write(&out.join("split.json"), s.to_json_pretty().as_bytes())?;
        manifest.add_spec("split.json", s);
        manifest.outputs.push("split.json".into());
    }
    let diag = serde_json::to_string_pretty(&report).expect("report serialises");
    write(&out.join("diagnostics.json"), diag.as_bytes())?;
    manifest.outputs.push("diagnostics.json".into());
    manifest.finish(out)?;
    Ok(SampleOutcome { split, trace, report })
}

fn rhat_gate(report: &ConvergenceReport) -> Result<(), CliError> {
    let worst = report
        .columns
        .iter()
        .filter_map(|c| c.rhat.filter(|r| !r.degenerate).map(|r| (c.column.clone(), r.value)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    match worst {
        Some((column, rhat)) if !(rhat <= RHAT_GATE) => Err(CliError::RhatGate { column, rhat }),
        _ => Ok(()),
    }
}

fn cmd_sample(a: &SampleArgs) -> Result<i32, CliError> {
    let model = load_model(&a.model)?;
    let spec = select_split(&a.select)?;
    let outcome = sample_into(&model, spec.as_ref(), &a.sampler.config(), &a.out, "sample")?;
    print!("{}", rhat_table(&outcome.report));
    println!("wrote {}", a.out.join("trace.csv").display());
    if !a.no_rhat_gate {
        rhat_gate(&outcome.report)?;
    }
    Ok(EXIT_OK)
}

fn cmd_split(a: &SplitArgs) -> Result<i32, CliError> {
    let model = load_model(&a.model)?;
    checked(&model)?;
    let spec = select_split(&a.select)?.ok_or_else(|| CliError::Usage("split needs --split or --holdout".into()))?;
    let split = split_node(&model, &spec)?;
    crate::split::check_independence(&split)?;
    create_dir(&a.out)?;
    write(&a.out.join("split_model.json"), model_io::to_json_pretty(&split.model).as_bytes())?;
    write(&a.out.join("split.json"), spec.to_json_pretty().as_bytes())?;
    let labels = serde_json::to_string_pretty(&split.labels).expect("labels serialise");
    write(&a.out.join("labels.json"), labels.as_bytes())?;
    let mut manifest = RunManifest::new("split", &split.model, None);
    manifest.add_spec("split.json", &spec);
    manifest.outputs = vec!["split_model.json".into(), "split.json".into(), "labels.json".into()];
    manifest.finish(&a.out)?;
    for d in &split.delta_spec {
        println!("delta: h({}) - h({}) on the {} scale", d.a, d.b, d.transform);
    }
    Ok(EXIT_OK)
}

/// One line of `conflict.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub job: String,
    pub components: Vec<String>,
    #[serde(flatten)]
    pub result: ConflictResult,
}

/// Tests the split in `split` against `trace` and writes `conflict.json`,
/// `density.csv` and a manifest into `out`.
fn conflict_into(
    job: &str,
    split: &SplitModel,
    trace: &Trace,
    flags: &MethodFlags,
    out: &Path,
) -> Result<ConflictRecord, CliError> {
    let delta = delta_samples(trace, split)?;
    let method = flags.selection()?.resolve(&delta);
    let result = conflict::conflict(&delta, method, &flags.kde())?;
    create_dir(out)?;
    let record = ConflictRecord { job: job.to_string(), components: delta.labels.clone(), result };
    let json = serde_json::to_string_pretty(&[&record]).expect("record serialises");
    write(&out.join("conflict.json"), json.as_bytes())?;
    let mut csv = String::from("component,delta,density\n");
    for j in 0..delta.k() {
        // constant components have no density to plot
        if let Ok(grid) = density_grid(&delta, j, if delta.k() == 1 { flags.bandwidth } else { None }, 512) {
            for (x, d) in grid {
                let _ = writeln!(csv, "{},{x:?},{d:?}", j + 1);
            }
        }
    }
    write(&out.join("density.csv"), csv.as_bytes())?;
    let mut manifest = RunManifest::new("conflict", &split.model, Some(trace.meta.config.seed));
    manifest.add_spec("split", &split.spec);
    manifest.outputs = vec!["conflict.json".into(), "density.csv".into()];
    manifest.finish(out)?;
    Ok(record)
}

fn gate_code(flags: &MethodFlags, p: f64) -> i32 {
    if flags.gate && p < flags.alpha {
        EXIT_FLAGGED
    } else {
        EXIT_OK
    }
}

fn cmd_conflict(a: &ConflictArgs) -> Result<i32, CliError> {
    require_file(&a.trace)?;
    let dir = a.trace.parent().unwrap_or(Path::new("."));
    let model_src = a.model.clone().unwrap_or_else(|| dir.join("model.json").display().to_string());
    let model = load_model(&model_src)?;
    let spec = match &a.split {
        Some(s) => load_split(s)?,
        None => load_split(&dir.join("split.json").display().to_string())
            .map_err(|_| CliError::Usage("no split spec: pass --split or keep split.json next to the trace".into()))?,
    };
    let split = split_node(&model, &spec)?;
    let trace = Trace::read(&a.trace, Some(&split.model.hash()), false)?;
    let out = a.out.clone().unwrap_or_else(|| dir.join("conflict"));
    let job = dir.file_name().map_or("run".to_string(), |s| s.to_string_lossy().into_owned());
    let record = conflict_into(&job, &split, &trace, &a.method, &out)?;
    println!("{}", record.result.summary());
    Ok(gate_code(&a.method, record.result.p_value))
}

fn load_scenario(src: &str, replicates: Option<usize>) -> Result<CalibrationScenario, CliError> {
    if let Some(name) = src.strip_prefix("corpus:") {
        return calibration::normal::by_name(name, replicates.unwrap_or(200))
            .ok_or_else(|| CliError::Usage(format!("unknown scenario `{name}`")));
    }
    let path = Path::new(src);
    require_file(path)?;
    let mut s = CalibrationScenario::from_path(path)?;
    if let Some(n) = replicates {
        s.n_replicates = n;
    }
    Ok(s)
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<i32, CliError> {
    let scenario = load_scenario(&a.scenario, a.replicates)?;
    let p = run_calibration(&scenario, a.seed)?;
    let mut csv = String::from("replicate,p_value\n");
    for (i, v) in p.iter().enumerate() {
        let _ = writeln!(csv, "{},{v:?}", i + 1);
    }
    let dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    write(&a.out, csv.as_bytes())?;
    let ks = ks_uniformity(&p).map_err(CalibrationError::from)?;
    let ks_path = a.out.with_extension("ks.json");
    write(&ks_path, serde_json::to_string_pretty(&ks).expect("ks serialises").as_bytes())?;
    let mut manifest = RunManifest::new("calibrate", &scenario.model, Some(a.seed));
    manifest.add_spec("split", &scenario.split);
    manifest.outputs = vec![file_name(&a.out), file_name(&ks_path)];
    manifest.finish(dir)?;
    println!(
        "{}: {} replicates, KS = {:.4} (critical 0.01: {:.4}, p = {:.3})",
        scenario.name,
        p.len(),
        ks.statistic,
        ks.critical(0.01).unwrap_or(f64::NAN),
        ks.p_value
    );
    Ok(if a.gate && ks.rejects(0.01) { EXIT_FLAGGED } else { EXIT_OK })
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// A row of the consolidated report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub job: String,
    pub method: String,
    pub p_value: f64,
    pub mc_se: f64,
    pub flag_05: bool,
    pub flag_10: bool,
    pub path: String,
}

fn find_conflicts(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_conflicts(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "conflict.json") {
            found.push(p);
        }
    }
    Ok(())
}

/// Aggregates all `conflict.json` files under `run_dir`, sorted by p-value,
/// and writes `report.csv` and `report.json`.
pub fn cmd_report(run_dir: &Path, out: Option<&Path>) -> Result<Vec<ReportRow>, CliError> {
    if !run_dir.is_dir() {
        return Err(CliError::FileNotFound(run_dir.to_path_buf()));
    }
    let mut files = Vec::new();
    find_conflicts(run_dir, &mut files)?;
    let mut rows = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|source| CliError::Io { path: f.clone(), source })?;
        let records: Vec<ConflictRecord> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", f.display())))?;
        for r in records {
            let p = r.result.p_value;
            rows.push(ReportRow {
                job: r.job,
                method: r.result.method.to_string(),
                p_value: p,
                mc_se: r.result.mc_se,
                flag_05: p < THRESHOLDS[0],
                flag_10: p < THRESHOLDS[1],
                path: f.strip_prefix(run_dir).unwrap_or(f).display().to_string(),
            });
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("no conflict results under {}", run_dir.display())));
    }
    rows.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then_with(|| a.job.cmp(&b.job)));
    let out = out.unwrap_or(run_dir);
    create_dir(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).expect("row serialises");
    }
    write(&out.join("report.csv"), &w.into_inner().expect("in-memory writer"))?;
    write(&out.join("report.json"), serde_json::to_string_pretty(&rows).expect("rows serialise").as_bytes())?;
    println!("{:<24} {:<18} {:>9} {:>9}  flags", "job", "method", "p", "mc_se");
    for r in &rows {
        let flag = if r.flag_05 {
            "** (<0.05)"
        } else if r.flag_10 {
            "*  (<0.10)"
        } else {
            ""
        };
        println!("{:<24} {:<18} {:>9.4} {:>9.4}  {flag}", r.job, r.method, r.p_value, r.mc_se);
    }
    Ok(rows)
}

fn job_name(split: &str) -> String {
    let stem = Path::new(split).file_stem().map_or(split.to_string(), |s| s.to_string_lossy().into_owned());
    stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' }).collect()
}

fn cmd_batch(a: &BatchArgs) -> Result<i32, CliError> {
    use rayon::prelude::*;
    let model = load_model(&a.model)?;
    checked(&model)?;
    let mut ids = a.split.clone();
    if a.all_splits {
        let id = a.model.strip_prefix("corpus:").ok_or_else(|| CliError::Usage("--all-splits needs a corpus model".into()))?;
        let entry = corpus::catalog().into_iter().find(|e| e.id == id);
        ids.extend(entry.map(|e| e.splits).unwrap_or_default());
    }
    if ids.is_empty() {
        return Err(CliError::Usage("no splits: pass --split or --all-splits".into()));
    }
    // resolve every spec before any work starts
    let specs: Vec<(String, SplitSpec)> =
        ids.iter().map(|id| load_split(id).map(|s| (job_name(id), s))).collect::<Result<_, _>>()?;
    a.method.selection()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let config = a.sampler.config();
    type JobResult = Result<(ConflictRecord, Option<CliError>), CliError>;
    let results: Vec<(String, JobResult)> = pool.install(|| {
        specs
            .par_iter()
            .map(|(job, spec)| {
                let dir = a.out.join(job);
                let r = sample_into(&model, Some(spec), &config, &dir, "batch").and_then(|o| {
                    let gate = if a.no_rhat_gate { None } else { rhat_gate(&o.report).err() };
                    let split = o.split.expect("batch jobs are split");
                    conflict_into(job, &split, &o.trace, &a.method, &dir.join("conflict")).map(|r| (r, gate))
                });
                (job.clone(), r)
            })
            .collect()
    });
    let mut code = EXIT_OK;
    for (job, r) in &results {
        match r {
            Ok((rec, gate)) => {
                println!("{job}: {}", rec.result.summary());
                if let Some(g) = gate {
                    eprintln!("{job}: {g}");
                    code = code.max(g.exit_code());
                }
                code = code.max(gate_code(&a.method, rec.result.p_value));
            }
            Err(e) => {
                eprintln!("{job}: error: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    if results.iter().any(|(_, r)| r.is_ok()) {
        cmd_report(&a.out, None)?;
    }
    Ok(code)
}

fn corpus_listing() -> String {
    let mut s = String::new();
    for e in corpus::catalog() {
        let _ = writeln!(s, "corpus:{:<14} {}", e.id, e.description);
        if !e.splits.is_empty() {
            let _ = writeln!(s, "  splits: {}", e.splits.join(" "));
        }
    }
    let _ = writeln!(s, "calibration scenarios: {}", calibration::normal::NAMES.map(|n| format!("corpus:{n}")).join(" "));
    s
}

#[cfg(test)]
mod tests;
