//! Batch front end: validate specs, score logs, aggregate and compare runs,
//! tally failure annotations and generate synthetic corpora.
//!
//! Every command writes its report to `out`, diagnostics to `err`, and
//! returns the process exit code.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use safescore_core::analysis::{
    aggregate_task, average_row, diff_runs, failure_tally, read_aggregate_csv, read_annotations,
    write_aggregate_csv, AnalysisError,
};
use safescore_core::synthgen::{generate_corpus, SynthError};
use safescore_core::taskspec::Severity;
use safescore_core::{
    parse_task_spec, read_trajectory, score_trial, validate_task_spec, ScoreCard, TaskSpec,
    TaskSummary, Thresholds,
};

pub use config::{ConfigError, OutputFormat, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "safescore", version, about = "Safety-aware scoring of robot rollouts")]
pub struct Cli {
    /// TOML config file with thresholds, output format and parallelism.
    #[arg(long, global = true, env = "SAFESCORE_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a task spec and print its diagnostics.
    Validate { spec: PathBuf },
    /// Score trajectory logs against a task spec, one JSON card per log.
    Score {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the configured parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Include the violation events in each card.
        #[arg(long)]
        events: bool,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Summarize score cards per task, with a final Average row.
    Aggregate {
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        #[arg(required = true)]
        cards: Vec<PathBuf>,
    },
    /// Compare mean Q per task between two aggregate CSV reports.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Gap above which a task is flagged; defaults to the configured `diff_gap`.
        #[arg(long)]
        gap: Option<f64>,
    },
    /// Count failure categories per task and per trial.
    Tally { annotations: PathBuf },
    /// Write a synthetic corpus with ground truth.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Parses `args` and runs the selected command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let cfg = match RunConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_IO;
        }
    };
    match cli.command {
        Command::Validate { spec } => cmd_validate(&spec, out, err),
        Command::Score {
            spec,
            parallelism,
            events,
            logs,
        } => {
            let mut cfg = cfg;
            if let Some(p) = parallelism {
                if p == 0 {
                    let _ = writeln!(err, "error: parallelism must be at least 1");
                    return EXIT_IO;
                }
                cfg.parallelism = p;
            }
            cmd_score(&spec, &logs, &cfg, events, out, err)
        }
        Command::Aggregate { format, cards } => {
            let format = format.unwrap_or(cfg.output_format);
            cmd_aggregate(&cards, &cfg, format, out, err)
        }
        Command::Diff { a, b, gap } => cmd_diff(&a, &b, gap.unwrap_or(cfg.thresholds.diff_gap), out, err),
        Command::Tally { annotations } => cmd_tally(&annotations, out, err),
        Command::Synth { seed, count, out: dir } => cmd_synth(seed, count, &dir, out, err),
        Command::Config => match out.write_all(cfg.to_toml_string().as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_IO,
        },
    }
}

fn read_spec(path: &Path, err: &mut dyn Write) -> Result<TaskSpec, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_IO
    })?;
    parse_task_spec(&text).map_err(|e| {
        match e {
            safescore_core::SpecError::Invalid(diags) => {
                for d in diags {
                    let _ = writeln!(err, "{}: {d}", path.display());
                }
            }
            other => {
                let _ = writeln!(err, "{}: error: {other}", path.display());
            }
        }
        EXIT_FAILURE
    })
}

/// Exit 0 when the spec has no errors, 1 when it does, 2 when it cannot be read.
pub fn cmd_validate(spec_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let spec = match read_spec(spec_path, err) {
        Ok(spec) => spec,
        Err(code) => return code,
    };
    let diags = validate_task_spec(&spec);
    for d in &diags {
        let _ = writeln!(err, "{}: {d}", spec_path.display());
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return EXIT_FAILURE;
    }
    let _ = writeln!(
        out,
        "ok: {} ({} goals, {} support goals)",
        spec.task_id,
        spec.n(),
        spec.m()
    );
    EXIT_OK
}

fn score_file(path: &Path, spec: &TaskSpec, th: &Thresholds, events: bool) -> Result<String, String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let traj = read_trajectory(BufReader::new(file)).map_err(|e| e.to_string())?;
    let card = score_trial(spec, &traj, th).map_err(|e| e.to_string())?;
    let json = if events {
        card.to_json_with_events()
    } else {
        card.to_json()
    };
    Ok(json.to_string())
}

fn pool(parallelism: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool")
}

/// One line per log, in input order. A log that fails yields an
/// `{"file", "error"}` record and exit code 1; the rest are still scored.
pub fn cmd_score(
    spec_path: &Path,
    logs: &[PathBuf],
    cfg: &RunConfig,
    events: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let spec = match read_spec(spec_path, err) {
        Ok(spec) => spec,
        Err(code) => return code,
    };
    let th = cfg.thresholds;
    let results: Vec<Result<String, String>> = pool(cfg.parallelism)
        .install(|| logs.par_iter().map(|p| score_file(p, &spec, &th, events)).collect());
    let mut code = EXIT_OK;
    for (path, r) in logs.iter().zip(results) {
        let line = match r {
            Ok(line) => line,
            Err(message) => {
                code = EXIT_FAILURE;
                let _ = writeln!(err, "{}: {message}", path.display());
                serde_json::json!({ "file": path.display().to_string(), "error": message })
                    .to_string()
            }
        };
        if writeln!(out, "{line}").is_err() {
            return EXIT_IO;
        }
    }
    code
}

fn read_cards(path: &Path, cards: &mut Vec<ScoreCard>, err: &mut dyn Write) -> Result<(), i32> {
    let file = File::open(path).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_IO
    })?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            EXIT_IO
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String, err: &mut dyn Write| {
            let _ = writeln!(err, "error: {}:{}: {msg}", path.display(), i + 1);
            EXIT_FAILURE
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| fail(e.to_string(), err))?;
        if value.get("error").is_some() {
            let _ = writeln!(err, "warning: {}:{}: skipping error record", path.display(), i + 1);
            continue;
        }
        cards.push(ScoreCard::from_json(value).map_err(|e| fail(e.to_string(), err))?);
    }
    Ok(())
}

/// One row per task sorted by task id, then the Average row.
pub fn cmd_aggregate(
    card_paths: &[PathBuf],
    cfg: &RunConfig,
    format: OutputFormat,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut cards = Vec::new();
    for p in card_paths {
        if let Err(code) = read_cards(p, &mut cards, err) {
            return code;
        }
    }
    if cards.is_empty() {
        let _ = writeln!(err, "error: no score cards to aggregate");
        return EXIT_FAILURE;
    }
    let mut groups: BTreeMap<String, Vec<ScoreCard>> = BTreeMap::new();
    for c in cards {
        groups.entry(c.task_id.clone()).or_default().push(c);
    }
    let groups: Vec<Vec<ScoreCard>> = groups.into_values().collect();
    let rows: Result<Vec<TaskSummary>, AnalysisError> = pool(cfg.parallelism)
        .install(|| groups.par_iter().map(|g| aggregate_task(g)).collect());
    let mut rows = match rows {
        Ok(rows) => rows,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    match average_row(&rows) {
        Ok(avg) => rows.push(avg),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    }
    let written = match format {
        OutputFormat::Csv => write_aggregate_csv(&rows, &mut *out).map_err(|e| e.to_string()),
        OutputFormat::Json => rows
            .iter()
            .try_for_each(|r| writeln!(out, "{}", r.to_json()))
            .map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
    }
}

fn read_report(path: &Path, err: &mut dyn Write) -> Result<Vec<TaskSummary>, i32> {
    let file = File::open(path).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_IO
    })?;
    read_aggregate_csv(file).map_err(|e| {
        let _ = writeln!(err, "error: {}: {e}", path.display());
        EXIT_IO
    })
}

/// Diff CSV of two aggregate reports. Always exits 0 unless an input is unreadable.
pub fn cmd_diff(a: &Path, b: &Path, gap: f64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (ra, rb) = match (read_report(a, err), read_report(b, err)) {
        (Ok(ra), Ok(rb)) => (ra, rb),
        _ => return EXIT_IO,
    };
    let report = diff_runs(&ra, &rb, gap);
    for id in &report.only_a {
        let _ = writeln!(err, "note: `{id}` only in {}", a.display());
    }
    for id in &report.only_b {
        let _ = writeln!(err, "note: `{id}` only in {}", b.display());
    }
    match report.write_csv(&mut *out, &ra, &rb) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
    }
}

/// Per-task and total failure counts as one JSON object.
pub fn cmd_tally(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_IO;
        }
    };
    let annotations = match read_annotations(file) {
        Ok(a) => a,
        Err(AnalysisError::Io(e)) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_IO;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    };
    let tally = failure_tally(&annotations);
    match writeln!(out, "{}", serde_json::to_string(&tally).expect("tally serializes")) {
        Ok(()) => EXIT_OK,
        Err(_) => EXIT_IO,
    }
}

/// Writes the corpus and prints the manifest path.
pub fn cmd_synth(seed: u64, count: u64, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match generate_corpus(seed, count, dir) {
        Ok(manifest) => {
            let _ = writeln!(out, "{}", manifest.display());
            EXIT_OK
        }
        Err(e @ SynthError::Io { .. }) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}
