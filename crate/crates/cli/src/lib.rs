//! `anomgen` command-line front end.
//!
//! Exit codes: 0 success, 1 other generation failure, 2 invalid input
//! (usage, spec or data files), 3 hard uniqueness failure, 4 I/O error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anomgen_core::config::{check_callbacks, parse_spec_unvalidated, ConfigError};
use anomgen_core::dataset::read_dataset_file;
use anomgen_core::metrics::{MetricsError, DEFAULT_BETAS};
use anomgen_core::plot::{plot_svg, PlotOptions};
use anomgen_core::{
    build_schedule, generate, parse_spec, score_files, validate_spec, write_events_csv, write_manifest,
    CallbackRegistry, DatasetSpec, GenerateError, GenerateOptions,
};
use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_HARD_UNIQUENESS: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "anomgen", version, about = "Labeled synthetic time-series anomaly dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset CSV, its manifest and its events file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV; defaults to `output.path` from the dataset spec.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Manifest path; defaults to `output.manifest_path` or `<out stem>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Worker threads (defaults to available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = anomgen_core::engine::DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        /// Write labels to `<out stem>.labels.csv` instead of a `label` column.
        #[arg(long)]
        split_labels: bool,
    },
    /// Check a spec and list every violation.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Print anomaly schedule statistics as JSON.
    Stats {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Score predicted labels against ground truth.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// `start,length` CSV of ground-truth events for event-level recall.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Comma-separated F-beta weights.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BETAS.to_vec())]
        beta: Vec<f64>,
    },
    /// Render a dataset as an SVG chart with anomalous spans shaded.
    Plot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variable names to draw.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
    },
}

/// A failure with its exit code. The message is printed as one line.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub detail: Option<String>,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

fn io_failure(what: &str, path: &Path, e: io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{what} {}: {e}", path.display()))
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{}", f.message);
            if let Some(d) = f.detail {
                eprintln!("{d}");
            }
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate {
            spec,
            out,
            manifest,
            workers,
            chunk_size,
            split_labels,
        } => cmd_generate(&spec, out, manifest, workers, chunk_size, split_labels),
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Stats { spec } => cmd_stats(&spec),
        Command::Score {
            pred,
            truth,
            events,
            beta,
        } => cmd_score(&pred, &truth, events.as_deref(), &beta),
        Command::Plot { data, out, vars } => cmd_plot(&data, &out, vars),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure("cannot read", path, e))
}

fn config_failure(path: &Path, e: ConfigError) -> Failure {
    match e {
        ConfigError::Invalid(report) => {
            Failure::new(EXIT_INVALID, format!("{}: invalid spec", path.display())).with_detail(report.to_string())
        }
        other => Failure::new(EXIT_INVALID, format!("{}: {other}", path.display())),
    }
}

/// Parses and validates a spec for command-line use, where callback
/// variables cannot be resolved.
fn load_spec(path: &Path) -> Result<DatasetSpec, Failure> {
    let spec = parse_spec(&read_text(path)?).map_err(|e| config_failure(path, e))?;
    let callbacks = check_callbacks(&spec, None);
    if let Some(first) = callbacks.errors().next() {
        return Err(Failure::new(EXIT_INVALID, format!("{}: {first}", path.display())));
    }
    for w in validate_spec(&spec).warnings() {
        eprintln!("{w}");
    }
    Ok(spec)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.partial"))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Files written through temporaries and renamed into place only when
/// every output succeeded.
struct Staged {
    targets: Vec<(PathBuf, PathBuf)>,
}

impl Staged {
    fn new() -> Self {
        Staged { targets: Vec::new() }
    }

    fn create(&mut self, target: &Path) -> Result<BufWriter<File>, Failure> {
        let tmp = temp_path(target);
        let file = File::create(&tmp).map_err(|e| io_failure("cannot create", &tmp, e))?;
        self.targets.push((tmp, target.to_path_buf()));
        Ok(BufWriter::with_capacity(1 << 20, file))
    }

    fn commit(mut self) -> Result<(), Failure> {
        for (tmp, target) in std::mem::take(&mut self.targets) {
            fs::rename(&tmp, &target).map_err(|e| io_failure("cannot write", &target, e))?;
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.targets {
            let _ = fs::remove_file(tmp);
        }
    }
}

fn cmd_generate(
    spec_path: &Path,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    workers: Option<usize>,
    chunk_size: usize,
    split_labels: bool,
) -> Result<(), Failure> {
    let spec = load_spec(spec_path)?;
    let out = out
        .or_else(|| spec.output.path.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::new(EXIT_INVALID, "no output path: pass --out or set output.path in the dataset spec"))?;
    let manifest_path = manifest
        .or_else(|| spec.output.manifest_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| sibling(&out, ".manifest.json"));
    let labels_path = (split_labels || !spec.output.labels_column).then(|| sibling(&out, ".labels.csv"));
    let events_path = sibling(&out, ".events.csv");

    for target in [Some(&out), Some(&manifest_path), labels_path.as_ref(), Some(&events_path)]
        .into_iter()
        .flatten()
    {
        if same_file(target, spec_path) {
            return Err(Failure::new(EXIT_INVALID, format!("refusing to overwrite the input spec file {}", target.display())));
        }
    }

    let options = GenerateOptions {
        workers: workers.unwrap_or_else(|| GenerateOptions::default().workers),
        chunk_size,
    };
    if options.workers == 0 || options.chunk_size == 0 {
        return Err(Failure::new(EXIT_INVALID, "--workers and --chunk-size must be at least 1"));
    }

    let mut staged = Staged::new();
    let mut data = staged.create(&out)?;
    let mut labels = labels_path.as_deref().map(|p| staged.create(p)).transpose()?;
    let summary = generate(
        &spec,
        &CallbackRegistry::new(),
        &options,
        &mut data,
        labels.as_mut().map(|l| l as &mut dyn Write),
    )
    .map_err(|e| match e {
        GenerateError::Io(io) => Failure::new(EXIT_IO, format!("i/o error writing {}: {io}", out.display()))
            .with_detail("partial output discarded"),
        e if e.is_hard_failure() => Failure::new(EXIT_HARD_UNIQUENESS, e.to_string()),
        e @ (GenerateError::Invalid(_) | GenerateError::Schedule(_) | GenerateError::Options(_)) => {
            Failure::new(EXIT_INVALID, e.to_string())
        }
        e => Failure::new(EXIT_FAILURE, e.to_string()),
    })?;
    drop(data);
    drop(labels);

    let mut m = staged.create(&manifest_path)?;
    write_manifest(&summary.manifest, &mut m).map_err(|e| io_failure("cannot write", &manifest_path, e))?;
    drop(m);
    let mut ev = staged.create(&events_path)?;
    write_events_csv(summary.schedule.events(), &mut ev).map_err(|e| io_failure("cannot write", &events_path, e))?;
    drop(ev);
    staged.commit()?;

    eprintln!(
        "wrote {} rows ({} anomalous in {} events) to {}",
        summary.rows,
        summary.manifest.anomalous_points,
        summary.manifest.event_count,
        out.display()
    );
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let spec = parse_spec_unvalidated(&read_text(path)?).map_err(|e| config_failure(path, e))?;
    let mut report = validate_spec(&spec);
    report.extend(check_callbacks(&spec, None));
    for issue in &report.issues {
        eprintln!("{issue}");
    }
    if report.has_errors() {
        let n = report.errors().count();
        return Err(Failure::new(
            EXIT_INVALID,
            format!("{}: {n} violation{}", path.display(), if n == 1 { "" } else { "s" }),
        ));
    }
    println!("ok");
    Ok(())
}

fn cmd_stats(path: &Path) -> Result<(), Failure> {
    let spec = load_spec(path)?;
    let schedule = build_schedule(&spec.anomaly, spec.n_timestamps, spec.seed)
        .map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&schedule.stats()).expect("stats serialize"));
    Ok(())
}

fn cmd_score(pred: &Path, truth: &Path, events: Option<&Path>, betas: &[f64]) -> Result<(), Failure> {
    let report = score_files(pred, truth, events, betas).map_err(|e| {
        let code = match &e {
            MetricsError::Read {
                source: anomgen_core::dataset::ReadError::Io { .. },
                ..
            } => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    })?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn cmd_plot(data: &Path, out: &Path, vars: Vec<String>) -> Result<(), Failure> {
    if same_file(data, out) {
        return Err(Failure::new(EXIT_INVALID, "refusing to overwrite the input dataset"));
    }
    let ds = read_dataset_file(data).map_err(|e| {
        let code = if matches!(e, anomgen_core::dataset::ReadError::Io { .. }) { EXIT_IO } else { EXIT_INVALID };
        Failure::new(code, format!("{}: {e}", data.display()))
    })?;
    let svg = plot_svg(&ds, &PlotOptions { vars, ..Default::default() })
        .map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
    fs::write(out, svg).map_err(|e| io_failure("cannot write", out, e))
}
