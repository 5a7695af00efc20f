//! Dataset generation.
//!
//! Generation runs in three phases:
//!
//! 1. the anomaly schedule is built once, serially;
//! 2. fixed-size timestamp chunks are evaluated independently. Workers only
//!    read the dataset spec, schedule and callback registry and return owned
//!    [`RecordBlock`]s; there are no locks and no shared mutable state;
//! 3. blocks are consumed in chunk order on one thread, which resolves
//!    uniqueness and writes rows.
//!
//! Every draw is addressed by `(seed, stream, timestamp, attempt)`, so the
//! output bytes do not depend on the worker count or on the order in which
//! chunks complete.

use std::io::{self, Write};

use serde::Serialize;

use crate::config::{check_callbacks, spec_fingerprint, validate_spec, DatasetSpec, ValidationReport, FORMAT_VERSION};
use crate::prng::Class;
use crate::schedule::{build_schedule, AnomalyEvent, AnomalySchedule, ScheduleError};
use crate::signal::{eval_variable, CallbackRegistry, EvalError, Value};
use crate::unique::{ResolveError, UniquenessTracker};

pub const DEFAULT_CHUNK_SIZE: usize = 65_536;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Worker threads for phase 2. `1` runs on the calling thread.
    pub workers: usize,
    /// Rows per chunk.
    pub chunk_size: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl GenerateOptions {
    pub fn with_workers(workers: usize) -> Self {
        GenerateOptions {
            workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("invalid spec:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid options: {0}")]
    Options(String),
}

impl GenerateError {
    pub fn is_hard_failure(&self) -> bool {
        matches!(self, GenerateError::Resolve(ResolveError::HardFailure { .. }))
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: u64,
    pub values: Vec<Value>,
    pub label: Class,
}

/// Rows `[chunk_start, chunk_start + len)` produced by one worker.
///
/// Values hold attempt-0 candidates until the block is finalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBlock {
    chunk_start: u64,
    n_vars: usize,
    values: Vec<Value>,
    labels: Vec<Class>,
    rendered: Option<Rendered>,
}

#[derive(Debug, Clone, PartialEq)]
struct Rendered {
    data: Vec<u8>,
    labels: Vec<u8>,
}

impl RecordBlock {
    pub fn chunk_start(&self) -> u64 {
        self.chunk_start
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.values[i * self.n_vars..(i + 1) * self.n_vars]
    }

    pub fn label(&self, i: usize) -> Class {
        self.labels[i]
    }

    pub fn record(&self, i: usize) -> Record {
        Record {
            t: self.chunk_start + i as u64,
            values: self.row(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    fn render(&self, labels_inline: bool) -> Rendered {
        let mut data = Vec::with_capacity(self.len() * (8 + 20 * self.n_vars));
        let mut labels = Vec::new();
        for i in 0..self.len() {
            render_row(&mut data, self.chunk_start + i as u64, self.row(i), self.labels[i], labels_inline);
            if !labels_inline {
                labels.extend_from_slice(label_bytes(self.labels[i]));
            }
        }
        Rendered { data, labels }
    }
}

fn label_bytes(class: Class) -> &'static [u8] {
    match class {
        Class::Normal => b"0\n",
        Class::Anomalous => b"1\n",
    }
}

fn render_row(out: &mut Vec<u8>, t: u64, values: &[Value], label: Class, labels_inline: bool) {
    write!(out, "{t}").expect("write to Vec");
    for v in values {
        out.push(b',');
        v.write_csv(out);
    }
    if labels_inline {
        out.push(b',');
        out.extend_from_slice(label_bytes(label));
    } else {
        out.push(b'\n');
    }
}

/// CSV header line (with trailing newline).
pub fn csv_header(names: &[String], labels_column: bool) -> String {
    let mut h = String::from("t");
    for n in names {
        h.push(',');
        h.push_str(n);
    }
    if labels_column {
        h.push_str(",label");
    }
    h.push('\n');
    h
}

/// Reproducibility record written next to every dataset.
///
/// Fields are declared in alphabetical order so the JSON key order is
/// canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub anomalous_points: u64,
    pub event_count: u64,
    pub format_version: u32,
    pub n_timestamps: u64,
    pub seed: u64,
    pub soft_duplicates_emitted: u64,
    pub spec_fingerprint: String,
    pub tool_version: String,
    pub variables: Vec<String>,
}

pub fn write_manifest<W: Write>(manifest: &Manifest, mut sink: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut sink, manifest)?;
    sink.write_all(b"\n")?;
    sink.flush()
}

/// Writes `start,length` rows for the scorer's events input.
pub fn write_events_csv<W: Write>(events: &[AnomalyEvent], mut sink: W) -> io::Result<()> {
    sink.write_all(b"start,length\n")?;
    for e in events {
        writeln!(sink, "{},{}", e.start, e.length)?;
    }
    sink.flush()
}

/// Writes a header and `rows`. Returns the number of rows written.
pub fn write_csv<'a, W, I>(rows: I, names: &[String], labels_column: bool, mut sink: W) -> io::Result<u64>
where
    W: Write,
    I: IntoIterator<Item = &'a Record>,
{
    sink.write_all(csv_header(names, labels_column).as_bytes())?;
    let mut buf = Vec::new();
    let mut count = 0;
    for r in rows {
        buf.clear();
        render_row(&mut buf, r.t, &r.values, r.label, labels_column);
        sink.write_all(&buf)?;
        count += 1;
    }
    sink.flush()?;
    Ok(count)
}

/// A validated spec with its schedule, ready to produce chunks.
pub struct Generator<'a> {
    spec: &'a DatasetSpec,
    registry: &'a CallbackRegistry,
    schedule: AnomalySchedule,
}

impl<'a> Generator<'a> {
    /// Validates `spec`, checks callback keys against `registry` and builds
    /// the anomaly schedule.
    pub fn new(spec: &'a DatasetSpec, registry: &'a CallbackRegistry) -> Result<Self, GenerateError> {
        let mut report = validate_spec(spec);
        report.extend(check_callbacks(spec, Some(registry)));
        if report.has_errors() {
            return Err(GenerateError::Invalid(ValidationReport {
                issues: report.errors().cloned().collect(),
            }));
        }
        let schedule = build_schedule(&spec.anomaly, spec.n_timestamps, spec.seed)?;
        Ok(Generator {
            spec,
            registry,
            schedule,
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        self.spec
    }

    pub fn schedule(&self) -> &AnomalySchedule {
        &self.schedule
    }

    /// Attempt-0 candidates for timestamps `[start, end)`.
    pub fn generate_chunk(&self, start: u64, end: u64) -> Result<RecordBlock, GenerateError> {
        assert!(start <= end && end <= self.spec.n_timestamps, "chunk [{start}, {end}) out of bounds");
        let n_vars = self.spec.variables.len();
        let len = (end - start) as usize;
        let mut values = Vec::with_capacity(len * n_vars);
        let mut labels = Vec::with_capacity(len);
        for t in start..end {
            let class = self.schedule.label_at(t);
            labels.push(class);
            for (i, var) in self.spec.variables.iter().enumerate() {
                values.push(eval_variable(var, i as u16, t, class, self.spec.seed, 0, self.registry)?);
            }
        }
        Ok(RecordBlock {
            chunk_start: start,
            n_vars,
            values,
            labels,
            rendered: None,
        })
    }

    /// Chunk generation followed by rendering when no uniqueness
    /// resolution can change the values.
    fn produce_chunk(&self, start: u64, end: u64, labels_inline: bool) -> Result<RecordBlock, GenerateError> {
        let mut block = self.generate_chunk(start, end)?;
        if !self.spec.uniqueness.any_tracked() {
            block.rendered = Some(block.render(labels_inline));
        }
        Ok(block)
    }

    pub fn finalizer(&self) -> Finalizer<'_, 'a> {
        Finalizer {
            generator: self,
            tracker: UniquenessTracker::new(&self.spec.uniqueness, self.spec.variables.len()),
            next_t: 0,
        }
    }

    fn manifest(&self, soft_duplicates_emitted: u64) -> Manifest {
        Manifest {
            anomalous_points: self.schedule.anomalous_points(),
            event_count: self.schedule.events().len() as u64,
            format_version: FORMAT_VERSION,
            n_timestamps: self.spec.n_timestamps,
            seed: self.spec.seed,
            soft_duplicates_emitted,
            spec_fingerprint: spec_fingerprint(self.spec),
            tool_version: TOOL_VERSION.to_string(),
            variables: self.spec.variable_names(),
        }
    }
}

/// Serial phase: resolves uniqueness over blocks presented in chunk order.
pub struct Finalizer<'g, 'a> {
    generator: &'g Generator<'a>,
    tracker: UniquenessTracker,
    next_t: u64,
}

impl Finalizer<'_, '_> {
    /// Rewrites tracked values in `block` with their resolved value.
    ///
    /// # Panics
    /// If blocks are not presented contiguously in ascending order.
    pub fn finalize(&mut self, block: &mut RecordBlock) -> Result<(), GenerateError> {
        assert_eq!(block.chunk_start, self.next_t, "blocks must be finalized in chunk order");
        self.next_t += block.len() as u64;
        let any = [Class::Normal, Class::Anomalous].iter().any(|&c| self.tracker.is_tracked(c));
        if !any {
            return Ok(());
        }
        let spec = self.generator.spec;
        let registry = self.generator.registry;
        for row in 0..block.len() {
            let t = block.chunk_start + row as u64;
            let class = block.labels[row];
            if !self.tracker.is_tracked(class) {
                continue;
            }
            for (i, var) in spec.variables.iter().enumerate() {
                let slot = row * block.n_vars + i;
                let first = block.values[slot];
                let resolved = self.tracker.resolve_value(i, &var.name, t, class, |attempt| {
                    if attempt == 0 {
                        Ok(first)
                    } else {
                        eval_variable(var, i as u16, t, class, spec.seed, attempt, registry)
                    }
                })?;
                block.values[slot] = resolved.value();
            }
        }
        block.rendered = None;
        Ok(())
    }

    pub fn tracker(&self) -> &UniquenessTracker {
        &self.tracker
    }

    pub fn soft_duplicates_emitted(&self) -> u64 {
        self.tracker.soft_duplicates_emitted()
    }
}

fn chunk_bounds(n: u64, chunk_size: usize) -> Vec<(u64, u64)> {
    let size = chunk_size as u64;
    (0..n.div_ceil(size)).map(|c| (c * size, ((c + 1) * size).min(n))).collect()
}

#[cfg(feature = "parallel")]
fn run_window<F>(pool: Option<&rayon::ThreadPool>, bounds: &[(u64, u64)], f: F) -> Vec<Result<RecordBlock, GenerateError>>
where
    F: Fn(u64, u64) -> Result<RecordBlock, GenerateError> + Sync,
{
    use rayon::prelude::*;
    match pool {
        Some(pool) => pool.install(|| bounds.par_iter().map(|&(s, e)| f(s, e)).collect()),
        None => bounds.iter().map(|&(s, e)| f(s, e)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_window<F>(_pool: Option<&()>, bounds: &[(u64, u64)], f: F) -> Vec<Result<RecordBlock, GenerateError>>
where
    F: Fn(u64, u64) -> Result<RecordBlock, GenerateError>,
{
    bounds.iter().map(|&(s, e)| f(s, e)).collect()
}

fn check_options(options: &GenerateOptions) -> Result<(), GenerateError> {
    if options.workers == 0 {
        return Err(GenerateError::Options("workers must be at least 1".into()));
    }
    if options.chunk_size == 0 {
        return Err(GenerateError::Options("chunk size must be at least 1".into()));
    }
    Ok(())
}

/// Runs phases 2 and 3, handing each finalized block to `sink` in order.
fn drive<F>(
    generator: &Generator<'_>,
    options: &GenerateOptions,
    render: Option<bool>,
    mut sink: F,
) -> Result<(u64, u64), GenerateError>
where
    F: FnMut(RecordBlock) -> Result<(), GenerateError>,
{
    #[cfg(feature = "parallel")]
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| GenerateError::Options(e.to_string()))?,
        )
    } else {
        None
    };
    #[cfg(not(feature = "parallel"))]
    let pool: Option<()> = None;

    let bounds = chunk_bounds(generator.spec.n_timestamps, options.chunk_size);
    // bounded look-ahead keeps memory proportional to the worker count
    let window = options.workers.saturating_mul(4).max(1);
    let mut finalizer = generator.finalizer();
    for group in bounds.chunks(window) {
        let blocks = run_window(pool.as_ref(), group, |s, e| match render {
            Some(inline) => generator.produce_chunk(s, e, inline),
            None => generator.generate_chunk(s, e),
        });
        for block in blocks {
            let mut block = block?;
            finalizer.finalize(&mut block)?;
            sink(block)?;
        }
    }
    Ok((finalizer.soft_duplicates_emitted(), finalizer.tracker.retries_used()))
}

/// Generates the dataset described by `spec`, streaming CSV rows to `data`.
///
/// When `labels` is given, the data file has no `label` column and labels
/// go to that sink under a `label` header instead.
pub fn generate<W: Write>(
    spec: &DatasetSpec,
    registry: &CallbackRegistry,
    options: &GenerateOptions,
    mut data: W,
    mut labels: Option<&mut dyn Write>,
) -> Result<GenerationSummary, GenerateError> {
    check_options(options)?;
    let generator = Generator::new(spec, registry)?;
    let labels_inline = labels.is_none();

    data.write_all(csv_header(&spec.variable_names(), labels_inline).as_bytes())?;
    if let Some(l) = labels.as_mut() {
        l.write_all(b"label\n")?;
    }

    let mut rows = 0u64;
    let (soft, retries) = drive(&generator, options, Some(labels_inline), |mut block| {
        let rendered = match block.rendered.take() {
            Some(r) => r,
            None => block.render(labels_inline),
        };
        data.write_all(&rendered.data)?;
        if let Some(l) = labels.as_mut() {
            l.write_all(&rendered.labels)?;
        }
        rows += block.len() as u64;
        Ok(())
    })?;
    data.flush()?;
    if let Some(l) = labels.as_mut() {
        l.flush()?;
    }

    Ok(GenerationSummary {
        manifest: generator.manifest(soft),
        schedule: generator.schedule,
        rows,
        retries_used: retries,
    })
}

#[derive(Debug, Clone)]
pub struct GenerationSummary {
    pub manifest: Manifest,
    pub schedule: AnomalySchedule,
    pub rows: u64,
    pub retries_used: u64,
}

/// Generates the whole dataset in memory, for library embedding and tests.
pub fn generate_records(
    spec: &DatasetSpec,
    registry: &CallbackRegistry,
    options: &GenerateOptions,
) -> Result<(Vec<Record>, GenerationSummary), GenerateError> {
    check_options(options)?;
    let generator = Generator::new(spec, registry)?;
    let mut records = Vec::with_capacity(spec.n_timestamps as usize);
    let (soft, retries) = drive(&generator, options, None, |block| {
        records.extend(block.records());
        Ok(())
    })?;
    let summary = GenerationSummary {
        manifest: generator.manifest(soft),
        rows: records.len() as u64,
        schedule: generator.schedule,
        retries_used: retries,
    };
    Ok((records, summary))
}
