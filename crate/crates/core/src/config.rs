//! Declarative dataset specs: JSON parsing, validation and
//! fingerprinting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::signal::{CallbackRegistry, Shape, SignalPrimitive, ValueType, MAX_ATTEMPTS, MAX_LANES};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_TRIES: u32 = 100;
/// Stream ids reserve 16 bits for the variable index.
pub const MAX_VARIABLES: usize = 1 << 16;
/// Discrete bounds must be exactly representable integers.
const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_timestamps: u64,
    pub seed: u64,
    pub variables: Vec<VariableSpec>,
    pub anomaly: AnomalySpec,
    pub uniqueness: UniquenessSpec,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariableKind {
    Stochastic {
        value_type: ValueType,
        normal_range: [f64; 2],
        anomalous_range: [f64; 2],
    },
    Composite {
        normal: Vec<SignalPrimitive>,
        anomalous: Vec<SignalPrimitive>,
    },
    Callback {
        registry_key: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnomalyMode {
    /// Target fraction of anomalous timestamps.
    Frequency(f64),
    /// Exact number of anomalous timestamps.
    PointCount(u64),
    /// Exact number of anomaly events.
    EventCount(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySpec {
    pub mode: AnomalyMode,
    pub duration_range: [u64; 2],
    pub allow_overlap: bool,
}

impl AnomalySpec {
    pub fn d_min(&self) -> u64 {
        self.duration_range[0]
    }

    pub fn d_max(&self) -> u64 {
        self.duration_range[1]
    }

    /// Anomalous timestamps the schedule is expected to produce, at most.
    pub fn expected_anomalous_points(&self, n_timestamps: u64) -> u64 {
        match self.mode {
            AnomalyMode::Frequency(f) => point_budget(f, n_timestamps),
            AnomalyMode::PointCount(k) => k,
            AnomalyMode::EventCount(e) => e.saturating_mul(self.d_max()).min(n_timestamps),
        }
    }

    /// Anomalous timestamps the schedule is guaranteed to produce, at least.
    pub fn guaranteed_anomalous_points(&self, n_timestamps: u64) -> u64 {
        match self.mode {
            AnomalyMode::Frequency(f) => {
                let b = point_budget(f, n_timestamps);
                if b >= self.d_min() {
                    b + 1 - self.d_min()
                } else {
                    0
                }
            }
            AnomalyMode::PointCount(k) => k,
            AnomalyMode::EventCount(e) if !self.allow_overlap => e.saturating_mul(self.d_min()),
            AnomalyMode::EventCount(e) => e.min(1).saturating_mul(self.d_min()),
        }
    }
}

/// `round(f * n)`, the anomalous-point budget for frequency mode.
pub fn point_budget(f: f64, n_timestamps: u64) -> u64 {
    (f * n_timestamps as f64).round().clamp(0.0, n_timestamps as f64) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UniquenessMode {
    #[default]
    Off,
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniquenessPolicy {
    pub mode: UniquenessMode,
    pub max_tries: u32,
}

impl Default for UniquenessPolicy {
    fn default() -> Self {
        UniquenessPolicy {
            mode: UniquenessMode::Off,
            max_tries: DEFAULT_MAX_TRIES,
        }
    }
}

impl UniquenessPolicy {
    pub fn new(mode: UniquenessMode, max_tries: u32) -> Self {
        UniquenessPolicy { mode, max_tries }
    }

    pub fn is_tracked(&self) -> bool {
        self.mode != UniquenessMode::Off
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UniquenessSpec {
    pub normal: UniquenessPolicy,
    pub anomalous: UniquenessPolicy,
}

impl UniquenessSpec {
    pub fn for_class(&self, class: crate::prng::Class) -> &UniquenessPolicy {
        match class {
            crate::prng::Class::Normal => &self.normal,
            crate::prng::Class::Anomalous => &self.anomalous,
        }
    }

    pub fn any_tracked(&self) -> bool {
        self.normal.is_tracked() || self.anomalous.is_tracked()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub path: Option<String>,
    pub manifest_path: Option<String>,
    pub labels_column: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            path: None,
            manifest_path: None,
            labels_column: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Document (wire) form

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format_version: Option<u32>,
    n_timestamps: u64,
    seed: u64,
    variables: Vec<VariableDoc>,
    anomaly: AnomalyDoc,
    #[serde(default)]
    uniqueness: UniquenessDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Stochastic,
    Composite,
    Callback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDoc {
    name: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_type: Option<ValueType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anomalous_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal: Option<Vec<SignalPrimitive>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anomalous: Option<Vec<SignalPrimitive>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    registry_key: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeTag {
    Frequency,
    PointCount,
    EventCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnomalyDoc {
    mode: ModeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<u64>,
    duration_range: [u64; 2],
    #[serde(default)]
    allow_overlap: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniquenessDoc {
    #[serde(default)]
    normal: PolicyDoc,
    #[serde(default)]
    anomalous: PolicyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    #[serde(default)]
    mode: UniquenessMode,
    #[serde(default = "default_max_tries")]
    max_tries: u32,
}

impl Default for PolicyDoc {
    fn default() -> Self {
        PolicyDoc {
            mode: UniquenessMode::Off,
            max_tries: DEFAULT_MAX_TRIES,
        }
    }
}

fn default_max_tries() -> u32 {
    DEFAULT_MAX_TRIES
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_path: Option<String>,
    #[serde(default = "default_true")]
    labels_column: bool,
}

// ---------------------------------------------------------------------------
// Errors and reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    /// Dotted field path, e.g. `variables[0].normal_range`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// True when the dataset spec can be generated (warnings allowed).
    pub fn is_ok(&self) -> bool {
        !self.has_errors()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("invalid spec:\n{0}")]
    Invalid(ValidationReport),
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses a JSON spec and rejects it if validation reports any error.
pub fn parse_spec(document: &str) -> Result<DatasetSpec, ConfigError> {
    let spec = parse_spec_unvalidated(document)?;
    let report = validate_spec(&spec);
    if report.has_errors() {
        let errors = ValidationReport {
            issues: report.errors().cloned().collect(),
        };
        if let [only] = errors.issues.as_slice() {
            return Err(schema(&only.path, &only.message));
        }
        return Err(ConfigError::Invalid(errors));
    }
    Ok(spec)
}

/// Parses a JSON spec, checking only syntax and document shape.
pub fn parse_spec_unvalidated(document: &str) -> Result<DatasetSpec, ConfigError> {
    let doc: SpecDoc = serde_json::from_str(document).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => schema(format!("line {} column {}", e.line(), e.column()), e.to_string()),
            _ => ConfigError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })?;
    from_doc(doc)
}

fn from_doc(doc: SpecDoc) -> Result<DatasetSpec, ConfigError> {
    if let Some(v) = doc.format_version {
        if v != FORMAT_VERSION {
            return Err(schema(
                "format_version",
                format!("unsupported version {v}, expected {FORMAT_VERSION}"),
            ));
        }
    }
    let variables = doc
        .variables
        .into_iter()
        .enumerate()
        .map(|(i, v)| variable_from_doc(i, v))
        .collect::<Result<Vec<_>, _>>()?;

    let a = doc.anomaly;
    let mode = match a.mode {
        ModeTag::Frequency => {
            only_key("anomaly", "f", a.k.is_none() && a.e.is_none())?;
            AnomalyMode::Frequency(a.f.ok_or_else(|| schema("anomaly.f", "required for mode frequency"))?)
        }
        ModeTag::PointCount => {
            only_key("anomaly", "k", a.f.is_none() && a.e.is_none())?;
            AnomalyMode::PointCount(a.k.ok_or_else(|| schema("anomaly.k", "required for mode point_count"))?)
        }
        ModeTag::EventCount => {
            only_key("anomaly", "e", a.f.is_none() && a.k.is_none())?;
            AnomalyMode::EventCount(a.e.ok_or_else(|| schema("anomaly.e", "required for mode event_count"))?)
        }
    };
    let policy = |p: PolicyDoc| UniquenessPolicy::new(p.mode, p.max_tries);
    let output = doc.output.map_or_else(OutputSpec::default, |o| OutputSpec {
        path: o.path,
        manifest_path: o.manifest_path,
        labels_column: o.labels_column,
    });

    Ok(DatasetSpec {
        n_timestamps: doc.n_timestamps,
        seed: doc.seed,
        variables,
        anomaly: AnomalySpec {
            mode,
            duration_range: a.duration_range,
            allow_overlap: a.allow_overlap,
        },
        uniqueness: UniquenessSpec {
            normal: policy(doc.uniqueness.normal),
            anomalous: policy(doc.uniqueness.anomalous),
        },
        output,
    })
}

fn only_key(path: &str, key: &str, ok: bool) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(schema(path, format!("only '{key}' may be given for this mode")))
    }
}

fn variable_from_doc(i: usize, v: VariableDoc) -> Result<VariableSpec, ConfigError> {
    let path = |field: &str| format!("variables[{i}].{field}");
    let forbid = |field: &str, present: bool| {
        if present {
            Err(schema(path(field), "not allowed for this kind"))
        } else {
            Ok(())
        }
    };
    let kind = match v.kind {
        KindTag::Stochastic => {
            forbid("normal", v.normal.is_some())?;
            forbid("anomalous", v.anomalous.is_some())?;
            forbid("registry_key", v.registry_key.is_some())?;
            VariableKind::Stochastic {
                value_type: v.value_type.unwrap_or(ValueType::Continuous),
                normal_range: v
                    .normal_range
                    .ok_or_else(|| schema(path("normal_range"), "required for stochastic variables"))?,
                anomalous_range: v
                    .anomalous_range
                    .ok_or_else(|| schema(path("anomalous_range"), "required for stochastic variables"))?,
            }
        }
        KindTag::Composite => {
            forbid("value_type", v.value_type.is_some())?;
            forbid("normal_range", v.normal_range.is_some())?;
            forbid("anomalous_range", v.anomalous_range.is_some())?;
            forbid("registry_key", v.registry_key.is_some())?;
            VariableKind::Composite {
                normal: v
                    .normal
                    .ok_or_else(|| schema(path("normal"), "required for composite variables"))?,
                anomalous: v
                    .anomalous
                    .ok_or_else(|| schema(path("anomalous"), "required for composite variables"))?,
            }
        }
        KindTag::Callback => {
            forbid("value_type", v.value_type.is_some())?;
            forbid("normal_range", v.normal_range.is_some())?;
            forbid("anomalous_range", v.anomalous_range.is_some())?;
            forbid("normal", v.normal.is_some())?;
            forbid("anomalous", v.anomalous.is_some())?;
            VariableKind::Callback {
                registry_key: v
                    .registry_key
                    .ok_or_else(|| schema(path("registry_key"), "required for callback variables"))?,
            }
        }
    };
    Ok(VariableSpec { name: v.name, kind })
}

fn to_doc(spec: &DatasetSpec, with_output: bool) -> SpecDoc {
    let variables = spec
        .variables
        .iter()
        .map(|v| {
            let mut doc = VariableDoc {
                name: v.name.clone(),
                kind: KindTag::Stochastic,
                value_type: None,
                normal_range: None,
                anomalous_range: None,
                normal: None,
                anomalous: None,
                registry_key: None,
            };
            match &v.kind {
                VariableKind::Stochastic {
                    value_type,
                    normal_range,
                    anomalous_range,
                } => {
                    doc.value_type = Some(*value_type);
                    doc.normal_range = Some(*normal_range);
                    doc.anomalous_range = Some(*anomalous_range);
                }
                VariableKind::Composite { normal, anomalous } => {
                    doc.kind = KindTag::Composite;
                    doc.normal = Some(normal.clone());
                    doc.anomalous = Some(anomalous.clone());
                }
                VariableKind::Callback { registry_key } => {
                    doc.kind = KindTag::Callback;
                    doc.registry_key = Some(registry_key.clone());
                }
            }
            doc
        })
        .collect();
    let (mode, f, k, e) = match spec.anomaly.mode {
        AnomalyMode::Frequency(f) => (ModeTag::Frequency, Some(f), None, None),
        AnomalyMode::PointCount(k) => (ModeTag::PointCount, None, Some(k), None),
        AnomalyMode::EventCount(e) => (ModeTag::EventCount, None, None, Some(e)),
    };
    let policy = |p: &UniquenessPolicy| PolicyDoc {
        mode: p.mode,
        max_tries: p.max_tries,
    };
    SpecDoc {
        format_version: Some(FORMAT_VERSION),
        n_timestamps: spec.n_timestamps,
        seed: spec.seed,
        variables,
        anomaly: AnomalyDoc {
            mode,
            f,
            k,
            e,
            duration_range: spec.anomaly.duration_range,
            allow_overlap: spec.anomaly.allow_overlap,
        },
        uniqueness: UniquenessDoc {
            normal: policy(&spec.uniqueness.normal),
            anomalous: policy(&spec.uniqueness.anomalous),
        },
        output: with_output.then(|| OutputDoc {
            path: spec.output.path.clone(),
            manifest_path: spec.output.manifest_path.clone(),
            labels_column: spec.output.labels_column,
        }),
    }
}

impl DatasetSpec {
    /// Serializes back into the document format accepted by [`parse_spec`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&to_doc(self, true)).expect("spec serializes")
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Validation

pub fn validate_spec(spec: &DatasetSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = spec.n_timestamps;

    if n < 1 {
        report.error("n_timestamps", "must be at least 1");
    }
    if spec.variables.is_empty() {
        report.error("variables", "at least one variable is required");
    }
    if spec.variables.len() > MAX_VARIABLES {
        report.error(
            "variables",
            format!("at most {MAX_VARIABLES} variables are supported, got {}", spec.variables.len()),
        );
    }

    let mut names = HashSet::new();
    for (i, var) in spec.variables.iter().enumerate() {
        let path = format!("variables[{i}]");
        validate_name(&mut report, &path, &var.name);
        if !var.name.is_empty() && !names.insert(var.name.as_str()) {
            report.error(format!("{path}.name"), format!("duplicate variable name '{}'", var.name));
        }
        match &var.kind {
            VariableKind::Stochastic {
                value_type,
                normal_range,
                anomalous_range,
            } => {
                validate_range(&mut report, &format!("{path}.normal_range"), *normal_range, *value_type);
                validate_range(&mut report, &format!("{path}.anomalous_range"), *anomalous_range, *value_type);
            }
            VariableKind::Composite { normal, anomalous } => {
                validate_primitives(&mut report, &format!("{path}.normal"), normal);
                validate_primitives(&mut report, &format!("{path}.anomalous"), anomalous);
            }
            VariableKind::Callback { registry_key } => {
                if registry_key.is_empty() {
                    report.error(format!("{path}.registry_key"), "must be non-empty");
                }
            }
        }
    }

    validate_anomaly(&mut report, &spec.anomaly, n);

    for (label, policy) in [("normal", &spec.uniqueness.normal), ("anomalous", &spec.uniqueness.anomalous)] {
        if policy.max_tries < 1 || policy.max_tries > MAX_ATTEMPTS {
            report.error(
                format!("uniqueness.{label}.max_tries"),
                format!("must be in [1, {MAX_ATTEMPTS}], got {}", policy.max_tries),
            );
        }
    }

    if !report.has_errors() {
        uniqueness_feasibility(&mut report, spec);
    }
    report
}

/// Errors for callback variables whose key is not registered. With no
/// registry, every callback variable is rejected.
pub fn check_callbacks(spec: &DatasetSpec, registry: Option<&CallbackRegistry>) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, var) in spec.variables.iter().enumerate() {
        if let VariableKind::Callback { registry_key } = &var.kind {
            let path = format!("variables[{i}].registry_key");
            match registry {
                None => report.error(
                    path,
                    format!(
                        "callback variable '{}' (key '{registry_key}') needs a host-registered function and cannot be used from the command line",
                        var.name
                    ),
                ),
                Some(reg) if !reg.contains(registry_key) => {
                    report.error(path, format!("callback key '{registry_key}' is not registered"))
                }
                Some(_) => {}
            }
        }
    }
    report
}

fn validate_name(report: &mut ValidationReport, path: &str, name: &str) {
    if name.is_empty() {
        report.error(format!("{path}.name"), "must be non-empty");
    } else if name.chars().any(|c| matches!(c, ',' | '"' | '\n' | '\r')) {
        report.error(format!("{path}.name"), "must not contain commas, quotes or line breaks");
    } else if name == "t" || name == "label" {
        report.error(format!("{path}.name"), format!("'{name}' is reserved for a CSV column"));
    }
}

fn validate_range(report: &mut ValidationReport, path: &str, [lo, hi]: [f64; 2], value_type: ValueType) {
    if !lo.is_finite() || !hi.is_finite() {
        report.error(path, "bounds must be finite");
        return;
    }
    if lo > hi {
        report.error(path, format!("lo ≤ hi violated: [{lo}, {hi}]"));
    }
    if value_type == ValueType::Discrete {
        if lo.fract() != 0.0 || hi.fract() != 0.0 {
            report.error(path, "discrete bounds must be integers");
        } else if lo.abs() > MAX_EXACT_INT || hi.abs() > MAX_EXACT_INT {
            report.error(path, "discrete bounds must lie within ±2^53");
        }
    }
}

fn validate_primitives(report: &mut ValidationReport, path: &str, prims: &[SignalPrimitive]) {
    if prims.is_empty() {
        report.error(path, "primitive list must be non-empty");
    }
    let noise = prims.iter().filter(|p| p.shape == Shape::Noise).count();
    if noise as u64 > MAX_LANES as u64 {
        report.error(path, format!("at most {MAX_LANES} noise primitives are supported"));
    }
    for (j, p) in prims.iter().enumerate() {
        let at = format!("{path}[{j}]");
        for (field, v) in [
            ("amplitude", p.amplitude),
            ("period", p.period),
            ("phase", p.phase),
            ("offset", p.offset),
            ("noise_sigma", p.noise_sigma),
        ] {
            if !v.is_finite() {
                report.error(format!("{at}.{field}"), "must be finite");
            }
        }
        if p.is_periodic() && (p.period.is_nan() || p.period <= 0.0) {
            report.error(format!("{at}.period"), "must be positive");
        }
        if !(0.0..1.0).contains(&p.phase) {
            report.error(format!("{at}.phase"), "must be in [0, 1)");
        }
        if p.noise_sigma < 0.0 {
            report.error(format!("{at}.noise_sigma"), "must be non-negative");
        }
    }
}

fn validate_anomaly(report: &mut ValidationReport, a: &AnomalySpec, n: u64) {
    let [d_min, d_max] = a.duration_range;
    if d_min < 1 {
        report.error("anomaly.duration_range", "minimum duration must be at least 1");
    }
    if d_min > d_max {
        report.error("anomaly.duration_range", format!("d_min ≤ d_max violated: [{d_min}, {d_max}]"));
    }
    if d_max > n {
        report.error(
            "anomaly.duration_range",
            format!("maximum duration {d_max} exceeds n_timestamps {n}"),
        );
    }
    match a.mode {
        AnomalyMode::Frequency(f) => {
            if !(0.0..=1.0).contains(&f) {
                report.error("anomaly.f", format!("must be in [0, 1], got {f}"));
            }
        }
        AnomalyMode::PointCount(k) => {
            if k > n {
                report.error("anomaly.k", format!("k exceeds n_timestamps ({k} > {n})"));
            }
        }
        AnomalyMode::EventCount(e) => {
            // disjoint events keep at least one normal timestamp between them
            let needed = e
                .checked_mul(d_min)
                .and_then(|x| x.checked_add(e.saturating_sub(1)));
            if !a.allow_overlap && e > 0 && needed.is_none_or(|x| x > n) {
                report.error(
                    "anomaly.e",
                    format!("{e} disjoint events of length ≥ {d_min} cannot fit in {n} timestamps"),
                );
            }
        }
    }
}

fn uniqueness_feasibility(report: &mut ValidationReport, spec: &DatasetSpec) {
    let n = spec.n_timestamps;
    let anomalous = spec.anomaly.expected_anomalous_points(n);
    let normal = n - spec.anomaly.guaranteed_anomalous_points(n).min(n);
    for (class, policy, points) in [
        ("normal", &spec.uniqueness.normal, normal),
        ("anomalous", &spec.uniqueness.anomalous, anomalous),
    ] {
        if policy.mode != UniquenessMode::Hard {
            continue;
        }
        for (i, var) in spec.variables.iter().enumerate() {
            let domain = match &var.kind {
                VariableKind::Stochastic {
                    value_type,
                    normal_range,
                    anomalous_range,
                } => {
                    let [lo, hi] = if class == "normal" { *normal_range } else { *anomalous_range };
                    match value_type {
                        ValueType::Discrete => Some((hi - lo + 1.0) as u64),
                        ValueType::Continuous if lo == hi => Some(1),
                        ValueType::Continuous => None,
                    }
                }
                _ => None,
            };
            if let Some(domain) = domain {
                if points > domain {
                    report.warning(
                        format!("variables[{i}]"),
                        format!(
                            "uniqueness may be unsatisfiable: hard {class} uniqueness for '{}' needs up to {points} distinct values but only {domain} exist",
                            var.name
                        ),
                    );
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fingerprint

/// SHA-256 over the canonical JSON form of every field that influences
/// generated data. Output paths are excluded.
pub fn spec_fingerprint(spec: &DatasetSpec) -> String {
    let value = serde_json::to_value(to_doc(spec, false)).expect("spec serializes");
    let mut canonical = String::new();
    write_canonical(&value, &mut canonical);
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value as J;
    match value {
        J::Object(map) => {
            let sorted: BTreeMap<&String, &J> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&J::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        J::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        J::Number(num) => match num.as_f64() {
            // integers and reals share one rendering: shortest round-trip binary64
            Some(f) if num.is_f64() => {
                let f = if f == 0.0 { 0.0 } else { f };
                out.push_str(ryu::Buffer::new().format(f));
            }
            _ => out.push_str(&num.to_string()),
        },
        other => out.push_str(&other.to_string()),
    }
}
