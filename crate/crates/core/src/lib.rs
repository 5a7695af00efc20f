//! Deterministic, parallel generation of labeled synthetic time-series
//! anomaly datasets, plus scoring of anomaly predictions against them.
//!
//! A [`DatasetSpec`] declares the variables, their normal and anomalous
//! behaviour, how anomalies are scheduled and whether values must be
//! unique. [`generate`] turns it into a CSV whose bytes depend only on the
//! spec, never on the number of worker threads.
//!
//! ```
//! use anomgen_core::{parse_spec, generate, CallbackRegistry, GenerateOptions};
//!
//! let spec = parse_spec(r#"{
//!     "n_timestamps": 100, "seed": 7,
//!     "variables": [{"name": "x", "kind": "stochastic",
//!                    "normal_range": [0, 1], "anomalous_range": [5, 6]}],
//!     "anomaly": {"mode": "event_count", "e": 2, "duration_range": [3, 5]}
//! }"#).unwrap();
//! let mut csv = Vec::new();
//! let summary = generate(&spec, &CallbackRegistry::new(), &GenerateOptions::with_workers(2), &mut csv, None).unwrap();
//! assert_eq!(summary.manifest.event_count, 2);
//! assert!(csv.starts_with(b"t,x,label\n"));
//! ```

pub mod config;
pub mod dataset;
pub mod engine;
pub mod metrics;
pub mod plot;
pub mod prng;
pub mod schedule;
pub mod signal;
pub mod unique;

pub use config::{
    parse_spec, spec_fingerprint, validate_spec, AnomalyMode, AnomalySpec, ConfigError, DatasetSpec, OutputSpec,
    UniquenessMode, UniquenessPolicy, UniquenessSpec, ValidationReport, VariableKind, VariableSpec,
};
pub use engine::{
    generate, generate_records, write_csv, write_events_csv, write_manifest, GenerateError, GenerateOptions,
    GenerationSummary, Generator, Manifest, Record, RecordBlock,
};
pub use metrics::{confusion, event_recall, f_beta, score, score_files, ConfusionCounts, MetricsReport};
pub use prng::{draw_range, draw_u64, draw_unit, mix64, Class, DrawAddress, Purpose, StreamId};
pub use schedule::{build_schedule, schedule_stats, AnomalyEvent, AnomalySchedule, ScheduleStats};
pub use signal::{eval_primitive, eval_variable, CallbackRegistry, Draws, Shape, SignalPrimitive, Value, ValueType};
pub use unique::{value_key, Resolution, UniquenessTracker, ValueKey};
