//! Detection scoring: pointwise confusion metrics, F-beta and event-level
//! recall. Undefined ratios are `None` (serialized as `null`), never zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::dataset::{read_events_file, read_labels_file, ReadError};
use crate::schedule::AnomalyEvent;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: predictions have {pred} points, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("event {start}+{length} exceeds {n} predictions")]
    EventOutOfBounds { start: u64, length: u64, n: usize },
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("{file}: {source}")]
    Read {
        file: &'static str,
        #[source]
        source: ReadError,
    },
}

/// Pointwise counts with the anomalous class as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(1+β²)·P·R / (β²·P + R)`; `None` when `P = R = 0`.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    (den > 0.0).then(|| (1.0 + b2) * precision * recall / den)
}

/// F-beta over possibly-undefined precision and recall.
pub fn f_beta_opt(precision: Option<f64>, recall: Option<f64>, beta: f64) -> Option<f64> {
    f_beta(precision?, recall?, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecall {
    pub detected: u64,
    pub total: u64,
    pub ratio: Option<f64>,
}

/// An event is detected when at least one of its timestamps is predicted
/// anomalous.
pub fn event_recall(events: &[AnomalyEvent], pred: &[bool]) -> Result<EventRecall, MetricsError> {
    let mut detected = 0;
    for e in events {
        if e.end() > pred.len() as u64 {
            return Err(MetricsError::EventOutOfBounds {
                start: e.start,
                length: e.length,
                n: pred.len(),
            });
        }
        if pred[e.start as usize..e.end() as usize].iter().any(|&p| p) {
            detected += 1;
        }
    }
    let total = events.len() as u64;
    Ok(EventRecall {
        detected,
        total,
        ratio: ratio(detected, total),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub f0_1: Option<f64>,
    /// F-beta for any additional requested betas, keyed by the beta text.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub f_beta: BTreeMap<String, Option<f64>>,
    pub events_total: Option<u64>,
    pub events_detected: Option<u64>,
    pub event_recall: Option<f64>,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
}

pub const DEFAULT_BETAS: [f64; 2] = [1.0, 0.1];

pub fn score(
    pred: &[bool],
    truth: &[bool],
    events: Option<&[AnomalyEvent]>,
    betas: &[f64],
) -> Result<MetricsReport, MetricsError> {
    if let Some(&b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(MetricsError::BadBeta(b));
    }
    let counts = confusion(pred, truth)?;
    let (p, r) = (counts.precision(), counts.recall());
    let ev = events.map(|e| event_recall(e, pred)).transpose()?;
    Ok(MetricsReport {
        accuracy: counts.accuracy(),
        precision: p,
        recall: r,
        f1: f_beta_opt(p, r, 1.0),
        f0_1: f_beta_opt(p, r, 0.1),
        f_beta: betas
            .iter()
            .filter(|&&b| b != 1.0 && b != 0.1)
            .map(|&b| (b.to_string(), f_beta_opt(p, r, b)))
            .collect(),
        events_total: ev.map(|e| e.total),
        events_detected: ev.map(|e| e.detected),
        event_recall: ev.and_then(|e| e.ratio),
        counts,
    })
}

pub fn score_files(
    pred_path: &Path,
    truth_path: &Path,
    events_path: Option<&Path>,
    betas: &[f64],
) -> Result<MetricsReport, MetricsError> {
    let pred = read_labels_file(pred_path).map_err(|source| MetricsError::Read { file: "predictions", source })?;
    let truth = read_labels_file(truth_path).map_err(|source| MetricsError::Read { file: "truth", source })?;
    let events = events_path
        .map(read_events_file)
        .transpose()
        .map_err(|source| MetricsError::Read { file: "events", source })?;
    score(&pred, &truth, events.as_deref(), betas)
}
