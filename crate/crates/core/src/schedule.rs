//! Anomaly event placement and the per-timestamp label track.
//!
//! Events are placed by rejection sampling. Proposal `c` draws its length
//! from the duration stream and its start from the schedule stream, both at
//! address `(c, 0)`, so a schedule is a pure function of
//! `(anomaly spec, n_timestamps, seed)`.
//!
//! Without `allow_overlap`, accepted events are pairwise disjoint and
//! separated by at least one normal timestamp, so every event is also a
//! maximal run in the label track.

use serde::Serialize;

use crate::config::{point_budget, AnomalyMode, AnomalySpec};
use crate::prng::{draw_range, Class, DrawAddress, Purpose, StreamId};
use crate::signal::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AnomalyEvent {
    pub start: u64,
    pub length: u64,
}

impl AnomalyEvent {
    pub fn new(start: u64, length: u64) -> Self {
        AnomalyEvent { start, length }
    }

    /// One past the last covered timestamp.
    pub fn end(&self) -> u64 {
        self.start + self.length
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalySchedule {
    events: Vec<AnomalyEvent>,
    labels: Vec<bool>,
    anomalous_points: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("schedule infeasible: placed {placed} of {target} {unit} after {proposals} proposals")]
    Infeasible {
        placed: u64,
        target: u64,
        unit: &'static str,
        proposals: u64,
    },
}

/// Summary statistics of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleStats {
    pub event_count: u64,
    pub anomalous_points: u64,
    pub anomalous_fraction: f64,
    pub min_len: u64,
    pub max_len: u64,
    pub mean_len: f64,
}

impl AnomalySchedule {
    /// Builds a schedule directly from events. Events are sorted; overlap is
    /// allowed and the label track is their union.
    pub fn from_events(mut events: Vec<AnomalyEvent>, n_timestamps: u64) -> Self {
        events.sort();
        let mut labels = vec![false; n_timestamps as usize];
        for ev in &events {
            assert!(ev.end() <= n_timestamps, "event {ev:?} exceeds {n_timestamps}");
            labels[ev.start as usize..ev.end() as usize].fill(true);
        }
        let anomalous_points = labels.iter().filter(|&&l| l).count() as u64;
        AnomalySchedule {
            events,
            labels,
            anomalous_points,
        }
    }

    pub fn events(&self) -> &[AnomalyEvent] {
        &self.events
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_timestamps(&self) -> u64 {
        self.labels.len() as u64
    }

    pub fn anomalous_points(&self) -> u64 {
        self.anomalous_points
    }

    /// # Panics
    /// If `t` is outside `[0, n_timestamps)`.
    #[inline]
    pub fn label_at(&self, t: u64) -> Class {
        Class::from_anomalous(self.labels[t as usize])
    }

    pub fn stats(&self) -> ScheduleStats {
        schedule_stats(self)
    }
}

pub fn schedule_stats(schedule: &AnomalySchedule) -> ScheduleStats {
    let n = schedule.n_timestamps();
    let lens = schedule.events.iter().map(|e| e.length);
    let event_count = schedule.events.len() as u64;
    let total_len: u64 = lens.clone().sum();
    ScheduleStats {
        event_count,
        anomalous_points: schedule.anomalous_points,
        anomalous_fraction: if n == 0 {
            0.0
        } else {
            schedule.anomalous_points as f64 / n as f64
        },
        min_len: lens.clone().min().unwrap_or(0),
        max_len: lens.max().unwrap_or(0),
        mean_len: if event_count == 0 {
            0.0
        } else {
            total_len as f64 / event_count as f64
        },
    }
}

fn draw_int(seed: u64, purpose: Purpose, counter: u64, lo: u64, hi: u64) -> u64 {
    let stream = StreamId::new(purpose, Class::Normal, 0);
    match draw_range(seed, stream, DrawAddress::new(counter, 0), lo as f64, hi as f64, ValueType::Discrete) {
        Value::Discrete(v) => v as u64,
        Value::Continuous(_) => unreachable!("discrete draw"),
    }
}

/// Accepted events kept sorted by start, for disjointness checks.
struct Placement {
    n: u64,
    allow_overlap: bool,
    events: Vec<AnomalyEvent>,
    covered: Vec<bool>,
    points: u64,
}

impl Placement {
    fn new(n: u64, allow_overlap: bool) -> Self {
        Placement {
            n,
            allow_overlap,
            events: Vec::new(),
            covered: if allow_overlap { vec![false; n as usize] } else { Vec::new() },
            points: 0,
        }
    }

    /// True if `[start, start+len)` keeps a one-timestamp gap to every
    /// accepted event.
    fn is_clear(&self, start: u64, len: u64) -> bool {
        let idx = self.events.partition_point(|e| e.start < start);
        let before_ok = idx == 0 || self.events[idx - 1].end() < start;
        let after_ok = idx == self.events.len() || start + len < self.events[idx].start;
        before_ok && after_ok
    }

    /// Timestamps of `[start, start+len)` not yet covered.
    fn new_points(&self, start: u64, len: u64) -> u64 {
        if self.allow_overlap {
            self.covered[start as usize..(start + len) as usize]
                .iter()
                .filter(|&&c| !c)
                .count() as u64
        } else {
            len
        }
    }

    /// Shortest prefix length of `[start, start+len)` holding exactly
    /// `budget` uncovered timestamps.
    fn prefix_for(&self, start: u64, len: u64, budget: u64) -> u64 {
        if !self.allow_overlap {
            return len.min(budget);
        }
        let mut fresh = 0;
        for (i, &c) in self.covered[start as usize..(start + len) as usize].iter().enumerate() {
            if !c {
                fresh += 1;
                if fresh == budget {
                    return i as u64 + 1;
                }
            }
        }
        len
    }

    fn accept(&mut self, ev: AnomalyEvent) {
        if self.allow_overlap {
            let slot = &mut self.covered[ev.start as usize..ev.end() as usize];
            self.points += slot.iter().filter(|&&c| !c).count() as u64;
            slot.fill(true);
        } else {
            self.points += ev.length;
        }
        let idx = self.events.partition_point(|e| *e < ev);
        self.events.insert(idx, ev);
    }

    fn fits(&self, start: u64, len: u64) -> bool {
        self.allow_overlap || self.is_clear(start, len)
    }

    fn finish(self) -> AnomalySchedule {
        AnomalySchedule::from_events(self.events, self.n)
    }
}

/// Places anomaly events for a dataset of `n_timestamps` rows.
///
/// * Frequency `f`: point budget `B = round(f·n)`. A proposal longer than
///   the remaining budget is truncated to it; placement stops once the
///   remaining budget is below `d_min`, so every event length stays within
///   the duration range and the total lands in `[B − d_min + 1, B]`.
/// * PointCount `k`: as above with `B = k`, but the final event may be
///   truncated below `d_min` so the total is exactly `k`.
/// * EventCount `e`: exactly `e` events of drawn length.
///
/// Fails after `1000·max(1, target)` proposals without reaching the target.
pub fn build_schedule(
    anomaly: &AnomalySpec,
    n_timestamps: u64,
    seed: u64,
) -> Result<AnomalySchedule, ScheduleError> {
    let [d_min, d_max] = anomaly.duration_range;
    let mut placement = Placement::new(n_timestamps, anomaly.allow_overlap);

    let (target, unit) = match anomaly.mode {
        AnomalyMode::Frequency(f) => (point_budget(f, n_timestamps), "points"),
        AnomalyMode::PointCount(k) => (k, "points"),
        AnomalyMode::EventCount(e) => (e, "events"),
    };
    let cap = 1000 * target.max(1);

    let done = |p: &Placement| match anomaly.mode {
        AnomalyMode::Frequency(_) => target - p.points < d_min,
        AnomalyMode::PointCount(_) => p.points == target,
        AnomalyMode::EventCount(_) => p.events.len() as u64 == target,
    };

    let mut proposal = 0u64;
    while !done(&placement) {
        if proposal == cap {
            return Err(ScheduleError::Infeasible {
                placed: match anomaly.mode {
                    AnomalyMode::EventCount(_) => placement.events.len() as u64,
                    _ => placement.points,
                },
                target,
                unit,
                proposals: proposal,
            });
        }
        let drawn = draw_int(seed, Purpose::Duration, proposal, d_min, d_max);
        let start = draw_int(seed, Purpose::AnomalySchedule, proposal, 0, n_timestamps - drawn);
        proposal += 1;

        let length = match anomaly.mode {
            AnomalyMode::EventCount(_) => drawn,
            _ => {
                let remaining = target - placement.points;
                if placement.new_points(start, drawn) > remaining {
                    placement.prefix_for(start, drawn, remaining)
                } else {
                    drawn
                }
            }
        };
        if matches!(anomaly.mode, AnomalyMode::Frequency(_)) && length < d_min {
            continue;
        }
        let acceptable = match anomaly.mode {
            AnomalyMode::EventCount(_) => placement.fits(start, length),
            _ => placement.fits(start, length) && placement.new_points(start, length) > 0,
        };
        if acceptable {
            placement.accept(AnomalyEvent::new(start, length));
        }
    }
    Ok(placement.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: AnomalyMode, d: [u64; 2], allow_overlap: bool) -> AnomalySpec {
        AnomalySpec {
            mode,
            duration_range: d,
            allow_overlap,
        }
    }

    /// Label track re-derived from events by brute force.
    fn brute_labels(events: &[AnomalyEvent], n: u64) -> Vec<bool> {
        (0..n).map(|t| events.iter().any(|e| e.start <= t && t < e.start + e.length)).collect()
    }

    /// Stats recomputed from the label track alone (maximal anomalous runs).
    fn stats_from_labels(labels: &[bool]) -> ScheduleStats {
        let mut runs = Vec::new();
        let mut run = 0u64;
        for &l in labels.iter().chain(std::iter::once(&false)) {
            if l {
                run += 1;
            } else if run > 0 {
                runs.push(run);
                run = 0;
            }
        }
        let points: u64 = runs.iter().sum();
        ScheduleStats {
            event_count: runs.len() as u64,
            anomalous_points: points,
            anomalous_fraction: points as f64 / labels.len() as f64,
            min_len: runs.iter().copied().min().unwrap_or(0),
            max_len: runs.iter().copied().max().unwrap_or(0),
            mean_len: if runs.is_empty() { 0.0 } else { points as f64 / runs.len() as f64 },
        }
    }

    fn assert_separated(events: &[AnomalyEvent]) {
        for w in events.windows(2) {
            assert!(w[0].end() < w[1].start, "{:?} touches {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_frequency_is_all_normal() {
        let s = build_schedule(&spec(AnomalyMode::Frequency(0.0), [1, 5], false), 1000, 3).unwrap();
        assert!(s.events().is_empty());
        assert!(s.labels().iter().all(|&l| !l));
        let st = s.stats();
        assert_eq!((st.event_count, st.anomalous_points, st.min_len, st.max_len), (0, 0, 0, 0));
        assert_eq!(st.anomalous_fraction, 0.0);
        assert_eq!(st.mean_len, 0.0);
    }

    #[test]
    fn one_percent_of_ten_thousand() {
        for seed in 0..50 {
            let s = build_schedule(&spec(AnomalyMode::Frequency(0.01), [20, 120], false), 10_000, seed).unwrap();
            let total = s.anomalous_points();
            assert!((100 - 120..=100).contains(&(total as i64)), "seed {seed}: {total}");
            assert!(total > 100 - 20, "seed {seed}: {total}");
            for e in s.events() {
                assert!((20..=120).contains(&e.length), "{e:?}");
            }
            assert_separated(s.events());
            assert_eq!(s.labels(), brute_labels(s.events(), 10_000).as_slice());
        }
    }

    #[test]
    fn six_events() {
        for seed in 0..20 {
            let s = build_schedule(&spec(AnomalyMode::EventCount(6), [50, 200], false), 10_000, seed).unwrap();
            assert_eq!(s.events().len(), 6);
            assert_separated(s.events());
            assert!(s.events().iter().all(|e| (50..=200).contains(&e.length)));
        }
    }

    #[test]
    fn point_count_is_exact() {
        for seed in 0..20 {
            let s = build_schedule(&spec(AnomalyMode::PointCount(777), [20, 120], false), 50_000, seed).unwrap();
            assert_eq!(s.anomalous_points(), 777);
            assert_separated(s.events());
            let s = build_schedule(&spec(AnomalyMode::PointCount(777), [20, 120], true), 50_000, seed).unwrap();
            assert_eq!(s.anomalous_points(), 777);
            assert_eq!(s.labels(), brute_labels(s.events(), 50_000).as_slice());
        }
    }

    #[test]
    fn point_count_below_minimum_duration() {
        let s = build_schedule(&spec(AnomalyMode::PointCount(3), [5, 5], false), 100, 1).unwrap();
        assert_eq!(s.events().len(), 1);
        assert_eq!(s.anomalous_points(), 3);
    }

    #[test]
    fn overlap_allowed_frequency_honors_budget() {
        for seed in 0..20 {
            let s = build_schedule(&spec(AnomalyMode::Frequency(0.3), [5, 40], true), 2_000, seed).unwrap();
            let b = 600;
            assert!(s.anomalous_points() <= b && s.anomalous_points() > b - 5);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = spec(AnomalyMode::Frequency(0.02), [10, 60], false);
        let s1 = build_schedule(&a, 20_000, 9).unwrap();
        let s2 = build_schedule(&a, 20_000, 9).unwrap();
        let s3 = build_schedule(&a, 20_000, 10).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1.events(), s3.events());
    }

    #[test]
    fn infeasible_event_count_errors() {
        // 3 events of 40 with a gap cannot fit in 100 timestamps
        let err = build_schedule(&spec(AnomalyMode::EventCount(3), [40, 40], false), 100, 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Infeasible { target: 3, proposals: 3000, .. }));
    }

    #[test]
    fn label_boundaries() {
        let s = AnomalySchedule::from_events(vec![AnomalyEvent::new(10, 5)], 30);
        assert_eq!(s.label_at(9), Class::Normal);
        assert_eq!(s.label_at(10), Class::Anomalous);
        assert_eq!(s.label_at(14), Class::Anomalous);
        assert_eq!(s.label_at(15), Class::Normal);
    }

    #[test]
    #[should_panic]
    fn label_out_of_range_panics() {
        let s = AnomalySchedule::from_events(vec![], 30);
        s.label_at(30);
    }

    #[test]
    fn single_event_fraction() {
        let s = AnomalySchedule::from_events(vec![AnomalyEvent::new(500, 100)], 10_000);
        let st = s.stats();
        assert_eq!(st.anomalous_fraction, 0.01);
        assert_eq!((st.event_count, st.min_len, st.max_len), (1, 100, 100));
        assert_eq!(st.mean_len, 100.0);
    }

    #[test]
    fn stats_from_labels_match_stats_from_events() {
        for seed in 0..30 {
            let s = build_schedule(&spec(AnomalyMode::Frequency(0.05), [3, 30], false), 5_000, seed).unwrap();
            assert_eq!(stats_from_labels(s.labels()), s.stats());
        }
    }
}
