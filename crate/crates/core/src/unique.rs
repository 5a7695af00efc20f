//! Hard/soft uniqueness of emitted values, scoped per (variable, class).

use std::collections::HashSet;

use crate::config::{UniquenessMode, UniquenessPolicy, UniquenessSpec};
use crate::prng::Class;
use crate::signal::{EvalError, Value};

/// Exact identity of a value for uniqueness purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKey {
    Int(i64),
    /// binary64 bit pattern, with `-0.0` folded onto `0.0`.
    Bits(u64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite value cannot be keyed")]
pub struct NonFiniteValue;

pub fn value_key(v: Value) -> Result<ValueKey, NonFiniteValue> {
    match v {
        Value::Discrete(i) => Ok(ValueKey::Int(i)),
        Value::Continuous(f) if !f.is_finite() => Err(NonFiniteValue),
        Value::Continuous(f) => Ok(ValueKey::Bits(if f == 0.0 { 0 } else { f.to_bits() })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Unique(Value),
    /// Soft mode gave up; the last candidate is emitted anyway.
    SoftDuplicate(Value),
}

impl Resolution {
    pub fn value(self) -> Value {
        match self {
            Resolution::Unique(v) | Resolution::SoftDuplicate(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("uniqueness exhausted: variable={variable} class={class} t={t} tries={tries}")]
    HardFailure {
        variable: String,
        class: Class,
        t: u64,
        tries: u32,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite value for variable '{variable}' at t={t}")]
    NonFinite { variable: String, t: u64 },
}

/// Registry of already-emitted value keys, one set per (variable, class).
#[derive(Debug, Clone)]
pub struct UniquenessTracker {
    policies: [UniquenessPolicy; 2],
    seen: Vec<[HashSet<ValueKey>; 2]>,
    retries_used: u64,
    soft_duplicates_emitted: u64,
}

impl UniquenessTracker {
    pub fn new(spec: &UniquenessSpec, n_variables: usize) -> Self {
        UniquenessTracker {
            policies: [spec.normal, spec.anomalous],
            seen: (0..n_variables).map(|_| Default::default()).collect(),
            retries_used: 0,
            soft_duplicates_emitted: 0,
        }
    }

    pub fn policy(&self, class: Class) -> &UniquenessPolicy {
        &self.policies[class.index()]
    }

    pub fn is_tracked(&self, class: Class) -> bool {
        self.policy(class).is_tracked()
    }

    /// Extra attempts consumed beyond attempt 0, over all resolutions.
    pub fn retries_used(&self) -> u64 {
        self.retries_used
    }

    pub fn soft_duplicates_emitted(&self) -> u64 {
        self.soft_duplicates_emitted
    }

    pub fn emitted(&self, variable: usize, class: Class) -> &HashSet<ValueKey> {
        &self.seen[variable][class.index()]
    }

    /// Picks the first attempt whose value is new for `(variable, class)`.
    ///
    /// `eval(attempt)` must be deterministic. With the policy off, attempt 0
    /// is returned untracked.
    pub fn resolve_value<F>(
        &mut self,
        variable: usize,
        name: &str,
        t: u64,
        class: Class,
        mut eval: F,
    ) -> Result<Resolution, ResolveError>
    where
        F: FnMut(u32) -> Result<Value, EvalError>,
    {
        let policy = self.policies[class.index()];
        if policy.mode == UniquenessMode::Off {
            return Ok(Resolution::Unique(eval(0)?));
        }
        let seen = &mut self.seen[variable][class.index()];
        let mut last = None;
        for attempt in 0..policy.max_tries {
            let v = eval(attempt)?;
            let key = value_key(v).map_err(|_| ResolveError::NonFinite {
                variable: name.to_string(),
                t,
            })?;
            if seen.insert(key) {
                self.retries_used += attempt as u64;
                return Ok(Resolution::Unique(v));
            }
            last = Some(v);
        }
        self.retries_used += policy.max_tries as u64 - 1;
        match policy.mode {
            UniquenessMode::Soft => {
                self.soft_duplicates_emitted += 1;
                Ok(Resolution::SoftDuplicate(last.expect("max_tries ≥ 1")))
            }
            _ => Err(ResolveError::HardFailure {
                variable: name.to_string(),
                class,
                t,
                tries: policy.max_tries,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{VariableKind, VariableSpec};
    use crate::signal::{eval_variable, CallbackRegistry, ValueType};

    fn tracker(mode: UniquenessMode, max_tries: u32) -> UniquenessTracker {
        let policy = UniquenessPolicy::new(mode, max_tries);
        UniquenessTracker::new(
            &UniquenessSpec {
                normal: UniquenessPolicy::default(),
                anomalous: policy,
            },
            1,
        )
    }

    fn binary_var() -> VariableSpec {
        VariableSpec {
            name: "bit".into(),
            kind: VariableKind::Stochastic {
                value_type: ValueType::Discrete,
                normal_range: [0.0, 1.0],
                anomalous_range: [0.0, 1.0],
            },
        }
    }

    #[test]
    fn keys() {
        assert_eq!(value_key(Value::Discrete(1)), value_key(Value::Discrete(1)));
        assert_ne!(
            value_key(Value::Continuous(0.1 + 0.2)),
            value_key(Value::Continuous(0.3))
        );
        assert_eq!(
            value_key(Value::Continuous(-0.0)),
            value_key(Value::Continuous(0.0))
        );
        assert!(value_key(Value::Continuous(f64::INFINITY)).is_err());
        assert!(value_key(Value::Continuous(f64::NAN)).is_err());
    }

    #[test]
    fn third_binary_value_fails_hard() {
        let var = binary_var();
        let reg = CallbackRegistry::new();
        let mut tr = tracker(UniquenessMode::Hard, 100);
        for t in 0..2 {
            tr.resolve_value(0, "bit", t, Class::Anomalous, |a| {
                eval_variable(&var, 0, t, Class::Anomalous, 7, a, &reg)
            })
            .unwrap();
        }
        let err = tr
            .resolve_value(0, "bit", 2, Class::Anomalous, |a| {
                eval_variable(&var, 0, 2, Class::Anomalous, 7, a, &reg)
            })
            .unwrap_err();
        assert_eq!(
            err.to_string(),
            "uniqueness exhausted: variable=bit class=anomalous t=2 tries=100"
        );
    }

    #[test]
    fn third_binary_value_soft_duplicates() {
        let var = binary_var();
        let reg = CallbackRegistry::new();
        let mut tr = tracker(UniquenessMode::Soft, 10);
        let mut out = Vec::new();
        for t in 0..3 {
            out.push(
                tr.resolve_value(0, "bit", t, Class::Anomalous, |a| {
                    eval_variable(&var, 0, t, Class::Anomalous, 7, a, &reg)
                })
                .unwrap(),
            );
        }
        assert!(matches!(out[0], Resolution::Unique(_)));
        assert!(matches!(out[1], Resolution::Unique(_)));
        match out[2] {
            Resolution::SoftDuplicate(Value::Discrete(v)) => assert!(v == 0 || v == 1),
            other => panic!("{other:?}"),
        }
        // the emitted duplicate is the last attempt's candidate
        let last = eval_variable(&var, 0, 2, Class::Anomalous, 7, 9, &reg).unwrap();
        assert_eq!(out[2].value(), last);
        assert_eq!(tr.soft_duplicates_emitted(), 1);
        assert_eq!(tr.emitted(0, Class::Anomalous).len(), 2);
    }

    #[test]
    fn off_mode_is_untracked() {
        let mut tr = tracker(UniquenessMode::Off, 1);
        for t in 0..5 {
            let r = tr.resolve_value(0, "c", t, Class::Anomalous, |_| Ok(Value::Discrete(1))).unwrap();
            assert_eq!(r, Resolution::Unique(Value::Discrete(1)));
        }
        assert!(tr.emitted(0, Class::Anomalous).is_empty());
    }

    #[test]
    fn classes_are_tracked_separately() {
        let spec = UniquenessSpec {
            normal: UniquenessPolicy::new(UniquenessMode::Hard, 1),
            anomalous: UniquenessPolicy::new(UniquenessMode::Hard, 1),
        };
        let mut tr = UniquenessTracker::new(&spec, 1);
        tr.resolve_value(0, "c", 0, Class::Normal, |_| Ok(Value::Discrete(4))).unwrap();
        tr.resolve_value(0, "c", 1, Class::Anomalous, |_| Ok(Value::Discrete(4))).unwrap();
        assert!(tr.resolve_value(0, "c", 2, Class::Normal, |_| Ok(Value::Discrete(4))).is_err());
    }

    #[test]
    fn collision_consumes_a_retry() {
        let mut tr = tracker(UniquenessMode::Hard, 3);
        tr.resolve_value(0, "c", 0, Class::Anomalous, |_| Ok(Value::Continuous(0.5))).unwrap();
        let r = tr
            .resolve_value(0, "c", 1, Class::Anomalous, |a| {
                Ok(Value::Continuous(if a == 0 { 0.5 } else { 0.25 }))
            })
            .unwrap();
        assert_eq!(r, Resolution::Unique(Value::Continuous(0.25)));
        assert_eq!(tr.retries_used(), 1);
    }

    #[test]
    fn thousand_continuous_values_are_distinct() {
        let var = VariableSpec {
            name: "x".into(),
            kind: VariableKind::Stochastic {
                value_type: ValueType::Continuous,
                normal_range: [0.0, 1.0],
                anomalous_range: [0.0, 1.0],
            },
        };
        let reg = CallbackRegistry::new();
        let mut tr = tracker(UniquenessMode::Hard, 100);
        let mut keys = HashSet::new();
        for t in 0..1000 {
            let v = tr
                .resolve_value(0, "x", t, Class::Anomalous, |a| {
                    eval_variable(&var, 0, t, Class::Anomalous, 99, a, &reg)
                })
                .unwrap()
                .value();
            assert!(keys.insert(value_key(v).unwrap()));
        }
        assert_eq!(keys.len(), 1000);
    }
}
