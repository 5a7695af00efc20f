//! Per-variable value evaluation: uniform stochastic ranges, composed
//! waveform primitives, and host-registered callbacks.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{VariableKind, VariableSpec};
use crate::prng::{self, Class, DrawAddress, StreamId};

/// Largest retry budget a uniqueness policy may request. The attempt field of
/// a [`DrawAddress`] carries the attempt in its low 16 bits and a sub-draw
/// lane in its high 16 bits.
pub const MAX_ATTEMPTS: u32 = 1 << 16;
/// Number of independent sub-draws available per (timestamp, attempt).
pub const MAX_LANES: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Continuous,
    Discrete,
}

/// One generated cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Continuous(f64),
    Discrete(i64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Continuous(v) => v,
            Value::Discrete(v) => v as f64,
        }
    }

    pub fn is_finite(self) -> bool {
        match self {
            Value::Continuous(v) => v.is_finite(),
            Value::Discrete(_) => true,
        }
    }

    /// Appends the CSV text of this value: integers in base 10, reals as the
    /// shortest decimal that parses back to the same binary64.
    pub fn write_csv(self, out: &mut Vec<u8>) {
        match self {
            Value::Discrete(v) => {
                use std::io::Write;
                write!(out, "{v}").expect("write to Vec");
            }
            Value::Continuous(v) => {
                let mut buf = ryu::Buffer::new();
                out.extend_from_slice(buf.format_finite(v).as_bytes());
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = Vec::new();
        self.write_csv(&mut out);
        f.write_str(std::str::from_utf8(&out).expect("ascii"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Constant,
    Linear,
    Sine,
    Square,
    Sawtooth,
    Noise,
}

/// A waveform building block. Composite variables sum a list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPrimitive {
    pub shape: Shape,
    #[serde(default)]
    pub amplitude: f64,
    /// Timestamps per cycle.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Fraction of a period in `[0, 1)`.
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_period() -> f64 {
    1.0
}

impl SignalPrimitive {
    pub fn new(shape: Shape) -> Self {
        SignalPrimitive {
            shape,
            amplitude: 0.0,
            period: 1.0,
            phase: 0.0,
            offset: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.shape, Shape::Sine | Shape::Square | Shape::Sawtooth)
    }
}

/// Value of one primitive at timestamp `t`. `noise_draw` is only read by
/// the noise shape.
pub fn eval_primitive(prim: &SignalPrimitive, t: u64, noise_draw: f64) -> f64 {
    let cycle = || t as f64 / prim.period + prim.phase;
    match prim.shape {
        Shape::Constant => prim.offset,
        Shape::Linear => prim.offset + prim.amplitude * t as f64,
        Shape::Sine => prim.offset + prim.amplitude * (TAU * cycle()).sin(),
        Shape::Square => {
            // high for the first half of each cycle, low for the second
            let c = cycle();
            let sign = if c - c.floor() < 0.5 { 1.0 } else { -1.0 };
            prim.offset + prim.amplitude * sign
        }
        Shape::Sawtooth => {
            let c = cycle();
            prim.offset + prim.amplitude * (2.0 * (c - c.floor()) - 1.0)
        }
        Shape::Noise => prim.offset + prim.amplitude * (2.0 * noise_draw - 1.0) * prim.noise_sigma,
    }
}

/// Sums primitives left to right. The `k`-th noise primitive reads lane `k`.
pub fn eval_composite(prims: &[SignalPrimitive], t: u64, draws: &Draws) -> f64 {
    let mut lane = 0u32;
    let mut total = 0.0;
    for prim in prims {
        let noise = if prim.shape == Shape::Noise {
            let u = draws.unit(lane);
            lane += 1;
            u
        } else {
            0.0
        };
        total += eval_primitive(prim, t, noise);
    }
    total
}

/// Draw accessor handed to callbacks and composite noise, bound to one
/// variable stream at one `(timestamp, attempt)`.
#[derive(Debug, Clone, Copy)]
pub struct Draws {
    seed: u64,
    stream: StreamId,
    timestamp: u64,
    attempt: u32,
}

impl Draws {
    pub fn new(seed: u64, stream: StreamId, timestamp: u64, attempt: u32) -> Self {
        debug_assert!(attempt < MAX_ATTEMPTS);
        Draws {
            seed,
            stream,
            timestamp,
            attempt,
        }
    }

    fn address(&self, lane: u32) -> DrawAddress {
        assert!(lane < MAX_LANES, "draw lane {lane} out of range");
        DrawAddress::new(self.timestamp, lane << 16 | self.attempt)
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn u64(&self, lane: u32) -> u64 {
        prng::draw_u64(self.seed, self.stream, self.address(lane))
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&self, lane: u32) -> f64 {
        prng::unit_from_bits(self.u64(lane))
    }

    pub fn range(&self, lane: u32, lo: f64, hi: f64, value_type: ValueType) -> Value {
        prng::scale_unit(self.unit(lane), lo, hi, value_type)
    }
}

/// Host-supplied generator: `(timestamp, draws) -> value`.
///
/// Callbacks are invoked concurrently from generation workers. Any
/// synchronization they need is their own business.
pub type CallbackFn = Arc<dyn Fn(u64, &Draws) -> Value + Send + Sync>;

#[derive(Clone)]
pub struct CallbackPair {
    pub normal: CallbackFn,
    pub anomalous: CallbackFn,
}

impl CallbackPair {
    pub fn for_class(&self, class: Class) -> &CallbackFn {
        match class {
            Class::Normal => &self.normal,
            Class::Anomalous => &self.anomalous,
        }
    }
}

impl fmt::Debug for CallbackPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CallbackPair { .. }")
    }
}

#[derive(Debug, Clone, Default)]
pub struct CallbackRegistry {
    entries: HashMap<String, CallbackPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    Added,
    Replaced,
}

impl CallbackRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the normal/anomalous pair under `key`.
    ///
    /// # Panics
    /// If `key` is empty.
    pub fn register<N, A>(&mut self, key: impl Into<String>, normal: N, anomalous: A) -> Registration
    where
        N: Fn(u64, &Draws) -> Value + Send + Sync + 'static,
        A: Fn(u64, &Draws) -> Value + Send + Sync + 'static,
    {
        let key = key.into();
        assert!(!key.is_empty(), "callback key must be non-empty");
        let pair = CallbackPair {
            normal: Arc::new(normal),
            anomalous: Arc::new(anomalous),
        };
        match self.entries.insert(key, pair) {
            Some(_) => Registration::Replaced,
            None => Registration::Added,
        }
    }

    pub fn get(&self, key: &str) -> Option<&CallbackPair> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unresolved callback key '{key}' for variable '{variable}'")]
    UnresolvedCallback { variable: String, key: String },
    #[error("non-finite value for variable '{variable}' at t={t}")]
    NonFinite { variable: String, t: u64 },
}

/// Evaluates `var` (at position `index` in the dataset spec) for timestamp `t`.
///
/// `attempt` selects an independent candidate for uniqueness retries.
pub fn eval_variable(
    var: &VariableSpec,
    index: u16,
    t: u64,
    class: Class,
    seed: u64,
    attempt: u32,
    registry: &CallbackRegistry,
) -> Result<Value, EvalError> {
    let draws = Draws::new(seed, StreamId::value(index, class), t, attempt);
    let value = match &var.kind {
        VariableKind::Stochastic {
            value_type,
            normal_range,
            anomalous_range,
        } => {
            let [lo, hi] = match class {
                Class::Normal => *normal_range,
                Class::Anomalous => *anomalous_range,
            };
            draws.range(0, lo, hi, *value_type)
        }
        VariableKind::Composite { normal, anomalous } => {
            let prims = match class {
                Class::Normal => normal,
                Class::Anomalous => anomalous,
            };
            Value::Continuous(eval_composite(prims, t, &draws))
        }
        VariableKind::Callback { registry_key } => {
            let pair = registry
                .get(registry_key)
                .ok_or_else(|| EvalError::UnresolvedCallback {
                    variable: var.name.clone(),
                    key: registry_key.clone(),
                })?;
            (pair.for_class(class))(t, &draws)
        }
    };
    if !value.is_finite() {
        return Err(EvalError::NonFinite {
            variable: var.name.clone(),
            t,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stochastic(value_type: ValueType, normal: [f64; 2], anomalous: [f64; 2]) -> VariableSpec {
        VariableSpec {
            name: "x".into(),
            kind: VariableKind::Stochastic {
                value_type,
                normal_range: normal,
                anomalous_range: anomalous,
            },
        }
    }

    #[test]
    fn constant_is_offset_everywhere() {
        let p = SignalPrimitive::new(Shape::Constant).offset(5.0).amplitude(3.0);
        for t in [0, 1, 17, 1_000_000] {
            assert_eq!(eval_primitive(&p, t, 0.9), 5.0);
        }
    }

    #[test]
    fn sine_quarter_period() {
        let p = SignalPrimitive::new(Shape::Sine).amplitude(1.0).period(4.0);
        assert_eq!(eval_primitive(&p, 1, 0.0), 1.0);
    }

    #[test]
    fn square_half_cycles() {
        let p = SignalPrimitive::new(Shape::Square).amplitude(1.0).period(100.0);
        for t in 0..50 {
            assert_eq!(eval_primitive(&p, t, 0.0), 1.0, "t={t}");
        }
        for t in 50..100 {
            assert_eq!(eval_primitive(&p, t, 0.0), -1.0, "t={t}");
        }
        // exact cycle boundaries stay high regardless of sin() rounding
        for k in 0..1000u64 {
            assert_eq!(eval_primitive(&p, k * 100, 0.0), 1.0);
        }
    }

    #[test]
    fn sawtooth_and_linear_and_noise() {
        let saw = SignalPrimitive::new(Shape::Sawtooth).amplitude(2.0).period(10.0);
        assert_eq!(eval_primitive(&saw, 0, 0.0), -2.0);
        assert_eq!(eval_primitive(&saw, 5, 0.0), 0.0);
        let lin = SignalPrimitive::new(Shape::Linear).amplitude(0.5).offset(1.0);
        assert_eq!(eval_primitive(&lin, 4, 0.0), 3.0);
        let noise = SignalPrimitive::new(Shape::Noise).amplitude(1.0).noise_sigma(2.0);
        assert_eq!(eval_primitive(&noise, 3, 0.0), -2.0);
        assert_eq!(eval_primitive(&noise, 3, 0.75), 1.0);
    }

    #[test]
    fn composite_noise_lanes_are_independent() {
        let prims = vec![
            SignalPrimitive::new(Shape::Noise).amplitude(1.0).noise_sigma(1.0),
            SignalPrimitive::new(Shape::Noise).amplitude(1.0).noise_sigma(1.0),
        ];
        let draws = Draws::new(1, StreamId::value(0, Class::Normal), 10, 0);
        let both = eval_composite(&prims, 10, &draws);
        let first = eval_composite(&prims[..1], 10, &draws);
        assert_ne!(both, 2.0 * first);
        let expected = (2.0 * draws.unit(0) - 1.0) + (2.0 * draws.unit(1) - 1.0);
        assert_eq!(both, expected);
    }

    #[test]
    fn degenerate_stochastic_range() {
        let var = stochastic(ValueType::Continuous, [0.0, 0.0], [1.0, 2.0]);
        let reg = CallbackRegistry::new();
        for t in 0..20 {
            assert_eq!(
                eval_variable(&var, 0, t, Class::Normal, 3, 0, &reg).unwrap(),
                Value::Continuous(0.0)
            );
        }
    }

    #[test]
    fn binary_domain_has_at_most_two_values() {
        let var = stochastic(ValueType::Discrete, [5.0, 9.0], [0.0, 1.0]);
        let reg = CallbackRegistry::new();
        let mut distinct = std::collections::BTreeSet::new();
        for attempt in 0..3 {
            match eval_variable(&var, 0, 11, Class::Anomalous, 3, attempt, &reg).unwrap() {
                Value::Discrete(v) => {
                    assert!(v == 0 || v == 1);
                    distinct.insert(v);
                }
                v => panic!("{v:?}"),
            }
        }
        assert!(distinct.len() <= 2);
    }

    #[test]
    fn callback_dispatch_by_class() {
        let mut reg = CallbackRegistry::new();
        assert_eq!(
            reg.register(
                "cb",
                |_, _: &Draws| Value::Continuous(-1.0),
                |t, _: &Draws| Value::Continuous(t as f64 * 10.0)
            ),
            Registration::Added
        );
        let var = VariableSpec {
            name: "c".into(),
            kind: VariableKind::Callback {
                registry_key: "cb".into(),
            },
        };
        assert_eq!(
            eval_variable(&var, 0, 7, Class::Anomalous, 0, 0, &reg).unwrap(),
            Value::Continuous(70.0)
        );
        assert_eq!(
            eval_variable(&var, 0, 7, Class::Normal, 0, 0, &reg).unwrap(),
            Value::Continuous(-1.0)
        );
        assert_eq!(
            reg.register("cb", |_, _: &Draws| Value::Discrete(1), |_, _: &Draws| Value::Discrete(2)),
            Registration::Replaced
        );
        assert_eq!(
            eval_variable(&var, 0, 7, Class::Anomalous, 0, 0, &reg).unwrap(),
            Value::Discrete(2)
        );
    }

    #[test]
    fn unresolved_callback_names_key() {
        let var = VariableSpec {
            name: "c".into(),
            kind: VariableKind::Callback {
                registry_key: "missing".into(),
            },
        };
        let err = eval_variable(&var, 0, 0, Class::Normal, 0, 0, &CallbackRegistry::new()).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn non_finite_callback_output_rejected() {
        let mut reg = CallbackRegistry::new();
        reg.register("nan", |_, _: &Draws| Value::Continuous(f64::NAN), |_, _: &Draws| Value::Discrete(0));
        let var = VariableSpec {
            name: "c".into(),
            kind: VariableKind::Callback {
                registry_key: "nan".into(),
            },
        };
        assert!(matches!(
            eval_variable(&var, 0, 4, Class::Normal, 0, 0, &reg),
            Err(EvalError::NonFinite { t: 4, .. })
        ));
    }

    #[test]
    fn csv_formatting() {
        let mut out = Vec::new();
        Value::Discrete(-3).write_csv(&mut out);
        out.push(b',');
        Value::Continuous(0.1).write_csv(&mut out);
        assert_eq!(out, b"-3,0.1");
        for v in [0.1 + 0.2, 1e-300, 123456.789, -0.0, 5e20] {
            let s = Value::Continuous(v).to_string();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
