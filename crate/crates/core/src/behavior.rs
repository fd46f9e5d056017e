//! Executable behaviors for dataflow modules.
//!
//! A small library of parametrizable primitive blocks (sources,
//! arithmetic transforms, a FIR filter, a threshold converter) so that
//! models run without a general-purpose expression language. Every
//! behavior is a pure function of `(seed, stream, activation index,
//! inputs, state)`; random sources use the counter-based stream in
//! [`crate::rng`] so output sequences are reproducible everywhere.

use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;
use crate::time::SimTime;
use crate::value::{Value, ValueType};

/// An inclusive integer range for the random source.
pub type IntRange = (i64, i64);

/// What a module computes each activation.
///
/// `kind` plus kind-specific parameters; this enum is embedded verbatim
/// in the model file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    /// Emits the same value on every sample of every output port.
    Constant { value: Value },
    /// Uniform integer source. Sample position `s` draws from
    /// `ranges[s % ranges.len()]`, which is how a sensor emits a
    /// multi-field record one basic value at a time (e.g. an id in
    /// [1,5] followed by a position in [3,10]).
    UniformRandomInt {
        ranges: Vec<IntRange>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stream: Option<u64>,
    },
    /// Sine source: `amplitude * sin(2*pi * (t/period + phase))` at the
    /// timestamp of each output sample. The phase position is kept as
    /// an exact rational number of turns, so long runs do not drift.
    Sine {
        amplitude: f64,
        period: SimTime,
        #[serde(default, skip_serializing_if = "is_zero")]
        phase_num: i64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        phase_den: u64,
    },
    /// Multiplies the (real) input stream by a constant factor.
    Gain { factor: f64 },
    /// Element-wise sum of all input ports.
    Sum,
    /// Finite impulse response filter over the (real) input stream.
    Fir { coefficients: Vec<f64> },
    /// 1 when the input sample is at or above the threshold, else 0.
    AdcThreshold { threshold: f64 },
    /// Copies the input stream to every output port. Output ports may
    /// have a different rate: sample `j` is `input[j % R_in]`, which
    /// makes this block double as a rate adapter.
    Duplicate,
    /// Cycles through a fixed list of values.
    Sequence { values: Vec<Value> },
}

fn one() -> u64 {
    1
}
fn is_one(v: &u64) -> bool {
    *v == 1
}
fn is_zero(v: &i64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BehaviorError {
    #[error("behavior `{kind}`: {reason}")]
    BadParameters { kind: &'static str, reason: String },
    #[error("behavior `{kind}` expects {expected} but module has {found}")]
    ArityMismatch {
        kind: &'static str,
        expected: String,
        found: String,
    },
    #[error("input array {index} has {got} samples, port rate is {want}")]
    InputLength { index: usize, got: usize, want: usize },
}

/// Port shape of a module as seen by a behavior: value types of the
/// input and output data ports, in declaration order, plus their rates.
#[derive(Debug, Clone)]
pub struct PortShape {
    pub inputs: Vec<(ValueType, u32)>,
    pub outputs: Vec<(ValueType, u32)>,
}

impl BehaviorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BehaviorSpec::Constant { .. } => "constant",
            BehaviorSpec::UniformRandomInt { .. } => "uniform_random_int",
            BehaviorSpec::Sine { .. } => "sine",
            BehaviorSpec::Gain { .. } => "gain",
            BehaviorSpec::Sum => "sum",
            BehaviorSpec::Fir { .. } => "fir",
            BehaviorSpec::AdcThreshold { .. } => "adc_threshold",
            BehaviorSpec::Duplicate => "duplicate",
            BehaviorSpec::Sequence { .. } => "sequence",
        }
    }

    /// Checks parameter ranges and compatibility with the module's
    /// ports. Sources take no inputs; transforms take input and output
    /// ports of equal rate (a transform with zero outputs is a sink).
    pub fn validate(&self, shape: &PortShape) -> Result<(), BehaviorError> {
        let kind = self.kind_name();
        let arity = |expected: &str| -> BehaviorError {
            BehaviorError::ArityMismatch {
                kind,
                expected: expected.to_string(),
                found: format!(
                    "{} input port(s), {} output port(s)",
                    shape.inputs.len(),
                    shape.outputs.len()
                ),
            }
        };
        let bad = |reason: String| BehaviorError::BadParameters { kind, reason };

        let same_rate_through = || -> Result<(), BehaviorError> {
            let mut rates = shape.inputs.iter().chain(&shape.outputs).map(|(_, r)| *r);
            if let Some(first) = rates.next() {
                if rates.any(|r| r != first) {
                    return Err(arity("equal rates on all data ports"));
                }
            }
            Ok(())
        };

        match self {
            BehaviorSpec::Constant { value } => {
                if !shape.inputs.is_empty() || shape.outputs.is_empty() {
                    return Err(arity("no inputs and at least one output"));
                }
                for (ty, _) in &shape.outputs {
                    if !value.matches(*ty) {
                        return Err(bad(format!(
                            "value {} does not match output type {}",
                            value, ty
                        )));
                    }
                }
            }
            BehaviorSpec::UniformRandomInt { ranges, .. } => {
                if !shape.inputs.is_empty() || shape.outputs.is_empty() {
                    return Err(arity("no inputs and at least one output"));
                }
                same_rate_through()?;
                if ranges.is_empty() {
                    return Err(bad("at least one (lo, hi) range required".into()));
                }
                for (lo, hi) in ranges {
                    if lo > hi {
                        return Err(bad(format!("range [{}, {}] has lo > hi", lo, hi)));
                    }
                }
                if shape.outputs.iter().any(|(ty, _)| *ty != ValueType::Int) {
                    return Err(bad("output ports must be int".into()));
                }
            }
            BehaviorSpec::Sine {
                period, phase_den, ..
            } => {
                if !shape.inputs.is_empty() || shape.outputs.is_empty() {
                    return Err(arity("no inputs and at least one output"));
                }
                same_rate_through()?;
                if period.as_ps() == 0 {
                    return Err(bad("period must be positive".into()));
                }
                if *phase_den == 0 {
                    return Err(bad("phase_den must be positive".into()));
                }
                if shape.outputs.iter().any(|(ty, _)| *ty != ValueType::Real) {
                    return Err(bad("output ports must be real".into()));
                }
            }
            BehaviorSpec::Gain { .. } => {
                if shape.inputs.len() != 1 {
                    return Err(arity("exactly one input"));
                }
                if shape.inputs[0].0 != ValueType::Real
                    || shape.outputs.iter().any(|(ty, _)| *ty != ValueType::Real)
                {
                    return Err(bad("gain operates on real ports".into()));
                }
                same_rate_through()?;
            }
            BehaviorSpec::Sum => {
                if shape.inputs.is_empty() {
                    return Err(arity("at least one input"));
                }
                let ty = shape.inputs[0].0;
                if ty == ValueType::Bool {
                    return Err(bad("sum operates on int or real ports".into()));
                }
                if shape
                    .inputs
                    .iter()
                    .chain(&shape.outputs)
                    .any(|(t, _)| *t != ty)
                {
                    return Err(bad("all ports must share one value type".into()));
                }
                same_rate_through()?;
            }
            BehaviorSpec::Fir { coefficients } => {
                if coefficients.is_empty() {
                    return Err(bad("at least one coefficient required".into()));
                }
                if shape.inputs.len() != 1 {
                    return Err(arity("exactly one input"));
                }
                if shape.inputs[0].0 != ValueType::Real
                    || shape.outputs.iter().any(|(ty, _)| *ty != ValueType::Real)
                {
                    return Err(bad("fir operates on real ports".into()));
                }
                same_rate_through()?;
            }
            BehaviorSpec::AdcThreshold { .. } => {
                if shape.inputs.len() != 1 {
                    return Err(arity("exactly one input"));
                }
                if shape.inputs[0].0 != ValueType::Real
                    || shape.outputs.iter().any(|(ty, _)| *ty != ValueType::Int)
                {
                    return Err(bad("adc_threshold reads a real port and writes int ports".into()));
                }
                same_rate_through()?;
            }
            BehaviorSpec::Duplicate => {
                if shape.inputs.len() != 1 {
                    return Err(arity("exactly one input"));
                }
                let ty = shape.inputs[0].0;
                if shape.outputs.iter().any(|(t, _)| *t != ty) {
                    return Err(bad("outputs must match the input value type".into()));
                }
            }
            BehaviorSpec::Sequence { values } => {
                if !shape.inputs.is_empty() || shape.outputs.is_empty() {
                    return Err(arity("no inputs and at least one output"));
                }
                same_rate_through()?;
                if values.is_empty() {
                    return Err(bad("at least one value required".into()));
                }
                let ty = values[0].value_type();
                if values.iter().any(|v| !v.matches(ty)) {
                    return Err(bad("all sequence values must share one type".into()));
                }
                for (t, _) in &shape.outputs {
                    if *t != ty {
                        return Err(bad(format!(
                            "sequence of {} values feeding a {} port",
                            ty, t
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-module store that survives across activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleState {
    /// Counter-based draw stream (seed ^ stream, draw counter).
    rng: CounterRng,
    /// Activations executed so far.
    activation: u64,
    /// Most recent inputs for the FIR window, newest last.
    fir_history: Vec<f64>,
    /// Next position in the value list of a sequence source.
    seq_cursor: usize,
}

impl ModuleState {
    pub fn new(seed: u64, stream: u64) -> Self {
        ModuleState {
            rng: CounterRng::new(seed, stream),
            activation: 0,
            fir_history: Vec::new(),
            seq_cursor: 0,
        }
    }

    pub fn activation(&self) -> u64 {
        self.activation
    }
}

/// Runs one activation: consumes one `rate`-sized sample array per
/// input port, produces one per output port, and advances the state.
///
/// `sample_times` gives the timestamp of each output stream position
/// for timestamp-dependent sources (one entry per sample of the first
/// output port; pass `&[]` for modules without outputs).
pub fn execute_activation(
    behavior: &BehaviorSpec,
    state: &mut ModuleState,
    shape: &PortShape,
    inputs: &[Vec<Value>],
    sample_times: &[SimTime],
) -> Result<Vec<Vec<Value>>, BehaviorError> {
    if inputs.len() != shape.inputs.len() {
        return Err(BehaviorError::ArityMismatch {
            kind: behavior.kind_name(),
            expected: format!("{} input arrays", shape.inputs.len()),
            found: format!("{}", inputs.len()),
        });
    }
    for (i, (arr, (_, rate))) in inputs.iter().zip(&shape.inputs).enumerate() {
        if arr.len() != *rate as usize {
            return Err(BehaviorError::InputLength {
                index: i,
                got: arr.len(),
                want: *rate as usize,
            });
        }
    }

    let broadcast = |stream: Vec<Value>| -> Vec<Vec<Value>> {
        shape.outputs.iter().map(|_| stream.clone()).collect()
    };

    let outputs = match behavior {
        BehaviorSpec::Constant { value } => shape
            .outputs
            .iter()
            .map(|(_, rate)| vec![*value; *rate as usize])
            .collect(),
        BehaviorSpec::UniformRandomInt { ranges, .. } => {
            let rate = shape.outputs[0].1 as usize;
            let base = state.activation * rate as u64;
            let stream: Vec<Value> = (0..rate)
                .map(|j| {
                    let (lo, hi) = ranges[(base as usize + j) % ranges.len()];
                    Value::Int(state.rng.next_range_i64(lo, hi))
                })
                .collect();
            broadcast(stream)
        }
        BehaviorSpec::Sine {
            amplitude,
            period,
            phase_num,
            phase_den,
        } => {
            let rate = shape.outputs[0].1 as usize;
            debug_assert_eq!(sample_times.len(), rate);
            let stream: Vec<Value> = sample_times
                .iter()
                .map(|t| {
                    let turns = phase_position(*t, *period, *phase_num, *phase_den);
                    Value::Real(amplitude * sin_turns(turns))
                })
                .collect();
            broadcast(stream)
        }
        BehaviorSpec::Gain { factor } => {
            let stream: Vec<Value> = inputs[0]
                .iter()
                .map(|v| Value::Real(factor * v.as_real().unwrap_or(0.0)))
                .collect();
            broadcast(stream)
        }
        BehaviorSpec::Sum => {
            let rate = shape.inputs[0].1 as usize;
            let ty = shape.inputs[0].0;
            let stream: Vec<Value> = (0..rate)
                .map(|j| match ty {
                    ValueType::Int => Value::Int(
                        inputs.iter().map(|arr| arr[j].as_int().unwrap_or(0)).sum(),
                    ),
                    ValueType::Real => Value::Real(
                        inputs
                            .iter()
                            .map(|arr| arr[j].as_real().unwrap_or(0.0))
                            .sum(),
                    ),
                    ValueType::Bool => unreachable!("rejected by validate"),
                })
                .collect();
            broadcast(stream)
        }
        BehaviorSpec::Fir { coefficients } => {
            let mut stream = Vec::with_capacity(inputs[0].len());
            for v in &inputs[0] {
                state.fir_history.push(v.as_real().unwrap_or(0.0));
                let mut acc = 0.0;
                for (i, c) in coefficients.iter().enumerate() {
                    let idx = state.fir_history.len() as i64 - 1 - i as i64;
                    if idx >= 0 {
                        acc += c * state.fir_history[idx as usize];
                    }
                }
                stream.push(Value::Real(acc));
            }
            let window = coefficients.len().saturating_sub(1);
            if state.fir_history.len() > window {
                state.fir_history.drain(..state.fir_history.len() - window);
            }
            broadcast(stream)
        }
        BehaviorSpec::AdcThreshold { threshold } => {
            let stream: Vec<Value> = inputs[0]
                .iter()
                .map(|v| Value::Int((v.as_real().unwrap_or(0.0) >= *threshold) as i64))
                .collect();
            broadcast(stream)
        }
        BehaviorSpec::Duplicate => {
            let src = &inputs[0];
            shape
                .outputs
                .iter()
                .map(|(_, rate)| (0..*rate as usize).map(|j| src[j % src.len()]).collect())
                .collect()
        }
        BehaviorSpec::Sequence { values } => {
            let rate = shape.outputs[0].1 as usize;
            let stream: Vec<Value> = (0..rate)
                .map(|_| {
                    let v = values[state.seq_cursor % values.len()];
                    state.seq_cursor = (state.seq_cursor + 1) % values.len();
                    v
                })
                .collect();
            broadcast(stream)
        }
    };

    state.activation += 1;
    Ok(outputs)
}

/// Exact phase position in turns, folded into [0, 1).
fn phase_position(t: SimTime, period: SimTime, phase_num: i64, phase_den: u64) -> f64 {
    let p = period.as_ps() as u128;
    let within = (t.as_ps() % period.as_ps()) as u128;
    let den = phase_den as u128;
    // normalize the phase into [0, den)
    let ph = phase_num.rem_euclid(phase_den as i64) as u128;
    let num = (within * den + ph * p) % (p * den);
    num as f64 / (p * den) as f64
}

/// sin(2*pi*x) for x in [0, 1), evaluated with a fixed odd polynomial
/// so results do not depend on the platform's libm.
pub fn sin_turns(x: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&x));
    // quarter-wave reduction
    let (v, sign) = if x < 0.25 {
        (x, 1.0)
    } else if x < 0.5 {
        (0.5 - x, 1.0)
    } else if x < 0.75 {
        (x - 0.5, -1.0)
    } else {
        (1.0 - x, -1.0)
    };
    let t = 2.0 * std::f64::consts::PI * v; // t in [0, pi/2]
    let t2 = t * t;
    // Taylor series through t^15; |error| < 1e-12 on [0, pi/2]
    let mut acc = -1.0 / 1_307_674_368_000.0; // 1/15!
    acc = acc * t2 + 1.0 / 6_227_020_800.0; // 1/13!
    acc = acc * t2 - 1.0 / 39_916_800.0; // 1/11!
    acc = acc * t2 + 1.0 / 362_880.0; // 1/9!
    acc = acc * t2 - 1.0 / 5_040.0; // 1/7!
    acc = acc * t2 + 1.0 / 120.0; // 1/5!
    acc = acc * t2 - 1.0 / 6.0; // 1/3!
    acc = acc * t2 + 1.0;
    sign * t * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimTime;

    fn shape(inputs: &[(ValueType, u32)], outputs: &[(ValueType, u32)]) -> PortShape {
        PortShape {
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
        }
    }

    fn run(
        b: &BehaviorSpec,
        state: &mut ModuleState,
        sh: &PortShape,
        inputs: &[Vec<Value>],
    ) -> Vec<Vec<Value>> {
        let times: Vec<SimTime> = sh
            .outputs
            .first()
            .map(|(_, r)| (0..*r as u64).map(SimTime::from_ms).collect())
            .unwrap_or_default();
        execute_activation(b, state, sh, inputs, &times).unwrap()
    }

    #[test]
    fn constant_fills_rate() {
        let b = BehaviorSpec::Constant { value: Value::Int(7) };
        let sh = shape(&[], &[(ValueType::Int, 3)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let out = run(&b, &mut st, &sh, &[]);
        assert_eq!(out, vec![vec![Value::Int(7); 3]]);
    }

    #[test]
    fn uniform_stays_in_range_and_covers() {
        let b = BehaviorSpec::UniformRandomInt {
            ranges: vec![(1, 5)],
            stream: None,
        };
        let sh = shape(&[], &[(ValueType::Int, 1)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(42, 1);
        let mut seen = [false; 5];
        for _ in 0..10_000 {
            let out = run(&b, &mut st, &sh, &[]);
            let v = out[0][0].as_int().unwrap();
            assert!((1..=5).contains(&v));
            seen[(v - 1) as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn uniform_alternates_ranges_per_sample() {
        let b = BehaviorSpec::UniformRandomInt {
            ranges: vec![(1, 5), (3, 10)],
            stream: None,
        };
        let sh = shape(&[], &[(ValueType::Int, 2)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(7, 9);
        for _ in 0..1_000 {
            let out = run(&b, &mut st, &sh, &[]);
            let id = out[0][0].as_int().unwrap();
            let pos = out[0][1].as_int().unwrap();
            assert!((1..=5).contains(&id), "id {}", id);
            assert!((3..=10).contains(&pos), "pos {}", pos);
        }
    }

    #[test]
    fn gain_scales() {
        let b = BehaviorSpec::Gain { factor: 2.0 };
        let sh = shape(&[(ValueType::Real, 2)], &[(ValueType::Real, 2)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let out = run(&b, &mut st, &sh, &[vec![Value::Real(1.0), Value::Real(-3.0)]]);
        assert_eq!(out[0], vec![Value::Real(2.0), Value::Real(-6.0)]);
    }

    #[test]
    fn fir_matches_hand_convolution() {
        // [0.5, 0.5] on the step 0,1,1,1,... -> 0.0, 0.5, 1.0, 1.0, ...
        let b = BehaviorSpec::Fir {
            coefficients: vec![0.5, 0.5],
        };
        let sh = shape(&[(ValueType::Real, 1)], &[(ValueType::Real, 1)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let step = [0.0, 1.0, 1.0, 1.0, 1.0];
        let expect = [0.0, 0.5, 1.0, 1.0, 1.0];
        for (x, y) in step.iter().zip(expect) {
            let out = run(&b, &mut st, &sh, &[vec![Value::Real(*x)]]);
            assert_eq!(out[0][0], Value::Real(y));
        }
    }

    #[test]
    fn fir_multi_sample_activations() {
        let b = BehaviorSpec::Fir {
            coefficients: vec![1.0, 2.0, 3.0],
        };
        let sh = shape(&[(ValueType::Real, 2)], &[(ValueType::Real, 2)]);
        let mut st = ModuleState::new(0, 0);
        let out1 = run(&b, &mut st, &sh, &[vec![Value::Real(1.0), Value::Real(0.0)]]);
        // y0 = 1*1 = 1 ; y1 = 1*0 + 2*1 = 2
        assert_eq!(out1[0], vec![Value::Real(1.0), Value::Real(2.0)]);
        let out2 = run(&b, &mut st, &sh, &[vec![Value::Real(0.0), Value::Real(0.0)]]);
        // y2 = 3*1 = 3 ; y3 = 0
        assert_eq!(out2[0], vec![Value::Real(3.0), Value::Real(0.0)]);
    }

    #[test]
    fn adc_threshold_is_binary_and_monotone() {
        let b = BehaviorSpec::AdcThreshold { threshold: 0.5 };
        let sh = shape(&[(ValueType::Real, 1)], &[(ValueType::Int, 1)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let mut prev = 0;
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            let out = run(&b, &mut st, &sh, &[vec![Value::Real(x)]]);
            let y = out[0][0].as_int().unwrap();
            assert!(y == 0 || y == 1);
            assert!(y >= prev, "not monotone at {}", x);
            prev = y;
        }
        assert_eq!(prev, 1);
    }

    #[test]
    fn duplicate_copies_to_all_outputs() {
        let b = BehaviorSpec::Duplicate;
        let sh = shape(
            &[(ValueType::Int, 2)],
            &[(ValueType::Int, 2), (ValueType::Int, 2)],
        );
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let input = vec![Value::Int(4), Value::Int(9)];
        let out = run(&b, &mut st, &sh, std::slice::from_ref(&input));
        assert_eq!(out, vec![input.clone(), input]);
    }

    #[test]
    fn duplicate_adapts_rates() {
        // 2-in to 1-out keeps the first sample; 1-in to 3-out repeats
        let b = BehaviorSpec::Duplicate;
        let down = shape(&[(ValueType::Int, 2)], &[(ValueType::Int, 1)]);
        b.validate(&down).unwrap();
        let mut st = ModuleState::new(0, 0);
        let out = run(&b, &mut st, &down, &[vec![Value::Int(8), Value::Int(9)]]);
        assert_eq!(out, vec![vec![Value::Int(8)]]);

        let up = shape(&[(ValueType::Int, 1)], &[(ValueType::Int, 3)]);
        let out = run(&b, &mut st, &up, &[vec![Value::Int(5)]]);
        assert_eq!(out, vec![vec![Value::Int(5); 3]]);
    }

    #[test]
    fn sequence_cycles() {
        let b = BehaviorSpec::Sequence {
            values: vec![Value::Int(1), Value::Int(2), Value::Int(3)],
        };
        let sh = shape(&[], &[(ValueType::Int, 2)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let mut got = Vec::new();
        for _ in 0..4 {
            got.extend(run(&b, &mut st, &sh, &[])[0].clone());
        }
        let want: Vec<Value> = [1, 2, 3, 1, 2, 3, 1, 2].iter().map(|v| Value::Int(*v)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn sum_adds_elementwise() {
        let b = BehaviorSpec::Sum;
        let sh = shape(
            &[(ValueType::Int, 2), (ValueType::Int, 2)],
            &[(ValueType::Int, 2)],
        );
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        let out = run(
            &b,
            &mut st,
            &sh,
            &[
                vec![Value::Int(1), Value::Int(2)],
                vec![Value::Int(10), Value::Int(20)],
            ],
        );
        assert_eq!(out[0], vec![Value::Int(11), Value::Int(22)]);
    }

    #[test]
    fn deterministic_across_replays() {
        let b = BehaviorSpec::UniformRandomInt {
            ranges: vec![(0, 100)],
            stream: None,
        };
        let sh = shape(&[], &[(ValueType::Int, 4)]);
        let runs: Vec<Vec<Vec<Value>>> = (0..2)
            .map(|_| {
                let mut st = ModuleState::new(99, 3);
                (0..32).flat_map(|_| run(&b, &mut st, &sh, &[])).collect()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let sh_src = shape(&[], &[(ValueType::Int, 1)]);
        assert!(BehaviorSpec::UniformRandomInt { ranges: vec![(5, 1)], stream: None }
            .validate(&sh_src)
            .is_err());
        assert!(BehaviorSpec::UniformRandomInt { ranges: vec![], stream: None }
            .validate(&sh_src)
            .is_err());
        assert!(BehaviorSpec::Fir { coefficients: vec![] }
            .validate(&shape(&[(ValueType::Real, 1)], &[(ValueType::Real, 1)]))
            .is_err());
        assert!(BehaviorSpec::Sine {
            amplitude: 1.0,
            period: SimTime::ZERO,
            phase_num: 0,
            phase_den: 1
        }
        .validate(&shape(&[], &[(ValueType::Real, 1)]))
        .is_err());
        // source with an input port
        assert!(BehaviorSpec::Constant { value: Value::Int(0) }
            .validate(&shape(&[(ValueType::Int, 1)], &[(ValueType::Int, 1)]))
            .is_err());
        // rate mismatch through a transform
        assert!(BehaviorSpec::Gain { factor: 1.0 }
            .validate(&shape(&[(ValueType::Real, 2)], &[(ValueType::Real, 3)]))
            .is_err());
    }

    #[test]
    fn arity_mismatch_at_runtime() {
        let b = BehaviorSpec::Gain { factor: 1.0 };
        let sh = shape(&[(ValueType::Real, 2)], &[(ValueType::Real, 2)]);
        let mut st = ModuleState::new(0, 0);
        let err = execute_activation(&b, &mut st, &sh, &[], &[SimTime::ZERO, SimTime::ZERO]);
        assert!(matches!(err, Err(BehaviorError::ArityMismatch { .. })));
        let err = execute_activation(
            &b,
            &mut st,
            &sh,
            &[vec![Value::Real(0.0)]],
            &[SimTime::ZERO, SimTime::ZERO],
        );
        assert!(matches!(err, Err(BehaviorError::InputLength { .. })));
    }

    #[test]
    fn sin_turns_close_to_libm() {
        for i in 0..4000 {
            let x = i as f64 / 4000.0;
            let want = (2.0 * std::f64::consts::PI * x).sin();
            let got = sin_turns(x);
            assert!((got - want).abs() < 1e-9, "x={} got={} want={}", x, got, want);
        }
    }

    #[test]
    fn sine_source_samples_at_timestamps() {
        let b = BehaviorSpec::Sine {
            amplitude: 2.0,
            period: SimTime::from_ms(4),
            phase_num: 0,
            phase_den: 1,
        };
        let sh = shape(&[], &[(ValueType::Real, 1)]);
        b.validate(&sh).unwrap();
        let mut st = ModuleState::new(0, 0);
        // t = 1ms is a quarter period: sin = 1.0, amplitude 2.0
        let out =
            execute_activation(&b, &mut st, &sh, &[], &[SimTime::from_ms(1)]).unwrap();
        let v = out[0][0].as_real().unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sine_phase_is_exact_over_long_runs() {
        // a sample taken many whole periods later has the same value
        let b = BehaviorSpec::Sine {
            amplitude: 1.0,
            period: SimTime::from_ps(3), // deliberately awkward period
            phase_num: 1,
            phase_den: 3,
        };
        let sh = shape(&[], &[(ValueType::Real, 1)]);
        let sample = |t: SimTime| {
            let mut st = ModuleState::new(0, 0);
            execute_activation(&b, &mut st, &sh, &[], &[t]).unwrap()[0][0]
                .as_real()
                .unwrap()
        };
        let a = sample(SimTime::from_ps(1));
        let b2 = sample(SimTime::from_ps(1 + 3 * 1_000_000_000_000));
        assert_eq!(a, b2);
    }
}
