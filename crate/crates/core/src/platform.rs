//! Event-driven model of the digital platform: CPUs hosting FSM tasks
//! (the initiators), memory-like targets, bounded inter-task channels,
//! and GPIO adapter targets that bridge to the dataflow side.
//!
//! All activity is mediated by a single event kernel dispatching in
//! (time, sequence) order. Tasks never busy-wait: a read on an empty
//! channel or an empty select blocks the task, and the producing side
//! posts a wake event. Every transaction to a target costs a request
//! and a response latency and targets serve one request at a time, so
//! contention shows up as queueing delay.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::expr::{self, Expr, ExprError};
use crate::rng::{stream_id, CounterRng};
use crate::time::SimTime;
use crate::value::{Value, ValueType};

// ---------------------------------------------------------------------------
// description types (model file format)

fn ten_ns() -> SimTime {
    SimTime::from_ns(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterconnectDesc {
    #[serde(default = "ten_ns")]
    pub request_latency: SimTime,
    #[serde(default = "ten_ns")]
    pub response_latency: SimTime,
}

impl Default for InterconnectDesc {
    fn default() -> Self {
        InterconnectDesc {
            request_latency: ten_ns(),
            response_latency: ten_ns(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpuDesc {
    pub name: String,
}

/// A passive interconnect target (memory, terminal, timer, ...); the
/// kind is a label for reports, not behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDesc {
    pub name: String,
    pub kind: String,
}

fn default_capacity() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpioDesc {
    pub name: String,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
}

fn default_depth() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDesc {
    pub name: String,
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// Target the channel storage lives on (a plain target or a gpio
    /// adapter); its traffic is accounted there.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarDesc {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    pub var: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionDesc {
    /// Non-blocking FIFO pop; status (1/0) lands in `status_var`.
    GpioRead {
        endpoint: String,
        var: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status_var: Option<String>,
    },
    GpioWrite { endpoint: String, expr: String },
    /// Blocking pop from a bounded channel.
    ChanRead { channel: String, var: String },
    ChanWrite { channel: String, expr: String },
    /// Blocks until any listed source holds data, then reads from one
    /// ready source picked by the task's random stream. The branch
    /// index lands in `chosen_var` when given.
    SelectNondet {
        branches: Vec<BranchDesc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chosen_var: Option<String>,
    },
    Compute { delay: SimTime },
    Assign { var: String, expr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDesc {
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDesc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entry: Vec<ActionDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<TransitionDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDesc {
    pub name: String,
    pub cpu: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<VarDesc>,
    pub initial: String,
    pub states: Vec<StateDesc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformDesc {
    #[serde(default)]
    pub interconnect: InterconnectDesc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cpus: Vec<CpuDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gpios: Vec<GpioDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelDesc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskDesc>,
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlatformBuildError {
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("{context}: unknown {kind} `{name}`")]
    UnknownReference {
        context: String,
        kind: &'static str,
        name: String,
    },
    #[error("{context}: {source}")]
    BadExpr { context: String, source: ExprError },
    #[error("{context}: {reason}")]
    BadAttribute { context: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("event posted at {requested} behind current time {now}")]
    TimeTravel { requested: SimTime, now: SimTime },
    #[error("rx fifo of gpio `{endpoint}` overflowed its capacity {capacity} at {time}")]
    FifoOverflow {
        endpoint: String,
        capacity: u32,
        time: SimTime,
    },
    #[error("channel `{channel}` overflowed its depth {depth} at {time}")]
    ChannelOverflow {
        channel: String,
        depth: u32,
        time: SimTime,
    },
    #[error("task `{task}` stuck in state `{state}` at {time}: no transition enabled")]
    StuckState {
        task: String,
        state: String,
        time: SimTime,
    },
    #[error("livelock: simulation stopped making time progress at {time}")]
    Livelock { time: SimTime },
    #[error("task `{task}`: {source}")]
    Eval { task: String, source: ExprError },
    #[error("task `{task}`: value {value} does not fit variable `{var}` of type {ty}")]
    AssignType {
        task: String,
        var: String,
        value: Value,
        ty: ValueType,
    },
}

// ---------------------------------------------------------------------------
// event kernel

/// Minimal discrete-event core: a priority queue of (time, sequence,
/// payload). The sequence number is assigned at post time, making
/// equal-time dispatch order the post order.
#[derive(Debug)]
pub struct DeKernel<T> {
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    payloads: BTreeMap<u64, T>,
    pub dispatched: u64,
}

impl<T> DeKernel<T> {
    pub fn new() -> Self {
        DeKernel {
            now: SimTime::ZERO,
            seq: 0,
            heap: BinaryHeap::new(),
            payloads: BTreeMap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn post(&mut self, time: SimTime, payload: T) -> Result<u64, RuntimeError> {
        if time < self.now {
            return Err(RuntimeError::TimeTravel {
                requested: time,
                now: self.now,
            });
        }
        let id = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((time.as_ps(), id)));
        self.payloads.insert(id, payload);
        Ok(id)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse((t, _))| SimTime::from_ps(*t))
    }

    /// Removes and returns the earliest event, advancing `now`.
    pub fn pop(&mut self) -> Option<(SimTime, T)> {
        let Reverse((t, id)) = self.heap.pop()?;
        self.now = SimTime::from_ps(t);
        self.dispatched += 1;
        let payload = self.payloads.remove(&id).expect("payload exists");
        Some((self.now, payload))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

impl<T> Default for DeKernel<T> {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// runtime structures

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Gpio(usize),
    Chan(usize),
}

#[derive(Debug, Clone)]
struct Branch {
    source: Source,
    var: String,
}

#[derive(Debug, Clone)]
enum Action {
    GpioRead {
        gpio: usize,
        var: String,
        status_var: Option<String>,
    },
    GpioWrite {
        gpio: usize,
        expr: Expr,
    },
    ChanRead {
        chan: usize,
        var: String,
    },
    ChanWrite {
        chan: usize,
        expr: Expr,
    },
    Select {
        branches: Vec<Branch>,
        chosen_var: Option<String>,
    },
    Compute {
        delay: SimTime,
    },
    Assign {
        var: String,
        expr: Expr,
    },
}

#[derive(Debug, Clone)]
struct FsmState {
    name: String,
    entry: Vec<Action>,
    transitions: Vec<(usize, Option<Expr>)>,
}

/// Transaction effect applied when the response arrives.
#[derive(Debug, Clone)]
enum Pending {
    GpioRead {
        gpio: usize,
        var: String,
        status_var: Option<String>,
    },
    GpioWrite {
        gpio: usize,
        value: Value,
    },
    ChanRead {
        chan: usize,
        var: String,
    },
    ChanWrite {
        chan: usize,
        value: Value,
    },
    SelectRead {
        label: String,
        value: Value,
        var: String,
        chosen: i64,
        chosen_var: Option<String>,
    },
    Compute,
}

#[derive(Debug, Clone)]
enum Phase {
    Ready,
    InFlight(Pending),
    Blocked,
    Done,
}

#[derive(Debug)]
struct TaskRuntime {
    name: String,
    states: Vec<FsmState>,
    state: usize,
    action_idx: usize,
    phase: Phase,
    vars: BTreeMap<String, Value>,
    var_types: BTreeMap<String, ValueType>,
    rng: CounterRng,
}

#[derive(Debug)]
struct Gpio {
    name: String,
    capacity: u32,
    rx: VecDeque<Value>,
    tx: Option<Value>,
    tx_written: bool,
    pushes: u64,
    pops: u64,
    push_log: Vec<(SimTime, Value)>,
    waiters: Vec<usize>,
}

#[derive(Debug)]
struct Channel {
    name: String,
    depth: u32,
    target: usize,
    q: VecDeque<Value>,
    waiters: Vec<usize>,
}

/// A record of one value a task actually obtained (successful gpio
/// pop, channel pop, or select read), in acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadRecord {
    pub time: SimTime,
    pub task: String,
    pub source: String,
    pub value: Value,
}

/// How many events the kernel may dispatch at one instant before the
/// run is declared livelocked.
const LIVELOCK_EVENTS_PER_INSTANT: u64 = 200_000;
/// How many zero-cost state transitions one task step may chain.
const MAX_INLINE_TRANSITIONS: u32 = 10_000;

pub struct Platform {
    req_lat: SimTime,
    resp_lat: SimTime,
    pub cpu_names: Vec<String>,
    plain_targets: Vec<(String, String)>,
    gpios: Vec<Gpio>,
    channels: Vec<Channel>,
    tasks: Vec<TaskRuntime>,
    kernel: DeKernel<usize>,
    /// earliest instant each unified target is free again; plain
    /// targets first, then gpio adapters
    target_free: Vec<SimTime>,
    tx_counts: Vec<u64>,
    pub events_log: Vec<String>,
    pub reads: Vec<ReadRecord>,
    instant_events: (SimTime, u64),
}

impl Platform {
    pub fn new(desc: &PlatformDesc, seed: u64) -> Result<Platform, PlatformBuildError> {
        let dup = |kind: &'static str, name: &str| PlatformBuildError::DuplicateName {
            kind,
            name: name.to_string(),
        };

        let mut cpu_names = Vec::new();
        for c in &desc.cpus {
            if cpu_names.contains(&c.name) {
                return Err(dup("cpu", &c.name));
            }
            cpu_names.push(c.name.clone());
        }

        // plain targets and gpio adapters share the stats namespace
        let mut target_names: Vec<String> = Vec::new();
        let mut plain_targets = Vec::new();
        for t in &desc.targets {
            if target_names.contains(&t.name) {
                return Err(dup("target", &t.name));
            }
            target_names.push(t.name.clone());
            plain_targets.push((t.name.clone(), t.kind.clone()));
        }
        let mut gpios = Vec::new();
        for g in &desc.gpios {
            if target_names.contains(&g.name) {
                return Err(dup("target", &g.name));
            }
            if g.capacity == 0 {
                return Err(PlatformBuildError::BadAttribute {
                    context: format!("gpio `{}`", g.name),
                    reason: "capacity must be at least 1".into(),
                });
            }
            target_names.push(g.name.clone());
            gpios.push(Gpio {
                name: g.name.clone(),
                capacity: g.capacity,
                rx: VecDeque::new(),
                tx: None,
                tx_written: false,
                pushes: 0,
                pops: 0,
                push_log: Vec::new(),
                waiters: Vec::new(),
            });
        }

        let mut channels = Vec::new();
        for ch in &desc.channels {
            if channels.iter().any(|c: &Channel| c.name == ch.name) {
                return Err(dup("channel", &ch.name));
            }
            if ch.depth == 0 {
                return Err(PlatformBuildError::BadAttribute {
                    context: format!("channel `{}`", ch.name),
                    reason: "depth must be at least 1".into(),
                });
            }
            let target = target_names
                .iter()
                .position(|n| *n == ch.target)
                .ok_or_else(|| PlatformBuildError::UnknownReference {
                    context: format!("channel `{}`", ch.name),
                    kind: "target",
                    name: ch.target.clone(),
                })?;
            channels.push(Channel {
                name: ch.name.clone(),
                depth: ch.depth,
                target,
                q: VecDeque::new(),
                waiters: Vec::new(),
            });
        }

        let gpio_idx = |name: &str| gpios.iter().position(|g| g.name == name);
        let chan_idx = |name: &str| channels.iter().position(|c| c.name == name);

        let mut tasks: Vec<TaskRuntime> = Vec::new();
        for t in &desc.tasks {
            if tasks.iter().any(|r| r.name == t.name) {
                return Err(dup("task", &t.name));
            }
            let ctx = |detail: &str| format!("task `{}` {}", t.name, detail);
            // placement only affects reports; execution cost lives in
            // the target model, so co-located tasks don't contend
            if !cpu_names.contains(&t.cpu) {
                return Err(PlatformBuildError::UnknownReference {
                    context: ctx(""),
                    kind: "cpu",
                    name: t.cpu.clone(),
                });
            }

            let mut vars = BTreeMap::new();
            let mut var_types = BTreeMap::new();
            for v in &t.variables {
                if var_types.contains_key(&v.name) {
                    return Err(dup("variable", &v.name));
                }
                let init = v.init.unwrap_or_else(|| v.value_type.default_value());
                if !init.matches(v.value_type) {
                    return Err(PlatformBuildError::BadAttribute {
                        context: ctx(&format!("variable `{}`", v.name)),
                        reason: format!("init {} does not match type {}", init, v.value_type),
                    });
                }
                vars.insert(v.name.clone(), init);
                var_types.insert(v.name.clone(), v.value_type);
            }

            let check_var = |name: &str, detail: &str| -> Result<(), PlatformBuildError> {
                if var_types.contains_key(name) {
                    Ok(())
                } else {
                    Err(PlatformBuildError::UnknownReference {
                        context: ctx(detail),
                        kind: "variable",
                        name: name.to_string(),
                    })
                }
            };
            let check_expr = |text: &str, detail: &str| -> Result<Expr, PlatformBuildError> {
                let e = expr::parse_expr(text).map_err(|source| PlatformBuildError::BadExpr {
                    context: ctx(detail),
                    source,
                })?;
                let mut stack = vec![&e];
                while let Some(node) = stack.pop() {
                    match node {
                        Expr::Var(name) => check_var(name, detail)?,
                        Expr::Unary(_, a) => stack.push(a),
                        Expr::Binary(_, a, b) => {
                            stack.push(a);
                            stack.push(b);
                        }
                        Expr::Lit(_) => {}
                    }
                }
                Ok(e)
            };

            let state_names: Vec<&str> = t.states.iter().map(|s| s.name.as_str()).collect();
            let mut states = Vec::new();
            for s in &t.states {
                if states.iter().any(|st: &FsmState| st.name == s.name) {
                    return Err(dup("state", &s.name));
                }
                let sctx = |what: &str| format!("state `{}` {}", s.name, what);
                let mut entry = Vec::new();
                for (ai, a) in s.entry.iter().enumerate() {
                    let actx = format!("action {}", ai);
                    let built = match a {
                        ActionDesc::GpioRead {
                            endpoint,
                            var,
                            status_var,
                        } => {
                            check_var(var, &sctx(&actx))?;
                            if let Some(sv) = status_var {
                                check_var(sv, &sctx(&actx))?;
                                if var_types[sv] != ValueType::Int {
                                    return Err(PlatformBuildError::BadAttribute {
                                        context: ctx(&sctx(&actx)),
                                        reason: format!("status variable `{}` must be int", sv),
                                    });
                                }
                            }
                            Action::GpioRead {
                                gpio: gpio_idx(endpoint).ok_or_else(|| {
                                    PlatformBuildError::UnknownReference {
                                        context: ctx(&sctx(&actx)),
                                        kind: "gpio",
                                        name: endpoint.clone(),
                                    }
                                })?,
                                var: var.clone(),
                                status_var: status_var.clone(),
                            }
                        }
                        ActionDesc::GpioWrite { endpoint, expr } => Action::GpioWrite {
                            gpio: gpio_idx(endpoint).ok_or_else(|| {
                                PlatformBuildError::UnknownReference {
                                    context: ctx(&sctx(&actx)),
                                    kind: "gpio",
                                    name: endpoint.clone(),
                                }
                            })?,
                            expr: check_expr(expr, &sctx(&actx))?,
                        },
                        ActionDesc::ChanRead { channel, var } => {
                            check_var(var, &sctx(&actx))?;
                            Action::ChanRead {
                                chan: chan_idx(channel).ok_or_else(|| {
                                    PlatformBuildError::UnknownReference {
                                        context: ctx(&sctx(&actx)),
                                        kind: "channel",
                                        name: channel.clone(),
                                    }
                                })?,
                                var: var.clone(),
                            }
                        }
                        ActionDesc::ChanWrite { channel, expr } => Action::ChanWrite {
                            chan: chan_idx(channel).ok_or_else(|| {
                                PlatformBuildError::UnknownReference {
                                    context: ctx(&sctx(&actx)),
                                    kind: "channel",
                                    name: channel.clone(),
                                }
                            })?,
                            expr: check_expr(expr, &sctx(&actx))?,
                        },
                        ActionDesc::SelectNondet {
                            branches,
                            chosen_var,
                        } => {
                            if branches.is_empty() {
                                return Err(PlatformBuildError::BadAttribute {
                                    context: ctx(&sctx(&actx)),
                                    reason: "select needs at least one branch".into(),
                                });
                            }
                            if let Some(cv) = chosen_var {
                                check_var(cv, &sctx(&actx))?;
                                if var_types[cv] != ValueType::Int {
                                    return Err(PlatformBuildError::BadAttribute {
                                        context: ctx(&sctx(&actx)),
                                        reason: format!("chosen variable `{}` must be int", cv),
                                    });
                                }
                            }
                            let mut built_branches = Vec::new();
                            for b in branches {
                                check_var(&b.var, &sctx(&actx))?;
                                let source = match (&b.gpio, &b.channel) {
                                    (Some(g), None) => Source::Gpio(
                                        gpio_idx(g).ok_or_else(|| {
                                            PlatformBuildError::UnknownReference {
                                                context: ctx(&sctx(&actx)),
                                                kind: "gpio",
                                                name: g.clone(),
                                            }
                                        })?,
                                    ),
                                    (None, Some(c)) => Source::Chan(
                                        chan_idx(c).ok_or_else(|| {
                                            PlatformBuildError::UnknownReference {
                                                context: ctx(&sctx(&actx)),
                                                kind: "channel",
                                                name: c.clone(),
                                            }
                                        })?,
                                    ),
                                    _ => {
                                        return Err(PlatformBuildError::BadAttribute {
                                            context: ctx(&sctx(&actx)),
                                            reason:
                                                "branch needs exactly one of gpio or channel"
                                                    .into(),
                                        })
                                    }
                                };
                                built_branches.push(Branch {
                                    source,
                                    var: b.var.clone(),
                                });
                            }
                            Action::Select {
                                branches: built_branches,
                                chosen_var: chosen_var.clone(),
                            }
                        }
                        ActionDesc::Compute { delay } => Action::Compute { delay: *delay },
                        ActionDesc::Assign { var, expr } => {
                            check_var(var, &sctx(&actx))?;
                            Action::Assign {
                                var: var.clone(),
                                expr: check_expr(expr, &sctx(&actx))?,
                            }
                        }
                    };
                    entry.push(built);
                }

                let mut transitions = Vec::new();
                for tr in &s.transitions {
                    let to = state_names.iter().position(|n| *n == tr.to).ok_or_else(
                        || PlatformBuildError::UnknownReference {
                            context: ctx(&sctx("transition")),
                            kind: "state",
                            name: tr.to.clone(),
                        },
                    )?;
                    let guard = tr
                        .guard
                        .as_ref()
                        .map(|g| check_expr(g, &sctx("guard")))
                        .transpose()?;
                    transitions.push((to, guard));
                }
                states.push(FsmState {
                    name: s.name.clone(),
                    entry,
                    transitions,
                });
            }

            let state = state_names
                .iter()
                .position(|n| *n == t.initial)
                .ok_or_else(|| PlatformBuildError::UnknownReference {
                    context: ctx("initial"),
                    kind: "state",
                    name: t.initial.clone(),
                })?;

            tasks.push(TaskRuntime {
                rng: CounterRng::new(seed, stream_id(&format!("task:{}", t.name))),
                name: t.name.clone(),
                states,
                state,
                action_idx: 0,
                phase: Phase::Ready,
                vars,
                var_types,
            });
        }

        let n_targets = plain_targets.len() + gpios.len();
        Ok(Platform {
            req_lat: desc.interconnect.request_latency,
            resp_lat: desc.interconnect.response_latency,
            cpu_names,
            plain_targets,
            gpios,
            channels,
            tasks,
            kernel: DeKernel::new(),
            target_free: vec![SimTime::ZERO; n_targets],
            tx_counts: vec![0; n_targets],
            events_log: Vec::new(),
            reads: Vec::new(),
            instant_events: (SimTime::ZERO, 0),
        })
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn dispatched_events(&self) -> u64 {
        self.kernel.dispatched
    }

    pub fn initiator_count(&self) -> usize {
        self.cpu_names.len()
    }

    pub fn target_count(&self) -> usize {
        self.plain_targets.len() + self.gpios.len()
    }

    /// `(name, transactions)` for every target, declaration order.
    pub fn target_traffic(&self) -> Vec<(String, u64)> {
        let names = self
            .plain_targets
            .iter()
            .map(|(n, _)| n.clone())
            .chain(self.gpios.iter().map(|g| g.name.clone()));
        names.zip(self.tx_counts.iter().copied()).collect()
    }

    /// `(name, pushes, pops, residual)` per gpio endpoint.
    pub fn gpio_summary(&self) -> Vec<(String, u64, u64, u64)> {
        self.gpios
            .iter()
            .map(|g| (g.name.clone(), g.pushes, g.pops, g.rx.len() as u64))
            .collect()
    }

    pub fn gpio_push_log(&self, name: &str) -> Option<&[(SimTime, Value)]> {
        self.gpios
            .iter()
            .find(|g| g.name == name)
            .map(|g| g.push_log.as_slice())
    }

    pub fn gpio_index(&self, name: &str) -> Option<usize> {
        self.gpios.iter().position(|g| g.name == name)
    }

    pub fn gpio_names(&self) -> impl Iterator<Item = &str> {
        self.gpios.iter().map(|g| g.name.as_str())
    }

    /// Posts the initial step event of every task at time zero.
    pub fn start(&mut self) -> Result<(), RuntimeError> {
        for t in 0..self.tasks.len() {
            self.kernel.post(SimTime::ZERO, t)?;
        }
        Ok(())
    }

    fn log(&mut self, time: SimTime, component: &str, action: String) {
        self.events_log
            .push(format!("{} {} {}", time.as_ps(), component, action));
    }

    /// Books one round trip to a unified target and returns the
    /// response (completion) instant. One request is served at a time
    /// per target; later arrivals queue behind it.
    fn issue(&mut self, target: usize) -> SimTime {
        let arrival = self.kernel.now() + self.req_lat;
        let service = arrival.max(self.target_free[target]);
        let completion = service + self.resp_lat;
        self.target_free[target] = completion;
        self.tx_counts[target] += 1;
        completion
    }

    fn gpio_target(&self, gpio: usize) -> usize {
        self.plain_targets.len() + gpio
    }

    /// Sample seen by the dataflow side when a converter input port
    /// reads this endpoint: the last value software wrote, if any.
    pub fn sample_tx(&self, gpio: usize) -> Option<Value> {
        self.gpios[gpio].tx
    }

    /// A dataflow-side converter output delivering one sample into the
    /// endpoint's rx fifo at `time`. Wakes tasks blocked on it.
    pub fn gpio_push(
        &mut self,
        gpio: usize,
        time: SimTime,
        value: Value,
    ) -> Result<(), RuntimeError> {
        let g = &mut self.gpios[gpio];
        if g.rx.len() as u32 >= g.capacity {
            return Err(RuntimeError::FifoOverflow {
                endpoint: g.name.clone(),
                capacity: g.capacity,
                time,
            });
        }
        g.rx.push_back(value);
        g.pushes += 1;
        g.push_log.push((time, value));
        let name = g.name.clone();
        let waiters = std::mem::take(&mut g.waiters);
        for t in waiters {
            self.kernel.post(time, t)?;
        }
        self.log(time, &name, format!("push value={}", value));
        Ok(())
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.kernel.peek_time()
    }

    /// Dispatches queued events while their time is `<= limit`.
    pub fn dispatch_through(&mut self, limit: SimTime) -> Result<(), RuntimeError> {
        while let Some(t) = self.kernel.peek_time() {
            if t > limit {
                break;
            }
            self.dispatch_one()?;
        }
        Ok(())
    }

    /// Dispatches queued events while their time is strictly `< limit`.
    pub fn dispatch_before(&mut self, limit: SimTime) -> Result<(), RuntimeError> {
        while let Some(t) = self.kernel.peek_time() {
            if t >= limit {
                break;
            }
            self.dispatch_one()?;
        }
        Ok(())
    }

    fn dispatch_one(&mut self) -> Result<(), RuntimeError> {
        let Some((time, task)) = self.kernel.pop() else {
            return Ok(());
        };
        if time == self.instant_events.0 {
            self.instant_events.1 += 1;
            if self.instant_events.1 > LIVELOCK_EVENTS_PER_INSTANT {
                return Err(RuntimeError::Livelock { time });
            }
        } else {
            self.instant_events = (time, 1);
        }
        self.step_task(task, time)
    }

    fn set_var(&mut self, task: usize, var: &str, value: Value) -> Result<(), RuntimeError> {
        let t = &mut self.tasks[task];
        let ty = t.var_types[var];
        if !value.matches(ty) {
            return Err(RuntimeError::AssignType {
                task: t.name.clone(),
                var: var.to_string(),
                value,
                ty,
            });
        }
        t.vars.insert(var.to_string(), value);
        Ok(())
    }

    fn eval(&self, task: usize, e: &Expr) -> Result<Value, RuntimeError> {
        let t = &self.tasks[task];
        expr::eval(e, &t.vars).map_err(|source| RuntimeError::Eval {
            task: t.name.clone(),
            source,
        })
    }

    fn source_ready(&self, s: Source) -> bool {
        match s {
            Source::Gpio(g) => !self.gpios[g].rx.is_empty(),
            Source::Chan(c) => !self.channels[c].q.is_empty(),
        }
    }

    fn source_label(&self, s: Source) -> String {
        match s {
            Source::Gpio(g) => format!("gpio:{}", self.gpios[g].name),
            Source::Chan(c) => format!("chan:{}", self.channels[c].name),
        }
    }

    fn record_read(&mut self, time: SimTime, task: usize, source: String, value: Value) {
        self.reads.push(ReadRecord {
            time,
            task: self.tasks[task].name.clone(),
            source,
            value,
        });
    }

    fn step_task(&mut self, task: usize, time: SimTime) -> Result<(), RuntimeError> {
        // resolve what this event means for the task
        let phase = std::mem::replace(&mut self.tasks[task].phase, Phase::Ready);
        match phase {
            Phase::Done => {
                self.tasks[task].phase = Phase::Done;
                return Ok(());
            }
            Phase::Ready | Phase::Blocked => {
                // run (or re-run) the current action below
            }
            Phase::InFlight(pending) => {
                if !self.complete(task, time, pending)? {
                    return Ok(()); // re-blocked during completion
                }
            }
        }
        self.run_actions(task, time)
    }

    /// Applies a transaction's effects at response time. Returns false
    /// when the task went back to blocking instead of advancing.
    fn complete(
        &mut self,
        task: usize,
        time: SimTime,
        pending: Pending,
    ) -> Result<bool, RuntimeError> {
        let task_name = self.tasks[task].name.clone();
        match pending {
            Pending::GpioRead {
                gpio,
                var,
                status_var,
            } => {
                let g = &mut self.gpios[gpio];
                let popped = g.rx.pop_front();
                let gname = g.name.clone();
                let (status, value) = match popped {
                    Some(v) => {
                        g.pops += 1;
                        (1, v)
                    }
                    None => (0, self.tasks[task].var_types[&var].default_value()),
                };
                self.set_var(task, &var, value)?;
                if let Some(sv) = &status_var {
                    self.set_var(task, sv, Value::Int(status))?;
                }
                self.log(
                    time,
                    &task_name,
                    format!("read gpio {} value={} status={}", gname, value, status),
                );
                if status == 1 {
                    self.record_read(time, task, format!("gpio:{}", gname), value);
                }
            }
            Pending::GpioWrite { gpio, value } => {
                let g = &mut self.gpios[gpio];
                g.tx = Some(value);
                g.tx_written = true;
                let gname = g.name.clone();
                self.log(time, &task_name, format!("write gpio {} value={}", gname, value));
            }
            Pending::ChanRead { chan, var } => {
                let c = &mut self.channels[chan];
                match c.q.pop_front() {
                    Some(v) => {
                        let cname = c.name.clone();
                        self.set_var(task, &var, v)?;
                        self.log(time, &task_name, format!("read chan {} value={}", cname, v));
                        self.record_read(time, task, format!("chan:{}", cname), v);
                    }
                    None => {
                        // drained while the response was in flight
                        c.waiters.push(task);
                        self.tasks[task].phase = Phase::Blocked;
                        return Ok(false);
                    }
                }
            }
            Pending::ChanWrite { chan, value } => {
                let c = &mut self.channels[chan];
                if c.q.len() as u32 >= c.depth {
                    return Err(RuntimeError::ChannelOverflow {
                        channel: c.name.clone(),
                        depth: c.depth,
                        time,
                    });
                }
                c.q.push_back(value);
                let cname = c.name.clone();
                let waiters = std::mem::take(&mut self.channels[chan].waiters);
                for t in waiters {
                    self.kernel.post(time, t)?;
                }
                self.log(time, &task_name, format!("write chan {} value={}", cname, value));
            }
            Pending::SelectRead {
                label,
                value,
                var,
                chosen,
                chosen_var,
            } => {
                self.set_var(task, &var, value)?;
                if let Some(cv) = &chosen_var {
                    self.set_var(task, cv, Value::Int(chosen))?;
                }
                self.log(time, &task_name, format!("select {} value={}", label, value));
                self.record_read(time, task, label, value);
            }
            Pending::Compute => {}
        }
        self.tasks[task].action_idx += 1;
        Ok(true)
    }

    /// Executes entry actions from the task's cursor until one blocks,
    /// issues a transaction, or the state's actions run out (then takes
    /// a transition and continues). Zero-cost work happens inline.
    fn run_actions(&mut self, task: usize, time: SimTime) -> Result<(), RuntimeError> {
        let mut inline_transitions = 0u32;
        loop {
            let t = &self.tasks[task];
            let state = &t.states[t.state];
            if t.action_idx >= state.entry.len() {
                // pick the first enabled transition
                if state.transitions.is_empty() {
                    let name = t.name.clone();
                    self.tasks[task].phase = Phase::Done;
                    self.log(time, &name, "halt".into());
                    return Ok(());
                }
                let mut next = None;
                for (to, guard) in &state.transitions {
                    let enabled = match guard {
                        None => true,
                        Some(g) => match self.eval(task, g)? {
                            Value::Bool(b) => b,
                            other => {
                                return Err(RuntimeError::Eval {
                                    task: t.name.clone(),
                                    source: ExprError::Type(format!(
                                        "guard evaluated to {}, expected bool",
                                        other
                                    )),
                                })
                            }
                        },
                    };
                    if enabled {
                        next = Some(*to);
                        break;
                    }
                }
                let Some(next) = next else {
                    return Err(RuntimeError::StuckState {
                        task: t.name.clone(),
                        state: state.name.clone(),
                        time,
                    });
                };
                inline_transitions += 1;
                if inline_transitions > MAX_INLINE_TRANSITIONS {
                    return Err(RuntimeError::Livelock { time });
                }
                let name = self.tasks[task].name.clone();
                let state_name = self.tasks[task].states[next].name.clone();
                self.tasks[task].state = next;
                self.tasks[task].action_idx = 0;
                self.log(time, &name, format!("enter {}", state_name));
                continue;
            }

            let action = state.entry[t.action_idx].clone();
            match action {
                Action::Assign { var, expr } => {
                    let v = self.eval(task, &expr)?;
                    self.set_var(task, &var, v)?;
                    self.tasks[task].action_idx += 1;
                }
                Action::Compute { delay } => {
                    self.tasks[task].phase = Phase::InFlight(Pending::Compute);
                    self.kernel.post(time + delay, task)?;
                    return Ok(());
                }
                Action::GpioRead {
                    gpio,
                    var,
                    status_var,
                } => {
                    let completion = self.issue(self.gpio_target(gpio));
                    self.tasks[task].phase = Phase::InFlight(Pending::GpioRead {
                        gpio,
                        var,
                        status_var,
                    });
                    self.kernel.post(completion, task)?;
                    return Ok(());
                }
                Action::GpioWrite { gpio, expr } => {
                    let value = self.eval(task, &expr)?;
                    let completion = self.issue(self.gpio_target(gpio));
                    self.tasks[task].phase =
                        Phase::InFlight(Pending::GpioWrite { gpio, value });
                    self.kernel.post(completion, task)?;
                    return Ok(());
                }
                Action::ChanRead { chan, var } => {
                    if self.channels[chan].q.is_empty() {
                        let name = self.tasks[task].name.clone();
                        let cname = self.channels[chan].name.clone();
                        self.channels[chan].waiters.push(task);
                        self.tasks[task].phase = Phase::Blocked;
                        self.log(time, &name, format!("block chan {}", cname));
                        return Ok(());
                    }
                    let completion = self.issue(self.channels[chan].target);
                    self.tasks[task].phase = Phase::InFlight(Pending::ChanRead { chan, var });
                    self.kernel.post(completion, task)?;
                    return Ok(());
                }
                Action::ChanWrite { chan, expr } => {
                    let value = self.eval(task, &expr)?;
                    let completion = self.issue(self.channels[chan].target);
                    self.tasks[task].phase =
                        Phase::InFlight(Pending::ChanWrite { chan, value });
                    self.kernel.post(completion, task)?;
                    return Ok(());
                }
                Action::Select {
                    branches,
                    chosen_var,
                } => {
                    let ready: Vec<usize> = branches
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| self.source_ready(b.source))
                        .map(|(i, _)| i)
                        .collect();
                    if ready.is_empty() {
                        let name = self.tasks[task].name.clone();
                        for b in &branches {
                            let waiters = match b.source {
                                Source::Gpio(g) => &mut self.gpios[g].waiters,
                                Source::Chan(c) => &mut self.channels[c].waiters,
                            };
                            if !waiters.contains(&task) {
                                waiters.push(task);
                            }
                        }
                        self.tasks[task].phase = Phase::Blocked;
                        self.log(time, &name, "block select".into());
                        return Ok(());
                    }
                    let chosen = if ready.len() == 1 {
                        ready[0]
                    } else {
                        ready[self.tasks[task].rng.next_index(ready.len())]
                    };
                    let branch = &branches[chosen];
                    // the pop is atomic with the choice; the value
                    // travels back with the response
                    let value = match branch.source {
                        Source::Gpio(g) => {
                            let gp = &mut self.gpios[g];
                            let v = gp.rx.pop_front().expect("ready source");
                            gp.pops += 1;
                            v
                        }
                        Source::Chan(c) => {
                            self.channels[c].q.pop_front().expect("ready source")
                        }
                    };
                    let target = match branch.source {
                        Source::Gpio(g) => self.gpio_target(g),
                        Source::Chan(c) => self.channels[c].target,
                    };
                    let completion = self.issue(target);
                    self.tasks[task].phase = Phase::InFlight(Pending::SelectRead {
                        label: self.source_label(branch.source),
                        value,
                        var: branch.var.clone(),
                        chosen: chosen as i64,
                        chosen_var,
                    });
                    self.kernel.post(completion, task)?;
                    return Ok(());
                }
            }
        }
    }
}
