//! Static validation of a cluster: attribute inference, list
//! scheduling over one hyperperiod, and converter-access causality
//! analysis with automatic delay repair suggestions.

use std::collections::BTreeMap;

use crate::tdf::{Direction, PortKind, PortRef, TdfCluster};
use crate::time::SimTime;

/// One module firing within the period; `k` counts its activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activation {
    pub module: usize,
    pub k: u64,
}

/// One sample crossing a converter port: sample `j` of activation `k`
/// at `port`, stamped `time` (offsets within the first period).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConverterAccess {
    pub port: PortRef,
    pub k: u64,
    pub j: u32,
    pub time: SimTime,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticSchedule {
    pub hyperperiod: SimTime,
    /// n(m), indexed like `cluster.modules`.
    pub activations: Vec<u64>,
    pub order: Vec<Activation>,
    /// All converter accesses of one period, in execution order.
    pub converter_accesses: Vec<ConverterAccess>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferError {
    #[error("contradictory timestep constraints:\n{}", witness.join("\n"))]
    Inconsistent { witness: Vec<String> },
    #[error("no timestep anywhere in the component containing {}", modules.join(", "))]
    Underdetermined { modules: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("module `{module}` has no timestep; run inference first")]
    Unannotated { module: String },
    #[error("hyperperiod of the module timesteps overflows the time range")]
    HyperperiodOverflow,
    #[error("access timestamp overflows the time range")]
    TimeOverflow,
    #[error("no module can fire; blocked: {}", blocked.join(", "))]
    Deadlock { blocked: Vec<String> },
}

// ---------------------------------------------------------------------------
// attribute inference

/// A derived value plus the index of the fact that produced it, so a
/// contradiction can show its whole derivation chain.
type Known = Option<(SimTime, usize)>;

struct Facts {
    lines: Vec<(String, Option<usize>)>,
}

impl Facts {
    fn add(&mut self, text: String, parent: Option<usize>) -> usize {
        self.lines.push((text, parent));
        self.lines.len() - 1
    }

    fn chain(&self, idx: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(idx);
        while let Some(i) = cur {
            out.push(self.lines[i].0.clone());
            cur = self.lines[i].1;
        }
        out.reverse();
        out
    }
}

/// Fills in every missing `Tm`/`Tp` by propagating `Tp x R = Tm` within
/// modules and `Tp(writer) = Tp(reader)` across signals. Returns an
/// annotated copy; the input is untouched. Running it on an already
/// annotated cluster is an identity check.
pub fn infer_timesteps(cluster: &TdfCluster) -> Result<TdfCluster, InferError> {
    let mut facts = Facts { lines: Vec::new() };
    let mut tm: Vec<Known> = Vec::with_capacity(cluster.modules.len());
    let mut tp: Vec<Vec<Known>> = Vec::with_capacity(cluster.modules.len());

    for m in &cluster.modules {
        tm.push(m.timestep.map(|t| {
            let f = facts.add(format!("Tm({}) = {} (specified)", m.name, t), None);
            (t, f)
        }));
        tp.push(
            m.ports
                .iter()
                .map(|p| {
                    p.timestep.map(|t| {
                        let f = facts.add(
                            format!("Tp({}.{}) = {} (specified)", m.name, p.name, t),
                            None,
                        );
                        (t, f)
                    })
                })
                .collect(),
        );
    }

    let conflict = |facts: &Facts, a: usize, b: usize, text: String| -> InferError {
        let mut witness = facts.chain(a);
        witness.extend(facts.chain(b));
        witness.push(text);
        InferError::Inconsistent { witness }
    };

    let mut changed = true;
    while changed {
        changed = false;
        for (mi, m) in cluster.modules.iter().enumerate() {
            for (pi, p) in m.ports.iter().enumerate() {
                match (tm[mi], tp[mi][pi]) {
                    (Some((t_m, fm)), None) => {
                        let t_p = t_m
                            .exact_div(SimTime::from_ps(p.rate as u64))
                            .map(SimTime::from_ps);
                        match t_p {
                            Some(t_p) => {
                                let f = facts.add(
                                    format!(
                                        "Tp({}.{}) = {} (= Tm({}) / R, R = {})",
                                        m.name, p.name, t_p, m.name, p.rate
                                    ),
                                    Some(fm),
                                );
                                tp[mi][pi] = Some((t_p, f));
                                changed = true;
                            }
                            None => {
                                let mut witness = facts.chain(fm);
                                witness.push(format!(
                                    "Tm({}) = {} is not divisible by R({}.{}) = {}",
                                    m.name, t_m, m.name, p.name, p.rate
                                ));
                                return Err(InferError::Inconsistent { witness });
                            }
                        }
                    }
                    (None, Some((t_p, fp))) => {
                        let t_m = t_p.checked_mul(p.rate as u64).ok_or_else(|| {
                            let mut witness = facts.chain(fp);
                            witness.push(format!(
                                "Tp({}.{}) x R = {} x {} overflows the time range",
                                m.name, p.name, t_p, p.rate
                            ));
                            InferError::Inconsistent { witness }
                        })?;
                        let f = facts.add(
                            format!(
                                "Tm({}) = {} (= Tp({}.{}) x R, R = {})",
                                m.name, t_m, m.name, p.name, p.rate
                            ),
                            Some(fp),
                        );
                        tm[mi] = Some((t_m, f));
                        changed = true;
                    }
                    (Some((t_m, fm)), Some((t_p, fp))) => {
                        let ok = t_p
                            .checked_mul(p.rate as u64)
                            .map(|prod| prod == t_m)
                            .unwrap_or(false);
                        if !ok {
                            return Err(conflict(
                                &facts,
                                fm,
                                fp,
                                format!(
                                    "Tp({}.{}) x R = {} x {} contradicts Tm({}) = {}",
                                    m.name, p.name, t_p, p.rate, m.name, t_m
                                ),
                            ));
                        }
                    }
                    (None, None) => {}
                }
            }
        }
        for (si, s) in cluster.signals.iter().enumerate() {
            let w = s.writer;
            let r = s.reader;
            let sname = &cluster.signal_names[si];
            match (tp[w.module][w.port], tp[r.module][r.port]) {
                (Some((t, fw)), None) => {
                    let f = facts.add(
                        format!(
                            "Tp({}) = {} (= Tp({}), signal {})",
                            cluster.qualified(r),
                            t,
                            cluster.qualified(w),
                            sname
                        ),
                        Some(fw),
                    );
                    tp[r.module][r.port] = Some((t, f));
                    changed = true;
                }
                (None, Some((t, fr))) => {
                    let f = facts.add(
                        format!(
                            "Tp({}) = {} (= Tp({}), signal {})",
                            cluster.qualified(w),
                            t,
                            cluster.qualified(r),
                            sname
                        ),
                        Some(fr),
                    );
                    tp[w.module][w.port] = Some((t, f));
                    changed = true;
                }
                (Some((tw, fw)), Some((tr, fr))) => {
                    if tw != tr {
                        return Err(conflict(
                            &facts,
                            fw,
                            fr,
                            format!(
                                "signal {} requires Tp({}) = Tp({}) but {} != {}",
                                sname,
                                cluster.qualified(w),
                                cluster.qualified(r),
                                tw,
                                tr
                            ),
                        ));
                    }
                }
                (None, None) => {}
            }
        }
    }

    // anything still unknown sits in a component with no anchor
    let mut missing: Vec<String> = cluster
        .modules
        .iter()
        .enumerate()
        .filter(|(mi, m)| {
            tm[*mi].is_none() || m.ports.iter().enumerate().any(|(pi, _)| tp[*mi][pi].is_none())
        })
        .map(|(_, m)| m.name.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(InferError::Underdetermined { modules: missing });
    }

    let mut out = cluster.clone();
    for (mi, m) in out.modules.iter_mut().enumerate() {
        m.timestep = Some(tm[mi].unwrap().0);
        for (pi, p) in m.ports.iter_mut().enumerate() {
            p.timestep = Some(tp[mi][pi].unwrap().0);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// list scheduling

fn mul_time(k: u64, t: SimTime) -> Option<SimTime> {
    let v = k as u128 * t.as_ps() as u128;
    u64::try_from(v).ok().map(SimTime::from_ps)
}

/// Builds the period schedule: repeatedly fires, among modules whose
/// normal inputs hold at least `R` samples, the one whose next
/// activation time `k x Tm` is smallest (ties: lexicographic name).
/// Converter ports never gate firing.
pub fn compute_schedule(cluster: &TdfCluster) -> Result<StaticSchedule, ScheduleError> {
    let n_modules = cluster.modules.len();
    let mut tms = Vec::with_capacity(n_modules);
    for m in &cluster.modules {
        let tm = m.timestep.ok_or_else(|| ScheduleError::Unannotated {
            module: m.name.clone(),
        })?;
        for p in &m.ports {
            if p.timestep.is_none() {
                return Err(ScheduleError::Unannotated {
                    module: m.name.clone(),
                });
            }
        }
        tms.push(tm);
    }

    let mut hyperperiod = tms.first().copied().unwrap_or(SimTime::from_ps(1));
    for t in &tms {
        hyperperiod = hyperperiod
            .lcm(*t)
            .ok_or(ScheduleError::HyperperiodOverflow)?;
    }

    let activations: Vec<u64> = tms
        .iter()
        .map(|t| hyperperiod.exact_div(*t).expect("lcm divides"))
        .collect();

    // tokens per signal; delays count as initial samples
    let mut tokens: Vec<u64> = cluster
        .signals
        .iter()
        .map(|s| (cluster.port(s.writer).delay + cluster.port(s.reader).delay) as u64)
        .collect();
    let initial_tokens = tokens.clone();

    let mut fired = vec![0u64; n_modules];
    let total: u64 = activations.iter().sum();
    let mut order = Vec::with_capacity(total as usize);

    while (order.len() as u64) < total {
        let mut best: Option<(SimTime, usize)> = None;
        'modules: for mi in 0..n_modules {
            if fired[mi] >= activations[mi] {
                continue;
            }
            for (si, s) in cluster.signals.iter().enumerate() {
                if s.reader.module == mi
                    && tokens[si] < cluster.port(s.reader).rate as u64
                {
                    continue 'modules;
                }
            }
            let at = mul_time(fired[mi], tms[mi]).ok_or(ScheduleError::TimeOverflow)?;
            let better = match best {
                None => true,
                Some((t, bi)) => {
                    at < t || (at == t && cluster.modules[mi].name < cluster.modules[bi].name)
                }
            };
            if better {
                best = Some((at, mi));
            }
        }
        let Some((_, mi)) = best else {
            let mut blocked: Vec<String> = (0..n_modules)
                .filter(|mi| fired[*mi] < activations[*mi])
                .map(|mi| cluster.modules[mi].name.clone())
                .collect();
            blocked.sort();
            return Err(ScheduleError::Deadlock { blocked });
        };
        for (si, s) in cluster.signals.iter().enumerate() {
            if s.reader.module == mi {
                tokens[si] -= cluster.port(s.reader).rate as u64;
            }
            if s.writer.module == mi {
                tokens[si] += cluster.port(s.writer).rate as u64;
            }
        }
        order.push(Activation {
            module: mi,
            k: fired[mi],
        });
        fired[mi] += 1;
    }
    debug_assert_eq!(tokens, initial_tokens, "buffers must be periodic");

    let mut converter_accesses = Vec::new();
    for a in &order {
        let m = &cluster.modules[a.module];
        for dir in [Direction::Input, Direction::Output] {
            for (pi, p) in m.ports.iter().enumerate() {
                if p.kind != PortKind::Converter || p.direction != dir {
                    continue;
                }
                let t_p = p.timestep.expect("annotated");
                for j in 0..p.rate {
                    let shift = if dir == Direction::Output { p.delay } else { 0 };
                    let pos = a.k as u128 * p.rate as u128 + j as u128 + shift as u128;
                    let ps = pos * t_p.as_ps() as u128;
                    let time = u64::try_from(ps)
                        .map(SimTime::from_ps)
                        .map_err(|_| ScheduleError::TimeOverflow)?;
                    converter_accesses.push(ConverterAccess {
                        port: PortRef {
                            module: a.module,
                            port: pi,
                        },
                        k: a.k,
                        j,
                        time,
                        direction: dir,
                    });
                }
            }
        }
    }

    Ok(StaticSchedule {
        hyperperiod,
        activations,
        order,
        converter_accesses,
    })
}

// ---------------------------------------------------------------------------
// causality

/// An execution-order pair whose timestamps run backwards: `earlier`
/// crosses the converter boundary before `later` but carries the larger
/// timestamp. `wraparound` marks the period-boundary pair, where
/// `later` is the first access of the next period (timestamp already
/// shifted by one hyperperiod).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub earlier: ConverterAccess,
    pub later: ConverterAccess,
    pub delta: SimTime,
    pub wraparound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    pub violations: Vec<Violation>,
    /// Additional delay per converter output port (`Module.port`) that
    /// makes the access sequence monotone, when one exists.
    pub suggested_delays: BTreeMap<String, u32>,
    pub ok: bool,
}

/// Largest extra delay the repair search will put on one port.
pub const MAX_SUGGESTED_DELAY: u32 = 64;

fn raw_violations(schedule: &StaticSchedule) -> Vec<Violation> {
    let acc = &schedule.converter_accesses;
    let mut out = Vec::new();
    for pair in acc.windows(2) {
        if pair[1].time < pair[0].time {
            out.push(Violation {
                earlier: pair[0].clone(),
                later: pair[1].clone(),
                delta: pair[0].time - pair[1].time,
                wraparound: false,
            });
        }
    }
    // the schedule repeats: the first access of the next period comes
    // one hyperperiod after its first occurrence
    if acc.len() >= 2 {
        let last = &acc[acc.len() - 1];
        let first = &acc[0];
        if let Some(wrapped) = first.time.checked_add(schedule.hyperperiod) {
            if wrapped < last.time {
                let mut later = first.clone();
                later.time = wrapped;
                out.push(Violation {
                    earlier: last.clone(),
                    later,
                    delta: last.time - wrapped,
                    wraparound: true,
                });
            }
        }
    }
    out
}

fn bump_delays(cluster: &TdfCluster, extra: &BTreeMap<PortRef, u32>) -> TdfCluster {
    let mut out = cluster.clone();
    for (r, d) in extra {
        out.modules[r.module].ports[r.port].delay += d;
    }
    out
}

/// Applies per-port extra delays (`Module.port` keys) to a copy of the
/// cluster; unknown names are ignored.
pub fn apply_extra_delays(cluster: &TdfCluster, extra: &BTreeMap<String, u32>) -> TdfCluster {
    let resolved = extra
        .iter()
        .filter_map(|(name, d)| cluster.resolve(name).map(|r| (r, *d)))
        .collect();
    bump_delays(cluster, &resolved)
}

/// Checks that converter accesses carry non-decreasing timestamps in
/// execution order (ties allowed) and, when they do not, searches for
/// minimal per-port output-delay increments that restore monotonicity.
pub fn analyze_causality(cluster: &TdfCluster, schedule: &StaticSchedule) -> CausalityReport {
    let violations = raw_violations(schedule);
    if violations.is_empty() {
        return CausalityReport {
            violations,
            suggested_delays: BTreeMap::new(),
            ok: true,
        };
    }

    // Greedy repair: delay the write whose timestamp lags behind. Only
    // output samples can move (a read's timestamp is fixed by the
    // consuming activation), so a violation whose later access is an
    // input port ends the search.
    let mut extra: BTreeMap<PortRef, u32> = BTreeMap::new();
    let out_ports = cluster
        .converter_ports()
        .filter(|r| cluster.port(*r).direction == Direction::Output)
        .count() as u32;
    let mut budget = out_ports * MAX_SUGGESTED_DELAY + 1;
    let mut repaired = BTreeMap::new();
    while budget > 0 {
        budget -= 1;
        let candidate = bump_delays(cluster, &extra);
        let Ok(sched) = compute_schedule(&candidate) else {
            break;
        };
        let viols = raw_violations(&sched);
        let Some(v) = viols.first() else {
            repaired = extra
                .iter()
                .map(|(r, d)| (cluster.qualified(*r), *d))
                .collect();
            break;
        };
        let port = cluster.port(v.later.port);
        if port.direction != Direction::Output {
            break;
        }
        let t_p = port.timestep.expect("annotated").as_ps();
        let need = v.delta.as_ps().div_ceil(t_p);
        let slot = extra.entry(v.later.port).or_insert(0);
        let bumped = slot.saturating_add(need.min(u32::MAX as u64) as u32);
        if bumped > MAX_SUGGESTED_DELAY {
            break;
        }
        *slot = bumped;
    }

    CausalityReport {
        violations,
        suggested_delays: repaired,
        ok: false,
    }
}

// ---------------------------------------------------------------------------
// report

/// Final verdict of the validation chain, one per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationOutcome {
    Valid,
    Inconsistent,
    Underdetermined,
    Deadlock,
    CausalityViolation,
}

impl ValidationOutcome {
    pub fn label(self) -> &'static str {
        match self {
            ValidationOutcome::Valid => "VALID",
            ValidationOutcome::Inconsistent => "INCONSISTENT",
            ValidationOutcome::Underdetermined => "UNDERDETERMINED",
            ValidationOutcome::Deadlock => "DEADLOCK",
            ValidationOutcome::CausalityViolation => "CAUSALITY VIOLATION",
        }
    }
}

/// Runs inference, scheduling and causality analysis on one cluster and
/// renders everything into a line-oriented text report. The text is
/// byte-stable for a given cluster.
pub fn validation_report(cluster: &TdfCluster) -> (String, ValidationOutcome) {
    use std::fmt::Write;
    let mut out = String::new();
    let mut w = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };

    w(format!("cluster {}", cluster.name));

    let annotated = match infer_timesteps(cluster) {
        Ok(c) => c,
        Err(e) => {
            let outcome = match &e {
                InferError::Inconsistent { .. } => ValidationOutcome::Inconsistent,
                InferError::Underdetermined { .. } => ValidationOutcome::Underdetermined,
            };
            match e {
                InferError::Inconsistent { witness } => {
                    for line in witness {
                        w(format!("constraint {}", line));
                    }
                }
                InferError::Underdetermined { modules } => {
                    w(format!("unanchored {}", modules.join(" ")));
                }
            }
            w(outcome.label().to_string());
            return (out, outcome);
        }
    };

    for m in &annotated.modules {
        w(format!("module {} Tm={}", m.name, m.timestep.unwrap()));
        for p in &m.ports {
            w(format!(
                "port {}.{} dir={} kind={} R={} D={} Tp={} type={}",
                m.name,
                p.name,
                p.direction,
                match p.kind {
                    PortKind::Normal => "normal",
                    PortKind::Converter => "converter",
                },
                p.rate,
                p.delay,
                p.timestep.unwrap(),
                p.value_type,
            ));
        }
    }
    for (si, s) in annotated.signals.iter().enumerate() {
        w(format!(
            "signal {} {} -> {}",
            annotated.signal_names[si],
            annotated.qualified(s.writer),
            annotated.qualified(s.reader)
        ));
    }

    let schedule = match compute_schedule(&annotated) {
        Ok(s) => s,
        Err(e) => {
            w(format!("error {}", e));
            let outcome = match e {
                ScheduleError::Deadlock { .. } => ValidationOutcome::Deadlock,
                _ => ValidationOutcome::Inconsistent,
            };
            w(outcome.label().to_string());
            return (out, outcome);
        }
    };

    w(format!("hyperperiod {}", schedule.hyperperiod));
    for (mi, n) in schedule.activations.iter().enumerate() {
        w(format!("n {} {}", annotated.modules[mi].name, n));
    }
    for (i, a) in schedule.order.iter().enumerate() {
        let t = mul_time(a.k, annotated.modules[a.module].timestep.unwrap())
            .expect("schedule times fit");
        w(format!(
            "fire {} {} k={} t={}",
            i, annotated.modules[a.module].name, a.k, t
        ));
    }
    for (i, a) in schedule.converter_accesses.iter().enumerate() {
        w(format!(
            "access {} {} k={} j={} dir={} t={}",
            i,
            annotated.qualified(a.port),
            a.k,
            a.j,
            a.direction,
            a.time
        ));
    }

    let report = analyze_causality(&annotated, &schedule);
    for v in &report.violations {
        let mut line = String::new();
        write!(
            line,
            "violation {}@{} then {}@{} delta={}",
            annotated.qualified(v.earlier.port),
            v.earlier.time,
            annotated.qualified(v.later.port),
            v.later.time,
            v.delta
        )
        .unwrap();
        if v.wraparound {
            line.push_str(" wraparound");
        }
        w(line);
    }
    for (port, d) in &report.suggested_delays {
        w(format!("suggest {} +{}", port, d));
    }

    let outcome = if report.ok {
        ValidationOutcome::Valid
    } else {
        ValidationOutcome::CausalityViolation
    };
    w(outcome.label().to_string());
    (out, outcome)
}
