//! Schedule validation by token counting and exhaustive search.

use tdfsim_core::sched::{Activation, StaticSchedule};
use tdfsim_core::tdf::{Direction, PortKind, PortRef, TdfCluster};

/// Everything the checker found wrong with a schedule. Empty means the
/// schedule is a feasible periodic order with balanced rates.
#[derive(Debug, Default)]
pub struct ScheduleCheck {
    pub problems: Vec<String>,
}

impl ScheduleCheck {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Tokens sitting on each signal before anything fires: the writer and
/// reader delays both contribute initial samples.
fn initial_tokens(cluster: &TdfCluster) -> Vec<i64> {
    cluster
        .signals
        .iter()
        .map(|s| (cluster.port(s.writer).delay + cluster.port(s.reader).delay) as i64)
        .collect()
}

/// Fires `module` once against `tokens`, reporting the first shortfall.
fn fire(cluster: &TdfCluster, tokens: &mut [i64], module: usize) -> Result<(), String> {
    for (pi, p) in cluster.modules[module].ports.iter().enumerate() {
        if p.direction != Direction::Input || p.kind != PortKind::Normal {
            continue;
        }
        let r = PortRef { module, port: pi };
        let sig = cluster
            .signal_at(r)
            .ok_or_else(|| format!("input `{}` is not wired", cluster.qualified(r)))?;
        tokens[sig] -= p.rate as i64;
        if tokens[sig] < 0 {
            return Err(format!(
                "firing `{}` overdraws signal `{}`",
                cluster.modules[module].name, cluster.signal_names[sig]
            ));
        }
    }
    for (pi, p) in cluster.modules[module].ports.iter().enumerate() {
        if p.direction != Direction::Output || p.kind != PortKind::Normal {
            continue;
        }
        let r = PortRef { module, port: pi };
        let sig = cluster
            .signal_at(r)
            .ok_or_else(|| format!("output `{}` is not wired", cluster.qualified(r)))?;
        tokens[sig] += p.rate as i64;
    }
    Ok(())
}

/// True when every prefix of `order` only fires enabled modules,
/// starting from the initial delay tokens.
pub fn is_feasible_order(cluster: &TdfCluster, order: &[Activation]) -> bool {
    let mut tokens = initial_tokens(cluster);
    order
        .iter()
        .all(|a| fire(cluster, &mut tokens, a.module).is_ok())
}

/// Re-derives every guarantee a static schedule makes, independently of
/// how the scheduler constructed it.
pub fn check_schedule(cluster: &TdfCluster, schedule: &StaticSchedule) -> ScheduleCheck {
    let mut out = ScheduleCheck::default();

    // hyperperiod and repetition counts from first principles
    let tms: Vec<u64> = match cluster
        .modules
        .iter()
        .map(|m| m.timestep.map(|t| t.as_ps()))
        .collect::<Option<Vec<_>>>()
    {
        Some(v) => v,
        None => {
            out.problems.push("cluster is not fully annotated".into());
            return out;
        }
    };
    let mut hyper: u64 = 1;
    for &tm in &tms {
        hyper = hyper / gcd(hyper, tm) * tm;
    }
    if schedule.hyperperiod.as_ps() != hyper {
        out.problems.push(format!(
            "hyperperiod is {} ps, lcm of timesteps is {hyper} ps",
            schedule.hyperperiod.as_ps()
        ));
    }
    let counts: Vec<u64> = tms.iter().map(|&tm| hyper / tm).collect();
    if schedule.activations != counts {
        out.problems.push(format!(
            "repetition vector {:?} does not match {counts:?}",
            schedule.activations
        ));
    }

    // the order must fire each module exactly n(m) times, k ascending
    let mut seen = vec![0u64; cluster.modules.len()];
    for a in &schedule.order {
        if a.k != seen[a.module] {
            out.problems.push(format!(
                "`{}` fires k={} but {} earlier firings were seen",
                cluster.modules[a.module].name, a.k, seen[a.module]
            ));
        }
        seen[a.module] += 1;
    }
    if seen != counts {
        out.problems
            .push(format!("firing counts {seen:?} do not match {counts:?}"));
    }

    // rate balance per signal: tokens produced and consumed over one
    // period must agree or buffers could not be periodic
    for (si, s) in cluster.signals.iter().enumerate() {
        let w = cluster.port(s.writer);
        let r = cluster.port(s.reader);
        let produced = counts[s.writer.module] * w.rate as u64;
        let consumed = counts[s.reader.module] * r.rate as u64;
        if produced != consumed {
            out.problems.push(format!(
                "signal `{}` produces {produced} but consumes {consumed} per period",
                cluster.signal_names[si]
            ));
        }
    }

    // walk the order against token counts; afterwards the buffers must
    // be back at their initial levels
    let initial = initial_tokens(cluster);
    let mut tokens = initial.clone();
    for a in &schedule.order {
        if let Err(e) = fire(cluster, &mut tokens, a.module) {
            out.problems.push(e);
            return out;
        }
    }
    if tokens != initial {
        out.problems
            .push(format!("buffers end at {tokens:?}, started at {initial:?}"));
    }
    out
}

/// Exhaustively enumerates every feasible complete firing order, up to
/// `cap` orders. Returns `None` when the space is larger than the cap.
/// Only practical for small clusters; that is the point.
pub fn enumerate_orders(cluster: &TdfCluster, cap: usize) -> Option<Vec<Vec<Activation>>> {
    let tms: Vec<u64> = cluster
        .modules
        .iter()
        .map(|m| m.timestep.expect("annotated").as_ps())
        .collect();
    let mut hyper: u64 = 1;
    for &tm in &tms {
        hyper = hyper / gcd(hyper, tm) * tm;
    }
    let counts: Vec<u64> = tms.iter().map(|&tm| hyper / tm).collect();
    let total: u64 = counts.iter().sum();

    let mut orders = Vec::new();
    let mut fired = vec![0u64; cluster.modules.len()];
    let mut tokens = initial_tokens(cluster);
    let mut prefix = Vec::new();

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        cluster: &TdfCluster,
        counts: &[u64],
        total: u64,
        fired: &mut Vec<u64>,
        tokens: &mut Vec<i64>,
        prefix: &mut Vec<Activation>,
        orders: &mut Vec<Vec<Activation>>,
        cap: usize,
    ) -> bool {
        if prefix.len() as u64 == total {
            if orders.len() == cap {
                return false;
            }
            orders.push(prefix.clone());
            return true;
        }
        for m in 0..cluster.modules.len() {
            if fired[m] == counts[m] {
                continue;
            }
            let snapshot = tokens.clone();
            if fire(cluster, tokens, m).is_ok() {
                prefix.push(Activation {
                    module: m,
                    k: fired[m],
                });
                fired[m] += 1;
                let fits = dfs(cluster, counts, total, fired, tokens, prefix, orders, cap);
                fired[m] -= 1;
                prefix.pop();
                if !fits {
                    return false;
                }
            }
            *tokens = snapshot;
        }
        true
    }

    if dfs(
        cluster,
        &counts,
        total,
        &mut fired,
        &mut tokens,
        &mut prefix,
        &mut orders,
        cap,
    ) {
        Some(orders)
    } else {
        None
    }
}
