//! Seeded cluster generators for stress-testing the scheduler.
//!
//! Both families draw every choice from the deterministic counter
//! stream, so `(seed, index)` pins a cluster exactly and failures
//! reproduce from the printed pair alone.

use tdfsim_core::behavior::BehaviorSpec;
use tdfsim_core::rng::CounterRng;
use tdfsim_core::tdf::{
    Direction, PortKind, PortRef, TdfCluster, TdfModule, TdfPort, TdfSignal,
};
use tdfsim_core::{SimTime, ValueType};

/// Hyperperiod shared by the consistent family, in ms. Its divisors
/// {12, 6, 4, 3} give repetition counts 1..=4.
const HYPER_MS: u64 = 12;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn module(name: String, tm: SimTime) -> TdfModule {
    TdfModule {
        name,
        timestep: Some(tm),
        ports: Vec::new(),
        // never executed by the scheduler tests; any shape-free
        // behavior will do
        behavior: BehaviorSpec::Sum,
    }
}

fn port(name: String, direction: Direction, kind: PortKind, rate: u32, delay: u32, tp: SimTime) -> TdfPort {
    TdfPort {
        name,
        direction,
        kind,
        rate,
        delay,
        timestep: Some(tp),
        value_type: ValueType::Int,
    }
}

/// Adds a wired signal `writer -> reader` with the given sample period
/// and writer-side delay.
fn connect(
    cluster: &mut TdfCluster,
    writer: usize,
    reader: usize,
    tp_ps: u64,
    delay: u32,
) {
    let w_rate = (cluster.modules[writer].timestep.unwrap().as_ps() / tp_ps) as u32;
    let r_rate = (cluster.modules[reader].timestep.unwrap().as_ps() / tp_ps) as u32;
    let tp = SimTime::from_ps(tp_ps);
    let w_port = cluster.modules[writer].ports.len();
    cluster.modules[writer].ports.push(port(
        format!("o{w_port}"),
        Direction::Output,
        PortKind::Normal,
        w_rate,
        delay,
        tp,
    ));
    let r_port = cluster.modules[reader].ports.len();
    cluster.modules[reader].ports.push(port(
        format!("i{r_port}"),
        Direction::Input,
        PortKind::Normal,
        r_rate,
        0,
        tp,
    ));
    let idx = cluster.signals.len();
    cluster.signal_names.push(format!("s{idx}"));
    cluster.signals.push(TdfSignal {
        writer: PortRef {
            module: writer,
            port: w_port,
        },
        reader: PortRef {
            module: reader,
            port: r_port,
        },
    });
}

/// A random fully annotated cluster that is schedulable by
/// construction: up to 5 modules with repetition counts <= 4, forward
/// edges carrying small delays, and back or self edges padded with one
/// full period of initial samples so they can never gate a firing.
pub fn consistent_cluster(seed: u64, index: u64) -> TdfCluster {
    let mut rng = CounterRng::new(seed, index);
    let n_modules = 1 + rng.next_index(5);

    let mut cluster = TdfCluster {
        name: format!("gen{index}"),
        modules: Vec::new(),
        signal_names: Vec::new(),
        signals: Vec::new(),
        bindings: Vec::new(),
    };
    let mut reps = Vec::new();
    for i in 0..n_modules {
        let n = [1u64, 2, 3, 4][rng.next_index(4)];
        reps.push(n);
        cluster
            .modules
            .push(module(format!("M{i}"), SimTime::from_ms(HYPER_MS / n)));
    }
    let tm_ms = |cluster: &TdfCluster, i: usize| {
        cluster.modules[i].timestep.unwrap().as_ps() / 1_000_000_000
    };

    // a sample period must divide both firing periods, and the implied
    // per-activation rates should stay small
    let pick_tp_ms = |rng: &mut CounterRng, a: u64, b: u64| {
        let g = gcd(a, b);
        let divisors: Vec<u64> = (1..=g)
            .filter(|d| g.is_multiple_of(*d) && a / d <= 8 && b / d <= 8)
            .collect();
        divisors[rng.next_index(divisors.len())]
    };

    // forward edges: mostly a tree, delays rarely
    for i in 1..n_modules {
        if rng.next_index(10) < 8 {
            let j = rng.next_index(i);
            let tp = pick_tp_ms(&mut rng, tm_ms(&cluster, j), tm_ms(&cluster, i));
            let delay = [0u32, 0, 0, 1, 2][rng.next_index(5)];
            connect(&mut cluster, j, i, tp * 1_000_000_000, delay);
        }
    }
    // occasional back or self edges, always pre-filled with a full
    // period of tokens so the reader is never blocked by them
    for i in 0..n_modules {
        if rng.next_index(10) < 3 {
            let j = rng.next_index(i + 1);
            let tp = pick_tp_ms(&mut rng, tm_ms(&cluster, i), tm_ms(&cluster, j));
            let consumed_per_period = (reps[j] * (tm_ms(&cluster, j) / tp)) as u32;
            let delay = consumed_per_period + rng.next_index(3) as u32;
            connect(&mut cluster, i, j, tp * 1_000_000_000, delay);
        }
    }
    cluster
}

/// A cluster whose converter write timestamps come out of order: a slow
/// module is token-gated behind several firings of a fast one, so its
/// first write access lands earlier on the timeline than accesses the
/// schedule already passed. The misordering is always on output ports,
/// which is the repairable case.
pub fn violating_cluster(seed: u64, index: u64) -> TdfCluster {
    let mut rng = CounterRng::new(seed, index);
    let m = 2 + rng.next_index(3) as u64; // slow:fast period ratio
    let a = 1 + rng.next_index(3) as u64; // fast period, ms
    let rf = 1 + rng.next_index(2) as u32; // fast converter rate
    let df = rng.next_index(2) as u32; // fast converter delay
    let rw = 1 + rng.next_index(2) as u64; // samples per fast firing

    let fast_tm = SimTime::from_ms(a);
    let slow_tm = SimTime::from_ms(m * a);
    let mut cluster = TdfCluster {
        name: format!("viol{index}"),
        modules: Vec::new(),
        signal_names: Vec::new(),
        signals: Vec::new(),
        bindings: Vec::new(),
    };

    let mut fast = module("Fast".into(), fast_tm);
    fast.ports.push(port(
        "watch".into(),
        Direction::Output,
        PortKind::Converter,
        rf,
        df,
        SimTime::from_ps(fast_tm.as_ps() / rf as u64),
    ));
    let mut slow = module("Slow".into(), slow_tm);
    slow.ports.push(port(
        "emit".into(),
        Direction::Output,
        PortKind::Converter,
        1,
        0,
        slow_tm,
    ));
    cluster.modules.push(fast);
    cluster.modules.push(slow);

    // the gate: Slow consumes one full fast-period of samples per
    // firing, so it cannot fire until Fast has run m times
    connect(&mut cluster, 0, 1, a * 1_000_000_000 / rw, 0);

    if rng.next_index(3) == 0 {
        let mut aux = module("Aux".into(), fast_tm);
        aux.ports.push(port(
            "tick".into(),
            Direction::Output,
            PortKind::Converter,
            1,
            0,
            fast_tm,
        ));
        cluster.modules.push(aux);
    }
    // inert padding modules vary the schedule without touching the
    // converter access sequence
    for i in 0..rng.next_index(3) {
        let tm = if rng.next_index(2) == 0 { fast_tm } else { slow_tm };
        cluster.modules.push(module(format!("Pad{i}"), tm));
    }
    cluster
}
