//! A straight-line dataflow runner with no platform, no horizon logic
//! and no converter machinery. Used to confirm that the coupled engine
//! degenerates to plain static-schedule execution when a cluster has
//! nothing to synchronize on.

use std::collections::{BTreeMap, VecDeque};

use tdfsim_core::behavior::{execute_activation, ModuleState};
use tdfsim_core::rng::stream_id;
use tdfsim_core::sched::StaticSchedule;
use tdfsim_core::tdf::{Direction, PortKind, TdfCluster};
use tdfsim_core::{SimTime, Value};

/// Fires `cluster` for `periods` hyperperiods in schedule order and
/// returns the wire trace of every signal, keyed by signal name.
pub fn run_standalone(
    cluster: &TdfCluster,
    schedule: &StaticSchedule,
    periods: u64,
    seed: u64,
) -> BTreeMap<String, Vec<(SimTime, Value)>> {
    assert!(
        cluster.converter_ports().next().is_none(),
        "standalone runner handles pure dataflow clusters only"
    );

    let mut states: Vec<ModuleState> = cluster
        .modules
        .iter()
        .map(|m| ModuleState::new(seed, stream_id(&format!("module:{}.{}", cluster.name, m.name))))
        .collect();
    let shapes: Vec<_> = cluster.modules.iter().map(|m| m.shape()).collect();

    let mut buffers: Vec<VecDeque<Value>> = Vec::new();
    let mut traces: Vec<Vec<(SimTime, Value)>> = Vec::new();
    for s in &cluster.signals {
        let w = cluster.port(s.writer);
        let r = cluster.port(s.reader);
        let default = w.value_type.default_value();
        buffers.push(std::iter::repeat_n(default, (w.delay + r.delay) as usize).collect());
        let tp = w.timestep.expect("annotated").as_ps();
        traces.push(
            (0..w.delay as u64)
                .map(|i| (SimTime::from_ps(i * tp), default))
                .collect(),
        );
    }

    let hyper = schedule.hyperperiod.as_ps();
    for period in 0..periods {
        let base = period * hyper;
        for a in &schedule.order {
            let m = &cluster.modules[a.module];
            let mut inputs = Vec::new();
            for (pi, p) in m.ports.iter().enumerate() {
                if p.direction != Direction::Input {
                    continue;
                }
                assert_eq!(p.kind, PortKind::Normal);
                let sig = cluster
                    .signal_at(tdfsim_core::tdf::PortRef { module: a.module, port: pi })
                    .expect("wired");
                let vals: Vec<Value> = (0..p.rate)
                    .map(|_| buffers[sig].pop_front().expect("feasible order"))
                    .collect();
                inputs.push(vals);
            }

            let clock = m
                .ports
                .iter()
                .find(|p| p.direction == Direction::Output)
                .or_else(|| m.ports.iter().find(|p| p.direction == Direction::Input));
            let times: Vec<SimTime> = match clock {
                Some(p) => {
                    let tp = p.timestep.expect("annotated").as_ps();
                    let shift = if p.direction == Direction::Output {
                        p.delay as u64
                    } else {
                        0
                    };
                    (0..p.rate as u64)
                        .map(|j| SimTime::from_ps(base + (a.k * p.rate as u64 + j + shift) * tp))
                        .collect()
                }
                None => Vec::new(),
            };

            let outputs = execute_activation(
                &m.behavior,
                &mut states[a.module],
                &shapes[a.module],
                &inputs,
                &times,
            )
            .expect("behavior accepts its declared shape");

            let mut out_iter = outputs.into_iter();
            for (pi, p) in m.ports.iter().enumerate() {
                if p.direction != Direction::Output {
                    continue;
                }
                let vals = out_iter.next().expect("one array per output port");
                let sig = cluster
                    .signal_at(tdfsim_core::tdf::PortRef { module: a.module, port: pi })
                    .expect("wired");
                let tp = p.timestep.expect("annotated").as_ps();
                for (j, v) in vals.iter().enumerate() {
                    let t = base + (a.k * p.rate as u64 + j as u64 + p.delay as u64) * tp;
                    traces[sig].push((SimTime::from_ps(t), *v));
                }
                buffers[sig].extend(vals);
            }
        }
    }

    cluster
        .signal_names
        .iter()
        .cloned()
        .zip(traces)
        .collect()
}
