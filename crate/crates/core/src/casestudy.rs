//! Builders for the automotive active-braking demonstration model and
//! its parametric scaling variant. Everything here just assembles an
//! ordinary [`ModelDocument`]; nothing is special-cased downstream.

use crate::behavior::BehaviorSpec;
use crate::model::{ModelDocument, SimulationDesc, SUPPORTED_VERSION};
use crate::platform::{
    ActionDesc, BranchDesc, ChannelDesc, CpuDesc, GpioDesc, InterconnectDesc, PlatformDesc,
    StateDesc, TargetDesc, TaskDesc, TransitionDesc, VarDesc,
};
use crate::tdf::{BindingDesc, ClusterDesc, Direction, ModuleDesc, PortDesc, PortKind};
use crate::time::SimTime;
use crate::value::ValueType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrakingModelParams {
    /// How many of the sensor clusters to instantiate (the full set is
    /// five; extras beyond five clone the car-position sensor).
    pub sensor_count: u32,
    pub cpu_count: u32,
    /// Non-gpio targets on the interconnect (memories, rom, tty,
    /// timer, bridge).
    pub extra_target_count: u32,
    pub seed: u64,
}

impl Default for BrakingModelParams {
    fn default() -> Self {
        BrakingModelParams {
            sensor_count: 5,
            cpu_count: 4,
            extra_target_count: 12,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid parameters: {0}")]
pub struct InvalidParams(pub String);

fn default_until() -> SimTime {
    SimTime::from_ms(100)
}

/// One uniform random sensor as a single-module cluster: `rate` slots
/// per 1ms activation, one converter output port, one endpoint.
fn sensor_cluster(
    cluster: &str,
    module: &str,
    endpoint: &str,
    ranges: Vec<(i64, i64)>,
) -> ClusterDesc {
    ClusterDesc {
        name: cluster.to_string(),
        modules: vec![ModuleDesc {
            name: module.to_string(),
            timestep: Some(SimTime::from_ms(1)),
            ports: vec![PortDesc {
                name: "samples".into(),
                direction: Direction::Output,
                kind: PortKind::Converter,
                rate: ranges.len() as u32,
                delay: 0,
                timestep: None,
                value_type: ValueType::Int,
            }],
            behavior: BehaviorSpec::UniformRandomInt {
                ranges,
                stream: None,
            },
        }],
        signals: vec![],
        converter_bindings: vec![BindingDesc {
            port: format!("{}.samples", module),
            endpoint: endpoint.to_string(),
        }],
    }
}

/// ram0..ram7, then rom/tty/timer/bridge, then more ram.
fn extra_targets(n: u32) -> Vec<TargetDesc> {
    (0..n)
        .map(|i| {
            let (name, kind) = match i {
                0..=7 => (format!("ram{}", i), "ram"),
                8 => ("rom0".to_string(), "rom"),
                9 => ("tty0".to_string(), "tty"),
                10 => ("timer0".to_string(), "timer"),
                11 => ("bridge0".to_string(), "bridge"),
                _ => (format!("ram{}", i - 4), "ram"),
            };
            TargetDesc {
                name,
                kind: kind.to_string(),
            }
        })
        .collect()
}

fn int_var(name: &str) -> VarDesc {
    VarDesc {
        name: name.into(),
        value_type: ValueType::Int,
        init: None,
    }
}

fn gpio_branch(endpoint: &str, var: &str) -> BranchDesc {
    BranchDesc {
        gpio: Some(endpoint.to_string()),
        channel: None,
        var: var.to_string(),
    }
}

fn chan_branch(channel: &str, var: &str) -> BranchDesc {
    BranchDesc {
        gpio: None,
        channel: Some(channel.to_string()),
        var: var.to_string(),
    }
}

/// Blocking single-source read, expressed as a one-branch select.
fn wait_read(branch: BranchDesc) -> ActionDesc {
    ActionDesc::SelectNondet {
        branches: vec![branch],
        chosen_var: None,
    }
}

fn write(channel: &str, expr: &str) -> ActionDesc {
    ActionDesc::ChanWrite {
        channel: channel.into(),
        expr: expr.into(),
    }
}

fn compute(delay: SimTime) -> ActionDesc {
    ActionDesc::Compute { delay }
}

fn goto(to: &str) -> TransitionDesc {
    TransitionDesc {
        to: to.into(),
        guard: None,
    }
}

fn goto_if(to: &str, guard: &str) -> TransitionDesc {
    TransitionDesc {
        to: to.into(),
        guard: Some(guard.into()),
    }
}

/// The paper-derived braking deployment: sensor clusters feeding the
/// DSRSC dispatcher, which forwards classified messages through the
/// chassis-safety / danger-avoidance / powertrain chain, with emergency
/// broadcasts looping back over the communication ECU.
pub fn build_braking_model(params: &BrakingModelParams) -> Result<ModelDocument, InvalidParams> {
    if params.sensor_count == 0 {
        return Err(InvalidParams("sensor_count must be at least 1".into()));
    }
    if params.cpu_count == 0 {
        return Err(InvalidParams("cpu_count must be at least 1".into()));
    }

    #[allow(clippy::type_complexity)]
    let base: [(&str, &str, &str, Vec<(i64, i64)>); 5] = [
        ("car_position", "CarPositionSimulator", "car0", vec![(1, 5), (3, 10)]),
        ("emergency", "EmergencySimulator", "emergency0", vec![(0, 1), (1, 100)]),
        ("speed", "SpeedSensor", "speed0", vec![(0, 250)]),
        ("direction", "DirectionSensor", "direction0", vec![(0, 359)]),
        ("obstacle", "ObstacleDistanceSensor", "obstacle0", vec![(1, 100)]),
    ];

    let mut clusters = Vec::new();
    let mut endpoints = Vec::new();
    for i in 0..params.sensor_count {
        let desc = match base.get(i as usize) {
            Some((c, m, e, r)) => sensor_cluster(c, m, e, r.clone()),
            None => {
                let n = i as usize - base.len() + 2;
                sensor_cluster(
                    &format!("car_position{}", n),
                    &format!("CarPositionSimulator{}", n),
                    &format!("car{}", n),
                    vec![(1, 5), (3, 10)],
                )
            }
        };
        endpoints.push(desc.converter_bindings[0].endpoint.clone());
        clusters.push(desc);
    }
    let has = |e: &str| endpoints.iter().any(|x| x == e);

    let targets = extra_targets(params.extra_target_count);
    let channel_homes: Vec<String> = if targets.is_empty() {
        endpoints.clone()
    } else {
        targets.iter().map(|t| t.name.clone()).collect()
    };
    let home = |i: usize| channel_homes[i % channel_homes.len()].clone();

    let broadcast = "broadcastEmergencyBrakingMessage";
    let channels = vec![
        ChannelDesc {
            name: "toCSCU".into(),
            depth: 16,
            target: home(0),
        },
        ChannelDesc {
            name: "toBCU".into(),
            depth: 16,
            target: home(1),
        },
        ChannelDesc {
            name: "toPTC".into(),
            depth: 16,
            target: home(2),
        },
        ChannelDesc {
            name: "toComm".into(),
            depth: 16,
            target: home(3),
        },
        ChannelDesc {
            name: broadcast.into(),
            depth: 16,
            target: home(4),
        },
    ];

    // dispatcher: classify whatever arrives first, pull the message's
    // second half from the same source, forward a (kind, a, b) triple
    let mut branches = Vec::new();
    let mut handlers: Vec<(&str, StateDesc)> = Vec::new();
    if has("car0") {
        branches.push(gpio_branch("car0", "id"));
        handlers.push((
            "HandleCar",
            StateDesc {
                name: "HandleCar".into(),
                entry: vec![
                    wait_read(gpio_branch("car0", "position")),
                    compute(SimTime::from_us(10)),
                    write("toCSCU", "0"),
                    write("toCSCU", "id"),
                    write("toCSCU", "position"),
                ],
                transitions: vec![goto("Wait")],
            },
        ));
    }
    if has("emergency0") {
        branches.push(gpio_branch("emergency0", "flag"));
        handlers.push((
            "HandleEmergency",
            StateDesc {
                name: "HandleEmergency".into(),
                entry: vec![
                    wait_read(gpio_branch("emergency0", "severity")),
                    compute(SimTime::from_us(10)),
                    write("toCSCU", "1"),
                    write("toCSCU", "flag"),
                    write("toCSCU", "severity"),
                ],
                transitions: vec![goto("Wait")],
            },
        ));
    }
    branches.push(chan_branch(broadcast, "msg"));
    handlers.push((
        "HandleBroadcast",
        StateDesc {
            name: "HandleBroadcast".into(),
            entry: vec![
                ActionDesc::Assign {
                    var: "braking_active".into(),
                    expr: "1".into(),
                },
                compute(SimTime::from_us(10)),
            ],
            transitions: vec![goto("Wait")],
        },
    ));

    let wait_transitions = handlers
        .iter()
        .enumerate()
        .map(|(i, (name, _))| goto_if(name, &format!("src == {}", i)))
        .collect();
    let mut dsrsc_states = vec![StateDesc {
        name: "Wait".into(),
        entry: vec![ActionDesc::SelectNondet {
            branches,
            chosen_var: Some("src".into()),
        }],
        transitions: wait_transitions,
    }];
    dsrsc_states.extend(handlers.into_iter().map(|(_, s)| s));

    let dsrsc = TaskDesc {
        name: "DSRSC_Management".into(),
        cpu: String::new(), // placed below
        variables: ["src", "id", "position", "flag", "severity", "msg", "braking_active"]
            .iter()
            .map(|n| int_var(n))
            .collect(),
        initial: "Wait".into(),
        states: dsrsc_states,
    };

    // chassis safety controller: consume one triple, sample the other
    // sensors non-blockingly, forward the triple
    let mut collect = vec![
        ActionDesc::ChanRead {
            channel: "toCSCU".into(),
            var: "kind".into(),
        },
        ActionDesc::ChanRead {
            channel: "toCSCU".into(),
            var: "a".into(),
        },
        ActionDesc::ChanRead {
            channel: "toCSCU".into(),
            var: "b".into(),
        },
    ];
    let mut cscu_vars = vec![
        int_var("kind"),
        int_var("a"),
        int_var("b"),
    ];
    for (endpoint, var, ok) in [
        ("speed0", "speed", "ok_s"),
        ("direction0", "heading", "ok_d"),
        ("obstacle0", "distance", "ok_o"),
    ] {
        if has(endpoint) {
            collect.push(ActionDesc::GpioRead {
                endpoint: endpoint.into(),
                var: var.into(),
                status_var: Some(ok.into()),
            });
            cscu_vars.push(int_var(var));
            cscu_vars.push(int_var(ok));
        }
    }
    collect.extend([
        compute(SimTime::from_us(50)),
        write("toBCU", "kind"),
        write("toBCU", "a"),
        write("toBCU", "b"),
    ]);
    let cscu = TaskDesc {
        name: "CSCU".into(),
        cpu: String::new(),
        variables: cscu_vars,
        initial: "Collect".into(),
        states: vec![StateDesc {
            name: "Collect".into(),
            entry: collect,
            transitions: vec![goto("Collect")],
        }],
    };

    // danger avoidance: an emergency with its flag set, or a car that
    // close, demands braking plus a broadcast
    let bcu = TaskDesc {
        name: "DangerAvoidanceStrategy".into(),
        cpu: String::new(),
        variables: vec![
            int_var("kind"),
            int_var("a"),
            int_var("b"),
            VarDesc {
                name: "danger".into(),
                value_type: ValueType::Bool,
                init: None,
            },
        ],
        initial: "Decide".into(),
        states: vec![
            StateDesc {
                name: "Decide".into(),
                entry: vec![
                    ActionDesc::ChanRead {
                        channel: "toBCU".into(),
                        var: "kind".into(),
                    },
                    ActionDesc::ChanRead {
                        channel: "toBCU".into(),
                        var: "a".into(),
                    },
                    ActionDesc::ChanRead {
                        channel: "toBCU".into(),
                        var: "b".into(),
                    },
                    compute(SimTime::from_us(20)),
                    ActionDesc::Assign {
                        var: "danger".into(),
                        expr: "(kind == 1 && a == 1) || (kind == 0 && b <= 4)".into(),
                    },
                    write("toPTC", "b"),
                ],
                transitions: vec![goto_if("Alert", "danger"), goto("Decide")],
            },
            StateDesc {
                name: "Alert".into(),
                entry: vec![write("toComm", "b")],
                transitions: vec![goto("Decide")],
            },
        ],
    };

    let ptc = TaskDesc {
        name: "PTC".into(),
        cpu: String::new(),
        variables: vec![int_var("cmd"), int_var("level")],
        initial: "Actuate".into(),
        states: vec![StateDesc {
            name: "Actuate".into(),
            entry: vec![
                ActionDesc::ChanRead {
                    channel: "toPTC".into(),
                    var: "cmd".into(),
                },
                compute(SimTime::from_us(10)),
                ActionDesc::Assign {
                    var: "level".into(),
                    expr: "cmd".into(),
                },
            ],
            transitions: vec![goto("Actuate")],
        }],
    };

    let comm = TaskDesc {
        name: "CommunicationECU".into(),
        cpu: String::new(),
        variables: vec![int_var("payload")],
        initial: "Relay".into(),
        states: vec![StateDesc {
            name: "Relay".into(),
            entry: vec![
                ActionDesc::ChanRead {
                    channel: "toComm".into(),
                    var: "payload".into(),
                },
                compute(SimTime::from_us(5)),
                write(broadcast, "payload"),
            ],
            transitions: vec![goto("Relay")],
        }],
    };

    let cpus: Vec<CpuDesc> = (0..params.cpu_count)
        .map(|i| CpuDesc {
            name: format!("cpu{}", i),
        })
        .collect();
    let mut tasks = vec![dsrsc, cscu, bcu, ptc, comm];
    for (i, t) in tasks.iter_mut().enumerate() {
        t.cpu = cpus[i % cpus.len()].name.clone();
    }

    Ok(ModelDocument {
        version: SUPPORTED_VERSION,
        clusters,
        platform: PlatformDesc {
            interconnect: InterconnectDesc::default(),
            cpus,
            targets,
            gpios: endpoints
                .iter()
                .map(|e| GpioDesc {
                    name: e.clone(),
                    capacity: 64,
                })
                .collect(),
            channels,
            tasks,
        },
        simulation: Some(SimulationDesc {
            seed: params.seed,
            until: Some(default_until()),
        }),
    })
}

/// N car-position sensors with distinct random streams, one consumer
/// task each, spread round-robin over M cpus. Used to stress the
/// interconnect without the ECU chain.
pub fn build_scaled_model(
    sensors: u32,
    cpus: u32,
    seed: u64,
) -> Result<ModelDocument, InvalidParams> {
    if sensors == 0 {
        return Err(InvalidParams("sensors must be at least 1".into()));
    }
    if cpus == 0 {
        return Err(InvalidParams("cpus must be at least 1".into()));
    }

    let mut clusters = Vec::new();
    let mut gpios = Vec::new();
    let mut tasks = Vec::new();
    for i in 1..=sensors {
        let endpoint = format!("car{}", i);
        clusters.push(sensor_cluster(
            &format!("car{}", i),
            "CarPositionSimulator",
            &endpoint,
            vec![(1, 5), (3, 10)],
        ));
        gpios.push(GpioDesc {
            name: endpoint.clone(),
            capacity: 64,
        });
        tasks.push(TaskDesc {
            name: format!("consumer{}", i),
            cpu: format!("cpu{}", (i - 1) % cpus),
            variables: vec![int_var("id"), int_var("pos")],
            initial: "Wait".into(),
            states: vec![
                StateDesc {
                    name: "Wait".into(),
                    entry: vec![wait_read(gpio_branch(&endpoint, "id"))],
                    transitions: vec![goto("Grab")],
                },
                StateDesc {
                    name: "Grab".into(),
                    entry: vec![
                        wait_read(gpio_branch(&endpoint, "pos")),
                        compute(SimTime::from_us(1)),
                    ],
                    transitions: vec![goto("Wait")],
                },
            ],
        });
    }

    Ok(ModelDocument {
        version: SUPPORTED_VERSION,
        clusters,
        platform: PlatformDesc {
            interconnect: InterconnectDesc::default(),
            cpus: (0..cpus)
                .map(|i| CpuDesc {
                    name: format!("cpu{}", i),
                })
                .collect(),
            targets: extra_targets(12),
            gpios,
            channels: vec![],
            tasks,
        },
        simulation: Some(SimulationDesc {
            seed,
            until: Some(default_until()),
        }),
    })
}
