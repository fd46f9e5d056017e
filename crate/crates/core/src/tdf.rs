//! Timed-dataflow graph model: clusters of periodically activated
//! modules exchanging sample streams over point-to-point signals.
//!
//! Modules carry a period `Tm`; each port carries a rate `R` (samples
//! per activation), a delay `D` (initial samples) and a sample spacing
//! `Tp`, tied together by `Tp x R = Tm`. Converter ports are the only
//! crossing points to the event-driven platform side and bind to named
//! GPIO endpoints instead of signals.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::behavior::{BehaviorError, BehaviorSpec, PortShape};
use crate::time::SimTime;
use crate::value::ValueType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "in",
            Direction::Output => "out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKind {
    Normal,
    Converter,
}

fn default_rate() -> u32 {
    1
}
fn is_default_rate(r: &u32) -> bool {
    *r == 1
}
fn is_zero_u32(d: &u32) -> bool {
    *d == 0
}
fn default_kind() -> PortKind {
    PortKind::Normal
}
fn is_normal(k: &PortKind) -> bool {
    *k == PortKind::Normal
}

/// Port as written in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortDesc {
    pub name: String,
    pub direction: Direction,
    #[serde(default = "default_kind", skip_serializing_if = "is_normal")]
    pub kind: PortKind,
    #[serde(default = "default_rate", skip_serializing_if = "is_default_rate")]
    pub rate: u32,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub delay: u32,
    /// Sample spacing Tp; usually inferred.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<SimTime>,
    pub value_type: ValueType,
}

/// Module as written in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDesc {
    pub name: String,
    /// Activation period Tm; may be inferred from a neighbor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep: Option<SimTime>,
    #[serde(default)]
    pub ports: Vec<PortDesc>,
    pub behavior: BehaviorSpec,
}

/// Signal as written in the model file; endpoints are `Module.port`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalDesc {
    pub name: String,
    pub writer: String,
    pub reader: String,
}

/// Converter-port-to-GPIO-endpoint binding, `Module.port` on one side
/// and a platform endpoint name on the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindingDesc {
    pub port: String,
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDesc {
    pub name: String,
    pub modules: Vec<ModuleDesc>,
    #[serde(default)]
    pub signals: Vec<SignalDesc>,
    #[serde(default)]
    pub converter_bindings: Vec<BindingDesc>,
}

/// `(module index, port index)` into a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub module: usize,
    pub port: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdfPort {
    pub name: String,
    pub direction: Direction,
    pub kind: PortKind,
    pub rate: u32,
    pub delay: u32,
    pub timestep: Option<SimTime>,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdfModule {
    pub name: String,
    pub timestep: Option<SimTime>,
    pub ports: Vec<TdfPort>,
    pub behavior: BehaviorSpec,
}

impl TdfModule {
    /// Port shape for behavior validation/execution: input ports then
    /// output ports, each in declaration order, converter included.
    pub fn shape(&self) -> PortShape {
        let pick = |dir: Direction| {
            self.ports
                .iter()
                .filter(|p| p.direction == dir)
                .map(|p| (p.value_type, p.rate))
                .collect()
        };
        PortShape {
            inputs: pick(Direction::Input),
            outputs: pick(Direction::Output),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TdfSignal {
    pub writer: PortRef,
    pub reader: PortRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterBinding {
    pub port: PortRef,
    pub endpoint: String,
}

/// A structurally validated cluster. Immutable once built; the
/// scheduler returns annotated copies rather than mutating in place.
#[derive(Debug, Clone, PartialEq)]
pub struct TdfCluster {
    pub name: String,
    pub modules: Vec<TdfModule>,
    pub signal_names: Vec<String>,
    pub signals: Vec<TdfSignal>,
    pub bindings: Vec<ConverterBinding>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("{context}: `{reference}` does not resolve to a known port")]
    UnknownReference { context: String, reference: String },
    #[error("signal `{signal}`: writer is {writer}, reader is {reader}")]
    TypeMismatch {
        signal: String,
        writer: ValueType,
        reader: ValueType,
    },
    #[error("{context}: port `{port}` must be {expected}")]
    DirectionMismatch {
        context: String,
        port: String,
        expected: &'static str,
    },
    #[error("port `{module}.{port}` is not connected to any signal or endpoint")]
    UnboundPort { module: String, port: String },
    #[error("port `{module}.{port}` is bound more than once")]
    DuplicateBinding { module: String, port: String },
    #[error("module `{module}`: {source}")]
    BadBehavior {
        module: String,
        source: BehaviorError,
    },
    #[error("{context}: {reason}")]
    BadAttribute { context: String, reason: String },
}

fn split_ref(s: &str) -> Option<(&str, &str)> {
    let (m, p) = s.split_once('.')?;
    if m.is_empty() || p.is_empty() {
        return None;
    }
    Some((m, p))
}

impl TdfCluster {
    pub fn module_index(&self, name: &str) -> Option<usize> {
        self.modules.iter().position(|m| m.name == name)
    }

    pub fn port(&self, r: PortRef) -> &TdfPort {
        &self.modules[r.module].ports[r.port]
    }

    pub fn module(&self, r: PortRef) -> &TdfModule {
        &self.modules[r.module]
    }

    /// `Module.port` spelling of a reference, for reports.
    pub fn qualified(&self, r: PortRef) -> String {
        format!("{}.{}", self.modules[r.module].name, self.port(r).name)
    }

    pub fn resolve(&self, dotted: &str) -> Option<PortRef> {
        let (m, p) = split_ref(dotted)?;
        let module = self.module_index(m)?;
        let port = self.modules[module].ports.iter().position(|q| q.name == p)?;
        Some(PortRef { module, port })
    }

    /// The signal attached to a normal port, if any.
    pub fn signal_at(&self, r: PortRef) -> Option<usize> {
        self.signals
            .iter()
            .position(|s| s.writer == r || s.reader == r)
    }

    /// Converter ports in (module, port) declaration order.
    pub fn converter_ports(&self) -> impl Iterator<Item = PortRef> + '_ {
        self.modules.iter().enumerate().flat_map(|(mi, m)| {
            m.ports
                .iter()
                .enumerate()
                .filter(|(_, p)| p.kind == PortKind::Converter)
                .map(move |(pi, _)| PortRef { module: mi, port: pi })
        })
    }

    pub fn endpoint_of(&self, r: PortRef) -> Option<&str> {
        self.bindings
            .iter()
            .find(|b| b.port == r)
            .map(|b| b.endpoint.as_str())
    }
}

/// Resolves a cluster description into a validated graph: names to
/// indices, one signal per normal port, one endpoint per converter
/// port, endpoint types consistent, behaviors compatible with shapes.
pub fn build_cluster(desc: &ClusterDesc) -> Result<TdfCluster, BuildError> {
    let mut module_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, m) in desc.modules.iter().enumerate() {
        if module_ids.insert(&m.name, i).is_some() {
            return Err(BuildError::DuplicateName {
                kind: "module",
                name: m.name.clone(),
            });
        }
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for p in &m.ports {
            if seen.insert(&p.name, ()).is_some() {
                return Err(BuildError::DuplicateName {
                    kind: "port",
                    name: format!("{}.{}", m.name, p.name),
                });
            }
            if p.rate == 0 {
                return Err(BuildError::BadAttribute {
                    context: format!("port `{}.{}`", m.name, p.name),
                    reason: "rate must be at least 1".into(),
                });
            }
            if let Some(tp) = p.timestep {
                if tp.as_ps() == 0 {
                    return Err(BuildError::BadAttribute {
                        context: format!("port `{}.{}`", m.name, p.name),
                        reason: "timestep must be positive".into(),
                    });
                }
            }
        }
        if let Some(tm) = m.timestep {
            if tm.as_ps() == 0 {
                return Err(BuildError::BadAttribute {
                    context: format!("module `{}`", m.name),
                    reason: "timestep must be positive".into(),
                });
            }
        }
    }

    let modules: Vec<TdfModule> = desc
        .modules
        .iter()
        .map(|m| TdfModule {
            name: m.name.clone(),
            timestep: m.timestep,
            ports: m
                .ports
                .iter()
                .map(|p| TdfPort {
                    name: p.name.clone(),
                    direction: p.direction,
                    kind: p.kind,
                    rate: p.rate,
                    delay: p.delay,
                    timestep: p.timestep,
                    value_type: p.value_type,
                })
                .collect(),
            behavior: m.behavior.clone(),
        })
        .collect();

    let scratch = TdfCluster {
        name: desc.name.clone(),
        modules,
        signal_names: Vec::new(),
        signals: Vec::new(),
        bindings: Vec::new(),
    };

    let resolve = |context: &str, dotted: &str| -> Result<PortRef, BuildError> {
        scratch.resolve(dotted).ok_or_else(|| BuildError::UnknownReference {
            context: context.to_string(),
            reference: dotted.to_string(),
        })
    };

    // normal ports take exactly one signal, converter ports exactly one
    // endpoint; track usage per port
    let mut bound: BTreeMap<PortRef, ()> = BTreeMap::new();
    let mut bind = |r: PortRef| -> Result<(), BuildError> {
        if bound.insert(r, ()).is_some() {
            return Err(BuildError::DuplicateBinding {
                module: scratch.modules[r.module].name.clone(),
                port: scratch.port(r).name.clone(),
            });
        }
        Ok(())
    };

    let mut signal_names = Vec::new();
    let mut signals = Vec::new();
    for s in &desc.signals {
        if signal_names.contains(&s.name) {
            return Err(BuildError::DuplicateName {
                kind: "signal",
                name: s.name.clone(),
            });
        }
        let ctx = format!("signal `{}`", s.name);
        let writer = resolve(&ctx, &s.writer)?;
        let reader = resolve(&ctx, &s.reader)?;
        let wp = scratch.port(writer);
        let rp = scratch.port(reader);
        if wp.direction != Direction::Output || wp.kind != PortKind::Normal {
            return Err(BuildError::DirectionMismatch {
                context: ctx,
                port: s.writer.clone(),
                expected: "a normal output port",
            });
        }
        if rp.direction != Direction::Input || rp.kind != PortKind::Normal {
            return Err(BuildError::DirectionMismatch {
                context: ctx,
                port: s.reader.clone(),
                expected: "a normal input port",
            });
        }
        if wp.value_type != rp.value_type {
            return Err(BuildError::TypeMismatch {
                signal: s.name.clone(),
                writer: wp.value_type,
                reader: rp.value_type,
            });
        }
        bind(writer)?;
        bind(reader)?;
        signal_names.push(s.name.clone());
        signals.push(TdfSignal { writer, reader });
    }

    let mut endpoints: BTreeMap<&str, ()> = BTreeMap::new();
    let mut bindings = Vec::new();
    for b in &desc.converter_bindings {
        let ctx = format!("binding for endpoint `{}`", b.endpoint);
        if endpoints.insert(&b.endpoint, ()).is_some() {
            return Err(BuildError::DuplicateName {
                kind: "binding endpoint",
                name: b.endpoint.clone(),
            });
        }
        let port = resolve(&ctx, &b.port)?;
        if scratch.port(port).kind != PortKind::Converter {
            return Err(BuildError::DirectionMismatch {
                context: ctx,
                port: b.port.clone(),
                expected: "a converter port",
            });
        }
        bind(port)?;
        bindings.push(ConverterBinding {
            port,
            endpoint: b.endpoint.clone(),
        });
    }

    for (mi, m) in scratch.modules.iter().enumerate() {
        for (pi, p) in m.ports.iter().enumerate() {
            let r = PortRef { module: mi, port: pi };
            if !bound.contains_key(&r) {
                return Err(BuildError::UnboundPort {
                    module: m.name.clone(),
                    port: p.name.clone(),
                });
            }
        }
        m.behavior
            .validate(&m.shape())
            .map_err(|source| BuildError::BadBehavior {
                module: m.name.clone(),
                source,
            })?;
    }

    Ok(TdfCluster {
        signal_names,
        signals,
        bindings,
        ..scratch
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    fn port(name: &str, dir: Direction, kind: PortKind, ty: ValueType) -> PortDesc {
        PortDesc {
            name: name.into(),
            direction: dir,
            kind,
            rate: 1,
            delay: 0,
            timestep: None,
            value_type: ty,
        }
    }

    fn source_module(name: &str, ports: Vec<PortDesc>) -> ModuleDesc {
        ModuleDesc {
            name: name.into(),
            timestep: Some(SimTime::from_ms(1)),
            ports,
            behavior: BehaviorSpec::Constant { value: Value::Int(1) },
        }
    }

    fn sink_module(name: &str, ports: Vec<PortDesc>) -> ModuleDesc {
        ModuleDesc {
            name: name.into(),
            timestep: None,
            ports,
            behavior: BehaviorSpec::Duplicate,
        }
    }

    fn two_module_desc() -> ClusterDesc {
        ClusterDesc {
            name: "c".into(),
            modules: vec![
                source_module(
                    "A",
                    vec![port("out", Direction::Output, PortKind::Normal, ValueType::Int)],
                ),
                sink_module(
                    "B",
                    vec![
                        port("in", Direction::Input, PortKind::Normal, ValueType::Int),
                        port("cout", Direction::Output, PortKind::Converter, ValueType::Int),
                    ],
                ),
            ],
            signals: vec![SignalDesc {
                name: "s".into(),
                writer: "A.out".into(),
                reader: "B.in".into(),
            }],
            converter_bindings: vec![BindingDesc {
                port: "B.cout".into(),
                endpoint: "gpio0".into(),
            }],
        }
    }

    #[test]
    fn minimal_cluster_builds() {
        // one module, one converter output, no signals
        let desc = ClusterDesc {
            name: "c".into(),
            modules: vec![source_module(
                "M",
                vec![port("cout", Direction::Output, PortKind::Converter, ValueType::Int)],
            )],
            signals: vec![],
            converter_bindings: vec![BindingDesc {
                port: "M.cout".into(),
                endpoint: "gpio0".into(),
            }],
        };
        let c = build_cluster(&desc).unwrap();
        assert_eq!(c.signals.len(), 0);
        assert_eq!(c.bindings.len(), 1);
        assert_eq!(c.converter_ports().count(), 1);
    }

    #[test]
    fn two_module_chain_builds() {
        let c = build_cluster(&two_module_desc()).unwrap();
        assert_eq!(c.signals.len(), 1);
        let s = c.signals[0];
        assert_eq!(c.qualified(s.writer), "A.out");
        assert_eq!(c.qualified(s.reader), "B.in");
        assert_eq!(c.endpoint_of(c.resolve("B.cout").unwrap()), Some("gpio0"));
    }

    #[test]
    fn build_is_pure() {
        let desc = two_module_desc();
        assert_eq!(build_cluster(&desc).unwrap(), build_cluster(&desc).unwrap());
    }

    #[test]
    fn reader_must_be_input() {
        let mut desc = two_module_desc();
        desc.signals[0].reader = "B.cout".into();
        match build_cluster(&desc) {
            Err(BuildError::DirectionMismatch { port, .. }) => assert_eq!(port, "B.cout"),
            other => panic!("expected DirectionMismatch, got {:?}", other),
        }
    }

    #[test]
    fn unknown_port_reference() {
        let mut desc = two_module_desc();
        desc.signals[0].writer = "A.nope".into();
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::UnknownReference { .. })
        ));
    }

    #[test]
    fn type_mismatch_between_endpoints() {
        let mut desc = two_module_desc();
        desc.modules[1].ports[0].value_type = ValueType::Real;
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn unbound_normal_port_rejected() {
        let mut desc = two_module_desc();
        desc.signals.clear();
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::UnboundPort { .. })
        ));
    }

    #[test]
    fn double_binding_rejected() {
        let mut desc = two_module_desc();
        let extra = SignalDesc {
            name: "s2".into(),
            writer: "A.out".into(),
            reader: "B.in".into(),
        };
        desc.signals.push(extra);
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::DuplicateBinding { .. })
        ));
    }

    #[test]
    fn converter_port_cannot_join_a_signal() {
        let mut desc = two_module_desc();
        desc.modules[0].ports[0].kind = PortKind::Converter;
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::DirectionMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_module_name_rejected() {
        let mut desc = two_module_desc();
        desc.modules[1].name = "A".into();
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::DuplicateName { kind: "module", .. })
        ));
    }

    #[test]
    fn zero_rate_rejected() {
        let mut desc = two_module_desc();
        desc.modules[0].ports[0].rate = 0;
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::BadAttribute { .. })
        ));
    }

    #[test]
    fn behavior_shape_checked_at_build() {
        let mut desc = two_module_desc();
        // constant source with an input port
        desc.modules[1].behavior = BehaviorSpec::Constant { value: Value::Int(0) };
        assert!(matches!(
            build_cluster(&desc),
            Err(BuildError::BadBehavior { .. })
        ));
    }

    #[test]
    fn desc_json_round_trip() {
        let desc = two_module_desc();
        let text = serde_json::to_string_pretty(&desc).unwrap();
        let back: ClusterDesc = serde_json::from_str(&text).unwrap();
        assert_eq!(desc, back);
        // defaults stay out of the serialized form
        assert!(!text.contains("\"rate\""));
        assert!(!text.contains("\"delay\""));
    }
}
