//! Whole-model documents: one JSON file holding the dataflow clusters,
//! the platform they couple to, and simulation defaults. Also the
//! writers that turn a finished run into a trace directory.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cosim::TraceSet;
use crate::platform::{Platform, PlatformDesc};
use crate::sched::{
    analyze_causality, compute_schedule, infer_timesteps, CausalityReport, InferError,
    ScheduleError, StaticSchedule,
};
use crate::tdf::{build_cluster, BuildError, ClusterDesc, TdfCluster};
use crate::time::SimTime;

pub const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDesc {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterDesc>,
    #[serde(default)]
    pub platform: PlatformDesc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationDesc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported model version {found} (this build reads version {SUPPORTED_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("duplicate cluster name `{0}`")]
    DuplicateCluster(String),
    #[error("cluster `{cluster}`: {source}")]
    Cluster { cluster: String, source: BuildError },
    #[error(transparent)]
    Platform(#[from] crate::platform::PlatformBuildError),
    #[error("cluster `{cluster}` binds `{endpoint}`, which is not a declared gpio endpoint")]
    UnknownEndpoint { cluster: String, endpoint: String },
    #[error("endpoint `{endpoint}` is bound by more than one converter port")]
    EndpointReused { endpoint: String },
    #[error("gpio endpoint `{endpoint}` is not bound by any converter port")]
    UnboundEndpoint { endpoint: String },
}

/// Reads a document from JSON text. Syntax and schema problems keep
/// serde's line/column context in the message.
pub fn parse_model(text: &str) -> Result<ModelDocument, ModelError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ModelError::Schema(e.to_string()),
        _ => ModelError::Syntax(e.to_string()),
    })
}

pub fn serialize_model(doc: &ModelDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("document serializes");
    s.push('\n');
    s
}

/// Structural validation of the whole document: clusters build, the
/// platform builds, and converter bindings pair one-to-one with the
/// declared gpio endpoints.
pub fn validate_model(doc: &ModelDocument) -> Result<Vec<TdfCluster>, ModelError> {
    if doc.version != SUPPORTED_VERSION {
        return Err(ModelError::UnsupportedVersion { found: doc.version });
    }

    let mut clusters = Vec::new();
    for cd in &doc.clusters {
        if clusters.iter().any(|c: &TdfCluster| c.name == cd.name) {
            return Err(ModelError::DuplicateCluster(cd.name.clone()));
        }
        let built = build_cluster(cd).map_err(|source| ModelError::Cluster {
            cluster: cd.name.clone(),
            source,
        })?;
        clusters.push(built);
    }

    // the seed only feeds task RNG streams, not structure checks
    Platform::new(&doc.platform, 0)?;

    let gpio_names: Vec<&str> = doc.platform.gpios.iter().map(|g| g.name.as_str()).collect();
    let mut bound: Vec<&str> = Vec::new();
    for c in &clusters {
        for b in &c.bindings {
            if !gpio_names.contains(&b.endpoint.as_str()) {
                return Err(ModelError::UnknownEndpoint {
                    cluster: c.name.clone(),
                    endpoint: b.endpoint.clone(),
                });
            }
            if bound.contains(&b.endpoint.as_str()) {
                return Err(ModelError::EndpointReused {
                    endpoint: b.endpoint.clone(),
                });
            }
            bound.push(&b.endpoint);
        }
    }
    for g in &gpio_names {
        if !bound.contains(g) {
            return Err(ModelError::UnboundEndpoint {
                endpoint: g.to_string(),
            });
        }
    }

    Ok(clusters)
}

/// Why a validated document still cannot be simulated.
#[derive(Debug, thiserror::Error)]
pub enum PrepareError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cluster `{cluster}`: {source}")]
    Infer { cluster: String, source: InferError },
    #[error("cluster `{cluster}`: {source}")]
    Schedule {
        cluster: String,
        source: ScheduleError,
    },
    #[error("cluster `{cluster}`: converter access order violates causality")]
    Causality {
        cluster: String,
        report: CausalityReport,
    },
}

/// Full static pipeline: build, infer attributes, schedule, check
/// causality — everything that must hold before time starts moving.
pub fn prepare_simulation(
    doc: &ModelDocument,
) -> Result<Vec<(TdfCluster, StaticSchedule)>, PrepareError> {
    let clusters = validate_model(doc)?;
    let mut prepared = Vec::new();
    for c in clusters {
        let name = c.name.clone();
        let annotated = infer_timesteps(&c).map_err(|source| PrepareError::Infer {
            cluster: name.clone(),
            source,
        })?;
        let schedule = compute_schedule(&annotated).map_err(|source| PrepareError::Schedule {
            cluster: name.clone(),
            source,
        })?;
        let causality = analyze_causality(&annotated, &schedule);
        if !causality.ok {
            return Err(PrepareError::Causality {
                cluster: name,
                report: causality,
            });
        }
        prepared.push((annotated, schedule));
    }
    Ok(prepared)
}

/// Renders the end-of-run summary written to `stats.txt`.
pub fn trace_statistics(ts: &TraceSet) -> String {
    let mut out = String::new();
    let mut w = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    w(format!("initiators {}", ts.initiators));
    w(format!("targets {}", ts.targets));
    w(format!("de_events {}", ts.de_events));
    w(format!("exchanges {}", ts.audit.exchanges));
    w(format!(
        "audit_violations {}",
        ts.audit.stale_event_violations
    ));
    w(format!("monotone {}", if ts.audit.monotone { 1 } else { 0 }));
    for (name, n) in &ts.target_traffic {
        w(format!("target {} transactions {}", name, n));
    }
    for (name, pushes, pops, residual) in &ts.gpio_conservation {
        w(format!(
            "gpio {} pushes {} pops {} residual {}",
            name, pushes, pops, residual
        ));
    }
    for ((cluster, signal), s) in &ts.signal_conservation {
        w(format!(
            "signal {}.{} produced {} consumed {} buffered {}",
            cluster, signal, s.produced, s.consumed, s.buffered
        ));
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Writes the whole trace directory. Every file is byte-deterministic
/// for a fixed (model, seed) pair.
pub fn write_traces(ts: &TraceSet, dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for ((cluster, signal), samples) in &ts.signals {
        let mut csv = String::from("timestamp_ps,value\n");
        for (t, v) in samples {
            csv.push_str(&format!("{},{}\n", t.as_ps(), v));
        }
        written.push(write_file(
            dir,
            &format!("signal_{}__{}.csv", cluster, signal),
            &csv,
        )?);
    }

    for (endpoint, samples) in &ts.gpio_streams {
        let mut csv = String::from("timestamp_ps,value\n");
        for (t, v) in samples {
            csv.push_str(&format!("{},{}\n", t.as_ps(), v));
        }
        written.push(write_file(dir, &format!("gpio_{}.csv", endpoint), &csv)?);
    }

    let mut per_task: BTreeMap<&str, String> = BTreeMap::new();
    for r in &ts.task_reads {
        per_task
            .entry(&r.task)
            .or_insert_with(|| String::from("timestamp_ps,source,value\n"))
            .push_str(&format!("{},{},{}\n", r.time.as_ps(), r.source, r.value));
    }
    for (task, csv) in &per_task {
        written.push(write_file(dir, &format!("task_{}.csv", task), csv)?);
    }

    let mut log = ts.events_log.join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    written.push(write_file(dir, "events.log", &log)?);
    written.push(write_file(dir, "stats.txt", &trace_statistics(ts))?);
    Ok(written)
}
