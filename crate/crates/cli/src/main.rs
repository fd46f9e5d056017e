//! Command line front end: validate and schedule models, run coupled
//! simulations, generate case-study models, and summarize traces.
//!
//! Exit codes: 0 ok, 2 validation or schema error, 3 causality
//! violation, 4 deadlock, 5 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdfsim_core::casestudy::{build_braking_model, build_scaled_model, BrakingModelParams};
use tdfsim_core::cosim::run_cosimulation;
use tdfsim_core::model::{
    parse_model, prepare_simulation, serialize_model, validate_model, write_traces, ModelDocument,
    PrepareError,
};
use tdfsim_core::sched::{
    compute_schedule, infer_timesteps, validation_report, ScheduleError, ValidationOutcome,
};
use tdfsim_core::SimTime;

const EXIT_VALIDATION: u8 = 2;
const EXIT_CAUSALITY: u8 = 3;
const EXIT_DEADLOCK: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

#[derive(Parser)]
#[command(name = "tdfsim", version, about = "TDF/DE co-simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model end to end: attributes, schedule, causality.
    Validate { model: PathBuf },
    /// Print the static schedule of every cluster.
    Schedule {
        model: PathBuf,
        /// Restrict output to one cluster.
        #[arg(long)]
        cluster: Option<String>,
    },
    /// Run the coupled simulation and write a trace directory.
    Simulate {
        model: PathBuf,
        /// Random seed; defaults to the model's `simulation.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Horizon with a unit suffix (ps|ns|us|ms|s); defaults to the
        /// model's `simulation.until`.
        #[arg(long)]
        until: Option<String>,
        #[arg(long, value_name = "DIR")]
        trace_dir: PathBuf,
    },
    /// Generate a case-study model file.
    Scale {
        #[arg(long, default_value_t = 5)]
        sensors: u32,
        #[arg(long, default_value_t = 4)]
        cpus: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Emit the full active-braking pipeline instead of the plain
        /// sensor sweep.
        #[arg(long)]
        braking: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the statistics summary of a trace directory.
    Stats { trace_dir: PathBuf },
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        msg: msg.into(),
    }
}

/// Prints to stdout, treating a closed pipe (`tdfsim ... | head`) as a
/// normal early exit rather than a panic.
fn emit(text: impl AsRef<str>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_ref().as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(EXIT_RUNTIME as i32);
    }
}

fn emitln(text: impl AsRef<str>) {
    emit(text.as_ref());
    emit("\n");
}

fn load_model(path: &Path) -> Result<ModelDocument, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(EXIT_VALIDATION, format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| fail(EXIT_VALIDATION, e.to_string()))
}

/// Severity order across clusters: schema/attribute problems trump
/// deadlocks, which trump causality violations.
fn outcome_code(outcome: ValidationOutcome) -> u8 {
    match outcome {
        ValidationOutcome::Valid => 0,
        ValidationOutcome::Inconsistent | ValidationOutcome::Underdetermined => EXIT_VALIDATION,
        ValidationOutcome::Deadlock => EXIT_DEADLOCK,
        ValidationOutcome::CausalityViolation => EXIT_CAUSALITY,
    }
}

fn severity(code: u8) -> u8 {
    match code {
        EXIT_VALIDATION => 3,
        EXIT_DEADLOCK => 2,
        EXIT_CAUSALITY => 1,
        _ => 0,
    }
}

fn cmd_validate(model: &Path) -> Result<(), Failure> {
    let doc = load_model(model)?;
    let clusters = validate_model(&doc).map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
    let mut worst = 0u8;
    for c in &clusters {
        let (text, outcome) = validation_report(c);
        emit(&text);
        let code = outcome_code(outcome);
        if severity(code) > severity(worst) {
            worst = code;
        }
    }
    if worst == 0 {
        Ok(())
    } else {
        Err(fail(worst, "validation failed"))
    }
}

fn cmd_schedule(model: &Path, only: Option<&str>) -> Result<(), Failure> {
    let doc = load_model(model)?;
    let clusters = validate_model(&doc).map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
    if let Some(name) = only {
        if !clusters.iter().any(|c| c.name == name) {
            return Err(fail(EXIT_VALIDATION, format!("no cluster named `{name}`")));
        }
    }
    for c in clusters.iter().filter(|c| only.is_none_or(|n| c.name == n)) {
        let annotated =
            infer_timesteps(c).map_err(|e| fail(EXIT_VALIDATION, format!("{}: {e}", c.name)))?;
        let schedule = compute_schedule(&annotated).map_err(|e| {
            let code = match e {
                ScheduleError::Deadlock { .. } => EXIT_DEADLOCK,
                _ => EXIT_RUNTIME,
            };
            fail(code, format!("{}: {e}", c.name))
        })?;
        emitln(format!("cluster {}", c.name));
        emitln(format!("hyperperiod {}", schedule.hyperperiod));
        for a in &schedule.order {
            let m = &annotated.modules[a.module];
            let start = SimTime::from_ps(a.k * m.timestep.expect("annotated").as_ps());
            emitln(format!("fire {} k={} t={}", m.name, a.k, start));
        }
        for acc in &schedule.converter_accesses {
            emitln(format!(
                "access {} k={} j={} t={} {}",
                annotated.qualified(acc.port),
                acc.k,
                acc.j,
                acc.time,
                acc.direction
            ));
        }
    }
    Ok(())
}

fn cmd_simulate(
    model: &Path,
    seed: Option<u64>,
    until: Option<&str>,
    trace_dir: &Path,
) -> Result<(), Failure> {
    let doc = load_model(model)?;
    let prepared = prepare_simulation(&doc).map_err(|e| {
        let code = match &e {
            PrepareError::Model(_) | PrepareError::Infer { .. } => EXIT_VALIDATION,
            PrepareError::Schedule {
                source: ScheduleError::Deadlock { .. },
                ..
            } => EXIT_DEADLOCK,
            PrepareError::Schedule { .. } => EXIT_RUNTIME,
            PrepareError::Causality { .. } => EXIT_CAUSALITY,
        };
        let mut msg = e.to_string();
        if let PrepareError::Causality { report, .. } = &e {
            for (port, d) in &report.suggested_delays {
                msg.push_str(&format!("\nsuggest {port} +{d}"));
            }
        }
        fail(code, msg)
    })?;

    let seed = seed
        .or_else(|| doc.simulation.as_ref().map(|s| s.seed))
        .unwrap_or(0);
    let until = match until {
        Some(text) => text
            .parse::<SimTime>()
            .map_err(|e| fail(EXIT_VALIDATION, format!("--until {text}: {e}")))?,
        None => doc
            .simulation
            .as_ref()
            .and_then(|s| s.until)
            .ok_or_else(|| {
                fail(
                    EXIT_VALIDATION,
                    "no horizon: pass --until or set simulation.until in the model",
                )
            })?,
    };
    if until == SimTime::ZERO {
        return Err(fail(EXIT_VALIDATION, "horizon must be positive"));
    }

    let traces = run_cosimulation(&doc.platform, &prepared, seed, until)
        .map_err(|e| fail(EXIT_RUNTIME, e.to_string()))?;
    let files = write_traces(&traces, trace_dir)
        .map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", trace_dir.display())))?;
    emitln(format!(
        "wrote {} files to {} (seed {seed}, until {until})",
        files.len(),
        trace_dir.display()
    ));
    Ok(())
}

fn cmd_scale(sensors: u32, cpus: u32, seed: u64, braking: bool, out: &Path) -> Result<(), Failure> {
    let doc = if braking {
        build_braking_model(&BrakingModelParams {
            sensor_count: sensors,
            cpu_count: cpus,
            seed,
            ..BrakingModelParams::default()
        })
    } else {
        build_scaled_model(sensors, cpus, seed)
    }
    .map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
    fs::write(out, serialize_model(&doc))
        .map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", out.display())))?;
    emitln(format!("{}", out.display()));
    Ok(())
}

fn cmd_stats(trace_dir: &Path) -> Result<(), Failure> {
    let path = trace_dir.join("stats.txt");
    let text = fs::read_to_string(&path)
        .map_err(|e| fail(EXIT_RUNTIME, format!("{}: {e}", path.display())))?;
    emit(&text);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Validate { model } => cmd_validate(model),
        Cmd::Schedule { model, cluster } => cmd_schedule(model, cluster.as_deref()),
        Cmd::Simulate {
            model,
            seed,
            until,
            trace_dir,
        } => cmd_simulate(model, *seed, until.as_deref(), trace_dir),
        Cmd::Scale {
            sensors,
            cpus,
            seed,
            braking,
            out,
        } => cmd_scale(*sensors, *cpus, *seed, *braking, out),
        Cmd::Stats { trace_dir } => cmd_stats(trace_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
