//! Subcommand implementations. Each writes its reports under `out` and
//! returns a short human-readable summary.

use std::fs;
use std::path::{Path, PathBuf};

use scdetect_core::{run_simulation, Cycles, SimReport, Trace};

use crate::config::ExperimentConfig;
use crate::experiments::{self, generate_preset, SeedStream};
use crate::report;
use crate::thresholds_io::{format_thresholds, format_window_bounds};
use crate::trace_io::{load_trace, save_trace};
use crate::CliError;

const PRESET_STREAM: u64 = 4;

fn write(out: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out)?;
    let p = out.join(name);
    fs::write(&p, text)?;
    Ok(p)
}

pub fn calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(0);
    let r = experiments::calibrate(cfg, seed)?;
    let header = cfg.header();
    write(
        out,
        "thresholds.txt",
        &format_thresholds(&r.calibration.thresholds),
    )?;
    write(out, "window_bounds.txt", &format_window_bounds(&r.bounds))?;
    write(
        out,
        "calibration_audit.csv",
        &report::audit_csv(&header, &r.calibration.audit),
    )?;

    let mut s = format!("calibrated from {} runs\n", r.runs);
    for a in &r.calibration.audit {
        s.push_str(&format!(
            "{} ({}): {} mean {:.6}, benign mean {:.6} -> {}/{}\n",
            a.name,
            a.metric,
            a.attack_category,
            a.attack_mean_f64(),
            a.benign_mean_f64(),
            a.value.numer(),
            a.value.denom()
        ));
    }
    s.push_str(&format!(
        "window bounds: w_min={} w_max={}{}\n",
        r.bounds.w_min,
        r.bounds.w_max,
        if r.bounds.fallback {
            " (no stable width, defaults)"
        } else {
            ""
        }
    ));
    Ok(s)
}

/// Generates one preset trace; `output` defaults to `<out>/<preset>.scdtrace`.
pub fn gen_trace(
    cfg: &ExperimentConfig,
    out: &Path,
    output: Option<&Path>,
) -> Result<String, CliError> {
    cfg.validate()?;
    let mut seeds = SeedStream::new(cfg.seed.unwrap_or(0), PRESET_STREAM);
    let t = generate_preset(
        &cfg.preset,
        seeds.next_seed(),
        cfg.horizon,
        &experiments::noise(cfg),
    )?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            fs::create_dir_all(out)?;
            out.join(format!("{}.scdtrace", cfg.preset))
        }
    };
    save_trace(&t, &path)?;
    Ok(format!(
        "wrote {} ({} records, {} forks, {} cycles)\n",
        path.display(),
        t.records.len(),
        t.fork_count(),
        t.total_cycles()
    ))
}

/// Trace files first, then generated presets in order.
pub fn load_workloads(
    cfg: &ExperimentConfig,
    seed: u64,
    files: &[PathBuf],
    presets: &[String],
) -> Result<Vec<Trace>, CliError> {
    let mut out = Vec::new();
    for f in files {
        out.push(load_trace(f).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?);
    }
    let mut seeds = SeedStream::new(seed, PRESET_STREAM);
    let noise = experiments::noise(cfg);
    for p in presets {
        out.push(generate_preset(p, seeds.next_seed(), cfg.horizon, &noise)?);
    }
    Ok(out)
}

pub fn simulate(
    cfg: &ExperimentConfig,
    workloads: Vec<Trace>,
    horizon: Option<Cycles>,
) -> Result<SimReport, CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let thresholds = experiments::thresholds(cfg, seed)?;
    let mut sc = experiments::scenario(cfg, workloads, thresholds, cfg.gamma[0])?;
    sc.horizon = horizon;
    run_simulation(&sc).map_err(|e| experiments::ExperimentError::from(e).into())
}

pub fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    files: &[PathBuf],
    presets: &[String],
    horizon: Option<Cycles>,
) -> Result<String, CliError> {
    let seed = cfg.require_seed()?;
    let workloads = load_workloads(cfg, seed, files, presets)?;
    if workloads.is_empty() {
        return Err(CliError::Config(
            "no workloads given (trace files or --preset)".into(),
        ));
    }
    let r = simulate(cfg, workloads.clone(), horizon)?;
    check_report(&r)?;
    let header = cfg.header();
    write(out, "events.csv", &report::events_csv(&header, &r))?;
    write(
        out,
        "processes.csv",
        &report::processes_csv(&header, &r, &workloads),
    )?;
    write(out, "ledger.csv", &report::ledger_csv(&header, &r))?;
    let suspected = r.processes.iter().filter(|p| p.ever_suspected).count();
    Ok(format!(
        "{} processes, {} suspected, {} events, mitigation cycles {}\n",
        r.processes.len(),
        suspected,
        r.events.len(),
        r.ledger.totals.total()
    ))
}

/// Report-level invariants; a failure is an internal error.
pub fn check_report(r: &SimReport) -> Result<(), CliError> {
    let mut last = vec![0; r.events.iter().map(|e| e.core + 1).max().unwrap_or(0)];
    for e in &r.events {
        if e.timestamp < last[e.core] {
            return Err(CliError::Internal(format!(
                "event log not monotone on core {}",
                e.core
            )));
        }
        last[e.core] = e.timestamp;
    }
    let sum: Cycles = r.ledger.per_process.values().map(|c| c.total()).sum();
    if sum != r.ledger.totals.total() {
        return Err(CliError::Internal(
            "overhead ledger does not balance".into(),
        ));
    }
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let thresholds = experiments::thresholds(cfg, seed)?;
    let corpus = experiments::evaluation_corpus(cfg, seed)?;
    let rows = experiments::evaluate(cfg, &corpus, thresholds)?;
    let header = cfg.header();
    write(out, "confusion.csv", &report::confusion_csv(&header, &rows))?;
    write(
        out,
        "summary.csv",
        &report::confusion_summary_csv(&header, &rows),
    )?;
    let mut s = String::new();
    for c in &rows {
        s.push_str(&format!(
            "gamma={}: false positives {}, false negatives {}\n",
            c.gamma,
            c.false_positives(),
            c.false_negatives()
        ));
    }
    Ok(s)
}

pub fn leakage(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let thresholds = experiments::thresholds(cfg, seed)?;
    let rows = experiments::leakage(cfg, thresholds, seed)?;
    if let Some(r) = rows
        .iter()
        .find(|r| r.extracted > experiments::SECRET_BYTES)
    {
        return Err(CliError::Internal(format!(
            "extracted {} bytes",
            r.extracted
        )));
    }
    write(
        out,
        "leakage.csv",
        &report::leakage_csv(&cfg.header(), &rows),
    )?;
    let mut s = String::new();
    for r in &rows {
        s.push_str(&format!(
            "gamma={} victim_delay_us={}: {}/{} bytes\n",
            r.gamma,
            r.victim_delay_us,
            r.extracted,
            experiments::SECRET_BYTES
        ));
    }
    Ok(s)
}
