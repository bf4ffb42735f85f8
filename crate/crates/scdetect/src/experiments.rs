//! Calibration, accuracy and leakage experiments over generated corpora.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scdetect_core::calibration::{calibrate_thresholds, calibrate_window_bounds, RunSummary};
use scdetect_core::simkernel::{SimEventKind, SimReport};
use scdetect_core::workloads::presets::{
    CALIB_BENIGN, CALIB_DIRECT, CALIB_INDIRECT, EVAL_BENIGN, EVAL_DIRECT, EVAL_INDIRECT, VICTIM,
};
use scdetect_core::workloads::{apply_noise, generate, preset, NoiseCoefficients};
use scdetect_core::{
    run_simulation, Calibration, CalibrationError, Cycles, Scenario, SimError, Thresholds, Trace,
    Verdict, WindowBounds, WindowConfig, WorkloadLabel,
};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Gamma};

/// Size of the secret in the leakage experiment.
pub const SECRET_BYTES: u32 = 256;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown workload preset `{0}`")]
    UnknownPreset(String),
    #[error("workload generation failed: {0}")]
    Generation(#[from] scdetect_core::workloads::GenError),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
}

/// Per-trace seeds drawn in order from one stream of the run seed.
pub struct SeedStream(ChaCha8Rng);

impl SeedStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_seed(&mut self) -> u64 {
        self.0.random()
    }
}

const CALIBRATION_STREAM: u64 = 1;
const CORPUS_STREAM: u64 = 2;
const LEAKAGE_STREAM: u64 = 3;

pub fn noise(cfg: &ExperimentConfig) -> NoiseCoefficients {
    match cfg.noise.as_str() {
        "none" => NoiseCoefficients::NONE,
        name => NoiseCoefficients::cpu_preset(name).unwrap_or_default(),
    }
}

/// Generates one noisy trace of a named preset.
pub fn generate_preset(
    name: &str,
    seed: u64,
    horizon: Cycles,
    noise: &NoiseCoefficients,
) -> Result<Trace, ExperimentError> {
    let profile = preset(name).ok_or_else(|| ExperimentError::UnknownPreset(name.into()))?;
    let (trace, _) = generate(&profile, seed, horizon)?;
    // coefficients come from presets or NONE, both valid
    Ok(apply_noise(&trace, noise, seed ^ 0x5eed).expect("valid noise coefficients"))
}

pub struct CalibrationOutcome {
    pub calibration: Calibration,
    pub bounds: WindowBounds,
    pub runs: usize,
}

/// Calibration traces as `(run id, trace)`; run ids are `<preset>#<k>`.
pub fn calibration_traces(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(String, Trace)>, ExperimentError> {
    let mut seeds = SeedStream::new(seed, CALIBRATION_STREAM);
    let noise = noise(cfg);
    let mut out = Vec::new();
    for (names, runs) in [
        (&CALIB_BENIGN[..], cfg.calib_benign),
        (&CALIB_DIRECT[..], cfg.calib_direct),
        (&CALIB_INDIRECT[..], cfg.calib_indirect),
    ] {
        for name in names {
            for k in 0..runs {
                let t = generate_preset(name, seeds.next_seed(), cfg.calib_horizon, &noise)?;
                out.push((format!("{name}#{k}"), t));
            }
        }
    }
    Ok(out)
}

pub fn calibrate(cfg: &ExperimentConfig, seed: u64) -> Result<CalibrationOutcome, ExperimentError> {
    let traces = calibration_traces(cfg, seed)?;
    let mut corpus = scdetect_core::CalibrationCorpus::default();
    let mut probes = Vec::new();
    for (id, t) in &traces {
        let s = RunSummary::from_trace(id.clone(), t, cfg.calib_width);
        match t.label {
            WorkloadLabel::Benign => {
                corpus.benign_runs.push(s);
                probes.push(t.clone());
            }
            WorkloadLabel::DirectAttack => corpus.direct_attack_runs.push(s),
            WorkloadLabel::IndirectAttack => corpus.indirect_attack_runs.push(s),
        }
    }
    let calibration = calibrate_thresholds(&corpus)?;
    Ok(CalibrationOutcome {
        calibration,
        bounds: calibrate_window_bounds(&probes),
        runs: traces.len(),
    })
}

/// Thresholds from the configured file, or calibrated inline.
pub fn thresholds(cfg: &ExperimentConfig, seed: u64) -> Result<Thresholds, crate::CliError> {
    match &cfg.thresholds {
        Some(p) => crate::thresholds_io::load_thresholds(p)
            .map_err(|e| crate::CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(calibrate(cfg, seed)?.calibration.thresholds),
    }
}

/// The evaluation corpus: benign, direct and indirect traces cycling through
/// the evaluation presets of each class.
pub fn evaluation_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Trace>, ExperimentError> {
    let mut seeds = SeedStream::new(seed, CORPUS_STREAM);
    let noise = noise(cfg);
    let mut out = Vec::new();
    for (names, n) in [
        (&EVAL_BENIGN[..], cfg.corpus_benign),
        (&EVAL_DIRECT[..], cfg.corpus_direct),
        (&EVAL_INDIRECT[..], cfg.corpus_indirect),
    ] {
        for i in 0..n {
            out.push(generate_preset(
                names[i % names.len()],
                seeds.next_seed(),
                cfg.horizon,
                &noise,
            )?);
        }
    }
    Ok(out)
}

pub fn scenario(
    cfg: &ExperimentConfig,
    workloads: Vec<Trace>,
    thresholds: Thresholds,
    gamma: Gamma,
) -> Result<Scenario, ConfigError> {
    Ok(Scenario {
        workloads,
        topology: cfg.topology()?,
        detector: cfg.detector(thresholds, gamma),
        policy: cfg.mitigation_policy(),
        quantum: cfg.quantum,
        horizon: None,
    })
}

/// Suspected and total workloads per class, for one gamma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub gamma: Gamma,
    /// `(suspected, total)` per class.
    pub classes: BTreeMap<WorkloadLabel, (usize, usize)>,
}

impl Confusion {
    pub fn from_report(gamma: Gamma, report: &SimReport) -> Self {
        let mut c = Self::empty(gamma);
        for o in &report.outcomes {
            let e = c.classes.entry(o.label).or_default();
            e.1 += 1;
            if o.suspected {
                e.0 += 1;
            }
        }
        c
    }

    fn empty(gamma: Gamma) -> Self {
        Self {
            gamma,
            classes: WorkloadLabel::ALL
                .into_iter()
                .map(|l| (l, (0, 0)))
                .collect(),
        }
    }

    pub fn false_positives(&self) -> usize {
        self.classes[&WorkloadLabel::Benign].0
    }

    pub fn false_negatives(&self) -> usize {
        self.classes
            .iter()
            .filter(|(l, _)| l.is_attack())
            .map(|(_, (s, n))| n - s)
            .sum()
    }
}

/// One system-wide simulation of the whole corpus per gamma.
pub fn evaluate(
    cfg: &ExperimentConfig,
    corpus: &[Trace],
    thresholds: Thresholds,
) -> Result<Vec<Confusion>, ExperimentError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &g in &cfg.gamma {
        if corpus.is_empty() {
            out.push(Confusion::empty(g));
            continue;
        }
        let sc = scenario(cfg, corpus.to_vec(), thresholds, g)?;
        out.push(Confusion::from_report(g, &run_simulation(&sc)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeakageRow {
    pub gamma: Gamma,
    pub victim_delay_us: u64,
    pub extracted: u32,
}

/// Bytes of the secret extracted by process `attacker` before detection.
///
/// Each suspicious verdict of the attacker up to and including the one that
/// raises suspicion extracts `k` bytes, limited by what the victim has read so
/// far: one byte every `delay_cycles`.
pub fn extracted_bytes(report: &SimReport, attacker: u32, k: u32, delay_cycles: Cycles) -> u32 {
    let mut got = 0u32;
    for e in report.events_of(attacker) {
        match e.kind {
            SimEventKind::VerdictComputed { predicates, .. }
                if predicates.verdict() == Verdict::Suspicious =>
            {
                let read = (e.timestamp / delay_cycles).min(SECRET_BYTES as u64) as u32;
                got += k.min(read.saturating_sub(got));
            }
            SimEventKind::SuspicionRaised { .. } => break,
            _ => {}
        }
        if got == SECRET_BYTES {
            break;
        }
    }
    got
}

/// Attacker and victim run side by side with fixed-width windows.
pub fn leakage(
    cfg: &ExperimentConfig,
    thresholds: Thresholds,
    seed: u64,
) -> Result<Vec<LeakageRow>, ExperimentError> {
    cfg.validate()?;
    let mut seeds = SeedStream::new(seed, LEAKAGE_STREAM);
    let noise = noise(cfg);
    let attacker = generate_preset(
        &cfg.leakage_attack,
        seeds.next_seed(),
        cfg.leakage_horizon,
        &noise,
    )?;
    let victim = generate_preset(VICTIM, seeds.next_seed(), cfg.leakage_horizon, &noise)?;

    let mut rows = Vec::new();
    for &g in &cfg.gamma {
        let mut sc = scenario(cfg, vec![attacker.clone(), victim.clone()], thresholds, g)?;
        sc.detector.window = WindowConfig {
            early_eval_fraction: cfg.early_eval_fraction,
            ..WindowConfig::fixed(cfg.leakage_window)
        };
        let report = run_simulation(&sc)?;
        // the attacker's root thread is the first process
        for &d in &cfg.victim_delay_us {
            rows.push(LeakageRow {
                gamma: g,
                victim_delay_us: d,
                extracted: extracted_bytes(&report, 0, cfg.bytes_per_window, d * cfg.cycles_per_us),
            });
        }
    }
    Ok(rows)
}
