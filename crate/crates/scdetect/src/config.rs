//! Flat `key=value` experiment configuration.
//!
//! Every key has a default; a config file and command-line flags override
//! them in that order. [`ExperimentConfig::echo`] lists the effective values
//! in a fixed order for report headers.

use std::fs;
use std::path::{Path, PathBuf};

use scdetect_core::mitigation::CostModel;
use scdetect_core::simkernel::{DetectorConfig, MachineTopology, TopologyError};
use scdetect_core::{Cycles, Fraction, MitigationPolicy, ScoreConfig, Thresholds, WindowConfig};
use thiserror::Error;

use crate::thresholds_io::parse_fraction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{origin}: line {line}: expected key=value")]
    Syntax { origin: String, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("a seed is required (--seed N or seed=N)")]
    MissingSeed,
    #[error("gamma list is empty")]
    NoGamma,
    #[error("invalid topology: {0}")]
    Topology(TopologyError),
    #[error("{0}")]
    Invalid(String),
}

/// A gamma value; `inf` disables detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gamma(pub u32);

impl Gamma {
    pub const INF: Gamma = Gamma(ScoreConfig::GAMMA_DISABLED);

    pub fn parse(s: &str) -> Option<Gamma> {
        match s.trim() {
            "inf" | "off" => Some(Gamma::INF),
            v => v
                .parse()
                .ok()
                .filter(|g| *g > 0 && *g != u32::MAX)
                .map(Gamma),
        }
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == Gamma::INF {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

pub fn parse_gamma_list(s: &str) -> Option<Vec<Gamma>> {
    let mut v: Vec<Gamma> = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(Gamma::parse)
        .collect::<Option<_>>()?;
    v.sort();
    v.dedup();
    Some(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub alpha: u32,
    pub beta: u32,
    pub gamma: Vec<Gamma>,
    pub sticky: bool,
    pub w_min: Cycles,
    pub w_max: Cycles,
    pub shrink_trigger: Fraction,
    pub grow_trigger: Fraction,
    pub early_eval_fraction: Fraction,
    pub quantum: Cycles,
    pub cores: usize,
    pub cores_per_domain: usize,
    pub policy: String,
    pub cost_llc_flush: Cycles,
    pub cost_mode_switch: Cycles,
    pub cost_migration: Cycles,
    pub cost_ipi: Cycles,
    pub thresholds: Option<PathBuf>,
    /// CPU noise preset name or `none`.
    pub noise: String,
    pub corpus_benign: usize,
    pub corpus_direct: usize,
    pub corpus_indirect: usize,
    pub horizon: Cycles,
    /// Runs per calibration profile, by category.
    pub calib_benign: usize,
    pub calib_direct: usize,
    pub calib_indirect: usize,
    pub calib_horizon: Cycles,
    pub calib_width: Cycles,
    pub leakage_attack: String,
    pub victim_delay_us: Vec<u64>,
    pub bytes_per_window: u32,
    pub leakage_window: Cycles,
    pub leakage_horizon: Cycles,
    pub cycles_per_us: u64,
    pub preset: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let costs = CostModel::default();
        Self {
            seed: None,
            alpha: 1,
            beta: 1,
            gamma: vec![Gamma(1), Gamma(10), Gamma(50), Gamma(100)],
            sticky: true,
            w_min: WindowConfig::DEFAULT_W_MIN,
            w_max: WindowConfig::DEFAULT_W_MAX,
            shrink_trigger: Fraction::new(1, 2),
            grow_trigger: Fraction::new(1, 10),
            early_eval_fraction: Fraction::new(1, 2),
            quantum: scdetect_core::simkernel::DEFAULT_QUANTUM,
            cores: 4,
            cores_per_domain: 2,
            policy: "te+sc".into(),
            cost_llc_flush: costs.llc_flush,
            cost_mode_switch: costs.mode_switch,
            cost_migration: costs.migration,
            cost_ipi: costs.ipi_per_core,
            thresholds: None,
            noise: "i7-6700HQ".into(),
            corpus_benign: 60,
            corpus_direct: 20,
            corpus_indirect: 20,
            horizon: 1 << 30,
            calib_benign: 3,
            calib_direct: 3,
            calib_indirect: 3,
            calib_horizon: 1 << 27,
            calib_width: 1 << 20,
            leakage_attack: "flush_reload".into(),
            victim_delay_us: vec![250, 1000, 2000],
            bytes_per_window: 1,
            leakage_window: 1 << 20,
            leakage_horizon: 1 << 30,
            cycles_per_us: 1000,
            preset: "steady_compute".into(),
        }
    }
}

/// Integer, optionally written as `2^N`.
pub fn parse_u64(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.split_once('^') {
        Some(("2", e)) => 1u64.checked_shl(e.trim().parse().ok()?),
        Some(_) => None,
        None => s.replace('_', "").parse().ok(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn frac(f: &Fraction) -> String {
    format!("{}/{}", f.numer(), f.denom())
}

impl ExperimentConfig {
    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        let int = || parse_u64(value).ok_or_else(|| bad("expected a non-negative integer"));
        let small = || int().and_then(|v| u32::try_from(v).map_err(|_| bad("too large")));
        let count = || int().map(|v| v as usize);
        let fraction = || parse_fraction(value).ok_or_else(|| bad("expected n/d"));
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = Some(int()?),
            "alpha" => self.alpha = small()?,
            "beta" => self.beta = small()?,
            "gamma" => {
                self.gamma = parse_gamma_list(v)
                    .ok_or_else(|| bad("expected a list of positive integers or inf"))?
            }
            "sticky" => self.sticky = parse_bool(v).ok_or_else(|| bad("expected true or false"))?,
            "w_min" => self.w_min = int()?,
            "w_max" => self.w_max = int()?,
            "shrink_trigger" => self.shrink_trigger = fraction()?,
            "grow_trigger" => self.grow_trigger = fraction()?,
            "early_eval_fraction" => self.early_eval_fraction = fraction()?,
            "quantum" => self.quantum = int()?,
            "cores" => self.cores = count()?,
            "cores_per_domain" => self.cores_per_domain = count()?,
            "policy" => {
                v.parse::<MitigationPolicy>()
                    .map_err(|e| bad(&e.to_string()))?;
                self.policy = v.to_string();
            }
            "cost_llc_flush" => self.cost_llc_flush = int()?,
            "cost_mode_switch" => self.cost_mode_switch = int()?,
            "cost_migration" => self.cost_migration = int()?,
            "cost_ipi" => self.cost_ipi = int()?,
            "thresholds" => self.thresholds = (!v.is_empty()).then(|| PathBuf::from(v)),
            "noise" => {
                if v != "none"
                    && scdetect_core::workloads::NoiseCoefficients::cpu_preset(v).is_none()
                {
                    return Err(bad("unknown CPU noise preset"));
                }
                self.noise = v.to_string();
            }
            "corpus_benign" => self.corpus_benign = count()?,
            "corpus_direct" => self.corpus_direct = count()?,
            "corpus_indirect" => self.corpus_indirect = count()?,
            "horizon" => self.horizon = int()?,
            "calib_benign" => self.calib_benign = count()?,
            "calib_direct" => self.calib_direct = count()?,
            "calib_indirect" => self.calib_indirect = count()?,
            "calib_horizon" => self.calib_horizon = int()?,
            "calib_width" => self.calib_width = int()?,
            "leakage_attack" => self.leakage_attack = v.to_string(),
            "victim_delay_us" => {
                self.victim_delay_us = v
                    .split(',')
                    .map(parse_u64)
                    .collect::<Option<Vec<_>>>()
                    .filter(|d| !d.is_empty() && d.iter().all(|x| *x > 0))
                    .ok_or_else(|| bad("expected a list of positive integers"))?
            }
            "bytes_per_window" => self.bytes_per_window = small()?,
            "leakage_window" => self.leakage_window = int()?,
            "leakage_horizon" => self.leakage_horizon = int()?,
            "cycles_per_us" => self.cycles_per_us = int()?,
            "preset" => self.preset = v.to_string(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(ConfigError::Syntax {
                origin: origin.to_string(),
                line: i + 1,
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut c = Self::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed)
    }

    pub fn score(&self, gamma: Gamma) -> ScoreConfig {
        ScoreConfig {
            sticky: self.sticky,
            ..ScoreConfig::new(self.alpha, self.beta, gamma.0)
        }
    }

    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            w_min: self.w_min,
            w_max: self.w_max,
            shrink_trigger: self.shrink_trigger,
            grow_trigger: self.grow_trigger,
            early_eval_fraction: self.early_eval_fraction,
        }
    }

    pub fn detector(&self, thresholds: Thresholds, gamma: Gamma) -> DetectorConfig {
        DetectorConfig {
            thresholds,
            score: self.score(gamma),
            window: self.window(),
        }
    }

    pub fn topology(&self) -> Result<MachineTopology, ConfigError> {
        MachineTopology::uniform(self.cores, self.cores_per_domain).map_err(ConfigError::Topology)
    }

    pub fn mitigation_policy(&self) -> MitigationPolicy {
        let mut p: MitigationPolicy = self.policy.parse().expect("checked on set");
        p.costs = CostModel {
            llc_flush: self.cost_llc_flush,
            mode_switch: self.cost_mode_switch,
            migration: self.cost_migration,
            ipi_per_core: self.cost_ipi,
        };
        p
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.gamma.is_empty() {
            return Err(ConfigError::NoGamma);
        }
        self.score(self.gamma[0])
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.window()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.topology()?;
        if self.quantum == 0 {
            return Err(ConfigError::Invalid("quantum must be positive".into()));
        }
        for (k, v) in [
            ("horizon", self.horizon),
            ("calib_horizon", self.calib_horizon),
            ("calib_width", self.calib_width),
            ("leakage_window", self.leakage_window),
            ("leakage_horizon", self.leakage_horizon),
            ("cycles_per_us", self.cycles_per_us),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{k} must be positive")));
            }
        }
        Ok(())
    }

    /// Effective configuration, one `key=value` per entry.
    pub fn echo(&self) -> Vec<String> {
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.map_or("none".into(), |s| s.to_string())),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", join(&self.gamma)),
            ("sticky", self.sticky.to_string()),
            ("w_min", self.w_min.to_string()),
            ("w_max", self.w_max.to_string()),
            ("shrink_trigger", frac(&self.shrink_trigger)),
            ("grow_trigger", frac(&self.grow_trigger)),
            ("early_eval_fraction", frac(&self.early_eval_fraction)),
            ("quantum", self.quantum.to_string()),
            ("cores", self.cores.to_string()),
            ("cores_per_domain", self.cores_per_domain.to_string()),
            ("policy", self.policy.clone()),
            ("cost_llc_flush", self.cost_llc_flush.to_string()),
            ("cost_mode_switch", self.cost_mode_switch.to_string()),
            ("cost_migration", self.cost_migration.to_string()),
            ("cost_ipi", self.cost_ipi.to_string()),
            (
                "thresholds",
                self.thresholds
                    .as_ref()
                    .map_or("calibrate".into(), |p| p.display().to_string()),
            ),
            ("noise", self.noise.clone()),
            ("corpus_benign", self.corpus_benign.to_string()),
            ("corpus_direct", self.corpus_direct.to_string()),
            ("corpus_indirect", self.corpus_indirect.to_string()),
            ("horizon", self.horizon.to_string()),
            ("calib_benign", self.calib_benign.to_string()),
            ("calib_direct", self.calib_direct.to_string()),
            ("calib_indirect", self.calib_indirect.to_string()),
            ("calib_horizon", self.calib_horizon.to_string()),
            ("calib_width", self.calib_width.to_string()),
            ("leakage_attack", self.leakage_attack.clone()),
            ("victim_delay_us", join(&self.victim_delay_us)),
            ("bytes_per_window", self.bytes_per_window.to_string()),
            ("leakage_window", self.leakage_window.to_string()),
            ("leakage_horizon", self.leakage_horizon.to_string()),
            ("cycles_per_us", self.cycles_per_us.to_string()),
            ("preset", self.preset.clone()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }

    /// Echo lines prefixed with `# ` for report headers.
    pub fn header(&self) -> String {
        self.echo().iter().map(|l| format!("# {l}\n")).collect()
    }
}
