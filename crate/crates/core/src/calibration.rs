//! Threshold and window-bound calibration.
//!
//! Each threshold is the midpoint of two averages: the attack category's mean
//! of per-run means and the benign mean of per-run means. All arithmetic is
//! exact; the final value is stored as a `u64` fraction, exactly whenever it
//! fits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::metrics::compute_ratios;
use crate::model::{
    Cycles, EventWindowSample, Fraction, ThresholdViolation, Thresholds, WindowConfig, WindowState,
    EVENT_COUNT,
};
use crate::window::advance;
use crate::workloads::{Trace, TraceRecord};

/// Mean of each ratio over one run's fully defined windows (non-zero L1
/// misses and L2 lines in). A component is `None` when no window qualified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub run_id: String,
    pub r_l2_l1: Option<BigRational>,
    pub r_llc_l1: Option<BigRational>,
    pub r_wb_lines: Option<BigRational>,
    pub r_tlb_l1: Option<BigRational>,
}

fn to_big(f: Fraction) -> BigRational {
    BigRational::new(BigInt::from(*f.numer()), BigInt::from(*f.denom()))
}

fn mean(values: &[BigRational]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(BigRational::zero(), |acc, v| acc + v);
    Some(sum / BigInt::from(values.len()))
}

impl RunSummary {
    /// Summary with every component given directly.
    pub fn from_means(run_id: impl Into<String>, means: [Fraction; 4]) -> Self {
        let [a, b, c, d] = means.map(|f| Some(to_big(f)));
        Self {
            run_id: run_id.into(),
            r_l2_l1: a,
            r_llc_l1: b,
            r_wb_lines: c,
            r_tlb_l1: d,
        }
    }

    pub fn from_windows(run_id: impl Into<String>, windows: &[EventWindowSample]) -> Self {
        let mut cols: [Vec<BigRational>; 4] = Default::default();
        for w in windows {
            if w.l1_miss == 0 || w.l2_lines_in == 0 {
                continue;
            }
            let r = compute_ratios(w);
            for (col, v) in cols
                .iter_mut()
                .zip([r.r_l2_l1, r.r_llc_l1, r.r_wb_lines, r.r_tlb_l1])
            {
                col.push(to_big(v.expect("denominators checked")));
            }
        }
        let [a, b, c, d] = cols.map(|c| mean(&c));
        Self {
            run_id: run_id.into(),
            r_l2_l1: a,
            r_llc_l1: b,
            r_wb_lines: c,
            r_tlb_l1: d,
        }
    }

    /// Summarizes a trace cut into fixed windows of `width` cycles, each
    /// thread windowed on its own.
    pub fn from_trace(run_id: impl Into<String>, trace: &Trace, width: Cycles) -> Self {
        Self::from_windows(run_id, &window_samples(trace, width))
    }

    fn metric(&self, m: Metric) -> Option<&BigRational> {
        match m {
            Metric::L2L1 => self.r_l2_l1.as_ref(),
            Metric::LlcL1 => self.r_llc_l1.as_ref(),
            Metric::WbLines => self.r_wb_lines.as_ref(),
            Metric::TlbL1 => self.r_tlb_l1.as_ref(),
        }
    }
}

/// Full fixed-width windows of every thread of `trace`, in emission order.
pub fn window_samples(trace: &Trace, width: Cycles) -> Vec<EventWindowSample> {
    let cfg = WindowConfig::fixed(width);
    let mut states: BTreeMap<u32, WindowState> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in &trace.records {
        if let TraceRecord::Delta { tid, sample } = rec {
            let st = states
                .entry(*tid)
                .or_insert_with(|| WindowState::new(width));
            // A fixed-width window over checked trace deltas cannot fail
            // short of a u64 overflow inside one window.
            if let Ok(b) = advance(st, sample, &cfg) {
                out.extend(b.into_iter().map(|b| b.sample));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CalibrationCorpus {
    pub direct_attack_runs: Vec<RunSummary>,
    pub indirect_attack_runs: Vec<RunSummary>,
    pub benign_runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    L2L1,
    LlcL1,
    WbLines,
    TlbL1,
}

impl Metric {
    fn name(&self) -> &'static str {
        match self {
            Metric::L2L1 => "l2_miss/l1_miss",
            Metric::LlcL1 => "llc_miss/l1_miss",
            Metric::WbLines => "l2_write_back/l2_lines_in",
            Metric::TlbL1 => "tlb_miss_l2/l1_miss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("calibration corpus has no {0} runs")]
    EmptyCategory(&'static str),
    #[error("no {category} run defines {metric}")]
    UndefinedMetric {
        category: &'static str,
        metric: &'static str,
    },
    #[error("calibrated thresholds violate {0}")]
    Invalid(ThresholdViolation),
}

/// How one threshold was obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdAudit {
    pub name: &'static str,
    pub metric: &'static str,
    pub attack_category: &'static str,
    pub attack_mean: BigRational,
    pub benign_mean: BigRational,
    /// `(attack_mean + benign_mean) / 2` before clamping or narrowing.
    pub midpoint: BigRational,
    pub value: Fraction,
    /// `value` equals the (clamped) midpoint exactly.
    pub exact: bool,
}

impl ThresholdAudit {
    pub fn attack_mean_f64(&self) -> f64 {
        self.attack_mean.to_f64().unwrap_or(f64::NAN)
    }

    pub fn benign_mean_f64(&self) -> f64 {
        self.benign_mean.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calibration {
    pub thresholds: Thresholds,
    pub audit: [ThresholdAudit; 5],
}

/// Closest fraction with `u64` parts to `r` (non-negative), found on the
/// continued-fraction convergents.
fn narrow(r: &BigRational) -> (Fraction, bool) {
    if let (Some(n), Some(d)) = (r.numer().to_u64(), r.denom().to_u64()) {
        return (Fraction::new(n, d), true);
    }
    let limit = BigInt::from(u64::MAX);
    let (mut num, mut den) = (r.numer().clone(), r.denom().clone());
    let (mut h_prev, mut h) = (BigInt::zero(), BigInt::one());
    let (mut k_prev, mut k) = (BigInt::one(), BigInt::zero());
    while !den.is_zero() {
        let (a, rem) = num.div_rem(&den);
        let h_new = &a * &h + &h_prev;
        let k_new = &a * &k + &k_prev;
        if h_new > limit || k_new > limit {
            break;
        }
        h_prev = core::mem::replace(&mut h, h_new);
        k_prev = core::mem::replace(&mut k, k_new);
        num = core::mem::replace(&mut den, rem);
    }
    match (h.to_u64(), k.to_u64()) {
        (Some(n), Some(d)) if d > 0 => (Fraction::new(n, d), false),
        _ => (Fraction::new(u64::MAX, 1), false),
    }
}

fn category_mean(
    runs: &[RunSummary],
    category: &'static str,
    metric: Metric,
) -> Result<BigRational, CalibrationError> {
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let values: Vec<BigRational> = sorted
        .into_iter()
        .filter_map(|r| r.metric(metric).cloned())
        .collect();
    mean(&values).ok_or(CalibrationError::UndefinedMetric {
        category,
        metric: metric.name(),
    })
}

/// Sets every threshold halfway between the attack and benign averages.
///
/// phi1..phi3 and phi5 use direct attacks, phi4 uses indirect attacks;
/// phi1..phi3 are clamped to `[0, 1]`.
pub fn calibrate_thresholds(c: &CalibrationCorpus) -> Result<Calibration, CalibrationError> {
    if c.benign_runs.is_empty() {
        return Err(CalibrationError::EmptyCategory("benign"));
    }
    if c.direct_attack_runs.is_empty() {
        return Err(CalibrationError::EmptyCategory("direct attack"));
    }
    if c.indirect_attack_runs.is_empty() {
        return Err(CalibrationError::EmptyCategory("indirect attack"));
    }

    let plan: [(&'static str, Metric, &'static str, &[RunSummary], bool); 5] = [
        (
            "phi1",
            Metric::L2L1,
            "direct attack",
            &c.direct_attack_runs,
            true,
        ),
        (
            "phi2",
            Metric::LlcL1,
            "direct attack",
            &c.direct_attack_runs,
            true,
        ),
        (
            "phi3",
            Metric::WbLines,
            "direct attack",
            &c.direct_attack_runs,
            true,
        ),
        (
            "phi4",
            Metric::TlbL1,
            "indirect attack",
            &c.indirect_attack_runs,
            false,
        ),
        (
            "phi5",
            Metric::TlbL1,
            "direct attack",
            &c.direct_attack_runs,
            false,
        ),
    ];

    let mut audit = Vec::with_capacity(5);
    for (name, metric, category, runs, unit_interval) in plan {
        let attack_mean = category_mean(runs, category, metric)?;
        let benign_mean = category_mean(&c.benign_runs, "benign", metric)?;
        let midpoint = (&attack_mean + &benign_mean) / BigInt::from(2);
        let target = if unit_interval && midpoint > BigRational::one() {
            BigRational::one()
        } else {
            midpoint.clone()
        };
        let (value, exact) = narrow(&target);
        audit.push(ThresholdAudit {
            name,
            metric: metric.name(),
            attack_category: category,
            attack_mean,
            benign_mean,
            midpoint,
            value,
            exact,
        });
    }
    let audit: [ThresholdAudit; 5] = audit.try_into().expect("five thresholds");
    let thresholds = Thresholds::from_array(core::array::from_fn(|i| audit[i].value));
    thresholds.validate().map_err(CalibrationError::Invalid)?;
    Ok(Calibration { thresholds, audit })
}

/// Candidate window widths scanned by [`calibrate_window_bounds`].
pub const CANDIDATE_WIDTHS: [Cycles; 9] = [
    1 << 16,
    1 << 17,
    1 << 18,
    1 << 19,
    1 << 20,
    1 << 21,
    1 << 22,
    1 << 23,
    1 << 24,
];

/// Largest accepted coefficient of variation of per-window rates, as 1/4.
pub const STABILITY_CV_DENOM: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowBounds {
    pub w_min: Cycles,
    pub w_max: Cycles,
    /// No candidate width was stable; the defaults were used.
    pub fallback: bool,
}

impl WindowBounds {
    pub const DEFAULT: Self = Self {
        w_min: WindowConfig::DEFAULT_W_MIN,
        w_max: WindowConfig::DEFAULT_W_MAX,
        fallback: false,
    };
}

/// Largest coefficient of variation of the per-window event counts over
/// `windows`, or `None` with fewer than two windows. Events that never occur
/// count as perfectly stable.
pub fn max_rate_cv(windows: &[EventWindowSample]) -> Option<f64> {
    if windows.len() < 2 {
        return None;
    }
    let n = windows.len() as f64;
    let mut worst: f64 = 0.0;
    for i in 0..EVENT_COUNT {
        let rates = windows
            .iter()
            .map(|w| w.events()[i] as f64 / w.elapsed_cycles as f64);
        let m = rates.clone().sum::<f64>() / n;
        if m == 0.0 {
            continue;
        }
        let var = rates.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        // cv^2 avoids a square root
        worst = worst.max(var / (m * m));
    }
    Some(libm::sqrt(worst))
}

fn stable_at(probes: &[Trace], width: Cycles) -> bool {
    probes.iter().all(|p| {
        matches!(max_rate_cv(&window_samples(p, width)), Some(cv) if cv < 1.0 / STABILITY_CV_DENOM)
    })
}

/// Picks the smallest and largest candidate widths at which every probe's
/// per-window rates vary by less than 25%.
pub fn calibrate_window_bounds(probe_runs: &[Trace]) -> WindowBounds {
    if probe_runs.is_empty() {
        return WindowBounds::DEFAULT;
    }
    let stable: Vec<Cycles> = CANDIDATE_WIDTHS
        .into_iter()
        .filter(|w| stable_at(probe_runs, *w))
        .collect();
    match (stable.first(), stable.last()) {
        (Some(&w_min), Some(&w_max)) => WindowBounds {
            w_min,
            w_max,
            fallback: false,
        },
        _ => WindowBounds {
            fallback: true,
            ..WindowBounds::DEFAULT
        },
    }
}
