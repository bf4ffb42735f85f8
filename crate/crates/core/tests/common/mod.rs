#![allow(dead_code)]

use scdetect_core::calibration::{calibrate_thresholds, CalibrationCorpus, RunSummary};
use scdetect_core::workloads::presets::{CALIB_BENIGN, CALIB_DIRECT, CALIB_INDIRECT};
use scdetect_core::workloads::{generate, preset};
use scdetect_core::{Cycles, Thresholds, Trace, WorkloadLabel};

/// Thresholds calibrated on noiseless calibration presets.
pub fn calibrated() -> Thresholds {
    let mut c = CalibrationCorpus::default();
    for name in CALIB_BENIGN
        .iter()
        .chain(&CALIB_DIRECT)
        .chain(&CALIB_INDIRECT)
    {
        let (t, _) = generate(&preset(name).unwrap(), 7, 1 << 26).unwrap();
        let s = RunSummary::from_trace(*name, &t, 1 << 20);
        match t.label {
            WorkloadLabel::Benign => c.benign_runs.push(s),
            WorkloadLabel::DirectAttack => c.direct_attack_runs.push(s),
            WorkloadLabel::IndirectAttack => c.indirect_attack_runs.push(s),
        }
    }
    calibrate_thresholds(&c).unwrap().thresholds
}

pub fn noiseless(name: &str, seed: u64, horizon: Cycles) -> Trace {
    generate(&preset(name).unwrap(), seed, horizon).unwrap().0
}

pub fn to_f64(f: &scdetect_core::Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}
