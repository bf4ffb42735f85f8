//! Named workload profiles.
//!
//! Rates are counts per stress iteration of [`ITERATION`] cycles. Evaluation
//! and calibration profiles are disjoint; calibration ones carry the
//! [`CALIBRATION_PREFIX`] and attack continuously from the first cycle.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::{AttackKind, AttackSpec, DirectFlavor, ForkSpec, Phase, WorkloadProfile};
use crate::model::{Cycles, EventWindowSample};

pub const CALIBRATION_PREFIX: &str = "calib_";

/// One stress iteration.
pub const ITERATION: Cycles = 1 << 18;
/// One attack iteration once the side-channel routine is entered.
pub const ATTACK_BURST: Cycles = 1 << 23;
/// Probability that a stress iteration runs the side-channel routine.
pub const ACTIVATION_PROBABILITY: f64 = 0.1;
/// Upper bound of the randomized delay before the attack is armed.
pub const MAX_INITIAL_DELAY: Cycles = 1 << 28;

const MI: Cycles = 1 << 20;

const fn r(l1: u64, l2: u64, llc: u64, wb: u64, lines: u64, tlb: u64) -> EventWindowSample {
    EventWindowSample::from_events([l1, l2, llc, wb, lines, tlb], ITERATION)
}

const fn ph(duration: Cycles, rates: EventWindowSample) -> Phase {
    Phase { duration, rates }
}

pub const EVAL_BENIGN: [&str; 4] = [
    "steady_compute",
    "memory_intensive",
    "fork_heavy",
    "data_processing",
];
pub const EVAL_DIRECT: [&str; 5] = [
    "flush_reload",
    "prime_probe",
    "evict_time",
    "flush_flush",
    "prime_abort",
];
pub const EVAL_INDIRECT: [&str; 3] = ["xlate_time", "xlate_probe", "xlate_abort"];

pub const CALIB_BENIGN: [&str; 4] = [
    "calib_browser",
    "calib_video",
    "calib_reader",
    "calib_editor",
];
pub const CALIB_DIRECT: [&str; 3] = [
    "calib_flush_reload",
    "calib_prime_probe",
    "calib_evict_time",
];
pub const CALIB_INDIRECT: [&str; 2] = ["calib_xlate_time", "calib_xlate_probe"];

/// Victim of the leakage experiment.
pub const VICTIM: &str = "victim_reader";

pub fn preset_names() -> Vec<&'static str> {
    let mut v = Vec::new();
    v.extend(EVAL_BENIGN);
    v.extend(EVAL_DIRECT);
    v.extend(EVAL_INDIRECT);
    v.extend(CALIB_BENIGN);
    v.extend(CALIB_DIRECT);
    v.extend(CALIB_INDIRECT);
    v.push(VICTIM);
    v
}

fn benign(name: &str, phases: Vec<Phase>) -> WorkloadProfile {
    WorkloadProfile {
        name: name.to_string(),
        phases,
        iteration_cycles: ITERATION,
        attack: None,
        activation_probability: 0.0,
        initial_delay: (0, 0),
        fork: None,
    }
}

/// The stress-ng style host the side-channel routine is injected into.
fn stress_host() -> Vec<Phase> {
    vec![
        ph(12 * MI, r(800, 250, 90, 150, 320, 35)),
        ph(4 * MI, r(1400, 420, 130, 260, 560, 60)),
    ]
}

fn attack(name: &str, kind: AttackKind, rates: EventWindowSample) -> WorkloadProfile {
    WorkloadProfile {
        name: name.to_string(),
        phases: stress_host(),
        iteration_cycles: ITERATION,
        attack: Some(AttackSpec {
            kind,
            rates,
            burst_cycles: ATTACK_BURST,
        }),
        activation_probability: ACTIVATION_PROBABILITY,
        initial_delay: (0, MAX_INITIAL_DELAY),
        fork: None,
    }
}

fn calib_attack(name: &str, kind: AttackKind, rates: EventWindowSample) -> WorkloadProfile {
    WorkloadProfile {
        activation_probability: 1.0,
        initial_delay: (0, 0),
        ..attack(name, kind, rates)
    }
}

pub fn preset(name: &str) -> Option<WorkloadProfile> {
    use AttackKind::{Direct, Indirect};
    use DirectFlavor::*;
    let p = match name {
        "steady_compute" => benign(name, vec![ph(MI, r(600, 180, 60, 110, 220, 30))]),
        "memory_intensive" => benign(
            name,
            vec![
                ph(6 * MI, r(5000, 3050, 2500, 1080, 4000, 60)),
                ph(10 * MI, r(1200, 300, 100, 250, 500, 30)),
            ],
        ),
        "fork_heavy" => WorkloadProfile {
            fork: Some(ForkSpec {
                interval: 8 * MI,
                child_lifetime: 16 * MI,
                child_phases: vec![
                    ph(2 * MI, r(3000, 1800, 1450, 800, 2900, 50)),
                    ph(14 * MI, r(700, 210, 70, 130, 260, 32)),
                ],
            }),
            ..benign(name, vec![ph(MI, r(700, 210, 70, 130, 260, 32))])
        },
        "data_processing" => benign(
            name,
            vec![
                ph(8 * MI, r(2500, 1470, 1250, 500, 2600, 40)),
                ph(4 * MI, r(900, 300, 120, 200, 400, 60)),
                ph(2 * MI, r(1500, 200, 60, 300, 600, 400)),
            ],
        ),
        "victim_reader" => benign(name, vec![ph(MI, r(400, 120, 40, 80, 160, 18))]),

        "flush_reload" => attack(
            name,
            Direct(FlushReload),
            r(8000, 7400, 6900, 100, 7600, 30),
        ),
        "prime_probe" => attack(name, Direct(PrimeProbe), r(6500, 5600, 4700, 320, 6000, 45)),
        "evict_time" => attack(name, Direct(EvictTime), r(5000, 4300, 3600, 300, 4700, 40)),
        "flush_flush" => attack(name, Direct(FlushFlush), r(4000, 3500, 3200, 60, 3600, 20)),
        "prime_abort" => attack(name, Direct(PrimeAbort), r(5500, 4600, 3800, 400, 5000, 50)),
        "xlate_time" => attack(name, Indirect, r(3000, 1300, 800, 500, 1500, 2500)),
        "xlate_probe" => attack(name, Indirect, r(2600, 1100, 650, 450, 1300, 2000)),
        "xlate_abort" => attack(name, Indirect, r(2000, 900, 500, 380, 1100, 1500)),

        "calib_browser" => benign(
            name,
            vec![
                ph(16 * MI, r(900, 300, 110, 200, 420, 40)),
                ph(8 * MI, r(1500, 420, 120, 260, 600, 60)),
            ],
        ),
        "calib_video" => benign(name, vec![ph(MI, r(1200, 360, 150, 240, 500, 45))]),
        "calib_reader" => benign(
            name,
            vec![
                ph(4 * MI, r(500, 140, 40, 100, 230, 22)),
                ph(MI, r(1100, 330, 130, 210, 460, 44)),
            ],
        ),
        "calib_editor" => benign(name, vec![ph(MI, r(300, 90, 30, 70, 150, 12))]),
        "calib_flush_reload" => {
            calib_attack(name, Direct(FlushReload), r(9000, 8300, 7600, 80, 8400, 20))
        }
        "calib_prime_probe" => {
            calib_attack(name, Direct(PrimeProbe), r(7000, 6100, 5300, 350, 6500, 35))
        }
        "calib_evict_time" => {
            calib_attack(name, Direct(EvictTime), r(6000, 5300, 4700, 250, 5600, 25))
        }
        "calib_xlate_time" => calib_attack(name, Indirect, r(2500, 1100, 700, 400, 1300, 2200)),
        "calib_xlate_probe" => calib_attack(name, Indirect, r(2200, 900, 600, 380, 1100, 1800)),
        _ => return None,
    };
    Some(p)
}
