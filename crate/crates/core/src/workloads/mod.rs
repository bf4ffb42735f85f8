//! Synthetic workload traces.
//!
//! A [`WorkloadProfile`] describes a process as a cyclic list of phases, each
//! phase holding a template sample whose counts over its `elapsed_cycles` are
//! the phase's exact per-cycle rates. Attack profiles additionally carry an
//! attack signature entered with a fixed probability per stress iteration once
//! a randomized initial delay has passed.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::model::{Cycles, EventWindowSample, EVENT_COUNT};

pub mod presets;

pub use presets::{preset, preset_names};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadLabel {
    Benign,
    DirectAttack,
    IndirectAttack,
}

impl WorkloadLabel {
    pub const ALL: [WorkloadLabel; 3] = [Self::Benign, Self::DirectAttack, Self::IndirectAttack];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Benign => "benign",
            Self::DirectAttack => "direct_attack",
            Self::IndirectAttack => "indirect_attack",
        }
    }

    pub fn is_attack(&self) -> bool {
        *self != Self::Benign
    }
}

impl fmt::Display for WorkloadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown workload label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for WorkloadLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectFlavor {
    FlushReload,
    PrimeProbe,
    EvictTime,
    FlushFlush,
    PrimeAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Direct(DirectFlavor),
    /// XLATE family, driven through page-table entry caching.
    Indirect,
}

impl AttackKind {
    pub fn label(&self) -> WorkloadLabel {
        match self {
            AttackKind::Direct(_) => WorkloadLabel::DirectAttack,
            AttackKind::Indirect => WorkloadLabel::IndirectAttack,
        }
    }
}

/// A stretch of execution with constant expected rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase {
    pub duration: Cycles,
    /// Counts over `rates.elapsed_cycles` cycles.
    pub rates: EventWindowSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Signature rates while attacking.
    pub rates: EventWindowSample,
    /// Length of one attack iteration.
    pub burst_cycles: Cycles,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForkSpec {
    /// A child is forked every `interval` cycles of the parent.
    pub interval: Cycles,
    pub child_lifetime: Cycles,
    /// The child starts at the first phase.
    pub child_phases: Vec<Phase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadProfile {
    pub name: String,
    pub phases: Vec<Phase>,
    /// Length of one benign stress iteration and the maximal delta length.
    pub iteration_cycles: Cycles,
    pub attack: Option<AttackSpec>,
    pub activation_probability: f64,
    /// Inclusive range the per-instance initial delay is drawn from.
    pub initial_delay: (Cycles, Cycles),
    pub fork: Option<ForkSpec>,
}

impl WorkloadProfile {
    pub fn label(&self) -> WorkloadLabel {
        self.attack
            .map(|a| a.kind.label())
            .unwrap_or(WorkloadLabel::Benign)
    }

    /// Calibration profiles are kept apart from evaluation ones by name.
    pub fn is_calibration(&self) -> bool {
        self.name.starts_with(presets::CALIBRATION_PREFIX)
    }

    /// The same profile without its attack.
    pub fn benign_base(&self) -> WorkloadProfile {
        WorkloadProfile {
            attack: None,
            activation_probability: 0.0,
            initial_delay: (0, 0),
            ..self.clone()
        }
    }
}

pub type Tid = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceRecord {
    Delta { tid: Tid, sample: EventWindowSample },
    Fork { parent: Tid, child: Tid },
    Exit { tid: Tid },
}

/// One labeled workload: a sequence of per-thread deltas and lifecycle
/// records. Thread 0 is the root; every other thread is created by a fork
/// record that precedes all of its own records.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace {
    pub name: String,
    pub label: WorkloadLabel,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("record {index}: delta with zero cycles")]
    ZeroCycles { index: usize },
    #[error("record {index}: thread {tid} used before being forked")]
    UnknownThread { index: usize, tid: Tid },
    #[error("record {index}: thread {tid} used after exit")]
    AfterExit { index: usize, tid: Tid },
    #[error("record {index}: thread {tid} forked twice")]
    DuplicateThread { index: usize, tid: Tid },
}

impl Trace {
    pub fn empty(name: impl Into<String>, label: WorkloadLabel) -> Self {
        Self {
            name: name.into(),
            label,
            records: Vec::new(),
        }
    }

    /// Checks positive deltas and well-nested lifecycles. Threads that never
    /// appear as a fork child are roots; they must first appear before any
    /// fork names them.
    pub fn validate(&self) -> Result<(), TraceError> {
        use alloc::collections::BTreeMap;
        #[derive(PartialEq)]
        enum St {
            Live,
            Dead,
        }
        let mut seen: BTreeMap<Tid, St> = BTreeMap::new();
        let live = |tid: Tid, index: usize, seen: &mut BTreeMap<Tid, St>| match seen.get(&tid) {
            Some(St::Dead) => Err(TraceError::AfterExit { index, tid }),
            Some(St::Live) => Ok(()),
            None => {
                seen.insert(tid, St::Live);
                Ok(())
            }
        };
        for (index, r) in self.records.iter().enumerate() {
            match *r {
                TraceRecord::Delta { tid, sample } => {
                    if sample.elapsed_cycles == 0 {
                        return Err(TraceError::ZeroCycles { index });
                    }
                    live(tid, index, &mut seen)?;
                }
                TraceRecord::Fork { parent, child } => {
                    live(parent, index, &mut seen)?;
                    if seen.contains_key(&child) {
                        return Err(TraceError::DuplicateThread { index, tid: child });
                    }
                    seen.insert(child, St::Live);
                }
                TraceRecord::Exit { tid } => {
                    live(tid, index, &mut seen)?;
                    seen.insert(tid, St::Dead);
                }
            }
        }
        Ok(())
    }

    /// Total cycles of all deltas.
    pub fn total_cycles(&self) -> Cycles {
        self.deltas().map(|(_, s)| s.elapsed_cycles).sum()
    }

    pub fn deltas(&self) -> impl Iterator<Item = (Tid, &EventWindowSample)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Delta { tid, sample } => Some((*tid, sample)),
            _ => None,
        })
    }

    pub fn fork_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, TraceRecord::Fork { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("profile `{0}` carries an attack; use attack generation")]
    UnexpectedAttack(String),
    #[error("profile `{0}` has no attack")]
    MissingAttack(String),
    #[error("profile `{0}` is malformed: {1}")]
    Malformed(String, &'static str),
}

/// Iteration counts of one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenStats {
    pub iterations: u64,
    pub attack_iterations: u64,
}

/// Scales a template sample to `cycles`, rounding each count half-up.
pub fn scale_rates(template: &EventWindowSample, cycles: Cycles) -> EventWindowSample {
    let t = template.elapsed_cycles as u128;
    let counts = template
        .events()
        .map(|n| ((2 * n as u128 * cycles as u128 + t) / (2 * t)) as u64);
    EventWindowSample::from_events(counts, cycles)
}

struct PhaseCursor<'a> {
    phases: &'a [Phase],
    idx: usize,
    left: Cycles,
}

impl<'a> PhaseCursor<'a> {
    fn new(phases: &'a [Phase], mut skip: Cycles) -> Self {
        let period: Cycles = phases.iter().map(|p| p.duration).sum();
        skip %= period.max(1);
        let mut idx = 0;
        while skip >= phases[idx].duration {
            skip -= phases[idx].duration;
            idx += 1;
        }
        Self {
            phases,
            idx,
            left: phases[idx].duration - skip,
        }
    }

    fn take(&mut self, max: Cycles) -> (EventWindowSample, Cycles) {
        let c = self.left.min(max);
        let rates = self.phases[self.idx].rates;
        self.left -= c;
        if self.left == 0 {
            self.idx = (self.idx + 1) % self.phases.len();
            self.left = self.phases[self.idx].duration;
        }
        (rates, c)
    }
}

fn check_phases(name: &str, phases: &[Phase]) -> Result<(), GenError> {
    if phases.is_empty() {
        return Err(GenError::Malformed(name.into(), "no phases"));
    }
    if phases
        .iter()
        .any(|p| p.duration == 0 || p.rates.elapsed_cycles == 0)
    {
        return Err(GenError::Malformed(name.into(), "phase with zero cycles"));
    }
    Ok(())
}

fn check_profile(p: &WorkloadProfile) -> Result<(), GenError> {
    check_phases(&p.name, &p.phases)?;
    if p.iteration_cycles == 0 {
        return Err(GenError::Malformed(p.name.clone(), "zero iteration cycles"));
    }
    if !(0.0..=1.0).contains(&p.activation_probability) {
        return Err(GenError::Malformed(
            p.name.clone(),
            "activation probability outside [0, 1]",
        ));
    }
    if p.initial_delay.0 > p.initial_delay.1 {
        return Err(GenError::Malformed(
            p.name.clone(),
            "empty initial delay range",
        ));
    }
    if let Some(a) = &p.attack {
        if a.burst_cycles == 0 || a.rates.elapsed_cycles == 0 {
            return Err(GenError::Malformed(
                p.name.clone(),
                "attack with zero cycles",
            ));
        }
    }
    if let Some(f) = &p.fork {
        check_phases(&p.name, &f.child_phases)?;
        if f.interval == 0 {
            return Err(GenError::Malformed(p.name.clone(), "zero fork interval"));
        }
    }
    Ok(())
}

fn emit_chunks(
    records: &mut Vec<TraceRecord>,
    tid: Tid,
    rates: &EventWindowSample,
    mut cycles: Cycles,
    chunk: Cycles,
) {
    while cycles > 0 {
        let c = cycles.min(chunk);
        records.push(TraceRecord::Delta {
            tid,
            sample: scale_rates(rates, c),
        });
        cycles -= c;
    }
}

/// Generates a trace of `horizon` root-thread cycles.
///
/// Three independent random streams are derived from `seed`: the phase
/// offset, the attack schedule and nothing else. With zero activation
/// probability the output equals the benign base profile's trace.
pub fn generate(
    profile: &WorkloadProfile,
    seed: u64,
    horizon: Cycles,
) -> Result<(Trace, GenStats), GenError> {
    check_profile(profile)?;
    let mut base_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attack_rng = ChaCha8Rng::seed_from_u64(seed);
    attack_rng.set_stream(1);

    let period: Cycles = profile.phases.iter().map(|p| p.duration).sum();
    let mut cursor = PhaseCursor::new(&profile.phases, base_rng.random_range(0..period));
    let delay = match profile.attack {
        Some(_) => attack_rng.random_range(profile.initial_delay.0..=profile.initial_delay.1),
        None => 0,
    };

    let mut records = Vec::new();
    let mut stats = GenStats::default();
    let mut next_tid: Tid = 1;
    let mut next_fork = profile.fork.as_ref().map(|_| 0);
    let mut t: Cycles = 0;
    while t < horizon {
        let room = horizon - t;
        let attacking = match &profile.attack {
            Some(_) if t >= delay => attack_rng.random_bool(profile.activation_probability),
            _ => false,
        };
        if attacking {
            let spec = profile.attack.as_ref().expect("attack checked");
            let burst = spec.burst_cycles.min(room);
            emit_chunks(
                &mut records,
                0,
                &spec.rates,
                burst,
                profile.iteration_cycles,
            );
            stats.attack_iterations += 1;
            t += burst;
        } else {
            let (rates, c) = cursor.take(profile.iteration_cycles.min(room));
            records.push(TraceRecord::Delta {
                tid: 0,
                sample: scale_rates(&rates, c),
            });
            t += c;
        }
        stats.iterations += 1;

        if let (Some(spec), Some(at)) = (&profile.fork, next_fork.as_mut()) {
            while t >= *at && *at < horizon {
                let child = next_tid;
                next_tid += 1;
                records.push(TraceRecord::Fork { parent: 0, child });
                let mut cc = PhaseCursor::new(&spec.child_phases, 0);
                let mut left = spec.child_lifetime;
                while left > 0 {
                    let (rates, c) = cc.take(profile.iteration_cycles.min(left));
                    records.push(TraceRecord::Delta {
                        tid: child,
                        sample: scale_rates(&rates, c),
                    });
                    left -= c;
                }
                records.push(TraceRecord::Exit { tid: child });
                *at += spec.interval;
            }
        }
    }
    records.push(TraceRecord::Exit { tid: 0 });

    let trace = Trace {
        name: profile.name.clone(),
        label: profile.label(),
        records,
    };
    Ok((trace, stats))
}

/// Generates a benign trace; the profile must not carry an attack.
pub fn gen_benign(
    profile: &WorkloadProfile,
    seed: u64,
    horizon: Cycles,
) -> Result<Trace, GenError> {
    if profile.attack.is_some() {
        return Err(GenError::UnexpectedAttack(profile.name.clone()));
    }
    generate(profile, seed, horizon).map(|(t, _)| t)
}

/// Generates an attack trace; the profile must carry an attack.
pub fn gen_attack(
    profile: &WorkloadProfile,
    seed: u64,
    horizon: Cycles,
) -> Result<Trace, GenError> {
    if profile.attack.is_none() {
        return Err(GenError::MissingAttack(profile.name.clone()));
    }
    generate(profile, seed, horizon).map(|(t, _)| t)
}

/// Per-event coefficients of variation of the multiplicative counter noise,
/// in [`EventWindowSample::events`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCoefficients(pub [f64; EVENT_COUNT]);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NoiseError {
    #[error(
        "noise coefficient for event {index} must be a finite non-negative number, got {value}"
    )]
    BadCoefficient { index: usize, value: f64 },
}

impl NoiseCoefficients {
    pub const NONE: Self = Self([0.0; EVENT_COUNT]);

    /// Measured run-to-run variation per CPU. L2 misses and L2 write-backs
    /// were not measured and stay noiseless.
    pub fn cpu_preset(name: &str) -> Option<Self> {
        // (l1, llc, l2 lines in, tlb)
        let (l1, llc, lines, tlb) = match name {
            "i7-6700HQ" => (0.020, 0.064, 0.079, 0.0),
            "i7-7600U" => (0.029, 0.039, 0.031, 0.057),
            "i5-8250U" => (0.016, 0.036, 0.047, 0.019),
            "i7-9750H" => (0.022, 0.040, 0.029, 0.024),
            "i7-10750H" => (0.018, 0.077, 0.055, 0.030),
            _ => return None,
        };
        Some(Self([l1, 0.0, llc, 0.0, lines, tlb]))
    }

    pub const CPU_PRESETS: [&'static str; 5] =
        ["i7-6700HQ", "i7-7600U", "i5-8250U", "i7-9750H", "i7-10750H"];

    pub fn validate(&self) -> Result<(), NoiseError> {
        for (index, &value) in self.0.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(NoiseError::BadCoefficient { index, value });
            }
        }
        Ok(())
    }
}

impl Default for NoiseCoefficients {
    fn default() -> Self {
        Self::cpu_preset("i7-6700HQ").expect("known preset")
    }
}

/// Multiplies every event count of every delta by an independent lognormal
/// draw with mean 1 and the event's coefficient of variation, rounding to the
/// nearest integer. Cycle counts and lifecycle records are untouched.
pub fn apply_noise(
    trace: &Trace,
    coeffs: &NoiseCoefficients,
    seed: u64,
) -> Result<Trace, NoiseError> {
    coeffs.validate()?;
    let dists: Vec<Option<LogNormal<f64>>> = coeffs
        .0
        .iter()
        .map(|&cv| (cv > 0.0).then(|| LogNormal::from_mean_cv(1.0, cv).expect("validated cv")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);

    let records = trace
        .records
        .iter()
        .map(|r| match *r {
            TraceRecord::Delta { tid, sample } => {
                let mut counts = sample.events();
                for (c, d) in counts.iter_mut().zip(&dists) {
                    if let Some(d) = d {
                        let m = d.sample(&mut rng);
                        *c = libm::round(*c as f64 * m).max(0.0) as u64;
                    }
                }
                TraceRecord::Delta {
                    tid,
                    sample: EventWindowSample::from_events(counts, sample.elapsed_cycles),
                }
            }
            other => other,
        })
        .collect();
    Ok(Trace {
        name: trace.name.clone(),
        label: trace.label,
        records,
    })
}
