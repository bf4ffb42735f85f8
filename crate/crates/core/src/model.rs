//! Shared domain types: window samples, thresholds, configurations and the
//! per-process monitor state.

use core::fmt;

use num_rational::Ratio;
use thiserror::Error;

/// Clock cycles.
pub type Cycles = u64;

/// Process identifier inside the simulator.
pub type Pid = u32;

/// Exact non-negative fraction. Thresholds and triggers are kept as reduced
/// integer numerator/denominator pairs so comparisons never touch floats.
pub type Fraction = Ratio<u64>;

/// Number of counted hardware events (the sampling event excluded).
pub const EVENT_COUNT: usize = 6;

/// Names of the six counted events, in [`EventWindowSample::events`] order.
pub const EVENT_NAMES: [&str; EVENT_COUNT] = [
    "l1_miss",
    "l2_miss",
    "llc_miss",
    "l2_write_back",
    "l2_lines_in",
    "tlb_miss_l2",
];

/// Event counts observed by one process over one (possibly partial)
/// observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EventWindowSample {
    pub l1_miss: u64,
    pub l2_miss: u64,
    pub llc_miss: u64,
    pub l2_write_back: u64,
    pub l2_lines_in: u64,
    pub tlb_miss_l2: u64,
    pub elapsed_cycles: Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event count overflow in field `{field}`")]
pub struct CountOverflow {
    pub field: &'static str,
}

impl EventWindowSample {
    pub const ZERO: Self = Self::from_events([0; EVENT_COUNT], 0);

    pub const fn from_events(events: [u64; EVENT_COUNT], elapsed_cycles: Cycles) -> Self {
        Self {
            l1_miss: events[0],
            l2_miss: events[1],
            llc_miss: events[2],
            l2_write_back: events[3],
            l2_lines_in: events[4],
            tlb_miss_l2: events[5],
            elapsed_cycles,
        }
    }

    pub const fn events(&self) -> [u64; EVENT_COUNT] {
        [
            self.l1_miss,
            self.l2_miss,
            self.llc_miss,
            self.l2_write_back,
            self.l2_lines_in,
            self.tlb_miss_l2,
        ]
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// Componentwise sum; overflow is reported, never wrapped.
    pub fn checked_add(&self, other: &Self) -> Result<Self, CountOverflow> {
        let a = self.events();
        let b = other.events();
        let mut out = [0u64; EVENT_COUNT];
        for i in 0..EVENT_COUNT {
            out[i] = a[i].checked_add(b[i]).ok_or(CountOverflow {
                field: EVENT_NAMES[i],
            })?;
        }
        let cycles = self
            .elapsed_cycles
            .checked_add(other.elapsed_cycles)
            .ok_or(CountOverflow {
                field: "elapsed_cycles",
            })?;
        Ok(Self::from_events(out, cycles))
    }

    /// Per-cycle rates of this sample.
    pub fn rates(&self) -> EventRates {
        EventRates {
            counts: self.events(),
            cycles: self.elapsed_cycles,
        }
    }
}

/// Componentwise sum of two samples.
pub fn accumulate(
    a: &EventWindowSample,
    b: &EventWindowSample,
) -> Result<EventWindowSample, CountOverflow> {
    a.checked_add(b)
}

/// Six per-cycle event rates, held exactly as `counts[i] / cycles`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventRates {
    pub counts: [u64; EVENT_COUNT],
    pub cycles: Cycles,
}

/// The five comparison constants of the ratio predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Thresholds {
    pub phi1: Fraction,
    pub phi2: Fraction,
    pub phi3: Fraction,
    pub phi4: Fraction,
    pub phi5: Fraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ThresholdViolation {
    #[error("phi1 in [0, 1]")]
    Phi1OutOfRange,
    #[error("phi2 in [0, 1]")]
    Phi2OutOfRange,
    #[error("phi3 in [0, 1]")]
    Phi3OutOfRange,
    #[error("phi5 < phi4")]
    Phi5NotBelowPhi4,
}

impl Thresholds {
    pub fn as_array(&self) -> [Fraction; 5] {
        [self.phi1, self.phi2, self.phi3, self.phi4, self.phi5]
    }

    pub fn from_array(phi: [Fraction; 5]) -> Self {
        Self {
            phi1: phi[0],
            phi2: phi[1],
            phi3: phi[2],
            phi4: phi[3],
            phi5: phi[4],
        }
    }

    /// Checks the interval constraints, reporting the first one that fails.
    pub fn validate(&self) -> Result<(), ThresholdViolation> {
        let one = Fraction::from_integer(1);
        if self.phi1 > one {
            return Err(ThresholdViolation::Phi1OutOfRange);
        }
        if self.phi2 > one {
            return Err(ThresholdViolation::Phi2OutOfRange);
        }
        if self.phi3 > one {
            return Err(ThresholdViolation::Phi3OutOfRange);
        }
        if self.phi5 >= self.phi4 {
            return Err(ThresholdViolation::Phi5NotBelowPhi4);
        }
        Ok(())
    }
}

pub fn validate_thresholds(t: &Thresholds) -> Result<(), ThresholdViolation> {
    t.validate()
}

/// Scoring hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreConfig {
    /// Increment on a suspicious window.
    pub alpha: u32,
    /// Decrement on a benign or inconclusive window.
    pub beta: u32,
    /// Suspicion threshold. [`ScoreConfig::GAMMA_DISABLED`] turns detection off.
    pub gamma: u32,
    /// Once raised, the suspected flag is never cleared.
    pub sticky: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScoreConfigError {
    #[error("alpha must be positive")]
    ZeroAlpha,
    #[error("beta must be positive")]
    ZeroBeta,
    #[error("gamma must be positive")]
    ZeroGamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreWarning {
    /// alpha < beta slows detection of a persistent attacker.
    AlphaBelowBeta,
}

impl fmt::Display for ScoreWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreWarning::AlphaBelowBeta => f.write_str("alpha < beta delays detection"),
        }
    }
}

impl ScoreConfig {
    /// Sentinel gamma that is never reached.
    pub const GAMMA_DISABLED: u32 = u32::MAX;

    pub const fn new(alpha: u32, beta: u32, gamma: u32) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            sticky: true,
        }
    }

    pub const fn detection_disabled(alpha: u32, beta: u32) -> Self {
        Self::new(alpha, beta, Self::GAMMA_DISABLED)
    }

    pub const fn detection_enabled(&self) -> bool {
        self.gamma != Self::GAMMA_DISABLED
    }

    pub fn validate(&self) -> Result<Option<ScoreWarning>, ScoreConfigError> {
        if self.alpha == 0 {
            return Err(ScoreConfigError::ZeroAlpha);
        }
        if self.beta == 0 {
            return Err(ScoreConfigError::ZeroBeta);
        }
        if self.gamma == 0 {
            return Err(ScoreConfigError::ZeroGamma);
        }
        Ok((self.alpha < self.beta).then_some(ScoreWarning::AlphaBelowBeta))
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::new(1, 1, 10)
    }
}

/// Observation window sizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowConfig {
    pub w_min: Cycles,
    pub w_max: Cycles,
    /// Fluctuation above which the window is halved.
    pub shrink_trigger: Fraction,
    /// Fluctuation below which the window is doubled.
    pub grow_trigger: Fraction,
    /// Fraction of the current width that must have elapsed before a
    /// descheduled process is evaluated early.
    pub early_eval_fraction: Fraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WindowConfigError {
    #[error("w_min must be positive and not above w_max")]
    BadBounds,
    #[error("window bounds must be powers of two")]
    NotPowerOfTwo,
    #[error("grow_trigger must be below shrink_trigger")]
    TriggerOrder,
    #[error("early_eval_fraction must be in (0, 1]")]
    EarlyEvalFraction,
}

impl WindowConfig {
    pub const DEFAULT_W_MIN: Cycles = 1 << 20;
    pub const DEFAULT_W_MAX: Cycles = 1 << 24;

    /// A non-adaptive configuration: every window has exactly `width` cycles.
    pub fn fixed(width: Cycles) -> Self {
        Self {
            w_min: width,
            w_max: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), WindowConfigError> {
        if self.w_min == 0 || self.w_min > self.w_max {
            return Err(WindowConfigError::BadBounds);
        }
        if !self.w_min.is_power_of_two() || !self.w_max.is_power_of_two() {
            return Err(WindowConfigError::NotPowerOfTwo);
        }
        if self.grow_trigger >= self.shrink_trigger {
            return Err(WindowConfigError::TriggerOrder);
        }
        let zero = Fraction::from_integer(0);
        if self.early_eval_fraction <= zero || self.early_eval_fraction > Fraction::from_integer(1)
        {
            return Err(WindowConfigError::EarlyEvalFraction);
        }
        Ok(())
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            w_min: Self::DEFAULT_W_MIN,
            w_max: Self::DEFAULT_W_MAX,
            shrink_trigger: Fraction::new(1, 2),
            grow_trigger: Fraction::new(1, 10),
            early_eval_fraction: Fraction::new(1, 2),
        }
    }
}

/// Per-thread observation window: current width, the partial sample carried
/// across deschedules and the previous full window's rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowState {
    pub width: Cycles,
    pub accum: EventWindowSample,
    pub prev_rates: Option<EventRates>,
    /// The current partial window was already evaluated at a deschedule.
    pub early_evaluated: bool,
}

impl WindowState {
    pub fn new(width: Cycles) -> Self {
        Self {
            width,
            accum: EventWindowSample::ZERO,
            prev_rates: None,
            early_evaluated: false,
        }
    }

    pub fn elapsed(&self) -> Cycles {
        self.accum.elapsed_cycles
    }
}

/// Detection state of one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProcessMonitorState {
    pub pid: Pid,
    pub score: u32,
    pub suspected: bool,
    /// Full windows evaluated for this process (early evaluations excluded).
    pub windows_observed: u64,
    pub window: WindowState,
}

impl ProcessMonitorState {
    pub fn new(pid: Pid, window_width: Cycles) -> Self {
        Self {
            pid,
            score: 0,
            suspected: false,
            windows_observed: 0,
            window: WindowState::new(window_width),
        }
    }
}

/// Outcome of the five predicates and their combinations for one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PredicateVector {
    pub p1: bool,
    pub p2: bool,
    pub p3: bool,
    pub p4: bool,
    pub p5: bool,
    pub s1: bool,
    pub s: bool,
    /// A ratio needed to settle `s` had a zero denominator.
    pub inconclusive: bool,
}

impl PredicateVector {
    pub const INCONCLUSIVE: Self = Self {
        p1: false,
        p2: false,
        p3: false,
        p4: false,
        p5: false,
        s1: false,
        s: false,
        inconclusive: true,
    };

    pub fn verdict(&self) -> Verdict {
        if self.inconclusive {
            Verdict::Inconclusive
        } else if self.s {
            Verdict::Suspicious
        } else {
            Verdict::Benign
        }
    }

    /// Checks the composition rules of `s1` and `s`.
    pub fn is_consistent(&self) -> bool {
        if self.inconclusive {
            return !(self.p1 || self.p2 || self.p3 || self.p4 || self.p5 || self.s1 || self.s);
        }
        self.s1 == (self.p1 && self.p2 && self.p3 && self.p5) && self.s == (self.s1 || self.p4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Suspicious,
    Benign,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Suspicious => "suspicious",
            Verdict::Benign => "benign",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}
