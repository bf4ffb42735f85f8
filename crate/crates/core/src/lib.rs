//! Side-channel detection from hardware performance counter ratios.
//!
//! The crate is `no_std` (with `alloc`) and covers the whole detection
//! pipeline: per-window event samples, the five ratio predicates and their
//! combination, the per-process suspicion score, clock-cycle observation
//! windows with adaptive sizing, threshold calibration, the mitigation policy
//! engine and a deterministic multi-core scheduler simulator that drives all
//! of it from synthetic workload traces.
//!
//! File formats, configuration and the command line live in the `scdetect`
//! companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod metrics;
pub mod mitigation;
pub mod model;
pub mod scoring;
pub mod simkernel;
pub mod window;
pub mod workloads;

pub use calibration::{
    calibrate_thresholds, calibrate_window_bounds, Calibration, CalibrationCorpus,
    CalibrationError, RunSummary, WindowBounds,
};
pub use metrics::{compute_ratios, evaluate_predicates, MetricRatios};
pub use mitigation::{
    ActionKind, CostModel, MitigationAction, MitigationPolicy, OverheadLedger, PatchId, PatchSet,
};
pub use model::{
    accumulate, validate_thresholds, CountOverflow, Cycles, EventRates, EventWindowSample,
    Fraction, Pid, PredicateVector, ProcessMonitorState, ScoreConfig, ScoreWarning,
    ThresholdViolation, Thresholds, Verdict, WindowConfig, WindowState,
};
pub use scoring::{on_fork, update_score, ScoreEvent, ScoreEventKind};
pub use simkernel::{
    run_simulation, MachineTopology, Scenario, SimError, SimEvent, SimEventKind, SimReport,
};
pub use window::{adapt, adapt_width, advance, fluctuation, WindowBoundary};
pub use workloads::{Trace, TraceRecord, WorkloadLabel, WorkloadProfile};
