//! Deterministic multi-core scheduler simulator.
//!
//! Every thread of every workload trace becomes a simulated process with its
//! own monitor state. Cores pull processes from one global FIFO run queue and
//! run them for a fixed quantum; the core with the smallest clock (lowest id
//! on ties) always moves next, so the event order is a pure function of the
//! scenario. A quantum consumes whole trace deltas until it has used at least
//! `quantum` cycles. Counters are virtualized per process: each delta feeds
//! only its own process's window, and a descheduled process resumes its window
//! where it left off.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::metrics::evaluate_predicates;
use crate::mitigation::{
    mode_switch_cost, on_schedule_in, on_suspicion_raised, ActionKind, MitigationAction,
    MitigationPolicy, OverheadLedger,
};
use crate::model::{
    CountOverflow, Cycles, EventWindowSample, Fraction, Pid, PredicateVector, ProcessMonitorState,
    ScoreConfig, ScoreConfigError, ThresholdViolation, Thresholds, WindowConfig, WindowConfigError,
};
use crate::scoring::{on_fork, update_score, ScoreEventKind};
use crate::window::{advance, WindowBoundary, WindowError};
use crate::workloads::{Tid, Trace, TraceError, TraceRecord, WorkloadLabel};

/// Default scheduling quantum.
pub const DEFAULT_QUANTUM: Cycles = 1 << 21;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineTopology {
    domain_of: Vec<usize>,
    domains: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology has no cores")]
    NoCores,
    #[error("cache domain {0} is empty")]
    EmptyDomain(usize),
    #[error("core {0} appears in more than one cache domain")]
    DuplicateCore(usize),
    #[error("core {0} belongs to no cache domain")]
    MissingCore(usize),
}

impl MachineTopology {
    /// Builds a topology from a partition of cores `0..n` into cache domains.
    pub fn new(domains: Vec<Vec<usize>>) -> Result<Self, TopologyError> {
        let n: usize = domains.iter().map(Vec::len).sum();
        if n == 0 {
            return Err(TopologyError::NoCores);
        }
        let mut domain_of = vec![usize::MAX; n];
        for (d, cores) in domains.iter().enumerate() {
            if cores.is_empty() {
                return Err(TopologyError::EmptyDomain(d));
            }
            for &c in cores {
                match domain_of.get_mut(c) {
                    Some(slot) if *slot == usize::MAX => *slot = d,
                    Some(_) => return Err(TopologyError::DuplicateCore(c)),
                    None => return Err(TopologyError::MissingCore(c)),
                }
            }
        }
        if let Some(c) = domain_of.iter().position(|d| *d == usize::MAX) {
            return Err(TopologyError::MissingCore(c));
        }
        Ok(Self { domain_of, domains })
    }

    /// `n_cores` cores in consecutive groups of `per_domain`.
    pub fn uniform(n_cores: usize, per_domain: usize) -> Result<Self, TopologyError> {
        if n_cores == 0 || per_domain == 0 {
            return Err(TopologyError::NoCores);
        }
        let ids: Vec<usize> = (0..n_cores).collect();
        Self::new(ids.chunks(per_domain).map(<[usize]>::to_vec).collect())
    }

    pub fn n_cores(&self) -> usize {
        self.domain_of.len()
    }

    pub fn domain_of(&self, core: usize) -> Option<usize> {
        self.domain_of.get(core).copied()
    }

    pub fn cache_domains(&self) -> &[Vec<usize>] {
        &self.domains
    }
}

impl Default for MachineTopology {
    /// Four cores, two cache domains.
    fn default() -> Self {
        Self::uniform(4, 2).expect("valid default topology")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorConfig {
    pub thresholds: Thresholds,
    pub score: ScoreConfig,
    pub window: WindowConfig,
}

impl DetectorConfig {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            score: ScoreConfig::default(),
            window: WindowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workloads: Vec<Trace>,
    pub topology: MachineTopology,
    pub detector: DetectorConfig,
    pub policy: MitigationPolicy,
    pub quantum: Cycles,
    /// Simulated time after which no core starts another quantum.
    pub horizon: Option<Cycles>,
}

impl Scenario {
    /// Default topology, scoring, windows and quantum, no mitigations.
    pub fn new(workloads: Vec<Trace>, thresholds: Thresholds) -> Self {
        Self {
            workloads,
            topology: MachineTopology::default(),
            detector: DetectorConfig::new(thresholds),
            policy: MitigationPolicy::none(),
            quantum: DEFAULT_QUANTUM,
            horizon: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.detector
            .thresholds
            .validate()
            .map_err(SimError::Thresholds)?;
        self.detector.score.validate().map_err(SimError::Score)?;
        self.detector.window.validate().map_err(SimError::Window)?;
        if self.quantum == 0 {
            return Err(SimError::ZeroQuantum);
        }
        if self.workloads.is_empty() {
            return Err(SimError::NoProcesses);
        }
        for (workload, t) in self.workloads.iter().enumerate() {
            t.validate()
                .map_err(|source| SimError::Trace { workload, source })?;
            if t.deltas().next().is_none() {
                return Err(SimError::EmptyWorkload(workload));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid thresholds: {0}")]
    Thresholds(ThresholdViolation),
    #[error("invalid score configuration: {0}")]
    Score(ScoreConfigError),
    #[error("invalid window configuration: {0}")]
    Window(WindowConfigError),
    #[error("quantum must be positive")]
    ZeroQuantum,
    #[error("scenario has no processes")]
    NoProcesses,
    #[error("workload {0} has no deltas")]
    EmptyWorkload(usize),
    #[error("workload {workload}: {source}")]
    Trace { workload: usize, source: TraceError },
    #[error("process {pid}: {source}")]
    Overflow { pid: Pid, source: CountOverflow },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictSource {
    /// A full window ended.
    Boundary,
    /// The process was descheduled with enough of its window elapsed.
    Early,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimEventKind {
    ContextSwitch {
        from: Pid,
        to: Pid,
    },
    WindowBoundary(WindowBoundary),
    VerdictComputed {
        source: VerdictSource,
        predicates: PredicateVector,
        score: u32,
    },
    SuspicionRaised {
        score: u32,
    },
    Fork {
        child: Pid,
    },
    Exit,
    MitigationApplied(MitigationAction),
}

impl SimEventKind {
    pub fn name(&self) -> &'static str {
        match self {
            SimEventKind::ContextSwitch { .. } => "context_switch",
            SimEventKind::WindowBoundary(_) => "window_boundary",
            SimEventKind::VerdictComputed { .. } => "verdict",
            SimEventKind::SuspicionRaised { .. } => "suspicion_raised",
            SimEventKind::Fork { .. } => "fork",
            SimEventKind::Exit => "exit",
            SimEventKind::MitigationApplied(_) => "mitigation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimEvent {
    pub timestamp: Cycles,
    pub core: usize,
    /// Process the event is about; the outgoing one for context switches.
    pub pid: Pid,
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessReport {
    pub pid: Pid,
    pub workload: usize,
    pub tid: Tid,
    pub parent: Option<Pid>,
    /// Monitor state when the process was created.
    pub initial: ProcessMonitorState,
    pub state: ProcessMonitorState,
    pub ever_suspected: bool,
    pub patches_active: bool,
    pub exited: bool,
    pub cycles_run: Cycles,
    pub quanta: u64,
    /// Quanta started while suspected under TE without active patches.
    pub unpatched_suspect_quanta: u64,
}

/// Per-workload input of the confusion matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadOutcome {
    pub workload: usize,
    pub name: String,
    pub label: WorkloadLabel,
    /// Some process of the workload was suspected at some point.
    pub suspected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    /// Ordered by pid.
    pub processes: Vec<ProcessReport>,
    pub events: Vec<SimEvent>,
    pub outcomes: Vec<WorkloadOutcome>,
    pub ledger: OverheadLedger,
    /// Largest core clock at the end of the run.
    pub end_time: Cycles,
}

impl SimReport {
    pub fn process(&self, pid: Pid) -> Option<&ProcessReport> {
        self.processes.get(pid as usize).filter(|p| p.pid == pid)
    }

    pub fn events_of(&self, pid: Pid) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(move |e| e.pid == pid)
    }
}

/// Deschedules `outgoing` in favor of `incoming` on `core` at `now`.
///
/// When at least `early_eval_fraction` of the outgoing window has elapsed and
/// this window was not evaluated early before, the partial sample is evaluated
/// as is and scored. The partial sample stays in the window either way.
pub fn context_switch(
    core: usize,
    now: Cycles,
    outgoing: &mut ProcessMonitorState,
    incoming: Pid,
    cfg: &DetectorConfig,
) -> Vec<SimEvent> {
    debug_assert_ne!(outgoing.pid, incoming);
    let ev = |kind| SimEvent {
        timestamp: now,
        core,
        pid: outgoing.pid,
        kind,
    };
    let mut out = vec![ev(SimEventKind::ContextSwitch {
        from: outgoing.pid,
        to: incoming,
    })];
    out.extend(early_evaluation(core, now, outgoing, cfg));
    out
}

fn early_evaluation(
    core: usize,
    now: Cycles,
    st: &mut ProcessMonitorState,
    cfg: &DetectorConfig,
) -> Vec<SimEvent> {
    let w = &st.window;
    let enough = Fraction::from_integer(w.elapsed()) >= cfg.window.early_eval_fraction * w.width;
    if w.early_evaluated || w.elapsed() == 0 || !enough {
        return Vec::new();
    }
    st.window.early_evaluated = true;
    let sample = st.window.accum;
    score_sample(core, now, st, &sample, VerdictSource::Early, cfg)
}

fn score_sample(
    core: usize,
    now: Cycles,
    st: &mut ProcessMonitorState,
    sample: &EventWindowSample,
    source: VerdictSource,
    cfg: &DetectorConfig,
) -> Vec<SimEvent> {
    let predicates = evaluate_predicates(sample, &cfg.thresholds);
    let e = update_score(st, predicates.verdict(), &cfg.score);
    let ev = |kind| SimEvent {
        timestamp: now,
        core,
        pid: st.pid,
        kind,
    };
    let mut out = vec![ev(SimEventKind::VerdictComputed {
        source,
        predicates,
        score: e.new_score,
    })];
    if e.kind == ScoreEventKind::SuspicionRaised {
        out.push(ev(SimEventKind::SuspicionRaised { score: e.new_score }));
    }
    out
}

enum Item {
    Delta(EventWindowSample),
    Fork(Tid),
    Exit,
}

struct Task {
    workload: usize,
    tid: Tid,
    parent: Option<Pid>,
    items: VecDeque<Item>,
    initial: ProcessMonitorState,
    state: ProcessMonitorState,
    affinity: Option<usize>,
    patches_active: bool,
    ever_suspected: bool,
    exited: bool,
    cycles_run: Cycles,
    quanta: u64,
    unpatched_suspect_quanta: u64,
}

struct Core {
    clock: Cycles,
    current: Option<Pid>,
    parked: bool,
}

struct Sim<'a> {
    sc: &'a Scenario,
    queues: BTreeMap<(usize, Tid), VecDeque<Item>>,
    tasks: Vec<Task>,
    cores: Vec<Core>,
    run_queue: VecDeque<Pid>,
    events: Vec<SimEvent>,
    ledger: OverheadLedger,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let mut queues: BTreeMap<(usize, Tid), VecDeque<Item>> = BTreeMap::new();
        let mut roots = Vec::new();
        for (w, t) in sc.workloads.iter().enumerate() {
            let mut children = Vec::new();
            for r in &t.records {
                let (tid, item) = match *r {
                    TraceRecord::Delta { tid, sample } => (tid, Item::Delta(sample)),
                    TraceRecord::Fork { parent, child } => {
                        children.push(child);
                        queues.entry((w, child)).or_default();
                        (parent, Item::Fork(child))
                    }
                    TraceRecord::Exit { tid } => (tid, Item::Exit),
                };
                let q = queues.entry((w, tid)).or_default();
                if q.is_empty() && !children.contains(&tid) && !roots.contains(&(w, tid)) {
                    roots.push((w, tid));
                }
                q.push_back(item);
            }
        }
        let mut sim = Sim {
            sc,
            queues,
            tasks: Vec::new(),
            cores: (0..sc.topology.n_cores())
                .map(|_| Core {
                    clock: 0,
                    current: None,
                    parked: false,
                })
                .collect(),
            run_queue: VecDeque::new(),
            events: Vec::new(),
            ledger: OverheadLedger::default(),
        };
        for (w, tid) in roots {
            let pid = sim.tasks.len() as Pid;
            let state = ProcessMonitorState::new(pid, sc.detector.window.w_min);
            sim.spawn(w, tid, None, state, false);
            sim.run_queue.push_back(pid);
        }
        sim
    }

    fn spawn(
        &mut self,
        workload: usize,
        tid: Tid,
        parent: Option<Pid>,
        state: ProcessMonitorState,
        patches_active: bool,
    ) {
        let items = self.queues.remove(&(workload, tid)).unwrap_or_default();
        let affinity = parent.and_then(|p| self.tasks[p as usize].affinity);
        self.tasks.push(Task {
            workload,
            tid,
            parent,
            items,
            ever_suspected: state.suspected,
            initial: state,
            state,
            affinity,
            patches_active,
            exited: false,
            cycles_run: 0,
            quanta: 0,
            unpatched_suspect_quanta: 0,
        });
    }

    fn allowed(&self, pid: Pid, core: usize) -> bool {
        self.tasks[pid as usize].affinity.is_none_or(|c| c == core)
    }

    fn pop_for(&mut self, core: usize) -> Option<Pid> {
        let i = (0..self.run_queue.len()).find(|&i| self.allowed(self.run_queue[i], core))?;
        self.run_queue.remove(i)
    }

    fn enqueue(&mut self, pid: Pid, now: Cycles) {
        self.run_queue.push_back(pid);
        for c in self.cores.iter_mut().filter(|c| c.parked) {
            c.parked = false;
            c.clock = c.clock.max(now);
        }
    }

    fn emit(&mut self, events: impl IntoIterator<Item = SimEvent>) {
        for e in events {
            let raised = matches!(e.kind, SimEventKind::SuspicionRaised { .. });
            self.events.push(e);
            if raised {
                self.tasks[e.pid as usize].ever_suspected = true;
                self.mitigate(e.core, e.pid);
            }
        }
    }

    fn apply(&mut self, core: usize, pid: Pid, action: MitigationAction) {
        self.ledger.record(pid, &action);
        self.events.push(SimEvent {
            timestamp: self.cores[core].clock,
            core,
            pid,
            kind: SimEventKind::MitigationApplied(action),
        });
        self.cores[core].clock += action.cost;
    }

    fn mode_switch(&mut self, core: usize, pid: Pid) {
        let t = &self.tasks[pid as usize];
        let cost = mode_switch_cost(&t.state, t.patches_active, &self.sc.policy);
        if cost > 0 {
            let action = MitigationAction {
                kind: ActionKind::PatchedModeSwitch { switches: 1 },
                cost,
            };
            self.apply(core, pid, action);
        }
    }

    fn mitigate(&mut self, core: usize, pid: Pid) {
        let actions = on_suspicion_raised(
            &self.tasks[pid as usize].state,
            core,
            &self.sc.topology,
            &self.sc.policy,
        );
        for a in actions {
            self.apply(core, pid, a);
            match a.kind {
                ActionKind::EnablePatches(_) => self.tasks[pid as usize].patches_active = true,
                ActionKind::IpiBroadcast => {
                    for other in 0..self.cores.len() {
                        if other == core {
                            continue;
                        }
                        if let Some(q) = self.cores[other].current {
                            self.mode_switch(other, q);
                        }
                    }
                }
                ActionKind::AffinityMigrate { target_core } => {
                    self.tasks[pid as usize].affinity = Some(target_core)
                }
                _ => {}
            }
        }
    }

    fn schedule_in(&mut self, core: usize, pid: Pid) {
        self.cores[core].current = Some(pid);
        let t = &self.tasks[pid as usize];
        for a in on_schedule_in(&t.state, &self.sc.policy) {
            self.apply(core, pid, a);
        }
    }

    fn finish(&mut self, core: usize, pid: Pid) {
        let t = &mut self.tasks[pid as usize];
        t.exited = true;
        t.items.clear();
        self.cores[core].current = None;
        let now = self.cores[core].clock;
        self.events.push(SimEvent {
            timestamp: now,
            core,
            pid,
            kind: SimEventKind::Exit,
        });
    }

    fn feed(&mut self, core: usize, pid: Pid, delta: &EventWindowSample) -> Result<(), SimError> {
        let cfg = self.sc.detector;
        let t = &mut self.tasks[pid as usize];
        let carried = t.state.window.elapsed();
        let boundaries = advance(&mut t.state.window, delta, &cfg.window).map_err(|e| match e {
            WindowError::Overflow(source) => SimError::Overflow { pid, source },
            // trace validation rejects zero-cycle deltas
            WindowError::EmptyDelta => SimError::Trace {
                workload: t.workload,
                source: TraceError::ZeroCycles { index: 0 },
            },
        })?;
        t.cycles_run += delta.elapsed_cycles;

        let mut consumed = 0;
        let mut carried = carried;
        for b in boundaries {
            let step = b.width_used - carried;
            carried = 0;
            consumed += step;
            self.cores[core].clock += step;
            let now = self.cores[core].clock;
            let st = &mut self.tasks[pid as usize].state;
            st.windows_observed += 1;
            let mut evs = vec![SimEvent {
                timestamp: now,
                core,
                pid,
                kind: SimEventKind::WindowBoundary(b),
            }];
            evs.extend(score_sample(
                core,
                now,
                st,
                &b.sample,
                VerdictSource::Boundary,
                &cfg,
            ));
            self.emit(evs);
        }
        self.cores[core].clock += delta.elapsed_cycles - consumed;
        Ok(())
    }

    fn fork(&mut self, core: usize, parent: Pid, child_tid: Tid) {
        let child = self.tasks.len() as Pid;
        let p = &self.tasks[parent as usize];
        let state = on_fork(&p.state, child);
        let patches = p.patches_active && state.suspected;
        let workload = p.workload;
        self.spawn(workload, child_tid, Some(parent), state, patches);
        let now = self.cores[core].clock;
        self.events.push(SimEvent {
            timestamp: now,
            core,
            pid: parent,
            kind: SimEventKind::Fork { child },
        });
        self.enqueue(child, now);
    }

    /// Runs `pid` for one quantum on `core`; returns whether it is still alive.
    fn run_quantum(&mut self, core: usize, pid: Pid) -> Result<bool, SimError> {
        let t = &mut self.tasks[pid as usize];
        t.quanta += 1;
        if self.sc.policy.te && t.state.suspected && !t.patches_active {
            t.unpatched_suspect_quanta += 1;
        }
        self.mode_switch(core, pid);

        let mut used = 0;
        while used < self.sc.quantum {
            if self.sc.horizon.is_some_and(|h| self.cores[core].clock >= h) {
                break;
            }
            match self.tasks[pid as usize].items.pop_front() {
                None | Some(Item::Exit) => {
                    self.finish(core, pid);
                    return Ok(false);
                }
                Some(Item::Fork(tid)) => self.fork(core, pid, tid),
                Some(Item::Delta(d)) => {
                    self.feed(core, pid, &d)?;
                    used += d.elapsed_cycles;
                }
            }
        }
        Ok(true)
    }

    fn deschedule(&mut self, core: usize, pid: Pid, incoming: Option<Pid>) {
        let now = self.cores[core].clock;
        let cfg = self.sc.detector;
        let st = &mut self.tasks[pid as usize].state;
        let evs = match incoming {
            Some(next) => context_switch(core, now, st, next, &cfg),
            None => early_evaluation(core, now, st, &cfg),
        };
        self.emit(evs);
        self.cores[core].current = None;
    }

    fn next_core(&self) -> Option<usize> {
        let horizon = self.sc.horizon.unwrap_or(Cycles::MAX);
        (0..self.cores.len())
            .filter(|&c| !self.cores[c].parked && self.cores[c].clock < horizon)
            .min_by_key(|&c| (self.cores[c].clock, c))
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        while let Some(c) = self.next_core() {
            let pid = match self.cores[c].current {
                Some(p) => p,
                None => match self.pop_for(c) {
                    Some(p) => {
                        self.schedule_in(c, p);
                        p
                    }
                    None => {
                        self.cores[c].parked = true;
                        continue;
                    }
                },
            };
            if !self.run_quantum(c, pid)? {
                continue;
            }
            if !self.allowed(pid, c) {
                self.deschedule(c, pid, None);
                let now = self.cores[c].clock;
                self.enqueue(pid, now);
            } else if let Some(next) = self.pop_for(c) {
                self.deschedule(c, pid, Some(next));
                let now = self.cores[c].clock;
                self.enqueue(pid, now);
                self.schedule_in(c, next);
            }
        }
        Ok(self.report())
    }

    fn report(self) -> SimReport {
        let mut outcomes: Vec<WorkloadOutcome> = self
            .sc
            .workloads
            .iter()
            .enumerate()
            .map(|(workload, t)| WorkloadOutcome {
                workload,
                name: t.name.clone(),
                label: t.label,
                suspected: false,
            })
            .collect();
        let processes: Vec<ProcessReport> = self
            .tasks
            .into_iter()
            .enumerate()
            .map(|(pid, t)| {
                if t.ever_suspected {
                    outcomes[t.workload].suspected = true;
                }
                ProcessReport {
                    pid: pid as Pid,
                    workload: t.workload,
                    tid: t.tid,
                    parent: t.parent,
                    initial: t.initial,
                    state: t.state,
                    ever_suspected: t.ever_suspected,
                    patches_active: t.patches_active,
                    exited: t.exited,
                    cycles_run: t.cycles_run,
                    quanta: t.quanta,
                    unpatched_suspect_quanta: t.unpatched_suspect_quanta,
                }
            })
            .collect();
        SimReport {
            processes,
            events: self.events,
            outcomes,
            ledger: self.ledger,
            end_time: self.cores.iter().map(|c| c.clock).max().unwrap_or(0),
        }
    }
}

/// Runs a scenario to completion (or to its horizon).
pub fn run_simulation(scenario: &Scenario) -> Result<SimReport, SimError> {
    scenario.validate()?;
    Sim::new(scenario).run()
}
