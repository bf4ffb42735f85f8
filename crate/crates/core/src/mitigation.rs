//! Mitigation policy engine and overhead accounting.
//!
//! Two families of mitigations are modeled. Side-channel (SC) mitigations
//! flush the LLC whenever a suspected process is scheduled in and move the
//! suspect to a core of another cache domain. Transient-execution (TE)
//! mitigations enable a set of per-process patches, made effective on every
//! core by an IPI, after which each mode switch of the suspect pays a fixed
//! cost. Costs are abstract cycles.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::model::{Cycles, Pid, ProcessMonitorState};
use crate::simkernel::MachineTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatchId {
    Kpti,
    Mds,
    SpectreV1V2L1tf,
    Ssb,
    KvmNxHugePages,
    TsxAsyncAbort,
}

impl PatchId {
    pub const ALL: [PatchId; 6] = [
        PatchId::Kpti,
        PatchId::Mds,
        PatchId::SpectreV1V2L1tf,
        PatchId::Ssb,
        PatchId::KvmNxHugePages,
        PatchId::TsxAsyncAbort,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatchId::Kpti => "kpti",
            PatchId::Mds => "mds",
            PatchId::SpectreV1V2L1tf => "spectre_l1tf",
            PatchId::Ssb => "ssb",
            PatchId::KvmNxHugePages => "kvm_nx_huge_pages",
            PatchId::TsxAsyncAbort => "taa",
        }
    }
}

/// Set of patches, as a bitmask over [`PatchId::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PatchSet(u8);

impl PatchSet {
    pub const EMPTY: Self = Self(0);

    pub fn all() -> Self {
        PatchId::ALL.into_iter().collect()
    }

    pub fn insert(&mut self, p: PatchId) {
        self.0 |= 1 << p as u8;
    }

    pub fn contains(&self, p: PatchId) -> bool {
        self.0 & (1 << p as u8) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = PatchId> + '_ {
        PatchId::ALL.into_iter().filter(|p| self.contains(*p))
    }
}

impl FromIterator<PatchId> for PatchSet {
    fn from_iter<I: IntoIterator<Item = PatchId>>(iter: I) -> Self {
        let mut s = PatchSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

impl fmt::Display for PatchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(p.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    LlcFlush,
    AffinityMigrate {
        target_core: usize,
    },
    EnablePatches(PatchSet),
    IpiBroadcast,
    /// Mode switches of a patched process, charged at the per-switch cost.
    PatchedModeSwitch {
        switches: u64,
    },
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::LlcFlush => "llc_flush",
            ActionKind::AffinityMigrate { .. } => "affinity_migrate",
            ActionKind::EnablePatches(_) => "enable_patches",
            ActionKind::IpiBroadcast => "ipi_broadcast",
            ActionKind::PatchedModeSwitch { .. } => "patched_mode_switch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MitigationAction {
    pub kind: ActionKind,
    pub cost: Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CostModel {
    pub llc_flush: Cycles,
    pub mode_switch: Cycles,
    pub migration: Cycles,
    /// Charged once per core interrupted by the broadcast.
    pub ipi_per_core: Cycles,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            llc_flush: 500_000,
            mode_switch: 1_000,
            migration: 100_000,
            ipi_per_core: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MitigationPolicy {
    /// Transient-execution mitigations (per-process patches).
    pub te: bool,
    /// Side-channel mitigations (LLC flush, migration).
    pub sc: bool,
    pub patches: PatchSet,
    pub costs: CostModel,
}

impl MitigationPolicy {
    pub fn new(te: bool, sc: bool) -> Self {
        Self {
            te,
            sc,
            patches: PatchSet::all(),
            costs: CostModel::default(),
        }
    }

    pub fn none() -> Self {
        Self::new(false, false)
    }

    pub fn name(&self) -> &'static str {
        match (self.te, self.sc) {
            (false, false) => "none",
            (true, false) => "te",
            (false, true) => "sc",
            (true, true) => "te+sc",
        }
    }
}

impl Default for MitigationPolicy {
    fn default() -> Self {
        Self::new(true, true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mitigation policy `{0}` (expected none, te, sc or te+sc)")]
pub struct UnknownPolicy(pub alloc::string::String);

impl FromStr for MitigationPolicy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::new(false, false)),
            "te" => Ok(Self::new(true, false)),
            "sc" => Ok(Self::new(false, true)),
            "te+sc" | "sc+te" => Ok(Self::new(true, true)),
            _ => Err(UnknownPolicy(s.into())),
        }
    }
}

/// Actions taken right before a thread of `p` gets the CPU.
pub fn on_schedule_in(p: &ProcessMonitorState, policy: &MitigationPolicy) -> Vec<MitigationAction> {
    if p.suspected && policy.sc {
        vec![MitigationAction {
            kind: ActionKind::LlcFlush,
            cost: policy.costs.llc_flush,
        }]
    } else {
        Vec::new()
    }
}

/// Lowest-id core outside the cache domain of `current_core`.
pub fn migration_target(current_core: usize, topology: &MachineTopology) -> Option<usize> {
    let home = topology.domain_of(current_core)?;
    (0..topology.n_cores()).find(|&c| topology.domain_of(c) != Some(home))
}

/// Actions taken when `p` has just become suspected while on `current_core`.
pub fn on_suspicion_raised(
    p: &ProcessMonitorState,
    current_core: usize,
    topology: &MachineTopology,
    policy: &MitigationPolicy,
) -> Vec<MitigationAction> {
    debug_assert!(p.suspected);
    let mut out = Vec::new();
    if policy.te && !policy.patches.is_empty() {
        out.push(MitigationAction {
            kind: ActionKind::EnablePatches(policy.patches),
            cost: 0,
        });
        let others = topology.n_cores().saturating_sub(1) as Cycles;
        out.push(MitigationAction {
            kind: ActionKind::IpiBroadcast,
            cost: policy.costs.ipi_per_core * others,
        });
    }
    if policy.sc {
        if let Some(target_core) = migration_target(current_core, topology) {
            out.push(MitigationAction {
                kind: ActionKind::AffinityMigrate { target_core },
                cost: policy.costs.migration,
            });
        }
    }
    out
}

/// Extra cost of one user/kernel transition of `p`.
pub fn mode_switch_cost(
    p: &ProcessMonitorState,
    patches_active: bool,
    policy: &MitigationPolicy,
) -> Cycles {
    if p.suspected && patches_active && policy.te {
        policy.costs.mode_switch
    } else {
        0
    }
}

/// Cycles spent on mitigations, by category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CategoryCosts {
    pub flush: Cycles,
    pub migration: Cycles,
    pub mode_switch: Cycles,
    pub ipi: Cycles,
}

impl CategoryCosts {
    pub fn total(&self) -> Cycles {
        self.flush + self.migration + self.mode_switch + self.ipi
    }

    fn add(&mut self, a: &MitigationAction) {
        let slot = match a.kind {
            ActionKind::LlcFlush => &mut self.flush,
            ActionKind::AffinityMigrate { .. } => &mut self.migration,
            ActionKind::PatchedModeSwitch { .. } => &mut self.mode_switch,
            ActionKind::IpiBroadcast => &mut self.ipi,
            ActionKind::EnablePatches(_) => return,
        };
        *slot += a.cost;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverheadLedger {
    pub per_process: BTreeMap<Pid, CategoryCosts>,
    pub totals: CategoryCosts,
}

impl OverheadLedger {
    pub fn record(&mut self, pid: Pid, action: &MitigationAction) {
        self.per_process.entry(pid).or_default().add(action);
        self.totals.add(action);
    }

    pub fn is_zero(&self) -> bool {
        self.totals.total() == 0
    }
}
