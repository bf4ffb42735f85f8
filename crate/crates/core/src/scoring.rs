//! Per-process suspicion score.

use crate::model::{Pid, ProcessMonitorState, ScoreConfig, Verdict, WindowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreEventKind {
    ScoreChanged,
    SuspicionRaised,
    NoChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreEvent {
    pub kind: ScoreEventKind,
    pub new_score: u32,
}

/// Applies one window verdict to the score.
///
/// The score stays in `[0, gamma]`. Reaching gamma raises the suspected flag;
/// in sticky mode the flag is never cleared, otherwise it drops when the score
/// returns to zero. Inconclusive windows count as benign.
pub fn update_score(
    state: &mut ProcessMonitorState,
    verdict: Verdict,
    cfg: &ScoreConfig,
) -> ScoreEvent {
    let old = state.score;
    let new = match verdict {
        Verdict::Suspicious => old.saturating_add(cfg.alpha).min(cfg.gamma),
        Verdict::Benign | Verdict::Inconclusive => old.saturating_sub(cfg.beta),
    };
    state.score = new;

    if cfg.detection_enabled() && new >= cfg.gamma && !state.suspected {
        state.suspected = true;
        return ScoreEvent {
            kind: ScoreEventKind::SuspicionRaised,
            new_score: new,
        };
    }
    if !cfg.sticky && new == 0 {
        state.suspected = false;
    }
    let kind = if new == old {
        ScoreEventKind::NoChange
    } else {
        ScoreEventKind::ScoreChanged
    };
    ScoreEvent {
        kind,
        new_score: new,
    }
}

/// State of a freshly forked child: flag and score are copied from the
/// parent, the observation window restarts empty at the parent's width.
pub fn on_fork(parent: &ProcessMonitorState, child_pid: Pid) -> ProcessMonitorState {
    ProcessMonitorState {
        pid: child_pid,
        score: parent.score,
        suspected: parent.suspected,
        windows_observed: 0,
        window: WindowState::new(parent.window.width),
    }
}
