//! CSV reports. Each report starts with the effective configuration as
//! `# key=value` comment lines.

use scdetect_core::calibration::ThresholdAudit;
use scdetect_core::mitigation::CategoryCosts;
use scdetect_core::simkernel::{SimEvent, SimEventKind, VerdictSource};
use scdetect_core::{ActionKind, SimReport, Trace};

use crate::experiments::{Confusion, LeakageRow, SECRET_BYTES};

fn csv_text<I, R>(header: &str, columns: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    format!("{header}{body}")
}

pub fn confusion_csv(header: &str, rows: &[Confusion]) -> String {
    let mut out = Vec::new();
    for c in rows {
        for (label, (suspected, total)) in &c.classes {
            out.push(vec![
                c.gamma.to_string(),
                label.to_string(),
                suspected.to_string(),
                total.to_string(),
            ]);
        }
    }
    csv_text(header, &["gamma", "class", "suspected", "count"], out)
}

pub fn confusion_summary_csv(header: &str, rows: &[Confusion]) -> String {
    let out = rows.iter().map(|c| {
        vec![
            c.gamma.to_string(),
            c.false_positives().to_string(),
            c.false_negatives().to_string(),
        ]
    });
    csv_text(
        header,
        &["gamma", "false_positives", "false_negatives"],
        out,
    )
}

pub fn leakage_csv(header: &str, rows: &[LeakageRow]) -> String {
    let out = rows.iter().map(|r| {
        vec![
            r.gamma.to_string(),
            r.victim_delay_us.to_string(),
            r.extracted.to_string(),
            SECRET_BYTES.to_string(),
        ]
    });
    csv_text(
        header,
        &["gamma", "victim_delay_us", "extracted", "total"],
        out,
    )
}

pub fn audit_csv(header: &str, audit: &[ThresholdAudit]) -> String {
    let out = audit.iter().map(|a| {
        vec![
            a.name.to_string(),
            a.metric.to_string(),
            a.attack_category.to_string(),
            format!("{:.6}", a.attack_mean_f64()),
            format!("{:.6}", a.benign_mean_f64()),
            format!("{}/{}", a.value.numer(), a.value.denom()),
            a.exact.to_string(),
        ]
    });
    csv_text(
        header,
        &[
            "threshold",
            "metric",
            "attack_category",
            "attack_mean",
            "benign_mean",
            "value",
            "exact",
        ],
        out,
    )
}

fn event_detail(e: &SimEvent) -> String {
    match e.kind {
        SimEventKind::ContextSwitch { to, .. } => format!("to={to}"),
        SimEventKind::WindowBoundary(b) => {
            let s = b.sample;
            format!(
                "width={} l1={} l2={} llc={} wb={} lines={} tlb={}",
                b.width_used,
                s.l1_miss,
                s.l2_miss,
                s.llc_miss,
                s.l2_write_back,
                s.l2_lines_in,
                s.tlb_miss_l2
            )
        }
        SimEventKind::VerdictComputed {
            source,
            predicates: p,
            score,
        } => format!(
            "source={} verdict={} p={}{}{}{}{} score={score}",
            match source {
                VerdictSource::Boundary => "boundary",
                VerdictSource::Early => "early",
            },
            p.verdict().as_str(),
            p.p1 as u8,
            p.p2 as u8,
            p.p3 as u8,
            p.p4 as u8,
            p.p5 as u8,
        ),
        SimEventKind::SuspicionRaised { score } => format!("score={score}"),
        SimEventKind::Fork { child } => format!("child={child}"),
        SimEventKind::Exit => String::new(),
        SimEventKind::MitigationApplied(a) => {
            let extra = match a.kind {
                ActionKind::AffinityMigrate { target_core } => format!(" target={target_core}"),
                ActionKind::EnablePatches(set) => format!(" patches={set}"),
                _ => String::new(),
            };
            format!("action={} cost={}{extra}", a.kind.name(), a.cost)
        }
    }
}

pub fn events_csv(header: &str, r: &SimReport) -> String {
    let out = r.events.iter().map(|e| {
        vec![
            e.timestamp.to_string(),
            e.core.to_string(),
            e.pid.to_string(),
            e.kind.name().to_string(),
            event_detail(e),
        ]
    });
    csv_text(
        header,
        &["timestamp", "core", "pid", "event", "detail"],
        out,
    )
}

pub fn processes_csv(header: &str, r: &SimReport, workloads: &[Trace]) -> String {
    let out = r.processes.iter().map(|p| {
        let w = &workloads[p.workload];
        vec![
            p.pid.to_string(),
            w.name.clone(),
            w.label.to_string(),
            p.tid.to_string(),
            p.parent.map_or(String::new(), |x| x.to_string()),
            p.state.score.to_string(),
            p.state.suspected.to_string(),
            p.ever_suspected.to_string(),
            p.state.windows_observed.to_string(),
            p.cycles_run.to_string(),
        ]
    });
    csv_text(
        header,
        &[
            "pid",
            "workload",
            "label",
            "tid",
            "parent",
            "score",
            "suspected",
            "ever_suspected",
            "windows",
            "cycles",
        ],
        out,
    )
}

fn cost_row(who: String, c: &CategoryCosts) -> Vec<String> {
    vec![
        who,
        c.flush.to_string(),
        c.migration.to_string(),
        c.mode_switch.to_string(),
        c.ipi.to_string(),
        c.total().to_string(),
    ]
}

pub fn ledger_csv(header: &str, r: &SimReport) -> String {
    let mut out: Vec<Vec<String>> = r
        .ledger
        .per_process
        .iter()
        .map(|(pid, c)| cost_row(pid.to_string(), c))
        .collect();
    out.push(cost_row("total".into(), &r.ledger.totals));
    csv_text(
        header,
        &["pid", "flush", "migration", "mode_switch", "ipi", "total"],
        out,
    )
}
