use proptest::prelude::*;
use scdetect::trace_io::{load_trace, read_trace, save_trace, write_trace, TraceFileError};
use scdetect_core::workloads::{generate, preset, Tid};
use scdetect_core::{EventWindowSample, Trace, TraceRecord, WorkloadLabel};

fn sample() -> impl Strategy<Value = EventWindowSample> {
    (1..u64::MAX, proptest::array::uniform6(any::<u64>()))
        .prop_map(|(c, ev)| EventWindowSample::from_events(ev, c))
}

#[derive(Debug, Clone)]
enum Op {
    Delta(usize, EventWindowSample),
    Fork(usize),
    Exit(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (any::<usize>(), sample()).prop_map(|(t, s)| Op::Delta(t, s)),
        1 => any::<usize>().prop_map(Op::Fork),
        1 => any::<usize>().prop_map(Op::Exit),
    ]
}

/// Lifecycle-valid trace: operations pick among the live threads, the root
/// never exits early and every child exits before the end.
fn build(name: String, label: WorkloadLabel, ops: Vec<Op>) -> Trace {
    let mut live: Vec<Tid> = vec![0];
    let mut next: Tid = 1;
    let mut records = Vec::new();
    for o in ops {
        match o {
            Op::Delta(i, s) => records.push(TraceRecord::Delta {
                tid: live[i % live.len()],
                sample: s,
            }),
            Op::Fork(i) => {
                let parent = live[i % live.len()];
                records.push(TraceRecord::Fork {
                    parent,
                    child: next,
                });
                live.push(next);
                next += 1;
            }
            Op::Exit(i) if live.len() > 1 => {
                let tid = live.remove(1 + i % (live.len() - 1));
                records.push(TraceRecord::Exit { tid });
            }
            Op::Exit(_) => {}
        }
    }
    for tid in live.into_iter().rev() {
        records.push(TraceRecord::Exit { tid });
    }
    Trace {
        name,
        label,
        records,
    }
}

fn label() -> impl Strategy<Value = WorkloadLabel> {
    prop::sample::select(WorkloadLabel::ALL.to_vec())
}

fn round_trip(t: &Trace) -> Trace {
    let mut buf = Vec::new();
    write_trace(t, &mut buf).unwrap();
    read_trace(buf.as_slice()).unwrap()
}

proptest! {
    #[test]
    fn random_traces_round_trip(
        name in "[A-Za-z0-9_.,-]{0,16}",
        label in label(),
        ops in prop::collection::vec(op(), 0..60),
    ) {
        let t = build(name, label, ops);
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(round_trip(&t), t);
    }

    #[test]
    fn generated_presets_round_trip(seed in any::<u64>(), horizon in (1u64 << 20)..(1 << 25)) {
        for name in ["fork_heavy", "flush_reload", "xlate_probe"] {
            let t = generate(&preset(name).unwrap(), seed, horizon).unwrap().0;
            prop_assert_eq!(round_trip(&t), t);
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = std::env::temp_dir().join(format!("scdtrace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fork_heavy.scdtrace");
    let t = generate(&preset("fork_heavy").unwrap(), 3, 1 << 26)
        .unwrap()
        .0;
    assert!(t.fork_count() > 0);
    save_trace(&t, &path).unwrap();
    assert_eq!(load_trace(&path).unwrap(), t);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_file_is_io_error() {
    let err = load_trace(std::path::Path::new("/nonexistent/x.scdtrace")).unwrap_err();
    assert!(matches!(err, TraceFileError::Io(_)));
}

#[test]
fn malformed_lines_report_their_number() {
    let cases = [
        ("scdtrace v1\n0,10,1,1,1,1,1,x\n", 2),
        ("scdtrace v1\n\n# comment\n0,0,1,1,1,1,1,1\n", 4),
        ("scdtrace v1\nNAME,a\n0,10,1,1,1,1,1,1\nFORK,0\n", 4),
        ("scdtrace v1\nEXIT\n", 2),
        ("scdtrace v1\n0,10,1,1,1,1,1,18446744073709551616\n", 2),
    ];
    for (text, line) in cases {
        match read_trace(text.as_bytes()) {
            Err(TraceFileError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn children_must_be_forked_before_use() {
    let text = "scdtrace v1\n0,10,1,1,1,1,1,1\n3,10,1,1,1,1,1,1\nFORK,0,3\n";
    assert!(matches!(
        read_trace(text.as_bytes()),
        Err(TraceFileError::Invalid(_))
    ));
}
