//! `scdtrace v1` text format.
//!
//! ```text
//! scdtrace v1
//! NAME,flush_reload
//! LABEL,direct_attack
//! 0,262144,8000,7400,6900,100,7600,30
//! FORK,0,1
//! EXIT,1
//! ```
//!
//! Delta lines are `tid,cycles,l1m,l2m,llcm,l2wb,l2li,tlbm`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use scdetect_core::workloads::{Tid, Trace, TraceRecord, WorkloadLabel};
use scdetect_core::EventWindowSample;
use thiserror::Error;

pub const HEADER: &str = "scdtrace v1";
const MAGIC: &str = "scdtrace";

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line 1: unsupported trace version `{0}` (expected `{HEADER}`)")]
    Version(String),
    #[error("line 1: not a trace file (missing `{HEADER}` header)")]
    MissingHeader,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid trace: {0}")]
    Invalid(#[from] scdetect_core::workloads::TraceError),
}

pub fn write_trace<W: Write>(t: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    writeln!(w, "NAME,{}", t.name)?;
    writeln!(w, "LABEL,{}", t.label)?;
    for r in &t.records {
        match r {
            TraceRecord::Delta { tid, sample: s } => writeln!(
                w,
                "{tid},{},{},{},{},{},{},{}",
                s.elapsed_cycles,
                s.l1_miss,
                s.l2_miss,
                s.llc_miss,
                s.l2_write_back,
                s.l2_lines_in,
                s.tlb_miss_l2
            )?,
            TraceRecord::Fork { parent, child } => writeln!(w, "FORK,{parent},{child}")?,
            TraceRecord::Exit { tid } => writeln!(w, "EXIT,{tid}")?,
        }
    }
    w.flush()
}

fn num<T: FromStr>(field: &str, what: &str, line: usize) -> Result<T, TraceFileError> {
    field.trim().parse().map_err(|_| TraceFileError::Parse {
        line,
        msg: format!("bad {what} `{field}`"),
    })
}

fn arity(fields: &[&str], n: usize, what: &str, line: usize) -> Result<(), TraceFileError> {
    if fields.len() != n {
        return Err(TraceFileError::Parse {
            line,
            msg: format!("{what} record needs {n} fields, found {}", fields.len()),
        });
    }
    Ok(())
}

/// Parses a trace and checks its lifecycle records.
pub fn read_trace<R: BufRead>(r: R) -> Result<Trace, TraceFileError> {
    let mut lines = r.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(TraceFileError::MissingHeader),
    };
    let first = first.trim_end();
    match first.split_once(' ') {
        Some((MAGIC, "v1")) => {}
        Some((MAGIC, v)) => return Err(TraceFileError::Version(v.to_string())),
        _ => return Err(TraceFileError::MissingHeader),
    }

    let mut t = Trace::empty("", WorkloadLabel::Benign);
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        let l = l?;
        let l = l.trim_end();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        match f[0] {
            "NAME" => t.name = l["NAME,".len().min(l.len())..].to_string(),
            "LABEL" => {
                arity(&f, 2, "LABEL", line)?;
                t.label = f[1]
                    .parse()
                    .map_err(
                        |e: scdetect_core::workloads::UnknownLabel| TraceFileError::Parse {
                            line,
                            msg: e.to_string(),
                        },
                    )?;
            }
            "FORK" => {
                arity(&f, 3, "FORK", line)?;
                t.records.push(TraceRecord::Fork {
                    parent: num(f[1], "parent tid", line)?,
                    child: num(f[2], "child tid", line)?,
                });
            }
            "EXIT" => {
                arity(&f, 2, "EXIT", line)?;
                t.records.push(TraceRecord::Exit {
                    tid: num(f[1], "tid", line)?,
                });
            }
            _ => {
                arity(&f, 8, "delta", line)?;
                let tid: Tid = num(f[0], "tid", line)?;
                let cycles: u64 = num(f[1], "cycle count", line)?;
                if cycles == 0 {
                    return Err(TraceFileError::Parse {
                        line,
                        msg: "delta with zero cycles".into(),
                    });
                }
                let mut ev = [0u64; 6];
                for (k, v) in ev.iter_mut().enumerate() {
                    *v = num(f[k + 2], "event count", line)?;
                }
                t.records.push(TraceRecord::Delta {
                    tid,
                    sample: EventWindowSample::from_events(ev, cycles),
                });
            }
        }
    }
    t.validate()?;
    Ok(t)
}

pub fn save_trace(t: &Trace, path: &Path) -> io::Result<()> {
    write_trace(t, BufWriter::new(File::create(path)?))
}

pub fn load_trace(path: &Path) -> Result<Trace, TraceFileError> {
    read_trace(BufReader::new(File::open(path)?))
}
