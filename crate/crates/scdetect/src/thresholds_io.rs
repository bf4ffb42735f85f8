//! Thresholds file: one `phiN=<numerator>/<denominator>` line per threshold.

use std::fs;
use std::io;
use std::path::Path;

use scdetect_core::{Fraction, ThresholdViolation, Thresholds, WindowBounds};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ThresholdsFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("thresholds violate {0}")]
    Invalid(ThresholdViolation),
}

const NAMES: [&str; 5] = ["phi1", "phi2", "phi3", "phi4", "phi5"];

pub fn format_thresholds(t: &Thresholds) -> String {
    let mut out = String::new();
    for (name, phi) in NAMES.iter().zip(t.as_array()) {
        out.push_str(&format!("{name}={}/{}\n", phi.numer(), phi.denom()));
    }
    out
}

/// Parses `n/d` or a plain integer.
pub fn parse_fraction(s: &str) -> Option<Fraction> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim().parse().ok()?, d.trim().parse().ok()?),
        None => (s.parse().ok()?, 1),
    };
    (d != 0).then(|| Fraction::new(n, d))
}

pub fn parse_thresholds(text: &str) -> Result<Thresholds, ThresholdsFileError> {
    let mut phi: [Option<Fraction>; 5] = [None; 5];
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let err = |msg: String| ThresholdsFileError::Parse { line, msg };
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got `{l}`")))?;
        let slot = NAMES
            .iter()
            .position(|n| *n == k.trim())
            .ok_or_else(|| err(format!("unknown key `{}`", k.trim())))?;
        phi[slot] =
            Some(parse_fraction(v).ok_or_else(|| err(format!("bad fraction `{}`", v.trim())))?);
    }
    let mut out = [Fraction::from_integer(0); 5];
    for (i, p) in phi.iter().enumerate() {
        out[i] = p.ok_or(ThresholdsFileError::Missing(NAMES[i]))?;
    }
    let t = Thresholds::from_array(out);
    t.validate().map_err(ThresholdsFileError::Invalid)?;
    Ok(t)
}

pub fn load_thresholds(path: &Path) -> Result<Thresholds, ThresholdsFileError> {
    parse_thresholds(&fs::read_to_string(path)?)
}

pub fn format_window_bounds(b: &WindowBounds) -> String {
    format!(
        "w_min={}\nw_max={}\nfallback={}\n",
        b.w_min, b.w_max, b.fallback
    )
}
