//! Clock-cycle observation windows.
//!
//! A delta that crosses one or more window boundaries is split pro-rata by
//! cycles. The cumulative share of an event at cycle offset `c` of a delta
//! with `C` cycles and `n` events is `round_half_up(n * c / C)`; each window
//! takes the difference of consecutive cumulative shares, so the split is
//! exactly conservative.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{
    CountOverflow, Cycles, EventRates, EventWindowSample, WindowConfig, WindowState, EVENT_COUNT,
};

/// One full observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowBoundary {
    pub sample: EventWindowSample,
    pub width_used: Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("delta must carry a positive number of cycles")]
    EmptyDelta,
    #[error(transparent)]
    Overflow(#[from] CountOverflow),
}

/// Floor of the minimum denominator used for relative rate changes, one event
/// per 10^9 cycles.
const EPSILON_DENOM: u64 = 1_000_000_000;

fn prorata(count: u64, offset: Cycles, total: Cycles) -> u64 {
    let num = 2 * (count as u128) * (offset as u128) + total as u128;
    (num / (2 * total as u128)) as u64
}

/// Feeds `delta` into the window, emitting every boundary it completes.
///
/// After each boundary the width is adapted from that window's rates against
/// the previous window's rates.
pub fn advance(
    state: &mut WindowState,
    delta: &EventWindowSample,
    cfg: &WindowConfig,
) -> Result<Vec<WindowBoundary>, WindowError> {
    let total = delta.elapsed_cycles;
    if total == 0 {
        return Err(WindowError::EmptyDelta);
    }
    let counts = delta.events();
    let mut taken = [0u64; EVENT_COUNT];
    let mut offset: Cycles = 0;
    let mut out = Vec::new();

    while total - offset >= state.width - state.elapsed() {
        offset += state.width - state.elapsed();
        let mut part = [0u64; EVENT_COUNT];
        for i in 0..EVENT_COUNT {
            let cum = prorata(counts[i], offset, total);
            part[i] = cum - taken[i];
            taken[i] = cum;
        }
        let head = EventWindowSample::from_events(part, state.width - state.elapsed());
        let sample = state.accum.checked_add(&head)?;
        out.push(WindowBoundary {
            sample,
            width_used: state.width,
        });

        let rates = sample.rates();
        if let Some(prev) = state.prev_rates {
            state.width = adapt(state.width, &prev, &rates, cfg);
        }
        state.prev_rates = Some(rates);
        state.accum = EventWindowSample::ZERO;
        state.early_evaluated = false;

        if offset == total {
            return Ok(out);
        }
    }

    let mut rest = [0u64; EVENT_COUNT];
    for i in 0..EVENT_COUNT {
        rest[i] = counts[i] - taken[i];
    }
    let tail = EventWindowSample::from_events(rest, total - offset);
    state.accum = state.accum.checked_add(&tail)?;
    Ok(out)
}

fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

/// Largest relative change of the six per-cycle rates between two windows,
/// `|cur - prev| / max(prev, 1e-9)`.
pub fn fluctuation(prev: &EventRates, cur: &EventRates) -> BigRational {
    let eps = BigRational::new(big(1), big(EPSILON_DENOM));
    let mut worst = BigRational::zero();
    for i in 0..EVENT_COUNT {
        let p = BigRational::new(big(prev.counts[i]), big(prev.cycles.max(1)));
        let c = BigRational::new(big(cur.counts[i]), big(cur.cycles.max(1)));
        let base = if p > eps { p.clone() } else { eps.clone() };
        let rel = (c - p).abs() / base;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

/// Halves the width on a large fluctuation, doubles it on a small one, and
/// clamps the result to `[w_min, w_max]`.
pub fn adapt_width(width: Cycles, fluct: &BigRational, cfg: &WindowConfig) -> Cycles {
    let as_big = |f: &crate::model::Fraction| BigRational::new(big(*f.numer()), big(*f.denom()));
    let next = if *fluct > as_big(&cfg.shrink_trigger) {
        width / 2
    } else if *fluct < as_big(&cfg.grow_trigger) {
        width.saturating_mul(2)
    } else {
        width
    };
    next.clamp(cfg.w_min, cfg.w_max)
}

pub fn adapt(width: Cycles, prev: &EventRates, cur: &EventRates, cfg: &WindowConfig) -> Cycles {
    adapt_width(width, &fluctuation(prev, cur), cfg)
}
