//! Ratio metrics and the five detection predicates.
//!
//! Every comparison `x / y > n / d` is evaluated as `x * d > n * y` on `u128`,
//! which is exact for any pair of `u64` operands.

use crate::model::{EventWindowSample, Fraction, PredicateVector, Thresholds};

/// The four event ratios of one window. A ratio is `None` when its
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricRatios {
    /// L2 misses over L1 misses.
    pub r_l2_l1: Option<Fraction>,
    /// LLC misses over L1 misses.
    pub r_llc_l1: Option<Fraction>,
    /// L2 write-backs over L2 lines in.
    pub r_wb_lines: Option<Fraction>,
    /// Second-level TLB misses over L1 misses.
    pub r_tlb_l1: Option<Fraction>,
}

fn ratio(num: u64, den: u64) -> Option<Fraction> {
    (den != 0).then(|| Fraction::new(num, den))
}

pub fn compute_ratios(s: &EventWindowSample) -> MetricRatios {
    MetricRatios {
        r_l2_l1: ratio(s.l2_miss, s.l1_miss),
        r_llc_l1: ratio(s.llc_miss, s.l1_miss),
        r_wb_lines: ratio(s.l2_write_back, s.l2_lines_in),
        r_tlb_l1: ratio(s.tlb_miss_l2, s.l1_miss),
    }
}

/// `num / den > t`, with `den > 0`.
#[inline]
pub fn ratio_gt(num: u64, den: u64, t: &Fraction) -> bool {
    debug_assert!(den != 0);
    (num as u128) * (*t.denom() as u128) > (*t.numer() as u128) * (den as u128)
}

/// `num / den < t`, with `den > 0`.
#[inline]
pub fn ratio_lt(num: u64, den: u64, t: &Fraction) -> bool {
    debug_assert!(den != 0);
    (num as u128) * (*t.denom() as u128) < (*t.numer() as u128) * (den as u128)
}

/// Evaluates P1..P5, S1 and S over one window.
///
/// A window without L1 misses is inconclusive. A window without L2 lines in
/// leaves P3 undefined; it is inconclusive only when P3 would decide S,
/// otherwise P3 is reported false.
pub fn evaluate_predicates(s: &EventWindowSample, t: &Thresholds) -> PredicateVector {
    if s.l1_miss == 0 {
        return PredicateVector::INCONCLUSIVE;
    }
    let l1 = s.l1_miss;
    let p1 = ratio_gt(s.l2_miss, l1, &t.phi1);
    let p2 = ratio_gt(s.llc_miss, l1, &t.phi2);
    let p4 = ratio_gt(s.tlb_miss_l2, l1, &t.phi4);
    let p5 = ratio_lt(s.tlb_miss_l2, l1, &t.phi5);

    let p3 = if s.l2_lines_in == 0 {
        if !p4 && p1 && p2 && p5 {
            return PredicateVector::INCONCLUSIVE;
        }
        false
    } else {
        ratio_lt(s.l2_write_back, s.l2_lines_in, &t.phi3)
    };

    let s1 = p1 && p2 && p3 && p5;
    PredicateVector {
        p1,
        p2,
        p3,
        p4,
        p5,
        s1,
        s: s1 || p4,
        inconclusive: false,
    }
}
