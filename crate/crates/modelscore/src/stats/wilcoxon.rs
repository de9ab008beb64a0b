//! Wilcoxon signed-rank test with an exact small-sample null distribution.
//!
//! Zero differences are dropped (Wilcoxon's original convention) and the
//! drop count surfaced in the notes. Tied absolute differences get average
//! ranks. In `Auto` mode the exact null is used when the post-drop sample is
//! small and untied; otherwise the normal approximation with continuity
//! correction and tie-adjusted variance takes over.

use super::{direction_of_mean, normal_sf, Alternative, Direction, PairedSample, TestResult};
use crate::{Error, Result};

/// Largest post-drop sample size for which `2^n` sign enumeration runs.
pub const EXACT_ENUMERATION_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMode {
    Exact,
    NormalApprox,
    Auto,
}

/// Wilcoxon signed-rank test on the differences `a_i - b_i`.
pub fn wilcoxon_signed_rank(
    sample: &PairedSample,
    alternative: Alternative,
    mode: WilcoxonMode,
) -> Result<TestResult> {
    let mut notes = Vec::new();
    let d: Vec<f64> = sample
        .differences()
        .into_iter()
        .filter(|&x| x != 0.0)
        .collect();
    let dropped = sample.len() - d.len();
    if dropped > 0 {
        notes.push(format!("dropped {dropped} zero differences"));
    }
    if d.is_empty() {
        return Err(Error::AllDifferencesZero);
    }
    let n = d.len();

    let ranks = average_ranks(&d);
    let has_ties = ranks.tie_sizes.iter().any(|&t| t > 1);
    let mut w_plus = 0.0;
    for (rank, &diff) in ranks.ranks.iter().zip(&d) {
        if diff > 0.0 {
            w_plus += rank;
        }
    }
    let total: f64 = ranks.ranks.iter().sum();
    let mean = 0.5 * total;
    let direction = if w_plus < mean {
        Direction::ALower
    } else if w_plus > mean {
        Direction::BLower
    } else {
        Direction::Tie
    };

    let use_exact = match mode {
        WilcoxonMode::Exact => {
            if n > EXACT_ENUMERATION_MAX {
                return Err(Error::ExactEnumerationRange {
                    got: n,
                    max: EXACT_ENUMERATION_MAX,
                });
            }
            true
        }
        WilcoxonMode::NormalApprox => false,
        WilcoxonMode::Auto => n <= EXACT_ENUMERATION_MAX && !has_ties,
    };

    let (method, lower, upper) = if use_exact {
        if has_ties {
            notes.push("exact null conditioned on tied (averaged) ranks".to_string());
        }
        let (lower, upper) = exact_tails(&ranks.ranks, w_plus);
        ("wilcoxon_exact".to_string(), lower, upper)
    } else {
        if matches!(mode, WilcoxonMode::Auto) {
            if has_ties {
                notes.push("normal approximation used (tied ranks)".to_string());
            } else {
                notes.push(format!(
                    "normal approximation used (n = {n} > {EXACT_ENUMERATION_MAX})"
                ));
            }
        }
        let nf = n as f64;
        let tie_correction: f64 = ranks
            .tie_sizes
            .iter()
            .map(|&t| {
                let t = t as f64;
                (t * t * t - t) / 48.0
            })
            .sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction;
        if var <= 0.0 {
            return Err(Error::ZeroVariance {
                direction: direction_of_mean(w_plus - mean),
            });
        }
        let sd = var.sqrt();
        // Continuity-corrected normal tails. Both tails go through the same
        // expression with the deviation negated, so swapping the two sides
        // of the sample swaps the tails bit for bit.
        let delta = w_plus - mean;
        let tail = |signed_delta: f64| normal_sf((signed_delta - 0.5) / sd);
        let upper = tail(delta)?;
        let lower = tail(-delta)?;
        ("wilcoxon_normal_approx".to_string(), lower, upper)
    };

    Ok(TestResult::from_tails(
        method,
        w_plus,
        n as f64,
        lower,
        upper,
        direction,
        alternative,
        notes,
    ))
}

struct RankedDiffs {
    /// Average rank of |d_i|, aligned with the input order.
    ranks: Vec<f64>,
    /// Sizes of tie groups (size 1 for untied values).
    tie_sizes: Vec<usize>,
}

fn average_ranks(d: &[f64]) -> RankedDiffs {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].abs().partial_cmp(&d[j].abs()).unwrap());
    let mut ranks = vec![0.0; d.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && d[order[end]].abs() == d[order[start]].abs() {
            end += 1;
        }
        // positions start..end share the average of ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    RankedDiffs { ranks, tie_sizes }
}

/// Exact `(P(W+ <= w), P(W+ >= w))` by enumerating all sign assignments over
/// the given rank vector. Average ranks are multiples of 1/2, so doubling
/// them gives exact integer sums.
fn exact_tails(ranks: &[f64], w_obs: f64) -> (f64, f64) {
    let doubled: Vec<u64> = ranks.iter().map(|&r| (2.0 * r).round() as u64).collect();
    let w2 = (2.0 * w_obs).round() as u64;
    let n = doubled.len();
    let mut at_most = 0u64;
    let mut at_least = 0u64;
    // Gray-code walk: one rank toggles per step.
    let mut sum = 0u64;
    let mut members = 0u32;
    let count_mask = |sum: u64, at_most: &mut u64, at_least: &mut u64| {
        if sum <= w2 {
            *at_most += 1;
        }
        if sum >= w2 {
            *at_least += 1;
        }
    };
    count_mask(sum, &mut at_most, &mut at_least);
    for i in 1u64..(1u64 << n) {
        let bit = i.trailing_zeros() as usize;
        if members & (1 << bit) == 0 {
            sum += doubled[bit];
            members |= 1 << bit;
        } else {
            sum -= doubled[bit];
            members &= !(1 << bit);
        }
        count_mask(sum, &mut at_most, &mut at_least);
    }
    let denom = (1u64 << n) as f64;
    (at_most as f64 / denom, at_least as f64 / denom)
}

/// Exact upper tail `P(W+ >= w)` of the null distribution over untied ranks
/// `1..=n`, by full enumeration of the `2^n` sign assignments.
///
/// This is the independent oracle for [`wilcoxon_signed_rank`]'s exact mode;
/// it builds the full null histogram by dynamic subset walking rather than
/// re-scoring a sample.
pub fn exact_wilcoxon_tail(n: usize, w: f64) -> Result<f64> {
    if !(1..=EXACT_ENUMERATION_MAX).contains(&n) {
        return Err(Error::ExactEnumerationRange {
            got: n,
            max: EXACT_ENUMERATION_MAX,
        });
    }
    let total = n * (n + 1) / 2;
    let mut counts = vec![0u64; total + 1];
    let mut sum = 0usize;
    let mut members = 0u32;
    counts[0] += 1;
    for i in 1u64..(1u64 << n) {
        let bit = i.trailing_zeros() as usize;
        let rank = bit + 1;
        if members & (1 << bit) == 0 {
            sum += rank;
            members |= 1 << bit;
        } else {
            sum -= rank;
            members &= !(1 << bit);
        }
        counts[sum] += 1;
    }
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| *s as f64 >= w)
        .map(|(_, &c)| c)
        .sum();
    Ok(hits as f64 / (1u64 << n) as f64)
}
