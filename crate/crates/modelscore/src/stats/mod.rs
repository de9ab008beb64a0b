//! Paired significance tests over per-observation loss sequences.
//!
//! Both tests operate on the differences `d_i = a_i - b_i` only, so adding
//! any per-observation constant to both sides changes nothing. That is the
//! property that lets mean held-out losses stand in for divergences: the
//! entropy term common to both models cancels out of every difference.

pub mod special;
mod wilcoxon;

pub use special::{normal_sf, student_t_sf};
pub use wilcoxon::{exact_wilcoxon_tail, wilcoxon_signed_rank, WilcoxonMode};

use serde::{Deserialize, Serialize};

use crate::kahan::CompensatedSum;
use crate::{Error, Result};

/// Alternative hypothesis for a paired test. `ALess` means "the first
/// sequence has lower (better) losses".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    ALess,
    BLess,
}

impl Alternative {
    pub fn id(&self) -> &'static str {
        match self {
            Alternative::TwoSided => "two_sided",
            Alternative::ALess => "a_less",
            Alternative::BLess => "b_less",
        }
    }
}

/// Which side of a pair had the lower observed losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ALower,
    BLower,
    Tie,
}

impl Direction {
    pub fn mirrored(self) -> Self {
        match self {
            Direction::ALower => Direction::BLower,
            Direction::BLower => Direction::ALower,
            Direction::Tie => Direction::Tie,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Direction::ALower => "a_lower",
            Direction::BLower => "b_lower",
            Direction::Tie => "tie",
        }
    }
}

/// Two loss sequences paired by observation. Values must be finite; infinite
/// losses have to be resolved upstream (they poison a comparison rather than
/// being silently dropped).
#[derive(Debug, Clone)]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(a.len(), b.len()));
        }
        if a.len() < 2 {
            return Err(Error::SampleTooSmall {
                min: 2,
                got: a.len(),
            });
        }
        for (index, value) in a.iter().chain(b.iter()).enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteSample {
                    index: index % a.len(),
                });
            }
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn first(&self) -> &[f64] {
        &self.a
    }

    pub fn second(&self) -> &[f64] {
        &self.b
    }

    /// Per-observation differences `a_i - b_i`.
    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }
}

/// Outcome of a paired test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    /// `paired_t`, `wilcoxon_exact`, or `wilcoxon_normal_approx`.
    pub method: String,
    /// t statistic, or the positive-rank sum `W+`.
    pub statistic: f64,
    /// Degrees of freedom for the t-test; post-drop sample size for Wilcoxon.
    pub df_or_n: f64,
    /// One-sided p-value: for a one-sided alternative, its tail; for
    /// `two_sided`, the smaller tail.
    pub p_one_sided: f64,
    /// `min(1, 2 * smaller tail)`.
    pub p_two_sided: f64,
    pub direction: Direction,
    pub alternative: Alternative,
    /// Warnings: dropped zeros, approximation fallbacks, and the like.
    pub notes: Vec<String>,
}

impl TestResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_tails(
        method: String,
        statistic: f64,
        df_or_n: f64,
        lower_tail: f64,
        upper_tail: f64,
        direction: Direction,
        alternative: Alternative,
        notes: Vec<String>,
    ) -> Self {
        let min_tail = lower_tail.min(upper_tail);
        let p_one_sided = match alternative {
            Alternative::ALess => lower_tail,
            Alternative::BLess => upper_tail,
            Alternative::TwoSided => min_tail,
        };
        TestResult {
            method,
            statistic,
            df_or_n,
            p_one_sided: p_one_sided.clamp(0.0, 1.0),
            p_two_sided: (2.0 * min_tail).min(1.0),
            direction,
            alternative,
            notes,
        }
    }

    /// The p-value a verdict at the requested alternative should threshold.
    pub fn decision_p(&self) -> f64 {
        match self.alternative {
            Alternative::TwoSided => self.p_two_sided,
            _ => self.p_one_sided,
        }
    }
}

/// Paired Student t-test on the differences `a_i - b_i`.
///
/// Uses the sample standard deviation (`n - 1` denominator) and `df = n - 1`.
/// Identical sequences (zero variance of differences) are a reported error,
/// with the direction taken from the common sign of the differences.
pub fn paired_t_test(sample: &PairedSample, alternative: Alternative) -> Result<TestResult> {
    let d = sample.differences();
    let n = d.len() as f64;
    let mean = CompensatedSum::of(d.iter().copied()) / n;
    let mut ss = CompensatedSum::new();
    for &x in &d {
        let dev = x - mean;
        ss.add(dev * dev);
    }
    let var = ss.value() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::ZeroVariance {
            direction: direction_of_mean(mean),
        });
    }
    let std_error = (var / n).sqrt();
    let t = mean / std_error;
    let df = n - 1.0;
    let upper = student_t_sf(t, df)?;
    let lower = student_t_sf(-t, df)?;
    Ok(TestResult::from_tails(
        "paired_t".to_string(),
        t,
        df,
        lower,
        upper,
        direction_of_mean(mean),
        alternative,
        Vec::new(),
    ))
}

pub(crate) fn direction_of_mean(mean: f64) -> Direction {
    if mean < 0.0 {
        Direction::ALower
    } else if mean > 0.0 {
        Direction::BLower
    } else {
        Direction::Tie
    }
}
