//! Losses, divergences, and generalized entropies for proper scoring rules
//! over discrete outcome distributions.
//!
//! All losses are negated scores, so lower is better everywhere in this
//! crate. For each rule the three quantities are tied together by the
//! decomposition
//!
//! ```text
//! expected_loss(rule, f, q) = divergence(rule, f, q) + generalized_entropy(rule, f)
//! ```
//!
//! where `f` is the (usually unobservable) true distribution and `q` a
//! model's report. The entropy term does not depend on `q`, which is what
//! makes mean held-out loss a valid basis for comparing models.

mod generator;

pub use generator::{
    check_gradient, check_midpoint_convexity, validate_generator, BregmanGenerator,
    CustomGenerator, EuclideanNorm, Negentropy, SquaredNorm,
};

use std::fmt;
use std::sync::Arc;

use crate::kahan::CompensatedSum;
use crate::{Error, Result};

/// Loss of a single (report, outcome) pair. Nats for the log rule,
/// rule-specific units otherwise; `+inf` is possible for the log rule.
pub type LossValue = f64;

/// Index of an observed outcome, in `[0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutcomeIndex(pub usize);

impl fmt::Display for OutcomeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for OutcomeIndex {
    fn from(index: usize) -> Self {
        OutcomeIndex(index)
    }
}

/// Sums within this distance of 1 are treated as exactly normalized and left
/// untouched. One normalization pass lands far inside this band (compensated
/// summation keeps the residual near machine epsilon), so validating twice is
/// bitwise identical to validating once.
const RENORMALIZE_SKIP: f64 = 1e-12;

/// Sum tolerance for direct construction; ingestion policies may widen it.
const DEFAULT_SUM_TOLERANCE: f64 = 1e-9;

/// Nonnegative weights over `K >= 2` discrete outcomes summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates and constructs; the sum must already be within `1e-9` of 1.
    /// Renormalizes (divides by the sum) unless the sum is 1 to within
    /// [`RENORMALIZE_SKIP`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::with_sum_tolerance(weights, DEFAULT_SUM_TOLERANCE, true)
    }

    /// Ingestion-path constructor: the dataset policy supplies the sum
    /// tolerance and decides whether out-of-true sums are renormalized or
    /// kept verbatim.
    pub fn with_sum_tolerance(
        weights: Vec<f64>,
        sum_tolerance: f64,
        renormalize: bool,
    ) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewOutcomes(weights.len()));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteWeight { index, value });
            }
            if value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        let sum = CompensatedSum::of(weights.iter().copied());
        if (sum - 1.0).abs() > sum_tolerance {
            return Err(Error::SumOutOfTolerance {
                sum,
                tolerance: sum_tolerance,
            });
        }
        let mut weights = weights;
        if renormalize && (sum - 1.0).abs() > RENORMALIZE_SKIP {
            for w in &mut weights {
                *w /= sum;
            }
        }
        Ok(Self { weights })
    }

    /// Uniform distribution over `k` outcomes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewOutcomes(k));
        }
        Ok(Self {
            weights: vec![1.0 / k as f64; k],
        })
    }

    /// Number of outcomes `K`.
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of outcome `i`, bounds-checked.
    pub fn get(&self, i: OutcomeIndex) -> Result<f64> {
        self.weights
            .get(i.0)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: i.0,
                k: self.k(),
            })
    }

    /// Smallest weight; used for interiority checks.
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_same_k(&self, other: &Self) -> Result<()> {
        if self.k() != other.k() {
            return Err(Error::DimensionMismatch(self.k(), other.k()));
        }
        Ok(())
    }

    /// Consumes the vector, returning the raw weights.
    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Serializable choice among the built-in rules; the config-file and CLI
/// surface for [`ScoringRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    Log,
    Quadratic,
    Spherical,
}

impl RuleChoice {
    pub fn to_rule(self) -> ScoringRule {
        match self {
            RuleChoice::Log => ScoringRule::Log,
            RuleChoice::Quadratic => ScoringRule::Quadratic,
            RuleChoice::Spherical => ScoringRule::Spherical,
        }
    }
}

/// A proper scoring rule: identifies the loss, its associated divergence,
/// and the generalized entropy (the model-independent term of the expected
/// loss).
#[derive(Clone)]
pub enum ScoringRule {
    /// `-ln(q_i)`; divergence is KL, entropy is Shannon entropy.
    Log,
    /// `-2 q_i + ||q||^2`; divergence is squared Euclidean distance.
    Quadratic,
    /// `-q_i / ||q||_2`; the spherical rule (cosine-similarity geometry).
    Spherical,
    /// Rule induced by an arbitrary strictly convex generator.
    Bregman(Arc<dyn BregmanGenerator>),
}

impl fmt::Debug for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScoringRule({})", self.id())
    }
}

impl ScoringRule {
    /// Stable identifier used in reports and serialized output.
    pub fn id(&self) -> String {
        match self {
            ScoringRule::Log => "log".to_string(),
            ScoringRule::Quadratic => "quadratic".to_string(),
            ScoringRule::Spherical => "spherical".to_string(),
            ScoringRule::Bregman(gen) => format!("bregman:{}", gen.name()),
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self, ScoringRule::Log)
    }

    /// Per-observation loss of report `q` given observed outcome `i`.
    pub fn loss(&self, q: &ProbabilityVector, i: OutcomeIndex) -> Result<LossValue> {
        match self {
            ScoringRule::Log => log_loss(q, i),
            ScoringRule::Quadratic => quadratic_loss(q, i),
            ScoringRule::Spherical => spherical_loss(q, i),
            ScoringRule::Bregman(gen) => bregman_loss(gen.as_ref(), q, i),
        }
    }

    /// Divergence of report `q` from distribution `p`.
    pub fn divergence(&self, p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
        match self {
            ScoringRule::Log => kl_divergence(p, q),
            ScoringRule::Quadratic => squared_euclidean(p, q),
            ScoringRule::Spherical => bregman_divergence(&EuclideanNorm, p, q),
            ScoringRule::Bregman(gen) => bregman_divergence(gen.as_ref(), p, q),
        }
    }

    /// Generalized entropy `-phi(f)` of the rule's generator.
    pub fn generalized_entropy(&self, f: &ProbabilityVector) -> Result<f64> {
        generalized_entropy(self, f)
    }

    /// Expected loss of report `q` when outcomes are drawn from `f`.
    pub fn expected_loss(&self, f: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
        expected_loss(self, f, q)
    }
}

/// `-ln(q_i)`. Returns `+inf` when `q_i = 0`; whether that is acceptable is
/// an ingestion-policy question, not a scoring one.
pub fn log_loss(q: &ProbabilityVector, i: OutcomeIndex) -> Result<LossValue> {
    let qi = q.get(i)?;
    Ok(-qi.ln())
}

/// `-2 q_i + ||q||^2`, always in `[-1, 1]`.
pub fn quadratic_loss(q: &ProbabilityVector, i: OutcomeIndex) -> Result<LossValue> {
    let qi = q.get(i)?;
    Ok(-2.0 * qi + squared_norm(q.weights()))
}

/// `-q_i / ||q||_2`, always in `[-1, 0]`.
pub fn spherical_loss(q: &ProbabilityVector, i: OutcomeIndex) -> Result<LossValue> {
    let qi = q.get(i)?;
    Ok(-qi / squared_norm(q.weights()).sqrt())
}

/// Loss induced by a Bregman generator:
/// `-(phi(q) + grad_phi(q) . (e_i - q))`.
///
/// With the built-in generators this reproduces [`log_loss`]
/// (negentropy), [`quadratic_loss`] (squared norm), and [`spherical_loss`]
/// (Euclidean norm).
pub fn bregman_loss(
    gen: &dyn BregmanGenerator,
    q: &ProbabilityVector,
    i: OutcomeIndex,
) -> Result<LossValue> {
    q.get(i)?;
    let parts = BregmanParts::at(gen, q)?;
    Ok(parts.loss(i.0))
}

/// Generator terms evaluated once per report so per-outcome losses are O(1).
struct BregmanParts {
    phi: f64,
    grad: Vec<f64>,
    grad_dot_q: f64,
}

impl BregmanParts {
    fn at(gen: &dyn BregmanGenerator, q: &ProbabilityVector) -> Result<Self> {
        let grad = gen.grad_phi(q.weights());
        if grad.len() != q.k() {
            return Err(Error::DimensionMismatch(grad.len(), q.k()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::GradientUndefined {
                name: gen.name().to_string(),
            });
        }
        let phi = gen.phi(q.weights());
        if !phi.is_finite() {
            return Err(Error::GradientUndefined {
                name: gen.name().to_string(),
            });
        }
        let mut dot = CompensatedSum::new();
        for (g, w) in grad.iter().zip(q.weights()) {
            dot.add(g * w);
        }
        Ok(Self {
            phi,
            grad,
            grad_dot_q: dot.value(),
        })
    }

    fn loss(&self, j: usize) -> f64 {
        -(self.phi + self.grad[j] - self.grad_dot_q)
    }
}

/// KL divergence `sum_j p_j ln(p_j / q_j)` with the `0 ln 0 = 0` convention.
/// `+inf` when `q` puts zero mass where `p` does not.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    p.check_same_k(q)?;
    let mut acc = CompensatedSum::new();
    for (&pj, &qj) in p.weights().iter().zip(q.weights()) {
        if pj == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc.add(pj * (pj / qj).ln());
    }
    Ok(acc.value())
}

/// Squared Euclidean distance `||p - q||^2`.
pub fn squared_euclidean(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    p.check_same_k(q)?;
    let mut acc = CompensatedSum::new();
    for (&pj, &qj) in p.weights().iter().zip(q.weights()) {
        let d = pj - qj;
        acc.add(d * d);
    }
    Ok(acc.value())
}

/// Bregman divergence `phi(p) - phi(q) - grad_phi(q) . (p - q)`.
pub fn bregman_divergence(
    gen: &dyn BregmanGenerator,
    p: &ProbabilityVector,
    q: &ProbabilityVector,
) -> Result<f64> {
    p.check_same_k(q)?;
    let grad = gen.grad_phi(q.weights());
    if grad.len() != q.k() {
        return Err(Error::DimensionMismatch(grad.len(), q.k()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::GradientUndefined {
            name: gen.name().to_string(),
        });
    }
    let phi_p = gen.phi(p.weights());
    let phi_q = gen.phi(q.weights());
    if !phi_q.is_finite() {
        return Err(Error::GradientUndefined {
            name: gen.name().to_string(),
        });
    }
    if phi_p == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let mut acc = CompensatedSum::new();
    acc.add(phi_p);
    acc.add(-phi_q);
    for (g, (&pj, &qj)) in grad.iter().zip(p.weights().iter().zip(q.weights())) {
        acc.add(-g * (pj - qj));
    }
    Ok(acc.value())
}

/// Generalized entropy `-phi(f)`: Shannon entropy for the log rule,
/// `-||f||^2` for the quadratic rule, `-||f||_2` for the spherical rule.
pub fn generalized_entropy(rule: &ScoringRule, f: &ProbabilityVector) -> Result<f64> {
    let value = match rule {
        ScoringRule::Log => shannon_entropy(f.weights()),
        ScoringRule::Quadratic => -squared_norm(f.weights()),
        ScoringRule::Spherical => -squared_norm(f.weights()).sqrt(),
        ScoringRule::Bregman(gen) => {
            let phi = gen.phi(f.weights());
            if !phi.is_finite() {
                return Err(Error::GradientUndefined {
                    name: gen.name().to_string(),
                });
            }
            -phi
        }
    };
    Ok(value)
}

/// Expected per-observation loss `sum_j f_j loss(q, j)` of report `q` under
/// outcome distribution `f`. Equals `divergence(f, q) + generalized_entropy(f)`
/// for every rule; that identity is the module's central invariant.
pub fn expected_loss(
    rule: &ScoringRule,
    f: &ProbabilityVector,
    q: &ProbabilityVector,
) -> Result<f64> {
    f.check_same_k(q)?;
    let mut acc = CompensatedSum::new();
    match rule {
        ScoringRule::Log => {
            for (&fj, &qj) in f.weights().iter().zip(q.weights()) {
                if fj == 0.0 {
                    continue;
                }
                if qj == 0.0 {
                    return Ok(f64::INFINITY);
                }
                acc.add(fj * -qj.ln());
            }
        }
        ScoringRule::Quadratic => {
            let norm2 = squared_norm(q.weights());
            for (&fj, &qj) in f.weights().iter().zip(q.weights()) {
                if fj == 0.0 {
                    continue;
                }
                acc.add(fj * (-2.0 * qj + norm2));
            }
        }
        ScoringRule::Spherical => {
            let norm = squared_norm(q.weights()).sqrt();
            for (&fj, &qj) in f.weights().iter().zip(q.weights()) {
                if fj == 0.0 {
                    continue;
                }
                acc.add(fj * (-qj / norm));
            }
        }
        ScoringRule::Bregman(gen) => {
            let parts = BregmanParts::at(gen.as_ref(), q)?;
            for (j, &fj) in f.weights().iter().enumerate() {
                if fj == 0.0 {
                    continue;
                }
                acc.add(fj * parts.loss(j));
            }
        }
    }
    Ok(acc.value())
}

/// Shannon entropy `-sum f_j ln f_j` in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(weights: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &w in weights {
        if w > 0.0 {
            acc.add(-w * w.ln());
        }
    }
    acc.value()
}

fn squared_norm(weights: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &w in weights {
        acc.add(w * w);
    }
    acc.value()
}
