//! Synthetic experiments with known ground truth.
//!
//! States are drawn from a concrete simplex family, outcomes from the drawn
//! distribution, and model reports are deterministic perturbations of the
//! true distribution — so which model is better is known by construction and
//! the whole scoring-plus-testing pipeline can be validated end to end.
//!
//! Reproducibility: replication `r` uses ChaCha8 stream `r + 1` of the
//! master seed and the ground-truth gap estimate uses stream 0, so results
//! are bit-identical for a fixed seed regardless of scheduling.
//!
//! States are drawn i.i.d. within a replication. Repeated states pose no
//! problem for scoring itself, but the paired tests treat observations as
//! independent; sampling schemes that revisit states would need that
//! assumption revisited too.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::comparison::{test_loss_sequences, TestKind, REPORT_SCHEMA_VERSION};
use crate::kahan::CompensatedSum;
use crate::scoring::{expected_loss, OutcomeIndex, ProbabilityVector, RuleChoice, ScoringRule};
use crate::stats::{Alternative, Direction};
use crate::{Error, Result};

/// Smallest coordinate an interior state draw may have; draws below are
/// resampled (and counted) so perturbations and the log rule stay finite.
pub const INTERIOR_FLOOR: f64 = 1e-12;
const MAX_RESAMPLE_ATTEMPTS: usize = 1000;

/// Concrete family generating the per-state outcome distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateFamilyKind {
    /// Dirichlet over the simplex, sampled by per-coordinate Gamma draws
    /// (Marsaglia-Tsang) normalized to sum 1.
    Dirichlet { alpha: Vec<f64> },
    /// Degenerate family: every state has the same outcome distribution.
    Fixed { f: Vec<f64> },
}

/// Family plus the master seed all streams derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistributionFamily {
    #[serde(flatten)]
    pub kind: StateFamilyKind,
    pub seed: u64,
}

impl StateDistributionFamily {
    pub fn k(&self) -> usize {
        match &self.kind {
            StateFamilyKind::Dirichlet { alpha } => alpha.len(),
            StateFamilyKind::Fixed { f } => f.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            StateFamilyKind::Dirichlet { alpha } => {
                if alpha.len() < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "dirichlet alpha needs at least 2 entries, got {}",
                        alpha.len()
                    )));
                }
                if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "dirichlet alpha entries must be positive and finite".to_string(),
                    ));
                }
            }
            StateFamilyKind::Fixed { f } => {
                ProbabilityVector::new(f.clone())
                    .map_err(|e| Error::InvalidConfig(format!("fixed family: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Deterministic map from a true distribution to a model's report. Since the
/// map is fixed, the model with lower expected divergence is known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPerturbation {
    /// Reports the truth; by strict propriety this model is unbeatable.
    Truthful,
    /// `(1 - w) f + w uniform`.
    UniformMixture { w: f64 },
    /// `normalize(f^(1/tau))`: tau > 1 flattens, tau < 1 sharpens.
    Temperature { tau: f64 },
    /// Ignores the state entirely and always reports `q`.
    Fixed { q: Vec<f64> },
}

impl ModelPerturbation {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            ModelPerturbation::Truthful => Ok(()),
            ModelPerturbation::UniformMixture { w } => {
                if !(0.0..=1.0).contains(w) {
                    return Err(Error::InvalidConfig(format!(
                        "uniform_mixture weight must be in [0, 1], got {w}"
                    )));
                }
                Ok(())
            }
            ModelPerturbation::Temperature { tau } => {
                if !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "temperature must be positive and finite, got {tau}"
                    )));
                }
                Ok(())
            }
            ModelPerturbation::Fixed { q } => {
                if q.len() != k {
                    return Err(Error::InvalidConfig(format!(
                        "fixed report has {} entries for K = {k}",
                        q.len()
                    )));
                }
                ProbabilityVector::new(q.clone())
                    .map_err(|e| Error::InvalidConfig(format!("fixed report: {e}")))?;
                Ok(())
            }
        }
    }

    /// The model's report in a state with true distribution `f`.
    pub fn apply(&self, f: &ProbabilityVector) -> Result<ProbabilityVector> {
        match self {
            ModelPerturbation::Truthful => Ok(f.clone()),
            ModelPerturbation::UniformMixture { w } => {
                let k = f.k() as f64;
                let weights = f
                    .weights()
                    .iter()
                    .map(|&x| (1.0 - w) * x + w / k)
                    .collect();
                ProbabilityVector::new(weights)
            }
            ModelPerturbation::Temperature { tau } => {
                let exponent = 1.0 / tau;
                // Scale by the max first so extreme temperatures cannot
                // underflow every coordinate at once.
                let max = f.weights().iter().copied().fold(0.0f64, f64::max);
                let powered: Vec<f64> = f
                    .weights()
                    .iter()
                    .map(|&x| (x / max).powf(exponent))
                    .collect();
                let sum = CompensatedSum::of(powered.iter().copied());
                ProbabilityVector::with_sum_tolerance(
                    powered.iter().map(|&x| x / sum).collect(),
                    1e-9,
                    true,
                )
            }
            ModelPerturbation::Fixed { q } => ProbabilityVector::new(q.clone()),
        }
    }
}

fn default_rule() -> RuleChoice {
    RuleChoice::Log
}
fn default_test() -> TestKind {
    TestKind::T
}
fn default_alternative() -> Alternative {
    Alternative::TwoSided
}
fn default_alpha() -> f64 {
    0.05
}
fn default_gap_draws() -> usize {
    10_000
}

/// A full experiment: family, exactly two named models, sample sizes, and
/// the test configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: StateDistributionFamily,
    /// Exactly two models; compared in name order.
    pub models: BTreeMap<String, ModelPerturbation>,
    /// Observations per replication.
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_rule")]
    pub rule: RuleChoice,
    #[serde(default = "default_test")]
    pub test: TestKind,
    #[serde(default = "default_alternative")]
    pub alternative: Alternative,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Monte-Carlo draws for the ground-truth gap estimate.
    #[serde(default = "default_gap_draws")]
    pub gap_draws: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        let k = self.family.k();
        if self.models.len() != 2 {
            return Err(Error::InvalidConfig(format!(
                "experiments compare exactly 2 models, got {}",
                self.models.len()
            )));
        }
        for (name, pert) in &self.models {
            pert.validate(k)
                .map_err(|e| Error::InvalidConfig(format!("model '{name}': {e}")))?;
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.replications < 1 {
            return Err(Error::InvalidConfig("replications must be >= 1".to_string()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.gap_draws < 1 {
            return Err(Error::InvalidConfig("gap_draws must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Prepared sampler for a state family.
pub struct StateSampler {
    kind: PreparedFamily,
}

enum PreparedFamily {
    Dirichlet { gammas: Vec<Gamma<f64>> },
    Fixed { f: ProbabilityVector },
}

impl StateSampler {
    pub fn new(family: &StateFamilyKind) -> Result<Self> {
        let kind = match family {
            StateFamilyKind::Dirichlet { alpha } => PreparedFamily::Dirichlet {
                gammas: alpha
                    .iter()
                    .map(|&a| {
                        Gamma::new(a, 1.0).map_err(|e| {
                            Error::InvalidConfig(format!("gamma shape {a}: {e}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            },
            StateFamilyKind::Fixed { f } => PreparedFamily::Fixed {
                f: ProbabilityVector::new(f.clone())?,
            },
        };
        Ok(Self { kind })
    }

    /// One state draw; may touch the simplex boundary.
    pub fn sample(&self, rng: &mut impl Rng) -> ProbabilityVector {
        match &self.kind {
            PreparedFamily::Dirichlet { gammas } => {
                let raw: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
                let sum = CompensatedSum::of(raw.iter().copied());
                if sum <= 0.0 {
                    // All-zero Gamma draws are possible only for tiny alpha;
                    // fall back to uniform rather than divide by zero.
                    return ProbabilityVector::uniform(gammas.len())
                        .expect("family has k >= 2");
                }
                ProbabilityVector::with_sum_tolerance(
                    raw.iter().map(|&x| x / sum).collect(),
                    1e-6,
                    true,
                )
                .expect("normalized gamma draws form a probability vector")
            }
            PreparedFamily::Fixed { f } => f.clone(),
        }
    }

    /// State draw resampled (and counted) until every coordinate is at
    /// least [`INTERIOR_FLOOR`]. Fixed families return their distribution
    /// as-is.
    pub fn sample_interior(
        &self,
        rng: &mut impl Rng,
        resamples: &mut usize,
    ) -> Result<ProbabilityVector> {
        if let PreparedFamily::Fixed { f } = &self.kind {
            return Ok(f.clone());
        }
        for _ in 0..MAX_RESAMPLE_ATTEMPTS {
            let f = self.sample(rng);
            if f.min_weight() >= INTERIOR_FLOOR {
                return Ok(f);
            }
            *resamples += 1;
        }
        Err(Error::BoundaryResampleExhausted {
            attempts: MAX_RESAMPLE_ATTEMPTS,
        })
    }
}

/// Categorical draw from `f` by inverse CDF over the cumulative weights.
pub fn sample_outcome(f: &ProbabilityVector, rng: &mut impl Rng) -> OutcomeIndex {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (j, &w) in f.weights().iter().enumerate() {
        if w > 0.0 {
            last_positive = j;
        }
        cumulative += w;
        if u < cumulative {
            return OutcomeIndex(j);
        }
    }
    // Rounding can leave the total a hair under u; the last outcome with
    // mass takes the remainder.
    OutcomeIndex(last_positive)
}

/// Monte-Carlo estimate of a ground-truth quantity, with its standard error.
#[derive(Debug, Clone, Serialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Estimates `E[expected_loss(rule, f, a(f))] - E[expected_loss(rule, f, b(f))]`
/// over the state family. Because the entropy term cancels, this equals the
/// expected divergence gap; negative means `a` is the better model.
pub fn true_expected_loss_gap(
    family: &StateFamilyKind,
    pert_a: &ModelPerturbation,
    pert_b: &ModelPerturbation,
    rule: &ScoringRule,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<GapEstimate> {
    if pert_a == pert_b {
        return Ok(GapEstimate {
            gap: 0.0,
            std_error: 0.0,
            draws: 0,
        });
    }
    let sampler = StateSampler::new(family)?;
    if let StateFamilyKind::Fixed { f } = family {
        let f = ProbabilityVector::new(f.clone())?;
        let gap = per_state_gap(&f, pert_a, pert_b, rule)?;
        return Ok(GapEstimate {
            gap,
            std_error: 0.0,
            draws: 1,
        });
    }
    let mut resamples = 0usize;
    let mut acc = CompensatedSum::new();
    let mut acc_sq = CompensatedSum::new();
    for _ in 0..draws {
        let f = sampler.sample_interior(rng, &mut resamples)?;
        let gap = per_state_gap(&f, pert_a, pert_b, rule)?;
        acc.add(gap);
        acc_sq.add(gap * gap);
    }
    let n = draws as f64;
    let mean = acc.value() / n;
    let variance = ((acc_sq.value() / n) - mean * mean).max(0.0);
    Ok(GapEstimate {
        gap: mean,
        std_error: (variance / n).sqrt(),
        draws,
    })
}

fn per_state_gap(
    f: &ProbabilityVector,
    pert_a: &ModelPerturbation,
    pert_b: &ModelPerturbation,
    rule: &ScoringRule,
) -> Result<f64> {
    let qa = pert_a.apply(f)?;
    let qb = pert_b.apply(f)?;
    Ok(expected_loss(rule, f, &qa)? - expected_loss(rule, f, &qb)?)
}

/// One replication's test outcome (or the reason it degenerated).
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_one_sided: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_two_sided: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Mean loss of model a minus mean loss of model b in this replication.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

/// Aggregate outcome of [`run_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    pub schema_version: u32,
    pub seed: u64,
    pub n: usize,
    pub rule: String,
    pub test: TestKind,
    pub alternative: Alternative,
    pub alpha: f64,
    pub model_a: String,
    pub model_b: String,
    /// True when both models are the same perturbation (a null experiment).
    pub null_experiment: bool,
    pub true_gap: GapEstimate,
    /// Mean over non-degenerate replications of (mean loss a - mean loss b).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_empirical_gap: Option<f64>,
    /// Fraction of non-degenerate replications declaring the truly better
    /// model better at alpha. Absent for null experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery_rate: Option<f64>,
    /// Fraction of non-degenerate replications rejecting at alpha under a
    /// null experiment. Absent otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub false_positive_rate: Option<f64>,
    pub degenerate_count: usize,
    pub boundary_resamples: usize,
    pub replications: Vec<ReplicationOutcome>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the configured experiment: per replication, draw `n` states and
/// outcomes, score both models' reports, run the paired test, and aggregate
/// how often the truly better model is recovered at `alpha`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let mut models = cfg.models.iter();
    let (name_a, pert_a) = models.next().expect("validated: exactly two models");
    let (name_b, pert_b) = models.next().expect("validated: exactly two models");
    let rule = cfg.rule.to_rule();
    let seed = cfg.family.seed;

    let true_gap = true_expected_loss_gap(
        &cfg.family.kind,
        pert_a,
        pert_b,
        &rule,
        cfg.gap_draws,
        &mut stream_rng(seed, 0),
    )?;
    // A null experiment is one whose ground truth cannot name a better
    // model: identical perturbations, or a gap the Monte-Carlo estimate
    // cannot resolve from zero. Such runs report a false-positive rate
    // instead of a recovery rate.
    let null_experiment =
        pert_a == pert_b || true_gap.gap.abs() <= 3.0 * true_gap.std_error;
    let truly_better = if null_experiment {
        None
    } else if true_gap.gap < 0.0 {
        Some(Direction::ALower)
    } else {
        Some(Direction::BLower)
    };

    let sampler = StateSampler::new(&cfg.family.kind)?;
    let mut outcomes = Vec::with_capacity(cfg.replications);
    let mut boundary_resamples = 0usize;
    let mut degenerate_count = 0usize;
    let mut successes = 0usize;
    let mut rejections = 0usize;
    let mut tested = 0usize;
    let mut gap_acc = CompensatedSum::new();

    for r in 0..cfg.replications {
        let mut rng = stream_rng(seed, r as u64 + 1);
        let mut losses_a = Vec::with_capacity(cfg.n);
        let mut losses_b = Vec::with_capacity(cfg.n);
        let mut degenerate: Option<String> = None;
        for _ in 0..cfg.n {
            let f = sampler.sample_interior(&mut rng, &mut boundary_resamples)?;
            let x = sample_outcome(&f, &mut rng);
            let la = rule.loss(&pert_a.apply(&f)?, x)?;
            let lb = rule.loss(&pert_b.apply(&f)?, x)?;
            if !la.is_finite() || !lb.is_finite() {
                degenerate = Some("infinite loss in replication".to_string());
                break;
            }
            losses_a.push(la);
            losses_b.push(lb);
        }
        let outcome = match degenerate {
            Some(reason) => Err(reason),
            None => {
                let mean_a = CompensatedSum::of(losses_a.iter().copied()) / cfg.n as f64;
                let mean_b = CompensatedSum::of(losses_b.iter().copied()) / cfg.n as f64;
                match test_loss_sequences(losses_a, losses_b, cfg.test, cfg.alternative) {
                    Ok(result) => Ok((result, mean_a - mean_b)),
                    Err(e) => Err(e.to_string()),
                }
            }
        };
        match outcome {
            Ok((result, empirical_gap)) => {
                tested += 1;
                gap_acc.add(empirical_gap);
                let rejected = result.decision_p() <= cfg.alpha;
                if rejected {
                    rejections += 1;
                    if truly_better == Some(result.direction) {
                        successes += 1;
                    }
                }
                outcomes.push(ReplicationOutcome {
                    replication: r,
                    statistic: Some(result.statistic),
                    p_one_sided: Some(result.p_one_sided),
                    p_two_sided: Some(result.p_two_sided),
                    direction: Some(result.direction),
                    empirical_gap: Some(empirical_gap),
                    degenerate: None,
                });
            }
            Err(reason) => {
                degenerate_count += 1;
                outcomes.push(ReplicationOutcome {
                    replication: r,
                    statistic: None,
                    p_one_sided: None,
                    p_two_sided: None,
                    direction: None,
                    empirical_gap: None,
                    degenerate: Some(reason),
                });
            }
        }
    }

    let mean_empirical_gap = (tested > 0).then(|| gap_acc.value() / tested as f64);
    let (recovery_rate, false_positive_rate) = if null_experiment {
        // Identical perturbations degenerate every test (all differences are
        // zero); no completed test means no rejection, a rate of 0.
        let rate = if tested > 0 {
            rejections as f64 / tested as f64
        } else {
            0.0
        };
        (None, Some(rate))
    } else {
        (
            (tested > 0).then(|| successes as f64 / tested as f64),
            None,
        )
    };

    Ok(RecoveryResult {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        n: cfg.n,
        rule: rule.id(),
        test: cfg.test,
        alternative: cfg.alternative,
        alpha: cfg.alpha,
        model_a: name_a.clone(),
        model_b: name_b.clone(),
        null_experiment,
        true_gap,
        mean_empirical_gap,
        recovery_rate,
        false_positive_rate,
        degenerate_count,
        boundary_resamples,
        replications: outcomes,
    })
}

impl RecoveryResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization cannot fail")
    }
}

#[cfg(test)]
mod tests;
