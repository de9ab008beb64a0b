//! Score every model on every held-out observation, aggregate the figures
//! of merit, run pairwise significance tests, and emit a report.
//!
//! The figure of merit is the mean per-observation loss; for the log rule
//! the exponentiated mean (perplexity) is attached as well. Verdicts come
//! from pairwise paired tests, optionally Holm-adjusted.

use serde::Serialize;

use crate::dataset::PredictionDataset;
use crate::kahan::CompensatedSum;
use crate::scoring::ScoringRule;
use crate::stats::{
    paired_t_test, wilcoxon_signed_rank, Alternative, Direction, PairedSample, TestResult,
    WilcoxonMode,
};
use crate::{Error, Result};

/// Version tag for the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Which paired test to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    T,
    Wilcoxon,
}

impl TestKind {
    pub fn id(&self) -> &'static str {
        match self {
            TestKind::T => "t",
            TestKind::Wilcoxon => "wilcoxon",
        }
    }
}

/// Per-model aggregate under one rule.
#[derive(Debug, Clone, Serialize)]
pub struct ModelScoreSummary {
    pub model: String,
    pub rule: String,
    /// Loss per observation in record order; may contain `+inf`.
    pub per_observation_losses: Vec<f64>,
    /// Compensated mean of the losses; `+inf` if any loss is infinite.
    pub mean_loss: f64,
    /// `exp(mean_loss)`, attached only for the log rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    pub infinite_count: usize,
}

/// Exponentiated mean log loss. Composed directly as `exp`, never through a
/// separate accumulation path, so `perplexity == exp(mean_loss)` exactly.
pub fn perplexity(mean_log_loss: f64) -> f64 {
    mean_log_loss.exp()
}

/// Scores one model over the whole dataset.
pub fn score_model(
    ds: &PredictionDataset,
    model: &str,
    rule: &ScoringRule,
) -> Result<ModelScoreSummary> {
    let idx = ds.model_index(model)?;
    let mut losses = Vec::with_capacity(ds.n());
    let mut acc = CompensatedSum::new();
    let mut infinite_count = 0usize;
    for record in ds.records() {
        let loss = rule.loss(&record.predictions[idx], record.outcome)?;
        if loss.is_infinite() {
            infinite_count += 1;
        }
        acc.add(loss);
        losses.push(loss);
    }
    let mean_loss = acc.value() / ds.n() as f64;
    Ok(ModelScoreSummary {
        model: model.to_string(),
        rule: rule.id(),
        perplexity: rule.is_log().then(|| perplexity(mean_loss)),
        per_observation_losses: losses,
        mean_loss,
        infinite_count,
    })
}

/// Runs the chosen paired test on two loss sequences.
pub fn test_loss_sequences(
    losses_a: Vec<f64>,
    losses_b: Vec<f64>,
    test: TestKind,
    alternative: Alternative,
) -> Result<TestResult> {
    let sample = PairedSample::new(losses_a, losses_b)?;
    match test {
        TestKind::T => paired_t_test(&sample, alternative),
        TestKind::Wilcoxon => wilcoxon_signed_rank(&sample, alternative, WilcoxonMode::Auto),
    }
}

/// Paired comparison of two models. An infinite loss in either member of a
/// pair is an error: silently dropping the worst observations would bias
/// the comparison toward the model that produced them.
pub fn compare_pair(
    ds: &PredictionDataset,
    model_a: &str,
    model_b: &str,
    rule: &ScoringRule,
    test: TestKind,
    alternative: Alternative,
) -> Result<TestResult> {
    let aligned = ds.align_models(model_a, model_b)?;
    let sample = aligned.paired_losses(rule)?;
    let mut result = match test {
        TestKind::T => paired_t_test(&sample, alternative)?,
        TestKind::Wilcoxon => wilcoxon_signed_rank(&sample, alternative, WilcoxonMode::Auto)?,
    };
    let disagreements = aligned.support_disagreements();
    if disagreements > 0 {
        result.notes.push(format!(
            "support disagreement on {disagreements} observations \
             (one model reported zero on the observed outcome)"
        ));
    }
    Ok(result)
}

/// Outcome of one pair: either a completed test or the error that stopped it.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PairOutcome {
    Tested { result: TestResult },
    Failed { error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FirstBetter,
    SecondBetter,
    Inconclusive,
}

impl Verdict {
    pub fn id(&self) -> &'static str {
        match self {
            Verdict::FirstBetter => "first_better",
            Verdict::SecondBetter => "second_better",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One row of the pairwise section of a report.
#[derive(Debug, Clone, Serialize)]
pub struct PairComparison {
    pub model_a: String,
    pub model_b: String,
    #[serde(flatten)]
    pub outcome: PairOutcome,
    /// Holm-adjusted two-sided p-value, when adjustment was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_p_two_sided: Option<f64>,
    pub verdict: Verdict,
}

/// Full output of [`compare_all`].
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub rule: String,
    pub test: TestKind,
    pub alternative: Alternative,
    pub alpha: f64,
    pub holm: bool,
    pub n: usize,
    pub labels: Vec<String>,
    pub summaries: Vec<ModelScoreSummary>,
    pub pairwise: Vec<PairComparison>,
}

/// Summaries for every model in a dataset, without pairwise tests.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub rule: String,
    pub n: usize,
    pub labels: Vec<String>,
    pub summaries: Vec<ModelScoreSummary>,
}

pub fn score_all(ds: &PredictionDataset, rule: &ScoringRule) -> Result<ScoreReport> {
    let summaries = ds
        .models()
        .iter()
        .map(|m| score_model(ds, m, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rule: rule.id(),
        n: ds.n(),
        labels: ds.labels().to_vec(),
        summaries,
    })
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "Model scores  rule={}", self.rule);
        let _ = writeln!(out, "n = {} observations, K = {}", self.n, self.labels.len());
        let _ = writeln!(out);
        let name_width = self
            .summaries
            .iter()
            .map(|s| s.model.len())
            .chain(["model".len()])
            .max()
            .unwrap_or(5);
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>22}  {:>22}  {:>9}",
            "model", "mean_loss", "perplexity", "infinite"
        );
        for s in &self.summaries {
            let ppl = s
                .perplexity
                .map(|p| format!("{p:.6}"))
                .unwrap_or_else(|| "-".to_string());
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>22.6}  {:>22}  {:>9}",
                s.model, s.mean_loss, ppl, s.infinite_count
            );
        }
        out
    }
}

/// Scores every model and tests every unordered pair. Per-pair errors are
/// recorded as inconclusive rows; they never abort the other pairs.
pub fn compare_all(
    ds: &PredictionDataset,
    rule: &ScoringRule,
    test: TestKind,
    alternative: Alternative,
    holm: bool,
    alpha: f64,
) -> Result<ComparisonReport> {
    if ds.models().len() < 2 {
        return Err(Error::NeedTwoModels(ds.models().len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument {
            what: "alpha",
            detail: format!("must lie in (0, 1), got {alpha}"),
        });
    }
    let summaries = ds
        .models()
        .iter()
        .map(|m| score_model(ds, m, rule))
        .collect::<Result<Vec<_>>>()?;

    let mut pairwise = Vec::new();
    for i in 0..ds.models().len() {
        for j in (i + 1)..ds.models().len() {
            let model_a = ds.models()[i].clone();
            let model_b = ds.models()[j].clone();
            let outcome = match compare_pair(ds, &model_a, &model_b, rule, test, alternative) {
                Ok(result) => PairOutcome::Tested { result },
                Err(e) => PairOutcome::Failed {
                    error: e.to_string(),
                },
            };
            pairwise.push(PairComparison {
                model_a,
                model_b,
                outcome,
                adjusted_p_two_sided: None,
                verdict: Verdict::Inconclusive,
            });
        }
    }

    if holm {
        let raw: Vec<f64> = pairwise
            .iter()
            .filter_map(|p| match &p.outcome {
                PairOutcome::Tested { result } => Some(result.p_two_sided),
                PairOutcome::Failed { .. } => None,
            })
            .collect();
        let adjusted = holm_adjust(&raw);
        let mut it = adjusted.into_iter();
        for pair in &mut pairwise {
            if matches!(pair.outcome, PairOutcome::Tested { .. }) {
                pair.adjusted_p_two_sided = it.next();
            }
        }
    }

    for pair in &mut pairwise {
        pair.verdict = verdict_for(pair, alpha, holm);
    }

    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rule: rule.id(),
        test,
        alternative,
        alpha,
        holm,
        n: ds.n(),
        labels: ds.labels().to_vec(),
        summaries,
        pairwise,
    })
}

/// Verdicts threshold the two-sided p-value (Holm-adjusted when enabled) and
/// then read off the direction; one-sided p-values are reported but do not
/// change verdicts.
fn verdict_for(pair: &PairComparison, alpha: f64, holm: bool) -> Verdict {
    let result = match &pair.outcome {
        PairOutcome::Tested { result } => result,
        PairOutcome::Failed { .. } => return Verdict::Inconclusive,
    };
    let p = if holm {
        pair.adjusted_p_two_sided.unwrap_or(result.p_two_sided)
    } else {
        result.p_two_sided
    };
    if p <= alpha {
        match result.direction {
            Direction::ALower => Verdict::FirstBetter,
            Direction::BLower => Verdict::SecondBetter,
            Direction::Tie => Verdict::Inconclusive,
        }
    } else {
        Verdict::Inconclusive
    }
}

/// Holm's step-down adjustment: sort ascending, multiply by `m - rank`,
/// enforce monotonicity, cap at 1.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running_max = running_max.max(scaled);
        adjusted[idx] = running_max;
    }
    adjusted
}

impl ComparisonReport {
    /// Machine-readable JSON. Field order is fixed by the struct layout and
    /// floats serialize in shortest round-trip form, so output is
    /// byte-identical across runs and re-parses to the same bits.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Model comparison  rule={} test={} alternative={} alpha={} holm={}",
            self.rule,
            self.test.id(),
            self.alternative.id(),
            self.alpha,
            self.holm
        );
        let _ = writeln!(out, "n = {} observations, K = {}", self.n, self.labels.len());
        let _ = writeln!(out);
        let name_width = self
            .summaries
            .iter()
            .map(|s| s.model.len())
            .chain(["model".len()])
            .max()
            .unwrap_or(5);
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>22}  {:>22}  {:>9}",
            "model", "mean_loss", "perplexity", "infinite"
        );
        for s in &self.summaries {
            let ppl = s
                .perplexity
                .map(|p| format!("{p:.6}"))
                .unwrap_or_else(|| "-".to_string());
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>22.6}  {:>22}  {:>9}",
                s.model, s.mean_loss, ppl, s.infinite_count
            );
        }
        let _ = writeln!(out);
        for pair in &self.pairwise {
            match &pair.outcome {
                PairOutcome::Tested { result } => {
                    let adj = pair
                        .adjusted_p_two_sided
                        .map(|p| format!("  p_holm={p:.6}"))
                        .unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{} vs {}: {}={:.6}  p_two_sided={:.6}  p_one_sided={:.6}{}  direction={}  verdict={}",
                        pair.model_a,
                        pair.model_b,
                        if result.method == "paired_t" { "t" } else { "W+" },
                        result.statistic,
                        result.p_two_sided,
                        result.p_one_sided,
                        adj,
                        result.direction.id(),
                        pair.verdict.id(),
                    );
                    for note in &result.notes {
                        let _ = writeln!(out, "  note: {note}");
                    }
                }
                PairOutcome::Failed { error } => {
                    let _ = writeln!(
                        out,
                        "{} vs {}: test failed ({error})  verdict={}",
                        pair.model_a, pair.model_b, pair.verdict.id()
                    );
                }
            }
        }
        out
    }

    /// True when at least one pair's test failed.
    pub fn has_failed_pairs(&self) -> bool {
        self.pairwise
            .iter()
            .any(|p| matches!(p.outcome, PairOutcome::Failed { .. }))
    }
}
