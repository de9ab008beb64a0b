//! Parsing, validation, and alignment of prediction files.
//!
//! The canonical format is JSON Lines: a header line declaring outcome
//! labels and model names, then one record per observation. CSV is accepted
//! as a wide format. Outcome labels map to indices by header order, never by
//! sort order.
//!
//! ```text
//! {"labels": ["rain", "sun"], "models": ["g", "k"]}
//! {"id": "day-1", "outcome": "rain", "p": {"g": [0.7, 0.3], "k": [0.5, 0.5]}}
//! ```

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::Deserialize;
use serde_json::json;

use crate::kahan::CompensatedSum;
use crate::scoring::{OutcomeIndex, ProbabilityVector, ScoringRule};
use crate::stats::PairedSample;
use crate::{Error, Result};

/// Input format of a prediction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

/// What to do with zero probabilities in model reports.
///
/// The default keeps them: a model that put zero mass on an outcome that
/// then happened earns an infinite log loss, which is the honest penalty.
/// Clamping is an explicit opt-in for users who want such models to stay
/// comparable under the log rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroHandling {
    Reject,
    AllowInfiniteLoss,
    Clamp { epsilon: f64 },
}

impl ZeroHandling {
    pub const DEFAULT_CLAMP_EPSILON: f64 = 1e-10;
}

/// Probability hygiene applied while ingesting records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPolicy {
    /// Accept vectors whose sum is within this distance of 1.
    pub sum_tolerance: f64,
    /// Divide accepted vectors by their sum (on unless disabled).
    pub renormalize: bool,
    pub zero_handling: ZeroHandling,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            sum_tolerance: 1e-6,
            renormalize: true,
            zero_handling: ZeroHandling::AllowInfiniteLoss,
        }
    }
}

impl ValidationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.sum_tolerance > 0.0 && self.sum_tolerance < 1e-2) {
            return Err(Error::InvalidPolicy(format!(
                "sum_tolerance must lie in (0, 1e-2), got {}",
                self.sum_tolerance
            )));
        }
        if let ZeroHandling::Clamp { epsilon } = self.zero_handling {
            if !(epsilon > 0.0 && epsilon < 1e-3) {
                return Err(Error::InvalidPolicy(format!(
                    "clamp epsilon must lie in (0, 1e-3), got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// One observation: its id, resolved outcome, and one report per model
/// (aligned with the dataset's model order).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub outcome: OutcomeIndex,
    pub predictions: Vec<ProbabilityVector>,
    /// Whether each model reported exactly zero on the observed outcome
    /// before the zero policy ran; lets reports flag support disagreements
    /// even when clamping hid them.
    pub zero_on_observed: Vec<bool>,
}

/// A validated, aligned prediction dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDataset {
    labels: Vec<String>,
    models: Vec<String>,
    records: Vec<PredictionRecord>,
}

impl PredictionDataset {
    /// Assembles a dataset from already-validated parts (used by the
    /// simulator and tests). Records must align with `models` and `labels`.
    pub fn from_parts(
        labels: Vec<String>,
        models: Vec<String>,
        records: Vec<PredictionRecord>,
    ) -> Result<Self> {
        check_header(&labels, &models)?;
        if records.is_empty() {
            return Err(Error::InvalidArgument {
                what: "dataset",
                detail: "need at least one record".to_string(),
            });
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::InvalidArgument {
                    what: "dataset",
                    detail: format!("duplicate observation id '{}'", r.id),
                });
            }
            if r.predictions.len() != models.len() || r.zero_on_observed.len() != models.len() {
                return Err(Error::DimensionMismatch(r.predictions.len(), models.len()));
            }
            for q in &r.predictions {
                if q.k() != labels.len() {
                    return Err(Error::DimensionMismatch(q.k(), labels.len()));
                }
            }
            if r.outcome.0 >= labels.len() {
                return Err(Error::IndexOutOfRange {
                    index: r.outcome.0,
                    k: labels.len(),
                });
            }
        }
        Ok(Self {
            labels,
            models,
            records,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn model_index(&self, name: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    /// Pairs two models' reports observation by observation, in record
    /// order. Pairing is by observation, never by sorted score.
    pub fn align_models<'a>(&'a self, model_a: &str, model_b: &str) -> Result<AlignedPair<'a>> {
        Ok(AlignedPair {
            dataset: self,
            a: self.model_index(model_a)?,
            b: self.model_index(model_b)?,
        })
    }

    /// Serializes back to the canonical JSONL format. Probabilities are
    /// written in shortest round-trip form, so parse(write(ds)) reproduces
    /// the post-policy dataset bit for bit.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let header = json!({"labels": self.labels, "models": self.models});
        writeln!(w, "{header}")?;
        for r in &self.records {
            let mut p = serde_json::Map::new();
            for (name, q) in self.models.iter().zip(&r.predictions) {
                p.insert(name.clone(), json!(q.weights()));
            }
            let line = json!({
                "id": r.id,
                "outcome": self.labels[r.outcome.0],
                "p": p,
            });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Two models' aligned reports; applying a rule yields paired losses.
pub struct AlignedPair<'a> {
    dataset: &'a PredictionDataset,
    a: usize,
    b: usize,
}

impl AlignedPair<'_> {
    pub fn model_a(&self) -> &str {
        &self.dataset.models[self.a]
    }

    pub fn model_b(&self) -> &str {
        &self.dataset.models[self.b]
    }

    /// Per-observation `(loss_a, loss_b)` in record order. Infinite losses
    /// pass through; whether they are acceptable is the caller's decision.
    pub fn loss_pairs(&self, rule: &ScoringRule) -> Result<Vec<(f64, f64)>> {
        self.dataset
            .records
            .iter()
            .map(|r| {
                let la = rule.loss(&r.predictions[self.a], r.outcome)?;
                let lb = rule.loss(&r.predictions[self.b], r.outcome)?;
                Ok((la, lb))
            })
            .collect()
    }

    /// Builds the paired sample for the significance tests; errors if any
    /// loss is non-finite.
    pub fn paired_losses(&self, rule: &ScoringRule) -> Result<PairedSample> {
        let pairs = self.loss_pairs(rule)?;
        for ((la, lb), r) in pairs.iter().zip(&self.dataset.records) {
            if !la.is_finite() {
                return Err(Error::InfiniteLoss {
                    model: self.model_a().to_string(),
                    record: r.id.clone(),
                });
            }
            if !lb.is_finite() {
                return Err(Error::InfiniteLoss {
                    model: self.model_b().to_string(),
                    record: r.id.clone(),
                });
            }
        }
        let (a, b) = pairs.into_iter().unzip();
        PairedSample::new(a, b)
    }

    /// Observations where exactly one of the two models put zero mass on
    /// the observed outcome (before any clamping).
    pub fn support_disagreements(&self) -> usize {
        self.dataset
            .records
            .iter()
            .filter(|r| r.zero_on_observed[self.a] != r.zero_on_observed[self.b])
            .count()
    }
}

/// Applies the policy's zero handling to one report.
pub fn apply_zero_policy(
    q: &ProbabilityVector,
    policy: &ValidationPolicy,
) -> Result<ProbabilityVector> {
    match policy.zero_handling {
        ZeroHandling::AllowInfiniteLoss => Ok(q.clone()),
        ZeroHandling::Reject => {
            if let Some(index) = q.weights().iter().position(|&w| w == 0.0) {
                return Err(Error::ZeroProbabilityRejected { index });
            }
            Ok(q.clone())
        }
        ZeroHandling::Clamp { epsilon } => {
            let clamped = clamp_weights(q.weights(), epsilon)?;
            ProbabilityVector::with_sum_tolerance(clamped, 1e-9, true)
        }
    }
}

/// Floors weights below `epsilon` to exactly `epsilon` and rescales the
/// remaining mass. Iterates to a fixpoint so that re-applying the clamp is a
/// bitwise no-op (required for round-trip stability).
fn clamp_weights(weights: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if !weights.iter().any(|&x| x < epsilon) {
        return Ok(weights.to_vec());
    }
    let k = weights.len();
    let mut pinned: Vec<bool> = weights.iter().map(|&x| x < epsilon).collect();
    loop {
        let pinned_count = pinned.iter().filter(|&&p| p).count();
        let reserved = epsilon * pinned_count as f64;
        if pinned_count == k || reserved >= 1.0 {
            return Err(Error::InvalidPolicy(format!(
                "clamping {k} outcomes to epsilon {epsilon} leaves no probability mass"
            )));
        }
        let mut free_sum = CompensatedSum::new();
        for (j, &w) in weights.iter().enumerate() {
            if !pinned[j] {
                free_sum.add(w);
            }
        }
        let scale = (1.0 - reserved) / free_sum.value();
        let mut grew = false;
        for (j, &w) in weights.iter().enumerate() {
            if !pinned[j] && w * scale < epsilon {
                pinned[j] = true;
                grew = true;
            }
        }
        if !grew {
            return Ok(weights
                .iter()
                .enumerate()
                .map(|(j, &w)| if pinned[j] { epsilon } else { w * scale })
                .collect());
        }
    }
}

/// Parses a prediction file, validating and aligning every record.
pub fn parse_dataset(
    reader: impl BufRead,
    format: Format,
    policy: &ValidationPolicy,
) -> Result<PredictionDataset> {
    policy.validate()?;
    match format {
        Format::Jsonl => parse_jsonl(reader, policy),
        Format::Csv => parse_csv(reader, policy),
    }
}

#[derive(Deserialize)]
struct JsonlHeader {
    labels: Vec<String>,
    models: Vec<String>,
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    outcome: String,
    p: HashMap<String, Vec<f64>>,
}

fn parse_jsonl(reader: impl BufRead, policy: &ValidationPolicy) -> Result<PredictionDataset> {
    let mut lines = reader.lines();
    let header_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty input; expected a header line".to_string(),
                })
            }
        }
    };
    let header: JsonlHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: format!("invalid header: {e}"),
    })?;
    check_header(&header.labels, &header.models).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;

    let mut builder = RecordBuilder::new(&header.labels, &header.models, policy);
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut p = raw.p;
        let mut vectors = Vec::with_capacity(header.models.len());
        for model in &header.models {
            let v = p.remove(model).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("missing prediction for model '{model}'"),
            })?;
            vectors.push(v);
        }
        if let Some(extra) = p.keys().next() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown model '{extra}'"),
            });
        }
        builder.push(line_no, raw.id, &raw.outcome, vectors)?;
    }
    builder.finish()
}

fn parse_csv(reader: impl BufRead, policy: &ValidationPolicy) -> Result<PredictionDataset> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "observation_id" || cols[1] != "outcome" {
        return Err(Error::Parse {
            line: 1,
            message: "CSV header must start with observation_id,outcome".to_string(),
        });
    }
    // Remaining columns are "<model>:<label>", models and labels both in
    // first-appearance order.
    let mut models: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut positions: HashMap<(String, String), usize> = HashMap::new();
    for (idx, col) in cols.iter().enumerate().skip(2) {
        let (model, label) = col.split_once(':').ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("column '{col}' is not of the form model:label"),
        })?;
        if !models.iter().any(|m| m == model) {
            models.push(model.to_string());
        }
        if !labels.iter().any(|l| l == label) {
            labels.push(label.to_string());
        }
        if positions
            .insert((model.to_string(), label.to_string()), idx)
            .is_some()
        {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column '{col}'"),
            });
        }
    }
    check_header(&labels, &models).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    for model in &models {
        for label in &labels {
            if !positions.contains_key(&(model.clone(), label.clone())) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing column '{model}:{label}'"),
                });
            }
        }
    }

    let mut builder = RecordBuilder::new(&labels, &models, policy);
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let line_no = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        if record.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, got {}", cols.len(), record.len()),
            });
        }
        let id = record[0].to_string();
        let outcome = record[1].to_string();
        let mut vectors = Vec::with_capacity(models.len());
        for model in &models {
            let mut v = Vec::with_capacity(labels.len());
            for label in &labels {
                let idx = positions[&(model.clone(), label.clone())];
                let cell = &record[idx];
                let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("'{cell}' is not a number (column {model}:{label})"),
                })?;
                v.push(value);
            }
            vectors.push(v);
        }
        builder.push(line_no, id, &outcome, vectors)?;
    }
    builder.finish()
}

/// Shared record validation for both formats.
struct RecordBuilder<'a> {
    labels: &'a [String],
    models: &'a [String],
    policy: &'a ValidationPolicy,
    seen_ids: HashSet<String>,
    records: Vec<PredictionRecord>,
}

impl<'a> RecordBuilder<'a> {
    fn new(labels: &'a [String], models: &'a [String], policy: &'a ValidationPolicy) -> Self {
        Self {
            labels,
            models,
            policy,
            seen_ids: HashSet::new(),
            records: Vec::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        id: String,
        outcome_label: &str,
        vectors: Vec<Vec<f64>>,
    ) -> Result<()> {
        let wrap = |message: String| Error::Parse { line, message };
        if !self.seen_ids.insert(id.clone()) {
            return Err(wrap(format!("duplicate observation id '{id}'")));
        }
        let outcome = self
            .labels
            .iter()
            .position(|l| l == outcome_label)
            .ok_or_else(|| wrap(format!("unknown outcome label '{outcome_label}'")))?;
        let mut predictions = Vec::with_capacity(vectors.len());
        let mut zero_on_observed = Vec::with_capacity(vectors.len());
        for (model, v) in self.models.iter().zip(vectors) {
            if v.len() != self.labels.len() {
                return Err(wrap(format!(
                    "model '{model}' reported {} probabilities for {} labels",
                    v.len(),
                    self.labels.len()
                )));
            }
            let validated = ProbabilityVector::with_sum_tolerance(
                v,
                self.policy.sum_tolerance,
                self.policy.renormalize,
            )
            .map_err(|e| wrap(format!("model '{model}': {e}")))?;
            zero_on_observed.push(validated.weights()[outcome] == 0.0);
            let finalized = apply_zero_policy(&validated, self.policy)
                .map_err(|e| wrap(format!("model '{model}': {e}")))?;
            predictions.push(finalized);
        }
        self.records.push(PredictionRecord {
            id,
            outcome: OutcomeIndex(outcome),
            predictions,
            zero_on_observed,
        });
        Ok(())
    }

    fn finish(self) -> Result<PredictionDataset> {
        if self.records.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "dataset has no records".to_string(),
            });
        }
        Ok(PredictionDataset {
            labels: self.labels.to_vec(),
            models: self.models.to_vec(),
            records: self.records,
        })
    }
}

fn check_header(labels: &[String], models: &[String]) -> Result<()> {
    if labels.len() < 2 {
        return Err(Error::InvalidArgument {
            what: "header",
            detail: format!("need at least 2 outcome labels, got {}", labels.len()),
        });
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument {
            what: "header",
            detail: "need at least one model".to_string(),
        });
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidArgument {
                what: "header",
                detail: format!("duplicate label '{l}'"),
            });
        }
    }
    let mut seen = HashSet::new();
    for m in models {
        if !seen.insert(m.as_str()) {
            return Err(Error::InvalidArgument {
                what: "header",
                detail: format!("duplicate model '{m}'"),
            });
        }
    }
    Ok(())
}
