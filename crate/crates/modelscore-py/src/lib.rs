//! Python bindings for the modelscore library.
//!
//! Scalar operations return floats, tests return dicts, and the file-level
//! entry points return the same JSON documents the CLI emits. Build with
//! `cargo build -p modelscore-py --release` and import the produced cdylib
//! as `modelscore_py` (see python/smoke_test.py).

use std::fs::File;
use std::io::BufReader;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use modelscore::comparison::{self, TestKind};
use modelscore::dataset::{parse_dataset, Format, ValidationPolicy, ZeroHandling};
use modelscore::scoring::{self, OutcomeIndex, ProbabilityVector, ScoringRule};
use modelscore::simulator::{run_experiment, ExperimentConfig};
use modelscore::stats::{self, Alternative, Direction, PairedSample, TestResult, WilcoxonMode};

fn value_err(e: modelscore::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_rule(rule: &str) -> PyResult<ScoringRule> {
    match rule {
        "log" => Ok(ScoringRule::Log),
        "quadratic" => Ok(ScoringRule::Quadratic),
        "spherical" => Ok(ScoringRule::Spherical),
        other => Err(PyValueError::new_err(format!(
            "unknown rule '{other}' (expected log, quadratic, or spherical)"
        ))),
    }
}

fn parse_alternative(alternative: &str) -> PyResult<Alternative> {
    match alternative {
        "two_sided" => Ok(Alternative::TwoSided),
        "a_less" => Ok(Alternative::ALess),
        "b_less" => Ok(Alternative::BLess),
        other => Err(PyValueError::new_err(format!(
            "unknown alternative '{other}' (expected two_sided, a_less, or b_less)"
        ))),
    }
}

fn parse_test(test: &str) -> PyResult<TestKind> {
    match test {
        "t" => Ok(TestKind::T),
        "wilcoxon" => Ok(TestKind::Wilcoxon),
        other => Err(PyValueError::new_err(format!(
            "unknown test '{other}' (expected t or wilcoxon)"
        ))),
    }
}

fn parse_mode(mode: &str) -> PyResult<WilcoxonMode> {
    match mode {
        "exact" => Ok(WilcoxonMode::Exact),
        "normal_approx" => Ok(WilcoxonMode::NormalApprox),
        "auto" => Ok(WilcoxonMode::Auto),
        other => Err(PyValueError::new_err(format!(
            "unknown mode '{other}' (expected exact, normal_approx, or auto)"
        ))),
    }
}

fn build_policy(
    sum_tolerance: f64,
    renormalize: bool,
    zero_policy: &str,
    clamp_epsilon: f64,
) -> PyResult<ValidationPolicy> {
    let zero_handling = match zero_policy {
        "reject" => ZeroHandling::Reject,
        "allow_infinite_loss" => ZeroHandling::AllowInfiniteLoss,
        "clamp" => ZeroHandling::Clamp {
            epsilon: clamp_epsilon,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown zero_policy '{other}' (expected reject, allow_infinite_loss, or clamp)"
            )))
        }
    };
    let policy = ValidationPolicy {
        sum_tolerance,
        renormalize,
        zero_handling,
    };
    policy.validate().map_err(value_err)?;
    Ok(policy)
}

fn pv(weights: Vec<f64>) -> PyResult<ProbabilityVector> {
    ProbabilityVector::new(weights).map_err(value_err)
}

fn direction_str(direction: Direction) -> &'static str {
    match direction {
        Direction::ALower => "a_lower",
        Direction::BLower => "b_lower",
        Direction::Tie => "tie",
    }
}

fn result_dict<'py>(py: Python<'py>, result: &TestResult) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("method", &result.method)?;
    dict.set_item("statistic", result.statistic)?;
    dict.set_item("df_or_n", result.df_or_n)?;
    dict.set_item("p_one_sided", result.p_one_sided)?;
    dict.set_item("p_two_sided", result.p_two_sided)?;
    dict.set_item("direction", direction_str(result.direction))?;
    dict.set_item("alternative", result.alternative.id())?;
    dict.set_item("notes", result.notes.clone())?;
    Ok(dict)
}

/// Logarithmic loss -ln(q[i]); +inf when q[i] is 0.
#[pyfunction]
fn log_loss(q: Vec<f64>, i: usize) -> PyResult<f64> {
    scoring::log_loss(&pv(q)?, OutcomeIndex(i)).map_err(value_err)
}

/// Quadratic loss -2 q[i] + ||q||^2.
#[pyfunction]
fn quadratic_loss(q: Vec<f64>, i: usize) -> PyResult<f64> {
    scoring::quadratic_loss(&pv(q)?, OutcomeIndex(i)).map_err(value_err)
}

/// Spherical loss -q[i] / ||q||.
#[pyfunction]
fn spherical_loss(q: Vec<f64>, i: usize) -> PyResult<f64> {
    scoring::spherical_loss(&pv(q)?, OutcomeIndex(i)).map_err(value_err)
}

/// KL divergence sum p ln(p/q); +inf where q has zeros p does not.
#[pyfunction]
fn kl_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    scoring::kl_divergence(&pv(p)?, &pv(q)?).map_err(value_err)
}

/// Squared Euclidean distance ||p - q||^2.
#[pyfunction]
fn squared_euclidean(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    scoring::squared_euclidean(&pv(p)?, &pv(q)?).map_err(value_err)
}

/// Expected loss of report q under outcome distribution f.
#[pyfunction]
fn expected_loss(rule: &str, f: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    scoring::expected_loss(&parse_rule(rule)?, &pv(f)?, &pv(q)?).map_err(value_err)
}

/// Generalized entropy of the rule at f (Shannon entropy for "log").
#[pyfunction]
fn generalized_entropy(rule: &str, f: Vec<f64>) -> PyResult<f64> {
    scoring::generalized_entropy(&parse_rule(rule)?, &pv(f)?).map_err(value_err)
}

/// exp of a mean log loss.
#[pyfunction]
fn perplexity(mean_log_loss: f64) -> f64 {
    comparison::perplexity(mean_log_loss)
}

/// Upper tail P(T >= t) of the Student-t distribution.
#[pyfunction]
fn student_t_sf(t: f64, df: f64) -> PyResult<f64> {
    stats::student_t_sf(t, df).map_err(value_err)
}

/// Standard normal upper tail P(Z >= z).
#[pyfunction]
fn normal_sf(z: f64) -> PyResult<f64> {
    stats::normal_sf(z).map_err(value_err)
}

/// Exact null tail P(W+ >= w) over untied ranks 1..=n (n <= 25).
#[pyfunction]
fn exact_wilcoxon_tail(n: usize, w: f64) -> PyResult<f64> {
    stats::exact_wilcoxon_tail(n, w).map_err(value_err)
}

/// Paired t-test on two loss sequences.
#[pyfunction]
#[pyo3(signature = (a, b, alternative = "two_sided"))]
fn paired_t_test<'py>(
    py: Python<'py>,
    a: Vec<f64>,
    b: Vec<f64>,
    alternative: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = PairedSample::new(a, b).map_err(value_err)?;
    let result =
        stats::paired_t_test(&sample, parse_alternative(alternative)?).map_err(value_err)?;
    result_dict(py, &result)
}

/// Wilcoxon signed-rank test on two loss sequences.
#[pyfunction]
#[pyo3(signature = (a, b, alternative = "two_sided", mode = "auto"))]
fn wilcoxon_signed_rank<'py>(
    py: Python<'py>,
    a: Vec<f64>,
    b: Vec<f64>,
    alternative: &str,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sample = PairedSample::new(a, b).map_err(value_err)?;
    let result = stats::wilcoxon_signed_rank(
        &sample,
        parse_alternative(alternative)?,
        parse_mode(mode)?,
    )
    .map_err(value_err)?;
    result_dict(py, &result)
}

fn load_dataset(
    path: &str,
    input_format: &str,
    policy: &ValidationPolicy,
) -> PyResult<modelscore::dataset::PredictionDataset> {
    let format = match input_format {
        "jsonl" => Format::Jsonl,
        "csv" => Format::Csv,
        "auto" => {
            if path.ends_with(".csv") {
                Format::Csv
            } else {
                Format::Jsonl
            }
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown input_format '{other}' (expected auto, jsonl, or csv)"
            )))
        }
    };
    let file = File::open(path)
        .map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
    parse_dataset(BufReader::new(file), format, policy).map_err(value_err)
}

/// Score every model in a prediction file; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (
    path,
    rule = "log",
    input_format = "auto",
    sum_tolerance = 1e-6,
    renormalize = true,
    zero_policy = "allow_infinite_loss",
    clamp_epsilon = 1e-10,
))]
#[allow(clippy::too_many_arguments)]
fn score_file(
    path: &str,
    rule: &str,
    input_format: &str,
    sum_tolerance: f64,
    renormalize: bool,
    zero_policy: &str,
    clamp_epsilon: f64,
) -> PyResult<String> {
    let policy = build_policy(sum_tolerance, renormalize, zero_policy, clamp_epsilon)?;
    let ds = load_dataset(path, input_format, &policy)?;
    let report = comparison::score_all(&ds, &parse_rule(rule)?).map_err(value_err)?;
    Ok(report.to_json())
}

/// Score and pairwise-test every model in a prediction file; returns the
/// comparison report as JSON (same document as `modelscore compare
/// --format json`).
#[pyfunction]
#[pyo3(signature = (
    path,
    rule = "log",
    test = "t",
    alternative = "two_sided",
    alpha = 0.05,
    holm = false,
    input_format = "auto",
    sum_tolerance = 1e-6,
    renormalize = true,
    zero_policy = "allow_infinite_loss",
    clamp_epsilon = 1e-10,
))]
#[allow(clippy::too_many_arguments)]
fn compare_file(
    path: &str,
    rule: &str,
    test: &str,
    alternative: &str,
    alpha: f64,
    holm: bool,
    input_format: &str,
    sum_tolerance: f64,
    renormalize: bool,
    zero_policy: &str,
    clamp_epsilon: f64,
) -> PyResult<String> {
    let policy = build_policy(sum_tolerance, renormalize, zero_policy, clamp_epsilon)?;
    let ds = load_dataset(path, input_format, &policy)?;
    let report = comparison::compare_all(
        &ds,
        &parse_rule(rule)?,
        parse_test(test)?,
        parse_alternative(alternative)?,
        holm,
        alpha,
    )
    .map_err(value_err)?;
    Ok(report.to_json())
}

/// Run a synthetic ground-truth experiment from a JSON config string;
/// returns the result as JSON. `seed` overrides the config's master seed.
#[pyfunction]
#[pyo3(signature = (config_json, seed = None))]
fn run_simulation(config_json: &str, seed: Option<u64>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::from_json(config_json).map_err(value_err)?;
    if let Some(seed) = seed {
        cfg.family.seed = seed;
    }
    let result = run_experiment(&cfg).map_err(value_err)?;
    Ok(result.to_json())
}

#[pymodule]
fn modelscore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(log_loss, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_loss, m)?)?;
    m.add_function(wrap_pyfunction!(spherical_loss, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(squared_euclidean, m)?)?;
    m.add_function(wrap_pyfunction!(expected_loss, m)?)?;
    m.add_function(wrap_pyfunction!(generalized_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(student_t_sf, m)?)?;
    m.add_function(wrap_pyfunction!(normal_sf, m)?)?;
    m.add_function(wrap_pyfunction!(exact_wilcoxon_tail, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_signed_rank, m)?)?;
    m.add_function(wrap_pyfunction!(score_file, m)?)?;
    m.add_function(wrap_pyfunction!(compare_file, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    Ok(())
}
