//! The `modelscore` executable.
//!
//! Three subcommands: `score` (per-model mean losses), `compare` (pairwise
//! significance tests), and `simulate` (synthetic ground-truth experiments).
//!
//! Exit codes, for CI use:
//!
//! * `0` — success; for `compare`, every pairwise test completed.
//! * `2` — input or configuration error; nothing useful was produced.
//! * `3` — a report was produced but at least one pairwise test was
//!   degenerate (zero-variance differences, infinite losses, ...).

use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::comparison::{compare_all, score_all, TestKind};
use crate::dataset::{parse_dataset, Format, ValidationPolicy, ZeroHandling};
use crate::scoring::RuleChoice;
use crate::simulator::{run_experiment, ExperimentConfig, RecoveryResult};
use crate::stats::Alternative;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 2;
pub const EXIT_DEGENERATE_TEST: i32 = 3;

#[derive(Parser)]
#[command(
    name = "modelscore",
    version,
    about = "Compare probabilistic models with proper scoring rules and paired significance tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every model in a prediction file; lower mean loss is better
    Score(ScoreArgs),
    /// Score models and run pairwise significance tests
    Compare(CompareArgs),
    /// Run a synthetic ground-truth experiment from a config file
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    /// -ln(q_i); pairs with KL divergence. Infinite on zero reports
    Log,
    /// -2 q_i + ||q||^2; stays finite on zero reports
    Quadratic,
    /// -q_i / ||q||_2
    Spherical,
}

impl RuleArg {
    fn to_choice(self) -> RuleChoice {
        match self {
            RuleArg::Log => RuleChoice::Log,
            RuleArg::Quadratic => RuleChoice::Quadratic,
            RuleArg::Spherical => RuleChoice::Spherical,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestArg {
    /// Paired Student t-test on loss differences
    T,
    /// Wilcoxon signed-rank test (exact null for small untied samples)
    Wilcoxon,
}

impl TestArg {
    fn to_kind(self) -> TestKind {
        match self {
            TestArg::T => TestKind::T,
            TestArg::Wilcoxon => TestKind::Wilcoxon,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlternativeArg {
    /// Either model may be better (default; most conservative)
    TwoSided,
    /// The first model of each pair has lower losses
    ALess,
    /// The second model of each pair has lower losses
    BLess,
}

impl AlternativeArg {
    fn to_alternative(self) -> Alternative {
        match self {
            AlternativeArg::TwoSided => Alternative::TwoSided,
            AlternativeArg::ALess => Alternative::ALess,
            AlternativeArg::BLess => Alternative::BLess,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ZeroPolicyArg {
    /// Fail on any zero probability in a report
    Reject,
    /// Keep zeros; a zero on an observed outcome earns infinite log loss
    AllowInfiniteLoss,
    /// Floor weights at --clamp-epsilon and rescale
    Clamp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormatArg {
    /// Decide by file extension (.csv means CSV, anything else JSONL)
    Auto,
    Jsonl,
    Csv,
}

#[derive(Args)]
struct PolicyArgs {
    /// Accept probability vectors whose sum is within this distance of 1
    #[arg(long, default_value_t = 1e-6)]
    sum_tolerance: f64,

    /// Renormalize accepted vectors by their sum
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, value_name = "BOOL")]
    renormalize: bool,

    /// How to treat zero probabilities in reports
    #[arg(long, value_enum, default_value_t = ZeroPolicyArg::AllowInfiniteLoss)]
    zero_policy: ZeroPolicyArg,

    /// Floor used by --zero-policy clamp
    #[arg(long, default_value_t = ZeroHandling::DEFAULT_CLAMP_EPSILON)]
    clamp_epsilon: f64,
}

impl PolicyArgs {
    fn to_policy(&self) -> Result<ValidationPolicy> {
        let policy = ValidationPolicy {
            sum_tolerance: self.sum_tolerance,
            renormalize: self.renormalize,
            zero_handling: match self.zero_policy {
                ZeroPolicyArg::Reject => ZeroHandling::Reject,
                ZeroPolicyArg::AllowInfiniteLoss => ZeroHandling::AllowInfiniteLoss,
                ZeroPolicyArg::Clamp => ZeroHandling::Clamp {
                    epsilon: self.clamp_epsilon,
                },
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Prediction file (JSONL header + records, or wide CSV)
    input: PathBuf,

    #[arg(long, value_enum, default_value_t = InputFormatArg::Auto)]
    input_format: InputFormatArg,
}

impl InputArgs {
    fn format(&self) -> Format {
        match self.input_format {
            InputFormatArg::Jsonl => Format::Jsonl,
            InputFormatArg::Csv => Format::Csv,
            InputFormatArg::Auto => match self.input.extension().and_then(|e| e.to_str()) {
                Some("csv") => Format::Csv,
                _ => Format::Jsonl,
            },
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = RuleArg::Log)]
    rule: RuleArg,

    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,

    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum, default_value_t = RuleArg::Log)]
    rule: RuleArg,

    #[arg(long, value_enum, default_value_t = TestArg::T)]
    test: TestArg,

    #[arg(long, value_enum, default_value_t = AlternativeArg::TwoSided)]
    alternative: AlternativeArg,

    /// Significance level for verdicts
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Holm-adjust two-sided p-values across the pairwise tests
    #[arg(long, default_value_t = false)]
    holm: bool,

    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,

    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,

    /// Override the master seed in the config
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

/// Parses arguments, runs the requested subcommand, and returns the process
/// exit code. Output is assembled in memory and written once at the end.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints help/version to stdout (exit 0) and usage errors
            // to stderr (exit 2), matching the input-error contract.
            let _ = e.print();
            return if e.exit_code() == 0 {
                EXIT_OK
            } else {
                EXIT_INPUT_ERROR
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Score(args) => run_score(args),
        Command::Compare(args) => run_compare(args),
        Command::Simulate(args) => run_simulate(args),
    }
}

fn open_dataset(
    input: &InputArgs,
    policy: &ValidationPolicy,
) -> Result<crate::dataset::PredictionDataset> {
    let file = File::open(&input.input).map_err(|e| Error::InvalidArgument {
        what: "input",
        detail: format!("{}: {e}", input.input.display()),
    })?;
    parse_dataset(BufReader::new(file), input.format(), policy)
}

fn run_score(args: ScoreArgs) -> Result<i32> {
    // Flags are validated before the input file is touched.
    let policy = args.policy.to_policy()?;
    let ds = open_dataset(&args.input, &policy)?;
    let report = score_all(&ds, &args.rule.to_choice().to_rule())?;
    let output = match args.format {
        FormatArg::Text => report.to_text(),
        FormatArg::Json => report.to_json(),
    };
    print!("{output}");
    if matches!(args.format, FormatArg::Json) {
        println!();
    }
    Ok(EXIT_OK)
}

fn run_compare(args: CompareArgs) -> Result<i32> {
    let policy = args.policy.to_policy()?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgument {
            what: "alpha",
            detail: format!("must lie in (0, 1), got {}", args.alpha),
        });
    }
    let ds = open_dataset(&args.input, &policy)?;
    let report = compare_all(
        &ds,
        &args.rule.to_choice().to_rule(),
        args.test.to_kind(),
        args.alternative.to_alternative(),
        args.holm,
        args.alpha,
    )?;
    let output = match args.format {
        FormatArg::Text => report.to_text(),
        FormatArg::Json => report.to_json(),
    };
    print!("{output}");
    if matches!(args.format, FormatArg::Json) {
        println!();
    }
    Ok(if report.has_failed_pairs() {
        EXIT_DEGENERATE_TEST
    } else {
        EXIT_OK
    })
}

fn run_simulate(args: SimulateArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::InvalidArgument {
        what: "config",
        detail: format!("{}: {e}", args.config.display()),
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.family.seed = seed;
    }
    let result = run_experiment(&cfg)?;
    match args.format {
        FormatArg::Json => println!("{}", result.to_json()),
        FormatArg::Text => print!("{}", simulate_text(&result)),
    }
    Ok(EXIT_OK)
}

fn simulate_text(result: &RecoveryResult) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Simulation  rule={} test={} alternative={} alpha={} seed={}",
        result.rule,
        result.test.id(),
        result.alternative.id(),
        result.alpha,
        result.seed
    );
    let _ = writeln!(
        out,
        "models: {} vs {}  (null experiment: {})",
        result.model_a, result.model_b, result.null_experiment
    );
    let _ = writeln!(
        out,
        "true expected loss gap: {:.6} (se {:.6}, {} draws)",
        result.true_gap.gap, result.true_gap.std_error, result.true_gap.draws
    );
    if let Some(gap) = result.mean_empirical_gap {
        let _ = writeln!(out, "mean empirical gap:     {gap:.6}");
    }
    if let Some(rate) = result.recovery_rate {
        let _ = writeln!(out, "recovery rate:          {rate:.3}");
    }
    if let Some(rate) = result.false_positive_rate {
        let _ = writeln!(out, "false positive rate:    {rate:.3}");
    }
    let _ = writeln!(
        out,
        "replications: {} total, {} degenerate, {} boundary resamples",
        result.replications.len(),
        result.degenerate_count,
        result.boundary_resamples
    );
    out
}
