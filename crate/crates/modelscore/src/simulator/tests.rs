use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn dirichlet(alpha: &[f64], seed: u64) -> StateDistributionFamily {
    StateDistributionFamily {
        kind: StateFamilyKind::Dirichlet {
            alpha: alpha.to_vec(),
        },
        seed,
    }
}

fn fixed(f: &[f64], seed: u64) -> StateDistributionFamily {
    StateDistributionFamily {
        kind: StateFamilyKind::Fixed { f: f.to_vec() },
        seed,
    }
}

#[test]
fn dirichlet_uniform_has_mean_half() {
    let sampler = StateSampler::new(&dirichlet(&[1.0, 1.0], 0).kind).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let draws = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        acc += sampler.sample(&mut rng).weights()[0];
    }
    let mean = acc / draws as f64;
    assert!((mean - 0.5).abs() <= 0.002, "mean = {mean}");
}

#[test]
fn dirichlet_10_10_variance_matches_formula() {
    // Var = a(a0 - a)/(a0^2 (a0 + 1)) = 100/8400.
    let sampler = StateSampler::new(&dirichlet(&[10.0, 10.0], 0).kind).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 200_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let x = sampler.sample(&mut rng).weights()[0];
        sum += x;
        sum_sq += x * x;
    }
    let mean = sum / draws as f64;
    let var = sum_sq / draws as f64 - mean * mean;
    let expected = 100.0 / 8400.0;
    assert!(
        (var - expected).abs() / expected <= 0.10,
        "var = {var}, expected ~{expected}"
    );
}

#[test]
fn sampling_is_reproducible_from_seed() {
    let sampler = StateSampler::new(&dirichlet(&[0.5, 1.5, 3.0], 0).kind).unwrap();
    let draw = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| sampler.sample(&mut rng).into_weights())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(123), draw(123));
    assert_ne!(draw(123), draw(124));
}

#[test]
fn sample_outcome_degenerate_and_frequency() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let certain = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
    for _ in 0..100 {
        assert_eq!(sample_outcome(&certain, &mut rng), OutcomeIndex(0));
    }
    let f = ProbabilityVector::new(vec![0.7, 0.3]).unwrap();
    let draws = 100_000;
    let mut zeros = 0usize;
    for _ in 0..draws {
        if sample_outcome(&f, &mut rng) == OutcomeIndex(0) {
            zeros += 1;
        }
    }
    let freq = zeros as f64 / draws as f64;
    assert!((freq - 0.7).abs() <= 0.01, "freq = {freq}");
}

#[test]
fn identical_perturbations_have_zero_gap() {
    let family = dirichlet(&[1.0, 1.0, 1.0], 9);
    let pert = ModelPerturbation::UniformMixture { w: 0.3 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gap = true_expected_loss_gap(
        &family.kind,
        &pert,
        &pert,
        &ScoringRule::Log,
        1000,
        &mut rng,
    )
    .unwrap();
    assert_eq!(gap.gap, 0.0);
    assert_eq!(gap.std_error, 0.0);
}

#[test]
fn fixed_family_gap_matches_closed_form() {
    // a = truthful, b = 0.5 f + 0.5 uniform with f = (0.7, 0.3):
    // gap = -KL(f || (0.6, 0.4)) = -(0.7 ln(7/6) + 0.3 ln(3/4)).
    let family = fixed(&[0.7, 0.3], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gap = true_expected_loss_gap(
        &family.kind,
        &ModelPerturbation::Truthful,
        &ModelPerturbation::UniformMixture { w: 0.5 },
        &ScoringRule::Log,
        10,
        &mut rng,
    )
    .unwrap();
    assert_relative_eq!(gap.gap, -0.021_600_854_143_546_535, max_relative = 1e-12);
    assert_eq!(gap.std_error, 0.0);
}

#[test]
fn truthful_model_never_loses() {
    // Propriety: against the truth, every perturbation has gap >= 0 in a's
    // favour (gap <= 0 with a truthful), for every rule.
    let family = dirichlet(&[2.0, 1.0, 0.5], 13);
    let perts = [
        ModelPerturbation::UniformMixture { w: 0.4 },
        ModelPerturbation::Temperature { tau: 2.0 },
        ModelPerturbation::Fixed {
            q: vec![0.2, 0.5, 0.3],
        },
    ];
    for rule in [
        ScoringRule::Log,
        ScoringRule::Quadratic,
        ScoringRule::Spherical,
    ] {
        for pert in &perts {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let gap = true_expected_loss_gap(
                &family.kind,
                &ModelPerturbation::Truthful,
                pert,
                &rule,
                2000,
                &mut rng,
            )
            .unwrap();
            assert!(
                gap.gap < 0.0,
                "truthful must strictly win: rule {rule:?}, pert {pert:?}, gap {}",
                gap.gap
            );
        }
    }
}

#[test]
fn perturbations_map_to_valid_vectors() {
    let f = ProbabilityVector::new(vec![0.6, 0.3, 0.1]).unwrap();
    let mixed = ModelPerturbation::UniformMixture { w: 0.3 }
        .apply(&f)
        .unwrap();
    assert_relative_eq!(mixed.weights()[0], 0.7 * 0.6 + 0.1, max_relative = 1e-12);
    let heated = ModelPerturbation::Temperature { tau: 2.0 }.apply(&f).unwrap();
    let sum: f64 = heated.weights().iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    // tau > 1 flattens toward uniform.
    assert!(heated.weights()[0] < f.weights()[0]);
    assert!(heated.weights()[2] > f.weights()[2]);
    // Extreme temperature stays finite.
    let extreme = ModelPerturbation::Temperature { tau: 1e-3 }.apply(&f).unwrap();
    assert!(extreme.weights().iter().all(|w| w.is_finite()));
    assert!(extreme.weights()[0] > 0.999);
}

fn recovery_config() -> ExperimentConfig {
    let mut models = BTreeMap::new();
    models.insert("a".to_string(), ModelPerturbation::Truthful);
    models.insert(
        "b".to_string(),
        ModelPerturbation::UniformMixture { w: 0.2 },
    );
    ExperimentConfig {
        family: dirichlet(&[1.0; 5], 20_240_601),
        models,
        n: 500,
        replications: 20,
        rule: RuleChoice::Log,
        test: TestKind::T,
        alternative: Alternative::ALess,
        alpha: 0.05,
        gap_draws: 2000,
    }
}

#[test]
fn experiment_recovers_truthful_model() {
    let result = run_experiment(&recovery_config()).unwrap();
    assert!(!result.null_experiment);
    assert!(result.true_gap.gap < 0.0);
    assert!(result.recovery_rate.unwrap() >= 0.9);
    assert!(result.false_positive_rate.is_none());
    assert!(result.mean_empirical_gap.unwrap() < 0.0);
}

#[test]
fn identical_models_degenerate_every_replication() {
    // a = b makes every paired difference exactly zero: all replications
    // are degenerate, no test can reject, and the false-positive rate is
    // trivially 0 (and reported, while recovery_rate is absent).
    let mut cfg = recovery_config();
    cfg.models
        .insert("b".to_string(), ModelPerturbation::Truthful);
    cfg.alternative = Alternative::TwoSided;
    cfg.replications = 20;
    cfg.n = 100;
    let result = run_experiment(&cfg).unwrap();
    assert!(result.null_experiment);
    assert!(result.recovery_rate.is_none());
    assert_eq!(result.false_positive_rate, Some(0.0));
    assert_eq!(result.degenerate_count, 20);
    assert_eq!(result.true_gap.gap, 0.0);
}

#[test]
fn null_experiment_reports_calibrated_false_positive_rate() {
    // Mirror-image fixed models under a symmetric family have exactly zero
    // expected loss gap but nonzero per-observation differences, so the
    // tests actually run and the rejection rate must sit near alpha.
    let mut models = BTreeMap::new();
    models.insert(
        "a".to_string(),
        ModelPerturbation::Fixed {
            q: vec![0.6, 0.4],
        },
    );
    models.insert(
        "b".to_string(),
        ModelPerturbation::Fixed {
            q: vec![0.4, 0.6],
        },
    );
    let cfg = ExperimentConfig {
        family: dirichlet(&[2.0, 2.0], 4242),
        models,
        n: 200,
        replications: 200,
        rule: RuleChoice::Log,
        test: TestKind::T,
        alternative: Alternative::TwoSided,
        alpha: 0.05,
        gap_draws: 20_000,
    };
    let result = run_experiment(&cfg).unwrap();
    assert!(result.null_experiment, "gap {:?}", result.true_gap);
    assert!(result.recovery_rate.is_none());
    let fpr = result.false_positive_rate.unwrap();
    assert!(fpr <= 0.10, "false positive rate {fpr}");
    assert_eq!(result.degenerate_count, 0);
}

#[test]
fn log_and_quadratic_rules_agree_on_direction() {
    // At these effect sizes both rules rank the models identically, both in
    // ground truth and in every replication's test outcome.
    let mut log_cfg = recovery_config();
    log_cfg.n = 2000;
    log_cfg.replications = 10;
    let mut quad_cfg = log_cfg.clone();
    quad_cfg.rule = RuleChoice::Quadratic;

    let log_result = run_experiment(&log_cfg).unwrap();
    let quad_result = run_experiment(&quad_cfg).unwrap();
    assert!(log_result.true_gap.gap < 0.0);
    assert!(quad_result.true_gap.gap < 0.0);
    for (l, q) in log_result
        .replications
        .iter()
        .zip(&quad_result.replications)
    {
        assert_eq!(l.direction, Some(Direction::ALower));
        assert_eq!(q.direction, Some(Direction::ALower));
    }
    assert_eq!(log_result.recovery_rate, Some(1.0));
    assert_eq!(quad_result.recovery_rate, Some(1.0));
}

#[test]
fn tiny_n_runs_and_counts_degenerates() {
    let mut cfg = recovery_config();
    cfg.n = 2;
    cfg.replications = 10;
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.replications.len(), 10);
    // Every replication is either tested or recorded as degenerate.
    let tested = result
        .replications
        .iter()
        .filter(|r| r.degenerate.is_none())
        .count();
    assert_eq!(tested + result.degenerate_count, 10);
}

#[test]
fn experiment_is_bit_deterministic() {
    let cfg = recovery_config();
    let a = run_experiment(&cfg).unwrap().to_json();
    let b = run_experiment(&cfg).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn empirical_gap_converges_to_true_gap() {
    // Fixed family means the true gap is exact. The per-observation loss
    // difference takes two values (d_x = ln 2 + ln q_x), so its standard
    // deviation is known in closed form, and each replication's empirical
    // gap must land within 3 standard errors in at least 99% of runs.
    let mut models = BTreeMap::new();
    models.insert("a".to_string(), ModelPerturbation::Truthful);
    models.insert(
        "b".to_string(),
        ModelPerturbation::Fixed {
            q: vec![0.25, 0.75],
        },
    );
    let cfg = ExperimentConfig {
        family: fixed(&[0.5, 0.5], 77),
        models,
        n: 100_000,
        replications: 100,
        rule: RuleChoice::Log,
        test: TestKind::T,
        alternative: Alternative::TwoSided,
        alpha: 0.05,
        gap_draws: 10,
    };
    let result = run_experiment(&cfg).unwrap();
    let true_gap = result.true_gap.gap;
    let d0: f64 = -(0.5f64.ln()) + 0.25f64.ln();
    let d1: f64 = -(0.5f64.ln()) + 0.75f64.ln();
    let sd = 0.5 * (d0 - d1).abs();
    let se = sd / (cfg.n as f64).sqrt();
    let mut within = 0usize;
    let mut total = 0usize;
    for outcome in &result.replications {
        let Some(empirical) = outcome.empirical_gap else {
            continue;
        };
        total += 1;
        if (empirical - true_gap).abs() < 3.0 * se {
            within += 1;
        }
    }
    assert_eq!(total, 100);
    assert!(within >= 99, "{within}/{total} within 3 SE");
    // And the replication average is close to the truth.
    assert!((result.mean_empirical_gap.unwrap() - true_gap).abs() < 3.0 * se);
}

#[test]
fn config_validation_rejects_bad_inputs() {
    let mut cfg = recovery_config();
    cfg.n = 1;
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

    let mut cfg = recovery_config();
    cfg.models.remove("b");
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

    let mut cfg = recovery_config();
    cfg.family = dirichlet(&[1.0, -1.0], 0);
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

    let mut cfg = recovery_config();
    cfg.models.insert(
        "b".to_string(),
        ModelPerturbation::UniformMixture { w: 1.5 },
    );
    assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn config_parses_from_json() {
    let text = r#"{
        "family": {"kind": "dirichlet", "alpha": [1, 1, 1], "seed": 7},
        "models": {
            "a": {"kind": "truthful"},
            "b": {"kind": "uniform_mixture", "w": 0.2}
        },
        "n": 100,
        "replications": 3
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(cfg.rule, RuleChoice::Log);
    assert_eq!(cfg.alpha, 0.05);
    assert_eq!(cfg.family.seed, 7);
    assert!(ExperimentConfig::from_json("{}").is_err());
    assert!(ExperimentConfig::from_json("not json").is_err());
}
