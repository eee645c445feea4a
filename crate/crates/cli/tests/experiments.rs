//! Harness-level checks that are cheaper than the full acceptance runs:
//! the vanishing-noise limit, contraction-study reproducibility, and
//! study-level validation errors.

use pexp_cli::config::GridConfig;
use pexp_cli::contract::{contraction_study, ContractConfig, ContractMethod};
use pexp_cli::experiments::{run_experiment_1, ExperimentOverrides};
use pexp_core::hbayes::McmcConfig;
use pexp_core::prior::HyperParamMode;
use pexp_core::seq::{make_truth, weighted_norm, NormSpec, TruthSpec};
use pexp_core::wn::TruncationRule;

#[test]
fn zero_noise_limit_recovers_the_truth_prefix() {
    // With n = 1e8 the likelihood dominates and the posterior mean must
    // land on the truncated truth; the chain needs room to travel there
    // from its cold start.
    let dir = std::env::temp_dir().join("pexp_zero_noise_smoke");
    let _ = std::fs::remove_dir_all(&dir);
    let study = run_experiment_1(&ExperimentOverrides {
        alpha: Some(1.75),
        seed: Some(3),
        n: Some(1e8),
        trunc: Some(50),
        iters: Some(150_000),
        out_dir: Some(dir),
    })
    .unwrap();
    let truth = make_truth(&TruthSpec::PowerSine { a: 2.25, omega: 10.0 }, 50).unwrap();
    let norm = weighted_norm(&truth, &NormSpec::L2).unwrap();
    let rel = study.rows[0].l2_error / norm;
    assert!(rel < 1e-2, "relative error {rel}");
}

fn small_contract_config() -> ContractConfig {
    ContractConfig {
        truth: TruthSpec::PowerSine { a: 1.5, omega: 1.0 },
        beta: 1.0,
        q: 2.0,
        n_grid: vec![64.0, 256.0, 1024.0],
        reps: 3,
        l_rule: TruncationRule::PowerRule { exponent: 1.0 / 1.5 },
        p: 2.0,
        mode: HyperParamMode::TauOnly { alpha: 1.0 },
        hyper: None,
        method: ContractMethod::EbConjugate,
        mcmc: McmcConfig::default(),
        grid: GridConfig::default(),
        seed: 5,
        out_dir: None,
    }
}

#[test]
fn contraction_study_is_reproducible() {
    let cfg = small_contract_config();
    let a = contraction_study(&cfg).unwrap();
    let b = contraction_study(&cfg).unwrap();
    assert_eq!(a.slope, b.slope);
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.l2_error, rb.l2_error);
        assert_eq!(ra.lambda_hat_or_mean, rb.lambda_hat_or_mean);
    }
}

#[test]
fn contraction_study_rejects_insufficient_designs() {
    let mut cfg = small_contract_config();
    cfg.n_grid = vec![64.0, 256.0];
    assert!(contraction_study(&cfg).is_err());

    let mut cfg = small_contract_config();
    cfg.reps = 2;
    assert!(contraction_study(&cfg).is_err());

    let mut cfg = small_contract_config();
    cfg.p = 1.0; // conjugate path needs the Gaussian shape
    assert!(contraction_study(&cfg).is_err());

    let mut cfg = small_contract_config();
    cfg.method = ContractMethod::HbGibbs; // needs a hyper-prior
    assert!(contraction_study(&cfg).is_err());
}

#[test]
fn oversmoothing_prior_still_contracts_near_minimax() {
    // Scale selection with a much smoother prior (alpha = 3) than the
    // truth (beta = 1) stays in the adaptive regime beta < alpha + 1/p,
    // so the slope target is still -1/3 rather than the mismatch rate.
    let cfg = ContractConfig {
        mode: HyperParamMode::TauOnly { alpha: 3.0 },
        n_grid: vec![256.0, 1024.0, 4096.0, 16384.0, 65536.0],
        reps: 8,
        seed: 6,
        ..small_contract_config()
    };
    let study = contraction_study(&cfg).unwrap();
    let slope = study.slope.unwrap();
    assert_eq!(study.target_exponent, Some(-1.0 / 3.0));
    assert!(
        (slope + 1.0 / 3.0).abs() < 0.15,
        "slope {slope} vs target -1/3"
    );
    // The non-adaptive mismatch exponent for a fixed-scale alpha = 3 prior
    // would be -alpha/(1+2alpha) = -3/7; the adaptive slope should sit
    // closer to -1/3 than to that.
    assert!((slope + 1.0 / 3.0).abs() < (slope + 3.0 / 7.0).abs());
}
