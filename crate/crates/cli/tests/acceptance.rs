//! Acceptance suite: one test per criterion, each printing a PASS line
//! and enforcing its runtime cap. Run with
//! `cargo test -p pexp-cli --test acceptance -- --nocapture`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pexp_cli::config::GridConfig;
use pexp_cli::contract::{contraction_study, ContractConfig, ContractMethod};
use pexp_cli::experiments::{run_experiment_1, run_experiment_2, ExperimentOverrides};
use pexp_core::ebayes::{
    coord_log_marginal_gaussian, log_marginal, MarginalMethod, QuadratureSpec,
};
use pexp_core::hbayes::{run_fixed_lambda, DrawMatrix, McmcConfig};
use pexp_core::prior::{
    whiten_transform, HyperParamMode, HyperPriorSpec, InvGammaHyper, Lambda, PriorSpec,
    PriorTemplate, TauLeftRule,
};
use pexp_core::rates::{
    epsilon_n_solve, eps_upper, ks_statistic, linear_minimax_rate, minimax_rate, ols_slope,
    small_ball_mc, RateQuery, TruthClass,
};
use pexp_core::seq::{make_truth, weighted_norm, Basis, CoefficientVector, NormSpec, TruthSpec};
use pexp_core::wn::{simulate, Observation, TruncationRule};

fn report(criterion: u8, what: &str, elapsed_s: f64, cap_s: f64) {
    println!("criterion {criterion:02} ({what}): PASS in {elapsed_s:.1}s (cap {cap_s:.0}s)");
    assert!(
        elapsed_s < cap_s,
        "criterion {criterion} exceeded its runtime cap: {elapsed_s:.1}s >= {cap_s}s"
    );
}

#[test]
fn criterion_01_gaussian_marginal_matches_closed_form() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let quad = QuadratureSpec::default();
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        let trunc = 1 + (rng.random::<f64>() * 50.0) as usize;
        let n = 10f64.powf(rng.random::<f64>() * 6.0).max(1.0);
        let alpha = 0.3 + 2.0 * rng.random::<f64>();
        let tau = 10f64.powf(-1.5 + 2.0 * rng.random::<f64>());
        let lambda = Lambda { alpha, tau };
        let template = PriorTemplate { p: 2.0, trunc };
        let spec = template.instantiate(&lambda).unwrap();
        let coeffs: Vec<f64> = (0..trunc).map(|_| 2.0 * (rng.random::<f64>() - 0.5)).collect();
        let obs = Observation::new(
            CoefficientVector::new(coeffs.clone(), Basis::AbstractSequence).unwrap(),
            n,
        )
        .unwrap();
        let by_quad =
            log_marginal(&obs, &lambda, &template, &quad, MarginalMethod::Quadrature, false)
                .unwrap()
                .log_marginal;
        let closed: f64 = (1..=trunc)
            .map(|l| coord_log_marginal_gaussian(coeffs[l - 1], n, spec.gamma_at(l)))
            .sum();
        max_err = max_err.max((by_quad - closed).abs());
    }
    assert!(max_err < 1e-8, "max |quadrature - closed form| = {max_err:e}");
    report(1, "Gaussian marginal-likelihood oracle", started.elapsed().as_secs_f64(), 5.0);
}

#[test]
fn criterion_02_conjugate_posterior_oracle() {
    let started = Instant::now();
    let trunc = 100;
    let n = 200.0;
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let truth = make_truth(&TruthSpec::PowerSine { a: 1.5, omega: 1.0 }, trunc).unwrap();
    let obs = simulate(&truth, n, &mut rng).unwrap();
    let spec = PriorSpec::new(2.0, 1.0, 1.0, trunc).unwrap();
    let cfg = McmcConfig { iters: 50_000, burnin: 10_000, seed: 202, ..Default::default() };
    let run = run_fixed_lambda(&obs, &spec, &cfg).unwrap();
    let oracle = pexp_core::hbayes::conjugate_posterior_mean(&obs, &spec);

    let se = batch_se(&run.draws, 50);
    let mut within = 0;
    for ((m, o), s) in run.summary.mean.coeffs().iter().zip(oracle.coeffs()).zip(&se) {
        if (m - o).abs() <= 3.0 * s.max(1e-12) {
            within += 1;
        }
    }
    assert!(within >= 95, "{within} of 100 coordinates within 3 MC standard errors");
    report(2, "conjugate posterior oracle", started.elapsed().as_secs_f64(), 60.0);
}

fn batch_se(draws: &DrawMatrix, batches: usize) -> Vec<f64> {
    let n = draws.n_draws();
    let dim = draws.dim();
    let per = n / batches;
    let mut means = vec![vec![0.0f64; dim]; batches];
    for (b, mean) in means.iter_mut().enumerate() {
        for i in 0..per {
            for (m, v) in mean.iter_mut().zip(draws.row(b * per + i)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= per as f64;
        }
    }
    (0..dim)
        .map(|c| {
            let grand: f64 = means.iter().map(|b| b[c]).sum::<f64>() / batches as f64;
            let var: f64 = means.iter().map(|b| (b[c] - grand).powi(2)).sum::<f64>()
                / (batches as f64 - 1.0);
            (var / batches as f64).sqrt()
        })
        .collect()
}

#[test]
fn criterion_03_whitening_correctness_ks() {
    let started = Instant::now();
    let n = 100_000usize;
    for (i, &p) in [1.0, 1.5, 2.0].iter().enumerate() {
        let spec = PriorSpec::new(p, 1.0, 1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(300 + i as u64);
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let xi = CoefficientVector::new(vec![z], Basis::AbstractSequence).unwrap();
                whiten_transform(&xi, &spec).unwrap().coeffs()[0] / spec.gamma_at(1)
            })
            .collect();
        let stat = ks_statistic(&mut draws, |x| spec.dist().cdf(x));
        let critical = 1.627_62 / (n as f64).sqrt();
        assert!(stat < critical, "p = {p}: KS {stat} vs critical {critical}");
    }
    report(3, "whitening correctness", started.elapsed().as_secs_f64(), 10.0);
}

#[test]
fn criterion_04_balance_identity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..50 {
        let alpha = 0.3 + 2.2 * rng.random::<f64>();
        let p = 1.0 + rng.random::<f64>();
        let beta = (alpha + 1.0 / p) * (0.3 + 0.6 * rng.random::<f64>());
        let n = 10f64.powf(2.0 + 6.0 * rng.random::<f64>());
        let tau0 = n.powf((alpha - beta) / (1.0 + 2.0 * beta));
        let q = RateQuery::new(n, beta, 2.0, p, alpha, tau0, 1.0).unwrap();
        let bound = eps_upper(&q, TruthClass::Sobolev).unwrap();
        let [c1, c2] = bound.components;
        assert!(
            ((c1 - c2) / c1).abs() < 1e-10,
            "components unbalanced: {c1} vs {c2} (alpha={alpha}, beta={beta}, p={p}, n={n})"
        );
    }
    report(4, "balance identity", started.elapsed().as_secs_f64(), 1.0);
}

#[test]
fn criterion_05_rate_gap() {
    let started = Instant::now();
    for &q in &[2.0, 3.0] {
        for &beta in &[0.7, 1.0, 2.3] {
            for &n in &[1e4, 1e6] {
                assert_eq!(linear_minimax_rate(beta, q, n), minimax_rate(beta, n));
            }
        }
    }
    for &n in &[1e4, 1e5, 1e6] {
        let ratio = linear_minimax_rate(1.0, 1.0, n) / minimax_rate(1.0, n);
        assert!(ratio > 1.5, "n = {n}: gap ratio {ratio}");
    }
    report(5, "linear-vs-global rate gap", started.elapsed().as_secs_f64(), 1.0);
}

#[test]
fn criterion_06_small_ball_scaling() {
    let started = Instant::now();
    let trunc = 200;
    let spec = PriorSpec::new(1.0, 1.0, 1.0, trunc).unwrap();
    let center = CoefficientVector::new(vec![0.0; trunc], Basis::AbstractSequence).unwrap();
    let (lo, hi) = (0.16f64, 0.32f64);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..6 {
        let eps = lo * (hi / lo).powf(j as f64 / 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(600 + j as u64);
        let est = small_ball_mc(&spec, eps, 1.0, &center, 1_000_000, &mut rng).unwrap();
        let phi = -est.log_prob;
        assert!(phi <= 8.0, "phi({eps}) = {phi} exceeds the feasibility guard");
        xs.push((1.0 / eps).ln());
        ys.push(phi.ln());
    }
    let (slope, _) = ols_slope(&xs, &ys);
    assert!((slope - 1.0).abs() < 0.2, "slope {slope} not within 0.2 of 1/alpha = 1");
    report(6, "small-ball scaling law", started.elapsed().as_secs_f64(), 120.0);
}

#[test]
fn criterion_07_epsilon_solver_monotone_in_n() {
    let started = Instant::now();
    let spec = PriorSpec::new(1.0, 1.0, 1.0, 100).unwrap();
    let theta0 = CoefficientVector::new(vec![0.0; 100], Basis::AbstractSequence).unwrap();
    let samples = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let e5 = epsilon_n_solve(&spec, &theta0, 1.0, 5.0, samples, &mut rng).unwrap();
    let e20 = epsilon_n_solve(&spec, &theta0, 1.0, 20.0, samples, &mut rng).unwrap();
    let e50 = epsilon_n_solve(&spec, &theta0, 1.0, 50.0, samples, &mut rng).unwrap();
    assert!(
        e5.eps > e20.eps && e20.eps > e50.eps,
        "estimates not strictly decreasing: {} {} {}",
        e5.eps,
        e20.eps,
        e50.eps
    );
    assert!(
        e5.eps - 2.0 * e5.se > e50.eps + 2.0 * e50.se,
        "2-se intervals overlap: {} +- {} vs {} +- {}",
        e5.eps,
        e5.se,
        e50.eps,
        e50.se
    );
    // Bracketing width contract: under 5% of the estimate.
    for e in [&e5, &e20, &e50] {
        assert!(e.hi - e.lo < 0.05 * e.eps);
    }
    report(7, "rate-proxy bisection solver", started.elapsed().as_secs_f64(), 120.0);
}

#[test]
fn criterion_08_contraction_slope_oracle_path() {
    let started = Instant::now();
    let cfg = ContractConfig {
        truth: TruthSpec::PowerSine { a: 1.5, omega: 1.0 },
        beta: 1.0,
        q: 2.0,
        n_grid: (8..=16).map(|k| (1u64 << k) as f64).collect(),
        reps: 20,
        l_rule: TruncationRule::PowerRule { exponent: 1.0 / 1.5 },
        p: 2.0,
        mode: HyperParamMode::TauOnly { alpha: 1.0 },
        hyper: None,
        method: ContractMethod::EbConjugate,
        mcmc: McmcConfig::default(),
        grid: GridConfig::default(),
        seed: 8,
        out_dir: None,
    };
    let study = contraction_study(&cfg).unwrap();
    let slope = study.slope.unwrap();
    let target = study.target_exponent.unwrap();
    assert!(
        (slope - target).abs() < 0.05,
        "slope {slope} not within 0.05 of {target}"
    );
    report(8, "contraction slope, conjugate MMLE path", started.elapsed().as_secs_f64(), 120.0);
}

#[test]
fn criterion_09_contraction_slope_mcmc_path() {
    let started = Instant::now();
    let cfg = ContractConfig {
        truth: TruthSpec::PowerSine { a: 1.5, omega: 1.0 },
        beta: 1.0,
        q: 2.0,
        n_grid: vec![256.0, 1024.0, 4096.0, 16384.0],
        reps: 5,
        l_rule: TruncationRule::PowerRule { exponent: 1.0 / 1.5 },
        p: 1.0,
        mode: HyperParamMode::TauOnly { alpha: 1.0 },
        hyper: Some(HyperPriorSpec::TruncInvGamma(InvGammaHyper {
            a: 1.0,
            b: 1.0,
            left: TauLeftRule::Auto { n: 256.0, p: 1.0 },
        })),
        method: ContractMethod::HbGibbs,
        mcmc: McmcConfig { iters: 20_000, burnin: 4_000, ..Default::default() },
        grid: GridConfig::default(),
        seed: 9,
        out_dir: None,
    };
    let study = contraction_study(&cfg).unwrap();
    let slope = study.slope.unwrap();
    let target = study.target_exponent.unwrap();
    assert!(
        (slope - target).abs() < 0.15,
        "slope {slope} not within 0.15 of {target}"
    );
    report(9, "contraction slope, Laplace MCMC path", started.elapsed().as_secs_f64(), 1800.0);
}

#[test]
fn criterion_10_experiment_reproduction() {
    let started = Instant::now();
    let dir1 = std::env::temp_dir().join("pexp_acceptance_exp1");
    let dir2 = std::env::temp_dir().join("pexp_acceptance_exp2");
    let _ = std::fs::remove_dir_all(&dir1);
    let _ = std::fs::remove_dir_all(&dir2);

    // Study 1: five regularities at n = 200, L = 200, Laplace prior.
    let study1 = run_experiment_1(&ExperimentOverrides {
        seed: Some(10),
        out_dir: Some(dir1.clone()),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(study1.rows.len(), 5);
    let truth = make_truth(&TruthSpec::PowerSine { a: 2.25, omega: 10.0 }, 200).unwrap();
    let zero_error = weighted_norm(&truth, &NormSpec::L2).unwrap();
    for row in &study1.rows {
        assert!(
            row.l2_error < zero_error,
            "{}: error {} does not beat the zero estimator {zero_error}",
            row.mode,
            row.l2_error
        );
    }
    let mut svgs = 0;
    for entry in std::fs::read_dir(&dir1).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.ends_with(".svg") {
            svgs += 1;
        }
    }
    assert_eq!(svgs, 5, "expected five figure files");
    assert!(dir1.join("results.csv").exists());
    let exp1_elapsed = started.elapsed().as_secs_f64();
    assert!(exp1_elapsed < 600.0, "study 1 took {exp1_elapsed:.0}s, cap 600s");

    // Study 2: two priors at two noise levels, cosine truth.
    let t2 = Instant::now();
    let study2 = run_experiment_2(&ExperimentOverrides {
        seed: Some(11),
        out_dir: Some(dir2.clone()),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(study2.rows.len(), 4);
    for row in &study2.rows {
        let truth = make_truth(
            &TruthSpec::PowerSineCos { a: 1.5, omega: 1.0 },
            pexp_core::wn::truncation_level(row.n, &TruncationRule::PowerRule { exponent: 1.0 / 1.5 })
                .unwrap(),
        )
        .unwrap();
        let zero = weighted_norm(&truth, &NormSpec::L2).unwrap();
        assert!(row.l2_error < zero, "{}: error {} vs zero {zero}", row.mode, row.l2_error);
    }
    for p in ["p2", "p1"] {
        let small = study2
            .rows
            .iter()
            .find(|r| r.n == 1e3 && r.mode.contains(&format!("p={}", &p[1..])))
            .unwrap();
        let large = study2
            .rows
            .iter()
            .find(|r| r.n == 1e5 && r.mode.contains(&format!("p={}", &p[1..])))
            .unwrap();
        assert!(
            large.l2_error < small.l2_error,
            "{p}: error at n=1e5 ({}) not below n=1e3 ({})",
            large.l2_error,
            small.l2_error
        );
        // The regularity posterior concentrates as the noise shrinks.
        assert!(
            large.lambda_sd.unwrap() < small.lambda_sd.unwrap(),
            "{p}: alpha posterior sd did not shrink with n"
        );
    }
    assert!(dir2.join("band_widths.csv").exists());
    let exp2_elapsed = t2.elapsed().as_secs_f64();
    assert!(exp2_elapsed < 2700.0, "study 2 took {exp2_elapsed:.0}s, cap 2700s");

    report(10, "experiment reproduction", started.elapsed().as_secs_f64(), 3300.0);
}
