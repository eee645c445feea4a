//! The two simulation studies: scale selection under a Laplace prior on a
//! sine-basis truth, and regularity selection under Gaussian and Laplace
//! priors on a half-shifted cosine truth, at two noise levels.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pexp_core::hbayes::{run_gibbs, GibbsRun, McmcConfig};
use pexp_core::prior::{
    ExpHyper, HyperParamMode, HyperPriorSpec, InvGammaHyper, PriorTemplate, TauLeftRule,
};
use pexp_core::seq::{evaluate_on_grid, make_truth, CoefficientVector, TruthSpec};
use pexp_core::wn::{simulate, truncation_level, Observation, TruncationRule};
use pexp_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{default_eval_grid, derive_seed};
use crate::output::{CurveSet, RunRecord, StudyResult};
use crate::svg::Figure;

/// Common knobs the CLI exposes on top of the built-in defaults.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOverrides {
    /// Restrict the first study to a single prior regularity.
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub n: Option<f64>,
    pub trunc: Option<usize>,
    pub iters: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn figure_from_curves(title: &str, curves: &CurveSet) -> String {
    Figure {
        title,
        grid: &curves.grid,
        band: Some((&curves.lower, &curves.upper)),
        curves: vec![("truth", "black", &curves.truth), ("posterior mean", "red", &curves.mean)],
    }
    .render()
}

/// Writes `{stem}_curve.csv` and `{stem}.svg`; the figure is rendered from
/// the same curve data the CSV carries.
pub fn write_curves(dir: &Path, stem: &str, title: &str, curves: &CurveSet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    curves.write_csv(&mut csv)?;
    std::fs::write(dir.join(format!("{stem}_curve.csv")), csv)?;
    std::fs::write(dir.join(format!("{stem}.svg")), figure_from_curves(title, curves))?;
    Ok(())
}

fn write_chain_log(dir: &Path, stem: &str, run: &GibbsRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::File::create(dir.join(format!("{stem}_chain.jsonl")))?;
    run.log.write_jsonl(&mut file)
}

fn curves_from_run(truth: &CoefficientVector, run: &GibbsRun, grid: &[f64]) -> Result<CurveSet> {
    Ok(CurveSet {
        grid: grid.to_vec(),
        truth: evaluate_on_grid(truth, grid)?,
        mean: evaluate_on_grid(&run.summary.mean, grid)?,
        lower: run.summary.band.lower.clone(),
        upper: run.summary.band.upper.clone(),
    })
}

/// One hierarchical run; returns the run plus the realized observation.
#[allow(clippy::too_many_arguments)]
fn hb_run(
    truth: &CoefficientVector,
    n: f64,
    mode: &HyperParamMode,
    hyper: &HyperPriorSpec,
    template: &PriorTemplate,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<(GibbsRun, Observation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = simulate(truth, n, &mut rng)?;
    let cfg = McmcConfig { seed: seed ^ 0x5eed, ..mcmc.clone() };
    let run = run_gibbs(&obs, mode, hyper, template, &cfg)?;
    Ok((run, obs))
}

/// Scale selection at n = 200: Laplace priors over five regularities
/// around the truth smoothness, inverse-gamma hyper-prior on the scale
/// left-truncated at n^(-1/(3+2 alpha)).
pub fn run_experiment_1(overrides: &ExperimentOverrides) -> Result<StudyResult> {
    let n = overrides.n.unwrap_or(200.0);
    let trunc = overrides.trunc.unwrap_or(200);
    let base_seed = overrides.seed.unwrap_or(1);
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out/experiment1"));
    let beta = 1.75;
    let alphas: Vec<f64> = match overrides.alpha {
        Some(a) => vec![a],
        None => vec![beta - 1.0, beta - 0.5, beta, beta + 0.5, beta + 1.0],
    };
    let truth = make_truth(&TruthSpec::PowerSine { a: 2.25, omega: 10.0 }, trunc)?;
    let grid = default_eval_grid();
    let mcmc = McmcConfig {
        iters: overrides.iters.unwrap_or(25_000),
        burnin: overrides.iters.map(|i| i / 5).unwrap_or(5_000),
        eval_grid: grid.clone(),
        ..Default::default()
    };

    let mut study = StudyResult::default();
    for (i, &alpha) in alphas.iter().enumerate() {
        let mode = HyperParamMode::TauOnly { alpha };
        let hyper = HyperPriorSpec::TruncInvGamma(InvGammaHyper {
            a: 1.0,
            b: 1.0,
            left: TauLeftRule::Auto { n, p: 1.0 },
        });
        let template = PriorTemplate { p: 1.0, trunc };
        let started = Instant::now();
        let (run, _obs) = hb_run(
            &truth,
            n,
            &mode,
            &hyper,
            &template,
            &mcmc,
            derive_seed(base_seed, 0, i as u32, 1),
        )?;
        let seconds = started.elapsed().as_secs_f64();
        let curves = curves_from_run(&truth, &run, &grid)?;
        let stem = format!("exp1_alpha_{alpha:.2}");
        write_curves(&out_dir, &stem, &format!("scale selection, alpha = {alpha:.2}"), &curves)?;
        write_chain_log(&out_dir, &stem, &run)?;
        let lm = run.summary.lambda_moments.unwrap();
        study.rows.push(RunRecord {
            n,
            rep: i as u32,
            method: "hb".into(),
            mode: format!("tau_only(alpha={alpha:.2})"),
            lambda_hat_or_mean: lm.mean.tau,
            l2_error: run.summary.mean.l2_distance(&truth),
            band_width: run.summary.band.mean_width(),
            seconds,
            lambda_sd: Some(lm.sd.tau),
        });
    }
    study.fit_slope();
    study.save(&out_dir)?;
    Ok(study)
}

/// Regularity selection at n = 1e3 and 1e5 under Gaussian and Laplace
/// priors with unit scale and a truncated-exponential hyper-prior on the
/// regularity; the truncation level follows L ~ n^(1/1.5).
pub fn run_experiment_2(overrides: &ExperimentOverrides) -> Result<StudyResult> {
    let base_seed = overrides.seed.unwrap_or(2);
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out/experiment2"));
    let n_list: Vec<f64> = match overrides.n {
        Some(n) => vec![n],
        None => vec![1e3, 1e5],
    };
    let l_rule = TruncationRule::PowerRule { exponent: 1.0 / 1.5 };
    let grid = default_eval_grid();
    let hyper = HyperPriorSpec::TruncExp(ExpHyper { rate: 1.0, lo: 0.5, hi: 100.0 });
    let mode = HyperParamMode::AlphaOnly { tau: 1.0 };

    let mut study = StudyResult::default();
    let mut band_table = String::from("n,p,band_width\n");
    for (pi, &p) in [2.0, 1.0].iter().enumerate() {
        for (ni, &n) in n_list.iter().enumerate() {
            let trunc = overrides.trunc.unwrap_or(truncation_level(n, &l_rule)?);
            let truth = make_truth(&TruthSpec::PowerSineCos { a: 1.5, omega: 1.0 }, trunc)?;
            let template = PriorTemplate { p, trunc };
            let mcmc = McmcConfig {
                iters: overrides.iters.unwrap_or(25_000),
                burnin: overrides.iters.map(|i| i / 5).unwrap_or(5_000),
                eval_grid: grid.clone(),
                ..Default::default()
            };
            let started = Instant::now();
            let (run, _obs) = hb_run(
                &truth,
                n,
                &mode,
                &hyper,
                &template,
                &mcmc,
                derive_seed(base_seed, ni, pi as u32, 2),
            )?;
            let seconds = started.elapsed().as_secs_f64();
            let curves = curves_from_run(&truth, &run, &grid)?;
            let stem = format!("exp2_p{p:.0}_n{n:.0}");
            write_curves(
                &out_dir,
                &stem,
                &format!("regularity selection, p = {p:.0}, n = {n:.0}"),
                &curves,
            )?;
            write_chain_log(&out_dir, &stem, &run)?;
            let lm = run.summary.lambda_moments.unwrap();
            let width = run.summary.band.mean_width();
            band_table.push_str(&format!("{n},{p},{width:.17e}\n"));
            study.rows.push(RunRecord {
                n,
                rep: pi as u32,
                method: "hb".into(),
                mode: format!("alpha_only(p={p:.0})"),
                lambda_hat_or_mean: lm.mean.alpha,
                l2_error: run.summary.mean.l2_distance(&truth),
                band_width: width,
                seconds,
                lambda_sd: Some(lm.sd.alpha),
            });
        }
    }
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("band_widths.csv"), band_table)?;
    study.fit_slope();
    study.save(&out_dir)?;
    Ok(study)
}
