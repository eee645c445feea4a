//! Empirical contraction-rate sweeps: median L2 error of the posterior
//! mean against the noise level, compared to the adaptive rate target.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pexp_core::ebayes::{build_grid, mmle, MarginalMethod, QuadratureSpec};
use pexp_core::hbayes::{conjugate_posterior_mean, run_gibbs, McmcConfig};
use pexp_core::prior::{HyperParamMode, HyperPriorSpec, PriorTemplate};
use pexp_core::rates::classify_regime;
use pexp_core::seq::{make_truth, TruthSpec};
use pexp_core::wn::{simulate, truncation_level, TruncationRule};
use pexp_core::{Error, Result};

use crate::config::{derive_seed, GridConfig};
use crate::output::{RunRecord, StudyResult};

/// How each replication produces a posterior mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractMethod {
    /// Gaussian shape only: MMLE over the candidate grid, then the exact
    /// conjugate posterior mean. No sampling error enters.
    EbConjugate,
    /// Full hierarchical sampler.
    HbGibbs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractConfig {
    pub truth: TruthSpec,
    /// Smoothness of the truth, used for the rate target.
    pub beta: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    pub n_grid: Vec<f64>,
    pub reps: u32,
    pub l_rule: TruncationRule,
    pub p: f64,
    pub mode: HyperParamMode,
    #[serde(default)]
    pub hyper: Option<HyperPriorSpec>,
    pub method: ContractMethod,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_q() -> f64 {
    2.0
}

/// Exponent of the power-law part of the rate target for the configured
/// mode (log factors excluded: they do not move a log-log slope limit).
pub fn target_exponent(mode: &HyperParamMode, beta: f64, p: f64) -> f64 {
    match *mode {
        HyperParamMode::TauOnly { alpha } => match classify_regime(alpha, beta, p) {
            pexp_core::rates::Regime::AboveCritical => {
                -(1.0 + alpha * p) / (2.0 + p * (1.0 + 2.0 * alpha))
            }
            _ => -beta / (1.0 + 2.0 * beta),
        },
        _ => -beta / (1.0 + 2.0 * beta),
    }
}

pub fn contraction_study(cfg: &ContractConfig) -> Result<StudyResult> {
    let mut distinct = cfg.n_grid.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "contraction study needs at least 3 distinct noise levels, got {}",
            distinct.len()
        )));
    }
    if cfg.reps < 3 {
        return Err(Error::InvalidParameter(format!(
            "contraction study needs at least 3 replications, got {}",
            cfg.reps
        )));
    }
    if cfg.method == ContractMethod::EbConjugate && cfg.p != 2.0 {
        return Err(Error::InvalidParameter(
            "the conjugate path requires the Gaussian shape p = 2".into(),
        ));
    }
    if cfg.method == ContractMethod::HbGibbs && cfg.hyper.is_none() {
        return Err(Error::InvalidParameter(
            "the sampling path requires a hyper-prior".into(),
        ));
    }

    let tasks: Vec<(usize, u32)> = (0..cfg.n_grid.len())
        .flat_map(|ni| (0..cfg.reps).map(move |rep| (ni, rep)))
        .collect();

    let mut rows: Vec<((usize, u32), RunRecord)> = tasks
        .par_iter()
        .map(|&(ni, rep)| {
            let record = run_one(cfg, ni, rep)?;
            Ok(((ni, rep), record))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(key, _)| *key);

    let mut study = StudyResult {
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        slope: None,
        intercept: None,
        target_exponent: Some(target_exponent(&cfg.mode, cfg.beta, cfg.p)),
    };
    study.fit_slope();
    if let Some(dir) = &cfg.out_dir {
        study.save(dir)?;
    }
    Ok(study)
}

/// Re-anchors any n-dependent left-truncation rule in the hyper-prior to
/// the noise level of the current task.
fn hyper_for_n(hyper: &HyperPriorSpec, n: f64) -> HyperPriorSpec {
    use pexp_core::prior::TauLeftRule;
    let fix = |ig: &pexp_core::prior::InvGammaHyper| {
        let left = match ig.left {
            TauLeftRule::Auto { p, .. } => TauLeftRule::Auto { n, p },
            fixed => fixed,
        };
        pexp_core::prior::InvGammaHyper { left, ..*ig }
    };
    match hyper {
        HyperPriorSpec::TruncInvGamma(ig) => HyperPriorSpec::TruncInvGamma(fix(ig)),
        HyperPriorSpec::TruncExp(ex) => HyperPriorSpec::TruncExp(*ex),
        HyperPriorSpec::Product { alpha, tau } => {
            HyperPriorSpec::Product { alpha: *alpha, tau: fix(tau) }
        }
    }
}

fn run_one(cfg: &ContractConfig, ni: usize, rep: u32) -> Result<RunRecord> {
    let n = cfg.n_grid[ni];
    let trunc = truncation_level(n, &cfg.l_rule)?;
    let truth = make_truth(&cfg.truth, trunc)?;
    let seed = derive_seed(cfg.seed, ni, rep, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = simulate(&truth, n, &mut rng)?;
    let template = PriorTemplate { p: cfg.p, trunc };
    let started = Instant::now();

    let (label, lambda_value, lambda_sd, l2_error, band_width) = match cfg.method {
        ContractMethod::EbConjugate => {
            // The mode's tau bounds depend on n, so the grid is rebuilt here.
            let grid =
                build_grid(&cfg.mode, n, cfg.p, &cfg.grid.resolution(), cfg.grid.alpha_window)?;
            let fit = mmle(&obs, &template, &QuadratureSpec::default(), &grid, MarginalMethod::Auto)?;
            let spec = template.instantiate(&fit.lambda_hat)?;
            let mean = conjugate_posterior_mean(&obs, &spec);
            let value = if cfg.mode.tau_free() { fit.lambda_hat.tau } else { fit.lambda_hat.alpha };
            ("eb", value, None, mean.l2_distance(&truth), f64::NAN)
        }
        ContractMethod::HbGibbs => {
            let hyper = hyper_for_n(cfg.hyper.as_ref().expect("validated above"), n);
            let mcmc = McmcConfig { seed: seed ^ 0x5eed, ..cfg.mcmc.clone() };
            let run = run_gibbs(&obs, &cfg.mode, &hyper, &template, &mcmc)?;
            let lm = run.summary.lambda_moments.unwrap();
            let (value, sd) = if cfg.mode.tau_free() {
                (lm.mean.tau, lm.sd.tau)
            } else {
                (lm.mean.alpha, lm.sd.alpha)
            };
            (
                "hb",
                value,
                Some(sd),
                run.summary.mean.l2_distance(&truth),
                run.summary.band.mean_width(),
            )
        }
    };

    Ok(RunRecord {
        n,
        rep,
        method: label.into(),
        mode: mode_label(&cfg.mode),
        lambda_hat_or_mean: lambda_value,
        l2_error,
        band_width,
        seconds: started.elapsed().as_secs_f64(),
        lambda_sd,
    })
}

fn mode_label(mode: &HyperParamMode) -> String {
    match mode {
        HyperParamMode::TauOnly { alpha } => format!("tau_only(alpha={alpha})"),
        HyperParamMode::AlphaOnly { tau } => format!("alpha_only(tau={tau})"),
        HyperParamMode::Both => "both".into(),
    }
}
