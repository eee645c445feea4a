use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pexp_cli::config::{ConfigError, ExperimentConfig};
use pexp_cli::contract::{contraction_study, ContractConfig};
use pexp_cli::experiments::{run_experiment_1, run_experiment_2, ExperimentOverrides};
use pexp_cli::report::render_report;
use pexp_core::ebayes::{build_grid, mmle, MarginalMethod, QuadratureSpec};
use pexp_core::hbayes::{resume_gibbs, run_gibbs, ChainLog};
use pexp_core::prior::{HyperParamMode, PriorTemplate};
use pexp_core::rates::{
    besov_optimal, linear_minimax_rate, minimax_rate, optimize_alpha, optimize_tau,
};
use pexp_core::seq::make_truth;
use pexp_core::wn::{simulate, truncation_level};

#[derive(Parser)]
#[command(name = "pexp", version, about = "Adaptive Bayesian inference in the white noise model with p-exponential priors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic observation and persist it as CSV + JSON header.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Profile the marginal likelihood over the candidate grid and report
    /// the maximizer; emits the full (lambda, log marginal) table as CSV.
    Mmle {
        #[arg(long)]
        config: PathBuf,
        /// Assert the hyper-parameter mode (tau | alpha | both).
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the hierarchical sampler; writes the chain log, posterior
    /// summary and band.
    Gibbs {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the last checkpoint of an existing chain log.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Print the rate table (regime, optimized hyper-parameter, bound,
    /// minimax, linear minimax, ratio) as CSV.
    Rates {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: f64,
        /// Prior regularity for the scale-optimized row (defaults to beta).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce one of the built-in studies.
    Experiment {
        /// 1 = scale selection, 2 = regularity selection.
        index: u8,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        trunc: Option<usize>,
    },
    /// Contraction-rate sweep over a grid of noise levels.
    Contract {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render every figure in a directory from its curve CSV.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

enum AppError {
    Config(String),
    Numeric { message: String, dump: Option<PathBuf> },
    Other(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

fn classify_core(e: pexp_core::Error, dump_dir: Option<&Path>, context: &str) -> AppError {
    use pexp_core::Error as E;
    match &e {
        E::Numeric(_)
        | E::QuadratureNonConvergence { .. }
        | E::NonFiniteLogLikelihood { .. }
        | E::InfeasibleProbability { .. } => {
            let dump = dump_dir.and_then(|dir| {
                std::fs::create_dir_all(dir).ok()?;
                let path = dir.join("diagnostic_dump.json");
                let body = serde_json::json!({
                    "error": e.to_string(),
                    "context": context,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&body).ok()?).ok()?;
                Some(path)
            });
            AppError::Numeric { message: e.to_string(), dump }
        }
        _ => AppError::Other(e.to_string()),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(v) = std::env::var("PEXP_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Numeric { message, dump }) => {
            eprintln!("numeric failure: {message}");
            if let Some(path) = dump {
                eprintln!("diagnostic dump written to {}", path.display());
            }
            ExitCode::from(3)
        }
        Err(AppError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load(config: &Path) -> Result<ExperimentConfig, AppError> {
    Ok(ExperimentConfig::from_path(config)?)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Simulate { config } => {
            let cfg = load(&config)?;
            let n = cfg.n_list[0];
            let trunc = truncation_level(n, &cfg.l_rule)
                .map_err(|e| AppError::Config(format!("l_rule: {e}")))?;
            let truth = make_truth(&cfg.truth, trunc)
                .map_err(|e| AppError::Config(format!("truth: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let obs = simulate(&truth, n, &mut rng)
                .map_err(|e| classify_core(e, Some(&cfg.out_dir), "simulate"))?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| AppError::Other(e.to_string()))?;
            let mut file = std::fs::File::create(cfg.out_dir.join("observation.csv"))
                .map_err(|e| AppError::Other(e.to_string()))?;
            obs.write_csv(&mut file).map_err(|e| AppError::Other(e.to_string()))?;
            let header = serde_json::to_string_pretty(&obs.header(Some(cfg.seed)))
                .map_err(|e| AppError::Other(e.to_string()))?;
            std::fs::write(cfg.out_dir.join("observation.json"), header)
                .map_err(|e| AppError::Other(e.to_string()))?;
            println!("wrote observation.csv and observation.json to {}", cfg.out_dir.display());
            Ok(())
        }
        Cmd::Mmle { config, mode, seed } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(flag) = mode {
                let matches = matches!(
                    (flag.as_str(), &cfg.mode),
                    ("tau", HyperParamMode::TauOnly { .. })
                        | ("alpha", HyperParamMode::AlphaOnly { .. })
                        | ("both", HyperParamMode::Both)
                );
                if !matches {
                    return Err(AppError::Config(format!(
                        "--mode {flag} does not match the config mode {:?}",
                        cfg.mode
                    )));
                }
            }
            let n = cfg.n_list[0];
            let trunc = truncation_level(n, &cfg.l_rule)
                .map_err(|e| AppError::Config(format!("l_rule: {e}")))?;
            let truth = make_truth(&cfg.truth, trunc)
                .map_err(|e| AppError::Config(format!("truth: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let obs = simulate(&truth, n, &mut rng)
                .map_err(|e| classify_core(e, Some(&cfg.out_dir), "mmle/simulate"))?;
            let grid = build_grid(&cfg.mode, n, cfg.p, &cfg.grid.resolution(), cfg.grid.alpha_window)
                .map_err(|e| AppError::Config(format!("grid: {e}")))?;
            let template = PriorTemplate { p: cfg.p, trunc };
            let fit = mmle(&obs, &template, &QuadratureSpec::default(), &grid, MarginalMethod::Auto)
                .map_err(|e| classify_core(e, Some(&cfg.out_dir), "mmle"))?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| AppError::Other(e.to_string()))?;
            let mut table = String::from("alpha,tau,log_marginal\n");
            for row in &fit.table {
                table.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e}\n",
                    row.lambda.alpha, row.lambda.tau, row.log_marginal
                ));
            }
            std::fs::write(cfg.out_dir.join("mmle_table.csv"), table)
                .map_err(|e| AppError::Other(e.to_string()))?;
            let hat = serde_json::json!({ "lambda_hat": fit.lambda_hat });
            std::fs::write(
                cfg.out_dir.join("mmle.json"),
                serde_json::to_string_pretty(&hat).expect("serializable"),
            )
            .map_err(|e| AppError::Other(e.to_string()))?;
            println!(
                "lambda_hat: alpha = {}, tau = {}",
                fit.lambda_hat.alpha, fit.lambda_hat.tau
            );
            Ok(())
        }
        Cmd::Gibbs { config, resume } => {
            let cfg = load(&config)?;
            let hyper = cfg.hyper.ok_or_else(|| {
                AppError::Config("field `hyper`: required for the gibbs subcommand".into())
            })?;
            let n = cfg.n_list[0];
            let trunc = truncation_level(n, &cfg.l_rule)
                .map_err(|e| AppError::Config(format!("l_rule: {e}")))?;
            let truth = make_truth(&cfg.truth, trunc)
                .map_err(|e| AppError::Config(format!("truth: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let obs = simulate(&truth, n, &mut rng)
                .map_err(|e| classify_core(e, Some(&cfg.out_dir), "gibbs/simulate"))?;
            let template = PriorTemplate { p: cfg.p, trunc };
            let mut mcmc = cfg.mcmc.clone();
            if mcmc.eval_grid.is_empty() {
                mcmc.eval_grid = pexp_cli::config::default_eval_grid();
            }
            if mcmc.seed == 0 {
                mcmc.seed = cfg.seed ^ 0x5eed;
            }
            let run = match resume {
                Some(path) => {
                    let file = std::fs::File::open(&path).map_err(|e| AppError::Other(e.to_string()))?;
                    let log = ChainLog::read_jsonl(std::io::BufReader::new(file))
                        .map_err(|e| AppError::Other(e.to_string()))?;
                    resume_gibbs(&log, &obs, &cfg.mode, &hyper, &template, &mcmc)
                }
                None => run_gibbs(&obs, &cfg.mode, &hyper, &template, &mcmc),
            }
            .map_err(|e| classify_core(e, Some(&cfg.out_dir), "gibbs"))?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| AppError::Other(e.to_string()))?;
            let mut file = std::fs::File::create(cfg.out_dir.join("chain.jsonl"))
                .map_err(|e| AppError::Other(e.to_string()))?;
            run.log
                .write_jsonl(&mut file)
                .map_err(|e| AppError::Other(e.to_string()))?;
            std::fs::write(
                cfg.out_dir.join("summary.json"),
                serde_json::to_string_pretty(&run.summary).expect("serializable"),
            )
            .map_err(|e| AppError::Other(e.to_string()))?;
            let band = &run.summary.band;
            let mut csv = String::from("t,lower,upper\n");
            for i in 0..band.grid.len() {
                csv.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e}\n",
                    band.grid[i], band.lower[i], band.upper[i]
                ));
            }
            std::fs::write(cfg.out_dir.join("band.csv"), csv)
                .map_err(|e| AppError::Other(e.to_string()))?;
            println!("wrote chain.jsonl, summary.json and band.csv to {}", cfg.out_dir.display());
            Ok(())
        }
        Cmd::Rates { beta, q, p, n, alpha, out } => {
            let alpha = alpha.unwrap_or(beta);
            let mut table = String::from(
                "row,regime,tau0_or_alpha0,bound,minimax,linear_minimax,bound_over_minimax\n",
            );
            let m_star = minimax_rate(beta, n);
            let l_star = if beta > 1.0 / q || (q == 1.0 && beta >= 1.0) {
                linear_minimax_rate(beta, q, n)
            } else {
                f64::NAN
            };
            let (tau0, bound) =
                optimize_tau(alpha, beta, p, n).map_err(|e| AppError::Config(e.to_string()))?;
            table.push_str(&format!(
                "scale_optimized,{:?},{tau0:.6e},{:.6e},{m_star:.6e},{l_star:.6e},{:.4}\n",
                bound.regime,
                bound.value,
                bound.value / m_star
            ));
            let (alpha0, bound) =
                optimize_alpha(beta, p, n).map_err(|e| AppError::Config(e.to_string()))?;
            table.push_str(&format!(
                "regularity_optimized,{:?},{alpha0:.6e},{:.6e},{m_star:.6e},{l_star:.6e},{:.4}\n",
                bound.regime,
                bound.value,
                bound.value / m_star
            ));
            if p <= q && q < 2.0 && beta >= 1.0 / p {
                let b = besov_optimal(beta, q, p, n).map_err(|e| AppError::Config(e.to_string()))?;
                table.push_str(&format!(
                    "joint_optimized,BelowCritical,{:.6e},{:.6e},{m_star:.6e},{l_star:.6e},{:.4}\n",
                    b.tau0,
                    b.rate,
                    b.rate / m_star
                ));
            }
            print!("{table}");
            if let Some(path) = out {
                std::fs::write(path, table).map_err(|e| AppError::Other(e.to_string()))?;
            }
            Ok(())
        }
        Cmd::Experiment { index, alpha, seed, out, iters, n, trunc } => {
            let overrides = ExperimentOverrides { alpha, seed, n, trunc, iters, out_dir: out };
            let study = match index {
                1 => run_experiment_1(&overrides),
                2 => run_experiment_2(&overrides),
                other => {
                    return Err(AppError::Config(format!(
                        "experiment index must be 1 or 2, got {other}"
                    )))
                }
            }
            .map_err(|e| classify_core(e, overrides_dir(&overrides, index).as_deref(), "experiment"))?;
            for row in &study.rows {
                println!(
                    "n = {:>9}  {}  lambda = {:.4}  l2 error = {:.5}  band width = {:.4}",
                    row.n, row.mode, row.lambda_hat_or_mean, row.l2_error, row.band_width
                );
            }
            Ok(())
        }
        Cmd::Contract { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| AppError::Config(e.to_string()))?;
            let cfg: ContractConfig =
                serde_json::from_str(&text).map_err(|e| AppError::Config(e.to_string()))?;
            let study = contraction_study(&cfg)
                .map_err(|e| classify_core(e, cfg.out_dir.as_deref(), "contract"))?;
            println!(
                "slope = {:?}, target exponent = {:?}",
                study.slope, study.target_exponent
            );
            for (n, med) in study.median_errors() {
                println!("n = {n:>12}: median l2 error = {med:.6}");
            }
            Ok(())
        }
        Cmd::Report { dir } => {
            let written = render_report(&dir).map_err(|e| AppError::Other(e.to_string()))?;
            for path in written {
                println!("rendered {}", path.display());
            }
            Ok(())
        }
    }
}

fn overrides_dir(overrides: &ExperimentOverrides, index: u8) -> Option<PathBuf> {
    overrides
        .out_dir
        .clone()
        .or_else(|| Some(PathBuf::from(format!("out/experiment{index}"))))
}
