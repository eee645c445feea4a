//! Marginal likelihood as a product of univariate integrals, evaluated by
//! mode-centered Gauss-Legendre quadrature in the log domain, plus the
//! candidate-grid construction and MMLE grid search.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::hbayes::{run_fixed_lambda, GibbsRun, McmcConfig};
use crate::pexp::PExp;
use crate::prior::{HyperParamMode, Lambda, PriorTemplate};
use crate::util::KahanSum;
use crate::wn::Observation;
use crate::{Error, Result};

/// Controls for the univariate quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Absolute tolerance on the log integral between node doublings.
    pub tol: f64,
    /// Nodes for the first pass.
    pub base_nodes: usize,
    /// How many times the node count may double before giving up.
    pub max_doublings: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { tol: 1e-11, base_nodes: 64, max_doublings: 5 }
    }
}

/// Log-drop from the mode that the integration window must cover; 72 is
/// twelve Gaussian standard deviations worth of curvature (12^2 / 2).
const WINDOW_LOG_DROP: f64 = 72.0;

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based first guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn cached_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("rule cache poisoned");
    guard.entry(n).or_insert_with(|| legendre_rule(n)).clone()
}

/// log of the unnormalized integrand: n x t - n t^2 / 2 - |t/gamma|^p / p.
#[inline]
fn log_integrand(t: f64, x: f64, n: f64, gamma: f64, p: f64) -> f64 {
    n * x * t - 0.5 * n * t * t - (t / gamma).abs().powf(p) / p
}

fn integrand_mode(x: f64, n: f64, gamma: f64, p: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        // Soft-thresholding: the prior slope 1/gamma cancels |n x| or not.
        let shrink = 1.0 / (n * gamma);
        return if x.abs() <= shrink { 0.0 } else { x - x.signum() * shrink };
    }
    // d/dt log-integrand is strictly decreasing with a sign change in
    // [0, x] (or [x, 0]); bisection is immune to the curvature blow-up of
    // |t|^(p-2) at the origin.
    let deriv = |t: f64| n * x - n * t - t.signum() * t.abs().powf(p - 1.0) / gamma.powf(p);
    let (mut lo, mut hi) = if x > 0.0 { (0.0, x) } else { (x, 0.0) };
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Finds the point at distance <= 13/sqrt(n) from the mode, on the given
/// side, where the log integrand has dropped by `WINDOW_LOG_DROP`. The
/// Gaussian factor alone guarantees the drop inside that radius.
fn window_edge(mode: f64, side: f64, x: f64, n: f64, gamma: f64, p: f64) -> f64 {
    let g_mode = log_integrand(mode, x, n, gamma, p);
    let reach = 13.0 / n.sqrt();
    let mut lo = mode;
    let mut hi = mode + side * reach;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g_mode - log_integrand(mid, x, n, gamma, p) < WINDOW_LOG_DROP {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn gl_panel(a: f64, b: f64, nodes: usize, x: f64, n: f64, gamma: f64, p: f64) -> (f64, f64) {
    let (ts, ws) = cached_rule(nodes);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let gs: Vec<f64> = ts.iter().map(|&u| log_integrand(mid + half * u, x, n, gamma, p)).collect();
    let gmax = gs.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut acc = KahanSum::new();
    for (g, w) in gs.iter().zip(&ws) {
        acc.add(w * (g - gmax).exp());
    }
    (gmax, half * acc.value())
}

/// Integrates exp(g) over [a, b] in the log domain. For p < 2 the prior
/// factor has a derivative kink at the origin, so the window is split
/// there; Gauss-Legendre then converges at its usual spectral rate on
/// each smooth panel.
fn gl_log_integral(a: f64, b: f64, nodes: usize, x: f64, n: f64, gamma: f64, p: f64) -> f64 {
    let panels: &[(f64, f64)] = if p < 2.0 && a < 0.0 && b > 0.0 {
        &[(a, 0.0), (0.0, b)]
    } else {
        &[(a, b)]
    };
    let parts: Vec<(f64, f64)> = panels
        .iter()
        .map(|&(lo, hi)| gl_panel(lo, hi, nodes, x, n, gamma, p))
        .collect();
    let m = parts.iter().map(|&(g, _)| g).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = parts.iter().map(|&(g, s)| (g - m).exp() * s).sum();
    m + total.ln()
}

/// log of integral exp(n x t - n t^2/2) gamma^-1 f_p(t/gamma) dt for one
/// coordinate, by quadrature on a mode-centered window with a node-doubling
/// convergence check.
pub fn coord_log_marginal(
    x: f64,
    n: f64,
    gamma: f64,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("n must be positive, got {n}")));
    }
    let dist = PExp::new(p)?;
    let mode = integrand_mode(x, n, gamma, p);
    let lo = window_edge(mode, -1.0, x, n, gamma, p);
    let hi = window_edge(mode, 1.0, x, n, gamma, p);

    let mut nodes = quad.base_nodes.max(8);
    let mut value = gl_log_integral(lo, hi, nodes, x, n, gamma, p);
    let mut residual = f64::INFINITY;
    for _ in 0..quad.max_doublings {
        nodes *= 2;
        let refined = gl_log_integral(lo, hi, nodes, x, n, gamma, p);
        residual = (refined - value).abs();
        value = refined;
        // Large log-magnitudes cannot settle below a few ulps of the value
        // itself; the threshold carries that floor.
        if residual < quad.tol.max(2.0 * f64::EPSILON * value.abs()) {
            return Ok(value - dist.ln_normalizer() - gamma.ln());
        }
    }
    Err(Error::QuadratureNonConvergence { index: 0, residual })
}

/// Closed form for p = 2: -log(1 + n gamma^2)/2 + n^2 gamma^2 x^2 / (2 (1 + n gamma^2)).
pub fn coord_log_marginal_gaussian(x: f64, n: f64, gamma: f64) -> f64 {
    let s = n * gamma * gamma;
    -0.5 * (1.0 + s).ln() + n * s * x * x / (2.0 * (1.0 + s))
}

/// How `log_marginal` evaluates each coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMethod {
    /// Quadrature for p < 2, exact conjugate form at p = 2. The two routes
    /// are pinned against each other by the test suite.
    #[default]
    Auto,
    /// Force quadrature regardless of shape.
    Quadrature,
}

/// Log marginal likelihood at one hyper-parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalResult {
    pub lambda: Lambda,
    pub log_marginal: f64,
    pub per_coordinate: Option<Vec<f64>>,
}

/// Sums the per-coordinate log integrals over the truncation.
pub fn log_marginal(
    obs: &Observation,
    lambda: &Lambda,
    template: &PriorTemplate,
    quad: &QuadratureSpec,
    method: MarginalMethod,
    keep_per_coordinate: bool,
) -> Result<MarginalResult> {
    let spec = template.instantiate(lambda)?;
    let trunc = spec.trunc().min(obs.trunc_level());
    let mut per = Vec::with_capacity(if keep_per_coordinate { trunc } else { 0 });
    let mut total = KahanSum::new();
    for l in 1..=trunc {
        let x = obs.x().coeffs()[l - 1];
        let gamma = spec.gamma_at(l);
        let v = match method {
            MarginalMethod::Auto if template.p == 2.0 => {
                coord_log_marginal_gaussian(x, obs.n(), gamma)
            }
            _ => coord_log_marginal(x, obs.n(), gamma, template.p, quad).map_err(|e| match e {
                Error::QuadratureNonConvergence { residual, .. } => {
                    Error::QuadratureNonConvergence { index: l, residual }
                }
                other => other,
            })?,
        };
        total.add(v);
        if keep_per_coordinate {
            per.push(v);
        }
    }
    Ok(MarginalResult {
        lambda: *lambda,
        log_marginal: total.value(),
        per_coordinate: keep_per_coordinate.then_some(per),
    })
}

/// Grid density controls: geometric in tau, uniform in alpha.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResolution {
    pub tau_per_decade: f64,
    pub alpha_step: f64,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self { tau_per_decade: 25.0, alpha_step: 0.05 }
    }
}

/// The candidate hyper-parameter set for the MMLE search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub mode: HyperParamMode,
    pub points: Vec<Lambda>,
    pub tau_bounds: Option<(f64, f64)>,
    pub alpha_bounds: Option<(f64, f64)>,
    pub resolution: GridResolution,
}

fn geometric_points(lo: f64, hi: f64, per_decade: f64) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade).floor() as usize + 1).max(2);
    (0..count)
        .map(|j| lo * (hi / lo).powf(j as f64 / (count - 1) as f64))
        .collect()
}

fn uniform_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    let mut a = lo;
    while a < hi - 1e-12 {
        pts.push(a);
        a += step;
    }
    pts.push(hi);
    if pts.len() < 2 {
        pts.insert(0, lo);
    }
    pts
}

/// Tau bounds [n^(-1/(2+p+2 alpha p)), n^alpha] for a given regularity.
pub fn tau_bounds(n: f64, p: f64, alpha: f64) -> (f64, f64) {
    (n.powf(-1.0 / (2.0 + p + 2.0 * alpha * p)), n.powf(alpha))
}

/// Builds the candidate set: geometric in tau over the n-dependent bounds,
/// uniform in alpha over the supplied window, Cartesian product for the
/// joint mode with tau bounds recomputed per alpha.
pub fn build_grid(
    mode: &HyperParamMode,
    n: f64,
    p: f64,
    resolution: &GridResolution,
    alpha_window: Option<(f64, f64)>,
) -> Result<CandidateGrid> {
    if n < 2.0 {
        return Err(Error::InvalidParameter(format!("grid construction needs n >= 2, got {n}")));
    }
    if resolution.tau_per_decade <= 0.0 || resolution.alpha_step <= 0.0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    let grid = match *mode {
        HyperParamMode::TauOnly { alpha } => {
            let (lo, hi) = tau_bounds(n, p, alpha);
            let points = geometric_points(lo, hi, resolution.tau_per_decade)
                .into_iter()
                .map(|tau| Lambda { alpha, tau })
                .collect();
            CandidateGrid {
                mode: *mode,
                points,
                tau_bounds: Some((lo, hi)),
                alpha_bounds: None,
                resolution: *resolution,
            }
        }
        HyperParamMode::AlphaOnly { tau } => {
            let (lo, hi) = alpha_window.ok_or_else(|| {
                Error::InvalidParameter("alpha window required for regularity grids".into())
            })?;
            let points = uniform_points(lo, hi, resolution.alpha_step)
                .into_iter()
                .map(|alpha| Lambda { alpha, tau })
                .collect();
            CandidateGrid {
                mode: *mode,
                points,
                tau_bounds: None,
                alpha_bounds: Some((lo, hi)),
                resolution: *resolution,
            }
        }
        HyperParamMode::Both => {
            let (lo, hi) = alpha_window.ok_or_else(|| {
                Error::InvalidParameter("alpha window required for joint grids".into())
            })?;
            let mut points = Vec::new();
            for alpha in uniform_points(lo, hi, resolution.alpha_step) {
                let (tlo, thi) = tau_bounds(n, p, alpha);
                for tau in geometric_points(tlo, thi, resolution.tau_per_decade) {
                    points.push(Lambda { alpha, tau });
                }
            }
            CandidateGrid {
                mode: *mode,
                points,
                tau_bounds: None,
                alpha_bounds: Some((lo, hi)),
                resolution: *resolution,
            }
        }
    };
    if grid.points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(grid)
}

/// MMLE output: the argmax and the full profile table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MmleResult {
    pub lambda_hat: Lambda,
    pub table: Vec<MarginalResult>,
}

/// Grid search for the maximum marginal likelihood hyper-parameter.
/// Failed grid points are kept as NaN rows so the profile stays complete;
/// exact ties resolve toward smaller tau, then smaller alpha.
pub fn mmle(
    obs: &Observation,
    template: &PriorTemplate,
    quad: &QuadratureSpec,
    grid: &CandidateGrid,
    method: MarginalMethod,
) -> Result<MmleResult> {
    if grid.points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut table = Vec::with_capacity(grid.points.len());
    for lambda in &grid.points {
        let row = match log_marginal(obs, lambda, template, quad, method, false) {
            Ok(r) => r,
            Err(_) => MarginalResult {
                lambda: *lambda,
                log_marginal: f64::NAN,
                per_coordinate: None,
            },
        };
        table.push(row);
    }
    let mut best: Option<&MarginalResult> = None;
    for row in &table {
        if row.log_marginal.is_nan() {
            continue;
        }
        best = Some(match best {
            None => row,
            Some(cur) => {
                if row.log_marginal > cur.log_marginal
                    || (row.log_marginal == cur.log_marginal
                        && (row.lambda.tau, row.lambda.alpha) < (cur.lambda.tau, cur.lambda.alpha))
                {
                    row
                } else {
                    cur
                }
            }
        });
    }
    let best = best.ok_or(Error::AllNan)?;
    Ok(MmleResult { lambda_hat: best.lambda, table })
}

/// Posterior for the plug-in hyper-parameter: the sampler runs with
/// lambda frozen at the MMLE.
pub fn eb_posterior(
    obs: &Observation,
    lambda_hat: &Lambda,
    template: &PriorTemplate,
    cfg: &McmcConfig,
) -> Result<GibbsRun> {
    let spec = template.instantiate(lambda_hat)?;
    run_fixed_lambda(obs, &spec, cfg)
}
