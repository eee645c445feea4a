//! Closed-form rate calculators (minimax, linear minimax, contraction
//! upper bounds and their optimized scale/regularity choices) and
//! Monte-Carlo verifiers for the small-ball machinery.
//!
//! All asymptotic rates are "up to constants"; the calculators return the
//! power-log expressions with constants suppressed, natural logs
//! throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::prior::{HyperParamMode, PriorSpec};
use crate::seq::CoefficientVector;
use crate::util::KahanSum;
use crate::{Error, Result};

/// Where the truth smoothness sits relative to the prior regularity
/// alpha + 1/p.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BelowCritical,
    AboveCritical,
    Critical,
}

/// Classifies beta against alpha + 1/p (exact ties within 1e-12 count as
/// critical).
pub fn classify_regime(alpha: f64, beta: f64, p: f64) -> Regime {
    let threshold = alpha + 1.0 / p;
    if (beta - threshold).abs() < 1e-12 {
        Regime::Critical
    } else if beta < threshold {
        Regime::BelowCritical
    } else {
        Regime::AboveCritical
    }
}

/// Inputs for the contraction-bound calculators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub n: f64,
    pub beta: f64,
    pub q: f64,
    pub p: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Ball-radius constant K in the defining small-ball equation.
    pub k: f64,
}

impl RateQuery {
    pub fn new(n: f64, beta: f64, q: f64, p: f64, alpha: f64, tau: f64, k: f64) -> Result<Self> {
        if !(n >= 2.0) {
            return Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")));
        }
        for (name, v) in [("beta", beta), ("alpha", alpha), ("tau", tau), ("K", k)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if q < 1.0 {
            return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
        }
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [1, 2], got {p}")));
        }
        Ok(Self { n, beta, q, p, alpha, tau, k })
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.alpha, self.beta, self.p)
    }
}

/// The global minimax rate n^(-beta / (1 + 2 beta)).
pub fn minimax_rate(beta: f64, n: f64) -> f64 {
    assert!(beta > 0.0 && n >= 1.0, "minimax_rate needs beta > 0, n >= 1");
    n.powf(-beta / (1.0 + 2.0 * beta))
}

/// The linear-estimator minimax rate n^(-(beta - g/2) / (1 + 2 beta - g))
/// with g = 2/q - 2/max(q, 2); equals the global rate when q >= 2.
pub fn linear_minimax_rate(beta: f64, q: f64, n: f64) -> f64 {
    assert!(q >= 1.0, "linear_minimax_rate needs q >= 1");
    assert!(
        beta > 1.0 / q || (q == 1.0 && beta >= 1.0),
        "linear_minimax_rate needs beta > 1/q (beta >= 1 at q = 1)"
    );
    let g = 2.0 / q - 2.0 / q.max(2.0);
    n.powf(-(beta - g / 2.0) / (1.0 + 2.0 * beta - g))
}

/// Smoothness class of the truth for the upper bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthClass {
    Sobolev,
    BesovQ,
}

/// A two-term contraction-rate upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub value: f64,
    pub regime: Regime,
    /// The additive pieces: centered small-ball term, then the
    /// approximation term.
    pub components: [f64; 2],
}

/// Upper bound on the rate proxy for a given (alpha, tau) prior and truth
/// class; the two additive components are returned separately.
pub fn eps_upper(query: &RateQuery, class: TruthClass) -> Result<RateBound> {
    let RateQuery { n, beta, q, p, alpha, tau, .. } = *query;
    if class == TruthClass::BesovQ {
        if !(p <= q && q < 2.0) {
            return Err(Error::Domain(format!(
                "Besov bound needs p <= q < 2, got p = {p}, q = {q}"
            )));
        }
        if beta < 1.0 / p {
            return Err(Error::Domain(format!(
                "Besov bound needs beta >= 1/p, got beta = {beta}, p = {p}"
            )));
        }
    }
    let regime = query.regime();
    let first = n.powf(-alpha / (1.0 + 2.0 * alpha)) * tau.powf(1.0 / (1.0 + 2.0 * alpha));
    let s = n * tau.powf(p);
    let second = match (regime, class) {
        (Regime::BelowCritical, TruthClass::Sobolev) => {
            s.powf(beta / (beta * (p - 2.0) - alpha * p - 1.0))
        }
        (Regime::BelowCritical, TruthClass::BesovQ) => {
            let num = 2.0 * beta * q + q - 2.0;
            let den = 4.0 * beta * q + 4.0 * q - 4.0 - 2.0 * beta * p * q + 2.0 * alpha * p * q;
            s.powf(-num / den)
        }
        (Regime::AboveCritical, _) => s.powf(-0.5),
        (Regime::Critical, class) => {
            if s <= 1.0 {
                return Err(Error::Domain(format!(
                    "critical-regime log factor needs n tau^p > 1, got {s}"
                )));
            }
            let log_factor = s.sqrt().ln();
            let exponent = match class {
                TruthClass::Sobolev => 0.5 - p / 4.0,
                TruthClass::BesovQ => (q - p) / (2.0 * q),
            };
            s.powf(-0.5) * log_factor.powf(exponent)
        }
    };
    Ok(RateBound { value: first + second, regime, components: [first, second] })
}

/// The scale that balances the two components of the Sobolev upper bound
/// for fixed regularity, and the optimized bound itself.
pub fn optimize_tau(alpha: f64, beta: f64, p: f64, n: f64) -> Result<(f64, RateBound)> {
    let tau0 = match classify_regime(alpha, beta, p) {
        Regime::BelowCritical => n.powf((alpha - beta) / (1.0 + 2.0 * beta)),
        Regime::AboveCritical => n.powf(-1.0 / (2.0 + p * (1.0 + 2.0 * alpha))),
        Regime::Critical => {
            let s_n = n.powf(-beta / (1.0 + 2.0 * beta))
                * n.ln().powf((2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)));
            s_n.powf(1.0 / (beta * p))
                * (1.0 / s_n).ln().powf((2.0 - p) * (beta * p - 1.0) / (2.0 * beta * p * p))
        }
    };
    let query = RateQuery::new(n, beta, 2.0, p, alpha, tau0, 1.0)?;
    Ok((tau0, eps_upper(&query, TruthClass::Sobolev)?))
}

/// With the scale pinned at one, the regularity that optimizes the bound
/// is the truth smoothness itself, and the bound tracks the minimax rate.
pub fn optimize_alpha(beta: f64, p: f64, n: f64) -> Result<(f64, RateBound)> {
    let query = RateQuery::new(n, beta, 2.0, p, beta, 1.0, 1.0)?;
    Ok((beta, eps_upper(&query, TruthClass::Sobolev)?))
}

/// Jointly optimized regularity and scale for a Besov(beta, q) truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovOptimal {
    pub alpha0: f64,
    pub tau0: f64,
    pub rate: f64,
}

/// alpha0 = beta - 1/p, tau0 = n^(-1/(p(1+2 beta))) (log n)^omega with
/// omega = (p - 1/(1+2 beta)) (q-p) / (p^2 q); the attained rate is the
/// minimax rate times (log n)^((q-p)/(p q (1+2 beta))).
pub fn besov_optimal(beta: f64, q: f64, p: f64, n: f64) -> Result<BesovOptimal> {
    if !(1.0..=2.0).contains(&p) || !(p <= q && q < 2.0) {
        return Err(Error::Domain(format!(
            "joint optimization needs 1 <= p <= q < 2, got p = {p}, q = {q}"
        )));
    }
    if beta < 1.0 / p {
        return Err(Error::Domain(format!(
            "joint optimization needs beta >= 1/p, got beta = {beta}"
        )));
    }
    if n < 2.0 {
        return Err(Error::InvalidParameter(format!("n must be >= 2, got {n}")));
    }
    let omega = (p - 1.0 / (1.0 + 2.0 * beta)) * (q - p) / (p * p * q);
    let tau0 = n.powf(-1.0 / (p * (1.0 + 2.0 * beta))) * n.ln().powf(omega);
    let rate = minimax_rate(beta, n) * n.ln().powf((q - p) / (p * q * (1.0 + 2.0 * beta)));
    Ok(BesovOptimal { alpha0: beta - 1.0 / p, tau0, rate })
}

/// The adaptive-procedure rate target for a given hyper-parameter mode
/// (up to constants), for comparison against empirical contraction
/// studies. `window` is the regularity window (lo, hi) for the modes that
/// need one.
pub fn adaptive_rate_target(
    mode: &HyperParamMode,
    beta: f64,
    q: f64,
    p: f64,
    n: f64,
    window: Option<(f64, f64)>,
) -> Result<f64> {
    match *mode {
        HyperParamMode::TauOnly { alpha } => {
            let floor = (1.0 + alpha * p) / (p + 2.0 * alpha * p);
            if beta < floor {
                return Err(Error::Domain(format!(
                    "scale-only adaptation needs beta >= (1 + alpha p)/(p + 2 alpha p) = {floor}, got beta = {beta}"
                )));
            }
            Ok(match classify_regime(alpha, beta, p) {
                Regime::BelowCritical => minimax_rate(beta, n),
                Regime::AboveCritical => {
                    n.powf(-(1.0 + alpha * p) / (2.0 + p * (1.0 + 2.0 * alpha)))
                }
                Regime::Critical => {
                    minimax_rate(beta, n)
                        * n.ln().powf((2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)))
                }
            })
        }
        HyperParamMode::AlphaOnly { .. } => {
            let (lo, hi) = window.ok_or_else(|| {
                Error::InvalidParameter("regularity-only target needs a window".into())
            })?;
            if !(lo < beta && beta < hi) {
                return Err(Error::Domain(format!(
                    "regularity-only adaptation needs beta in ({lo}, {hi}), got {beta}"
                )));
            }
            Ok(minimax_rate(beta, n))
        }
        HyperParamMode::Both => {
            let (lo, hi) = window.ok_or_else(|| {
                Error::InvalidParameter("joint-adaptation target needs a window".into())
            })?;
            if !(lo + 1.0 / p < beta && beta < hi + 1.0 / p) {
                return Err(Error::Domain(format!(
                    "joint adaptation needs beta in ({}, {}), got {beta}",
                    lo + 1.0 / p,
                    hi + 1.0 / p
                )));
            }
            if !(p <= q && q < 2.0) {
                return Err(Error::Domain(format!(
                    "joint adaptation needs p <= q < 2, got p = {p}, q = {q}"
                )));
            }
            Ok(minimax_rate(beta, n) * n.ln().powf((q - p) / (p * q * (1.0 + 2.0 * beta))))
        }
    }
}

/// Monte-Carlo estimate of a prior ball probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEstimate {
    pub log_prob: f64,
    /// Delta-method standard error of the log estimate.
    pub se_log: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Minimum hit count below which an estimate is refused as infeasible.
pub const MIN_HITS: u64 = 20;

/// Draws one prior realization and returns its distance to `center`
/// (zero-padded to the prior truncation).
fn sampled_distance<R: Rng + ?Sized>(spec: &PriorSpec, center: &[f64], rng: &mut R) -> f64 {
    let mut acc = KahanSum::new();
    for l in 1..=spec.trunc() {
        let draw = spec.gamma_at(l) * spec.dist().sample(rng);
        let c = center.get(l - 1).copied().unwrap_or(0.0);
        acc.add((draw - c) * (draw - c));
    }
    acc.value().sqrt()
}

/// A reusable pool of sampled distances |theta - center| under the prior.
pub fn distance_pool<R: Rng + ?Sized>(
    spec: &PriorSpec,
    center: &[f64],
    n_samples: u64,
    rng: &mut R,
) -> Vec<f64> {
    (0..n_samples).map(|_| sampled_distance(spec, center, rng)).collect()
}

/// Estimates log Pi(|theta - center| <= K eps) by direct Monte Carlo.
/// Refuses (rather than fabricating a value) when fewer than [`MIN_HITS`]
/// draws land in the ball.
pub fn small_ball_mc<R: Rng + ?Sized>(
    spec: &PriorSpec,
    eps: f64,
    k: f64,
    center: &CoefficientVector,
    n_samples: u64,
    rng: &mut R,
) -> Result<SmallBallEstimate> {
    if !(eps > 0.0) || !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ball radius parameters must be positive, got eps = {eps}, K = {k}"
        )));
    }
    let radius = k * eps;
    let mut hits = 0u64;
    for _ in 0..n_samples {
        if sampled_distance(spec, center.coeffs(), rng) <= radius {
            hits += 1;
        }
    }
    estimate_from_hits(hits, n_samples)
}

fn estimate_from_hits(hits: u64, samples: u64) -> Result<SmallBallEstimate> {
    if hits < MIN_HITS {
        return Err(Error::InfeasibleProbability { hits, samples });
    }
    let p_hat = hits as f64 / samples as f64;
    Ok(SmallBallEstimate {
        log_prob: p_hat.ln(),
        se_log: ((1.0 - p_hat) / (p_hat * samples as f64)).sqrt(),
        hits,
        samples,
    })
}

/// Result of the Monte-Carlo bisection for the rate proxy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSolve {
    pub eps: f64,
    pub lo: f64,
    pub hi: f64,
    /// Standard error propagated from the binomial noise at the root.
    pub se: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Solves log Pi(|theta - theta0| <= K eps) = -n eps^2 by bisection on a
/// single pool of sampled distances. Sharing the pool across evaluations
/// makes the empirical objective exactly monotone, so the certification
/// below can never trip on Monte-Carlo noise.
pub fn epsilon_n_solve<R: Rng + ?Sized>(
    spec: &PriorSpec,
    theta0: &CoefficientVector,
    k: f64,
    n: f64,
    n_samples: u64,
    rng: &mut R,
) -> Result<EpsilonSolve> {
    if !(n > 0.0) {
        return Err(Error::InvalidParameter(format!("n must be positive, got {n}")));
    }
    let mut pool = distance_pool(spec, theta0.coeffs(), n_samples, rng);
    pool.sort_by(f64::total_cmp);
    let count_within = |eps: f64| -> u64 { pool.partition_point(|&d| d <= k * eps) as u64 };
    let objective = |eps: f64| -> f64 {
        let c = count_within(eps);
        if c == 0 {
            f64::NEG_INFINITY
        } else {
            (c as f64 / n_samples as f64).ln() + n * eps * eps
        }
    };

    // Smallest feasible radius (MIN_HITS hits) and a radius that surely
    // contains everything.
    let mut lo = pool[(MIN_HITS - 1) as usize] / k;
    let mut hi = (pool[pool.len() - 1] / k) * 1.0001;
    if objective(lo) >= 0.0 {
        return Err(Error::InfeasibleProbability { hits: MIN_HITS, samples: n_samples });
    }
    if objective(hi) <= 0.0 {
        return Err(Error::Numeric(
            "upper bracket failed: the ball of all samples still has negative objective".into(),
        ));
    }

    let mut evaluated: Vec<(f64, f64)> = vec![(lo, objective(lo)), (hi, objective(hi))];
    while hi - lo > 0.005 * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        let val = objective(mid);
        evaluated.push((mid, val));
        if val < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Certify monotonicity of the objective on everything we touched.
    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in evaluated.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::Numeric("objective not monotone on evaluated points".into()));
        }
    }

    let eps = 0.5 * (lo + hi);
    let hits = count_within(eps);
    let est = estimate_from_hits(hits, n_samples)?;
    // Slope of the objective: 2 n eps plus the empirical log-probability
    // slope over a +-5% window.
    let h = 0.05 * eps;
    let c_lo = count_within(eps - h).max(1);
    let c_hi = count_within(eps + h).max(1);
    let slope_logp = ((c_hi as f64 / c_lo as f64).ln()) / (2.0 * h);
    let slope = 2.0 * n * eps + slope_logp.max(0.0);
    Ok(EpsilonSolve { eps, lo, hi, se: est.se_log / slope, hits, samples: n_samples })
}

/// Upper bound on the concentration function at theta0, using the
/// truncation family h_m = (theta0 up to m, 0, ...) for the infimum and
/// c_tilde (eps/tau)^(-1/alpha) for the centered term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub value: f64,
    pub infimum_term: f64,
    pub centered_term: f64,
    /// Truncation point achieving the tail constraint.
    pub m: usize,
}

pub fn concentration_upper(
    theta0: &CoefficientVector,
    eps: f64,
    spec: &PriorSpec,
    c_tilde: f64,
) -> Result<ConcentrationBound> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !(c_tilde > 0.0) {
        return Err(Error::InvalidParameter(format!("c_tilde must be positive, got {c_tilde}")));
    }
    let coeffs = theta0.coeffs();
    let l = coeffs.len();
    // Suffix squared sums: tail2[m] = sum_{l > m} theta_l^2.
    let mut tail2 = vec![0.0; l + 1];
    for i in (0..l).rev() {
        tail2[i] = tail2[i + 1] + coeffs[i] * coeffs[i];
    }
    let m = (0..=l)
        .find(|&m| tail2[m].sqrt() <= eps)
        .ok_or_else(|| Error::Domain("truth tail never drops below eps within the truncation".into()))?;
    let p = spec.p();
    let mut z_pow_p = 0.0;
    for (i, &v) in coeffs.iter().take(m).enumerate() {
        let li = (i + 1) as f64;
        z_pow_p += v.abs().powf(p) * li.powf(p / 2.0 + spec.alpha() * p);
    }
    z_pow_p /= spec.tau().powf(p);
    let centered = c_tilde * (eps / spec.tau()).powf(-1.0 / spec.alpha());
    Ok(ConcentrationBound {
        value: z_pow_p + centered,
        infimum_term: z_pow_p,
        centered_term: centered,
        m,
    })
}

/// One-sample Kolmogorov-Smirnov statistic; sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Ordinary least squares slope (and intercept) of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
