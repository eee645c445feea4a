//! Scaled product p-exponential priors on sequences, truncated
//! hyper-priors for the scale and regularity hyper-parameters, and the
//! reparametrization maps used by the samplers.
//!
//! A prior draw is theta_l = gamma_l xi_l with gamma_l = tau l^(-1/2-alpha)
//! and xi_l iid p-exponential. The whitening map T carries a standard
//! Gaussian sequence to such a draw coordinate-wise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pexp::PExp;
use crate::seq::{Basis, CoefficientVector};
use crate::special::{gamma_p, inv_gamma_p, ln_gamma, norm_cdf, norm_quantile};
use crate::{Error, Result};

/// A fully specified prior: shape, regularity, scale, truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PriorSpecWire", into = "PriorSpecWire")]
pub struct PriorSpec {
    p: f64,
    alpha: f64,
    tau: f64,
    trunc: usize,
    dist: PExp,
}

/// JSON form of [`PriorSpec`]: the keys p, alpha, tau plus the truncation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PriorSpecWire {
    p: f64,
    alpha: f64,
    tau: f64,
    trunc: usize,
}

impl From<PriorSpec> for PriorSpecWire {
    fn from(spec: PriorSpec) -> Self {
        Self { p: spec.p, alpha: spec.alpha, tau: spec.tau, trunc: spec.trunc }
    }
}

impl TryFrom<PriorSpecWire> for PriorSpec {
    type Error = Error;

    fn try_from(wire: PriorSpecWire) -> Result<Self> {
        PriorSpec::new(wire.p, wire.alpha, wire.tau, wire.trunc)
    }
}

impl PriorSpec {
    pub fn new(p: f64, alpha: f64, tau: f64, trunc: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if trunc == 0 {
            return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
        }
        Ok(Self { p, alpha, tau, trunc, dist: PExp::new(p)? })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn dist(&self) -> &PExp {
        &self.dist
    }

    /// gamma_l = tau l^(-1/2-alpha), 1-based.
    pub fn gamma_at(&self, l: usize) -> f64 {
        self.tau * (l as f64).powf(-0.5 - self.alpha)
    }

    pub fn gammas(&self) -> Vec<f64> {
        (1..=self.trunc).map(|l| self.gamma_at(l)).collect()
    }

    pub fn lambda(&self) -> Lambda {
        Lambda { alpha: self.alpha, tau: self.tau }
    }
}

/// Shape and truncation with the hyper-parameter left open.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorTemplate {
    pub p: f64,
    pub trunc: usize,
}

impl PriorTemplate {
    pub fn instantiate(&self, lambda: &Lambda) -> Result<PriorSpec> {
        PriorSpec::new(self.p, lambda.alpha, lambda.tau, self.trunc)
    }
}

/// A hyper-parameter point; which coordinates are free is decided by the
/// [`HyperParamMode`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub alpha: f64,
    pub tau: f64,
}

/// Which of (alpha, tau) is treated as the hyper-parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum HyperParamMode {
    /// alpha fixed, lambda = tau.
    TauOnly { alpha: f64 },
    /// tau fixed, lambda = alpha.
    AlphaOnly { tau: f64 },
    /// lambda = (alpha, tau) jointly.
    Both,
}

impl HyperParamMode {
    pub fn tau_free(&self) -> bool {
        matches!(self, HyperParamMode::TauOnly { .. } | HyperParamMode::Both)
    }

    pub fn alpha_free(&self) -> bool {
        matches!(self, HyperParamMode::AlphaOnly { .. } | HyperParamMode::Both)
    }

    /// Fills the fixed coordinates around the free values.
    pub fn lambda_from(&self, free_alpha: f64, free_tau: f64) -> Lambda {
        match *self {
            HyperParamMode::TauOnly { alpha } => Lambda { alpha, tau: free_tau },
            HyperParamMode::AlphaOnly { tau } => Lambda { alpha: free_alpha, tau },
            HyperParamMode::Both => Lambda { alpha: free_alpha, tau: free_tau },
        }
    }
}

/// Draws theta_l = gamma_l xi_l, xi_l iid p-exponential.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> CoefficientVector {
    let coeffs = (1..=spec.trunc)
        .map(|l| spec.gamma_at(l) * spec.dist.sample(rng))
        .collect();
    CoefficientVector::new(coeffs, Basis::AbstractSequence).expect("scaled draws are finite")
}

/// Joint log-density sum_l [log f_p(theta_l / gamma_l) - log gamma_l].
pub fn prior_log_density(spec: &PriorSpec, theta: &CoefficientVector) -> Result<f64> {
    if theta.trunc_level() != spec.trunc {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: prior truncation {} vs vector length {}",
            spec.trunc,
            theta.trunc_level()
        )));
    }
    let mut total = 0.0;
    for (i, &t) in theta.coeffs().iter().enumerate() {
        let g = spec.gamma_at(i + 1);
        total += spec.dist.log_density(t / g) - g.ln();
    }
    Ok(total)
}

/// F_p^{-1}(Phi(xi)) composed through the lower tail so both factors stay
/// fully conditioned for large |xi|.
fn pexp_quantile_of_normal(dist: &PExp, xi: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let u_tail = norm_cdf(-xi.abs());
    let x_tail = dist
        .inv_cdf(u_tail)
        .expect("tail cdf value is strictly inside (0, 1)");
    if xi > 0.0 {
        -x_tail
    } else {
        x_tail
    }
}

/// Phi^{-1}(F_p(x)), tail-safe inverse of the above.
fn normal_quantile_of_pexp(dist: &PExp, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let u_tail = dist.cdf(-x.abs()).max(1e-300);
    let xi_tail = norm_quantile(u_tail).expect("tail cdf value is strictly inside (0, 1)");
    if x > 0.0 {
        -xi_tail
    } else {
        xi_tail
    }
}

pub(crate) fn whiten_into(spec: &PriorSpec, xi: &[f64], out: &mut [f64]) {
    debug_assert_eq!(xi.len(), out.len());
    if spec.p == 2.0 {
        for (l, (o, &z)) in out.iter_mut().zip(xi).enumerate() {
            *o = spec.gamma_at(l + 1) * z;
        }
    } else {
        for (l, (o, &z)) in out.iter_mut().zip(xi).enumerate() {
            *o = spec.gamma_at(l + 1) * pexp_quantile_of_normal(&spec.dist, z);
        }
    }
}

/// T(xi, lambda)_l = gamma_l F_p^{-1}(Phi(xi_l)). Standard Gaussian input
/// maps to a prior draw; at p = 2 this is exactly gamma_l xi_l.
pub fn whiten_transform(xi: &CoefficientVector, spec: &PriorSpec) -> Result<CoefficientVector> {
    if xi.trunc_level() != spec.trunc {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: prior truncation {} vs vector length {}",
            spec.trunc,
            xi.trunc_level()
        )));
    }
    let mut out = vec![0.0; xi.trunc_level()];
    whiten_into(spec, xi.coeffs(), &mut out);
    CoefficientVector::new(out, Basis::AbstractSequence)
}

/// Recovers xi from theta = T(xi, lambda) where defined.
pub fn unwhiten_transform(theta: &CoefficientVector, spec: &PriorSpec) -> Result<CoefficientVector> {
    if theta.trunc_level() != spec.trunc {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: prior truncation {} vs vector length {}",
            spec.trunc,
            theta.trunc_level()
        )));
    }
    let out = theta
        .coeffs()
        .iter()
        .enumerate()
        .map(|(l, &t)| {
            let scaled = t / spec.gamma_at(l + 1);
            if spec.p == 2.0 {
                scaled
            } else {
                normal_quantile_of_pexp(&spec.dist, scaled)
            }
        })
        .collect();
    CoefficientVector::new(out, Basis::AbstractSequence)
}

/// Coordinate map (tau'/tau) j^(alpha - alpha') theta_j carrying a draw of
/// the (alpha, tau) prior to one of the (alpha', tau') prior.
pub fn rescale_noncentered(
    theta: &CoefficientVector,
    tau: f64,
    tau_new: f64,
    alpha: f64,
    alpha_new: f64,
) -> Result<CoefficientVector> {
    if !(tau > 0.0) || !(tau_new > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scales must be positive, got tau = {tau}, tau' = {tau_new}"
        )));
    }
    let ratio = tau_new / tau;
    let coeffs = theta
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &v)| ratio * ((i + 1) as f64).powf(alpha - alpha_new) * v)
        .collect();
    CoefficientVector::new(coeffs, theta.basis())
}

/// Left endpoint of the tau hyper-prior support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum TauLeftRule {
    Fixed { value: f64 },
    /// n^(-1/(2 + p + 2 alpha p)); at p = 1 this is n^(-1/(3 + 2 alpha)).
    Auto { n: f64, p: f64 },
}

impl TauLeftRule {
    pub fn left(&self, alpha: f64) -> f64 {
        match *self {
            TauLeftRule::Fixed { value } => value,
            TauLeftRule::Auto { n, p } => n.powf(-1.0 / (2.0 + p + 2.0 * alpha * p)),
        }
    }
}

/// Inverse gamma with density proportional to tau^(-a-1) e^(-b/tau),
/// left-truncated at `left`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvGammaHyper {
    pub a: f64,
    pub b: f64,
    pub left: TauLeftRule,
}

impl InvGammaHyper {
    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse gamma needs a, b > 0; got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Normalized log-density at tau given the regularity (the left
    /// endpoint may depend on it); -inf outside the support.
    pub fn log_density(&self, tau: f64, alpha: f64) -> f64 {
        let left = self.left.left(alpha);
        if tau < left || !tau.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mass = gamma_p(self.a, self.b / left).expect("valid incomplete gamma arguments");
        -(self.a + 1.0) * tau.ln() - self.b / tau + self.a * self.b.ln()
            - ln_gamma(self.a)
            - mass.ln()
    }

    /// Exact inversion restricted to the truncated support.
    pub fn sample<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>(), alpha)
    }

    pub fn quantile(&self, u: f64, alpha: f64) -> f64 {
        let left = self.left.left(alpha);
        let mass = gamma_p(self.a, self.b / left).expect("valid incomplete gamma arguments");
        let target = ((1.0 - u) * mass).clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
        self.b / inv_gamma_p(self.a, target).expect("target inside (0, 1)")
    }
}

/// Exponential with the given rate truncated to [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpHyper {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ExpHyper {
    fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) || !(self.lo > 0.0) || !(self.hi > self.lo) {
            return Err(Error::InvalidParameter(format!(
                "truncated exponential needs rate > 0 and 0 < lo < hi; got {self:?}"
            )));
        }
        Ok(())
    }

    fn log_mass(&self) -> f64 {
        // ln(e^(-r lo) - e^(-r hi)) = -r lo + ln(1 - e^(-r (hi - lo))).
        let r = self.rate;
        -r * self.lo + (-(-(r * (self.hi - self.lo))).exp()).ln_1p()
    }

    pub fn log_density(&self, alpha: f64) -> f64 {
        if alpha < self.lo || alpha > self.hi || !alpha.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.rate.ln() - self.rate * alpha - self.log_mass()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let r = self.rate;
        // F^{-1}(u) = lo - ln(1 - u (1 - e^(-r (hi - lo)))) / r
        let span = 1.0 - (-(r * (self.hi - self.lo))).exp();
        self.lo - (1.0 - u * span).ln() / r
    }

    /// Analytic mean of the truncated exponential.
    pub fn mean(&self) -> f64 {
        let r = self.rate;
        let num = (self.lo + 1.0 / r) * (-r * self.lo).exp()
            - (self.hi + 1.0 / r) * (-r * self.hi).exp();
        let den = (-r * self.lo).exp() - (-r * self.hi).exp();
        num / den
    }
}

/// Hyper-prior over the free hyper-parameter coordinates.
///
/// The JSON form keeps distribution parameters and truncation separate:
/// `{"kind": ..., "params": {...}, "trunc": {...}}`, with the product
/// variant nesting one such object per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperPriorWire", into = "HyperPriorWire")]
pub enum HyperPriorSpec {
    /// On tau (scale selection).
    TruncInvGamma(InvGammaHyper),
    /// On alpha (regularity selection).
    TruncExp(ExpHyper),
    /// Joint: alpha from the truncated exponential, tau | alpha from the
    /// left-truncated inverse gamma whose endpoint may depend on alpha.
    Product { alpha: ExpHyper, tau: InvGammaHyper },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum HyperPriorWire {
    TruncInvGamma { params: IgParamsWire, trunc: IgTruncWire },
    TruncExp { params: ExpParamsWire, trunc: ExpTruncWire },
    Product { params: ProductParamsWire },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct IgParamsWire {
    a: f64,
    b: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct IgTruncWire {
    left: TauLeftRule,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct ExpParamsWire {
    rate: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct ExpTruncWire {
    lo: f64,
    hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ProductParamsWire {
    alpha: Box<HyperPriorWire>,
    tau: Box<HyperPriorWire>,
}

fn ig_to_wire(ig: InvGammaHyper) -> HyperPriorWire {
    HyperPriorWire::TruncInvGamma {
        params: IgParamsWire { a: ig.a, b: ig.b },
        trunc: IgTruncWire { left: ig.left },
    }
}

fn ex_to_wire(ex: ExpHyper) -> HyperPriorWire {
    HyperPriorWire::TruncExp {
        params: ExpParamsWire { rate: ex.rate },
        trunc: ExpTruncWire { lo: ex.lo, hi: ex.hi },
    }
}

impl From<HyperPriorSpec> for HyperPriorWire {
    fn from(spec: HyperPriorSpec) -> Self {
        match spec {
            HyperPriorSpec::TruncInvGamma(ig) => ig_to_wire(ig),
            HyperPriorSpec::TruncExp(ex) => ex_to_wire(ex),
            HyperPriorSpec::Product { alpha, tau } => HyperPriorWire::Product {
                params: ProductParamsWire {
                    alpha: Box::new(ex_to_wire(alpha)),
                    tau: Box::new(ig_to_wire(tau)),
                },
            },
        }
    }
}

impl TryFrom<HyperPriorWire> for HyperPriorSpec {
    type Error = Error;

    fn try_from(wire: HyperPriorWire) -> Result<Self> {
        match wire {
            HyperPriorWire::TruncInvGamma { params, trunc } => {
                Ok(HyperPriorSpec::TruncInvGamma(InvGammaHyper {
                    a: params.a,
                    b: params.b,
                    left: trunc.left,
                }))
            }
            HyperPriorWire::TruncExp { params, trunc } => Ok(HyperPriorSpec::TruncExp(ExpHyper {
                rate: params.rate,
                lo: trunc.lo,
                hi: trunc.hi,
            })),
            HyperPriorWire::Product { params } => {
                let alpha = match HyperPriorSpec::try_from(*params.alpha)? {
                    HyperPriorSpec::TruncExp(ex) => ex,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "product hyper-prior needs a truncated exponential on alpha, got {other:?}"
                        )))
                    }
                };
                let tau = match HyperPriorSpec::try_from(*params.tau)? {
                    HyperPriorSpec::TruncInvGamma(ig) => ig,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "product hyper-prior needs a truncated inverse gamma on tau, got {other:?}"
                        )))
                    }
                };
                Ok(HyperPriorSpec::Product { alpha, tau })
            }
        }
    }
}

impl HyperPriorSpec {
    pub fn validate(&self, mode: &HyperParamMode) -> Result<()> {
        match (self, mode) {
            (HyperPriorSpec::TruncInvGamma(ig), HyperParamMode::TauOnly { .. }) => ig.validate(),
            (HyperPriorSpec::TruncExp(ex), HyperParamMode::AlphaOnly { .. }) => ex.validate(),
            (HyperPriorSpec::Product { alpha, tau }, HyperParamMode::Both) => {
                alpha.validate()?;
                tau.validate()
            }
            _ => Err(Error::InvalidParameter(format!(
                "hyper-prior {self:?} does not match mode {mode:?}"
            ))),
        }
    }

    /// Log-density of the free coordinates of lambda; -inf outside the
    /// support, never a panic.
    pub fn log_density(&self, lambda: &Lambda) -> f64 {
        match self {
            HyperPriorSpec::TruncInvGamma(ig) => ig.log_density(lambda.tau, lambda.alpha),
            HyperPriorSpec::TruncExp(ex) => ex.log_density(lambda.alpha),
            HyperPriorSpec::Product { alpha, tau } => {
                alpha.log_density(lambda.alpha) + tau.log_density(lambda.tau, lambda.alpha)
            }
        }
    }

    /// Draws the free coordinates, completing the fixed ones from `mode`.
    pub fn sample<R: Rng + ?Sized>(&self, mode: &HyperParamMode, rng: &mut R) -> Result<Lambda> {
        self.validate(mode)?;
        Ok(match (self, mode) {
            (HyperPriorSpec::TruncInvGamma(ig), HyperParamMode::TauOnly { alpha }) => Lambda {
                alpha: *alpha,
                tau: ig.sample(*alpha, rng),
            },
            (HyperPriorSpec::TruncExp(ex), HyperParamMode::AlphaOnly { tau }) => Lambda {
                alpha: ex.sample(rng),
                tau: *tau,
            },
            (HyperPriorSpec::Product { alpha, tau }, HyperParamMode::Both) => {
                let a = alpha.sample(rng);
                Lambda { alpha: a, tau: tau.sample(a, rng) }
            }
            _ => unreachable!("validated above"),
        })
    }

    /// Component-wise median, used to initialize chains.
    pub fn median(&self, mode: &HyperParamMode) -> Result<Lambda> {
        self.validate(mode)?;
        Ok(match (self, mode) {
            (HyperPriorSpec::TruncInvGamma(ig), HyperParamMode::TauOnly { alpha }) => Lambda {
                alpha: *alpha,
                tau: ig.quantile(0.5, *alpha),
            },
            (HyperPriorSpec::TruncExp(ex), HyperParamMode::AlphaOnly { tau }) => Lambda {
                alpha: ex.quantile(0.5),
                tau: *tau,
            },
            (HyperPriorSpec::Product { alpha, tau }, HyperParamMode::Both) => {
                let a = alpha.quantile(0.5);
                Lambda { alpha: a, tau: tau.quantile(0.5, a) }
            }
            _ => unreachable!("validated above"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::ks_statistic;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_sequence_is_positive_decreasing() {
        let spec = PriorSpec::new(1.0, 1.75, 0.8, 50).unwrap();
        let g = spec.gammas();
        for w in g.windows(2) {
            assert!(w[0] > w[1] && w[1] > 0.0);
        }
        assert_abs_diff_eq!(g[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn prior_coordinate_variances_match_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        // Gaussian: var = gamma_l^2.
        let spec = PriorSpec::new(2.0, 1.0, 1.3, 4).unwrap();
        let mut ss = [0.0f64; 4];
        for _ in 0..n {
            let draw = sample_prior(&spec, &mut rng);
            for (s, v) in ss.iter_mut().zip(draw.coeffs()) {
                *s += v * v;
            }
        }
        for (l, s) in ss.iter().enumerate() {
            let var = s / n as f64;
            let expect = spec.gamma_at(l + 1).powi(2);
            assert!((var / expect - 1.0).abs() < 0.05, "l = {l}: {var} vs {expect}");
        }
        // Laplace: var = 2 gamma_l^2.
        let spec = PriorSpec::new(1.0, 0.5, 0.7, 3).unwrap();
        let mut ss = [0.0f64; 3];
        for _ in 0..n {
            let draw = sample_prior(&spec, &mut rng);
            for (s, v) in ss.iter_mut().zip(draw.coeffs()) {
                *s += v * v;
            }
        }
        for (l, s) in ss.iter().enumerate() {
            let var = s / n as f64;
            let expect = 2.0 * spec.gamma_at(l + 1).powi(2);
            assert!((var / expect - 1.0).abs() < 0.05, "l = {l}: {var} vs {expect}");
        }
    }

    #[test]
    fn tiny_tau_collapses_draws() {
        let spec = PriorSpec::new(1.5, 1.0, 1e-14, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = sample_prior(&spec, &mut rng);
        assert!(draw.coeffs().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prior_log_density_reference_values() {
        // L = 1, p = 1, tau = 1, alpha = 1/2: gamma_1 = 1, Laplace at 0.
        let spec = PriorSpec::new(1.0, 0.5, 1.0, 1).unwrap();
        let theta = CoefficientVector::new(vec![0.0], Basis::AbstractSequence).unwrap();
        assert_abs_diff_eq!(
            prior_log_density(&spec, &theta).unwrap(),
            -(2.0_f64).ln(),
            epsilon = 1e-13
        );

        // p = 2, L = 2, alpha = 1/2, tau = 1, theta = (1, 0):
        // log phi(1) + log phi(0) - log gamma_2, gamma_2 = 1/2.
        let spec = PriorSpec::new(2.0, 0.5, 1.0, 2).unwrap();
        let theta = CoefficientVector::new(vec![1.0, 0.0], Basis::AbstractSequence).unwrap();
        let expect = -0.5 - (2.0 * std::f64::consts::PI).ln() + (2.0_f64).ln();
        assert_abs_diff_eq!(prior_log_density(&spec, &theta).unwrap(), expect, epsilon = 1e-13);
    }

    #[test]
    fn prior_log_density_scaling_identity() {
        let p = 1.5;
        let alpha = 0.8;
        let tau = 2.5;
        let trunc = 12;
        let spec = PriorSpec::new(p, alpha, tau, trunc).unwrap();
        let unit = PriorSpec::new(p, alpha, 1.0, trunc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = sample_prior(&spec, &mut rng);
        let scaled = CoefficientVector::new(
            theta.coeffs().iter().map(|v| v / tau).collect(),
            Basis::AbstractSequence,
        )
        .unwrap();
        let lhs = prior_log_density(&spec, &theta).unwrap();
        let rhs = prior_log_density(&unit, &scaled).unwrap() - trunc as f64 * tau.ln();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn whiten_is_identity_map_for_gaussian_shape() {
        let spec = PriorSpec::new(2.0, 1.0, 2.0, 6).unwrap();
        let xi = CoefficientVector::new(
            vec![0.3, -1.7, 0.0, 2.2, -0.4, 3.9],
            Basis::AbstractSequence,
        )
        .unwrap();
        let theta = whiten_transform(&xi, &spec).unwrap();
        for (l, (&t, &z)) in theta.coeffs().iter().zip(xi.coeffs()).enumerate() {
            assert_eq!(t, spec.gamma_at(l + 1) * z);
        }
    }

    #[test]
    fn whiten_maps_median_to_median() {
        let spec = PriorSpec::new(1.0, 1.0, 1.0, 3).unwrap();
        let xi = CoefficientVector::new(vec![0.0, 0.0, 0.0], Basis::AbstractSequence).unwrap();
        let theta = whiten_transform(&xi, &spec).unwrap();
        assert!(theta.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whiten_roundtrip_to_1e8() {
        for &p in &[1.0, 1.25, 1.5, 1.75, 2.0] {
            let spec = PriorSpec::new(p, 0.9, 1.7, 25).unwrap();
            let xi_vals: Vec<f64> = (0..25).map(|i| -6.0 + 12.0 * i as f64 / 24.0).collect();
            let xi = CoefficientVector::new(xi_vals, Basis::AbstractSequence).unwrap();
            let theta = whiten_transform(&xi, &spec).unwrap();
            let back = unwhiten_transform(&theta, &spec).unwrap();
            for (a, b) in xi.coeffs().iter().zip(back.coeffs()) {
                assert!((a - b).abs() < 1e-8, "p = {p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn whitened_marginal_matches_pexp_distribution() {
        let spec = PriorSpec::new(1.5, 1.0, 1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let xi = CoefficientVector::new(
                    vec![rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)],
                    Basis::AbstractSequence,
                )
                .unwrap();
                whiten_transform(&xi, &spec).unwrap().coeffs()[0] / spec.gamma_at(1)
            })
            .collect();
        let stat = ks_statistic(&mut draws, |x| spec.dist().cdf(x));
        let critical = 1.627_62 / (n as f64).sqrt();
        assert!(stat < critical, "KS {stat} vs {critical}");
    }

    #[test]
    fn rescale_reference_values() {
        let theta =
            CoefficientVector::new(vec![1.0, 1.0, 1.0], Basis::AbstractSequence).unwrap();
        // Identity.
        let same = rescale_noncentered(&theta, 1.3, 1.3, 0.7, 0.7).unwrap();
        assert_eq!(same, theta);
        // Pure scaling.
        let doubled = rescale_noncentered(&theta, 1.0, 2.0, 0.7, 0.7).unwrap();
        assert_eq!(doubled.coeffs(), &[2.0, 2.0, 2.0]);
        // Regularity shift by one: weights j^-1.
        let shifted = rescale_noncentered(&theta, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(shifted.coeffs()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted.coeffs()[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(shifted.coeffs()[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rescale_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = PriorSpec::new(1.0, 1.2, 0.9, 16).unwrap();
        let theta = sample_prior(&spec, &mut rng);
        let there = rescale_noncentered(&theta, 0.9, 3.7, 1.2, 0.4).unwrap();
        let back = rescale_noncentered(&there, 3.7, 0.9, 0.4, 1.2).unwrap();
        for (a, b) in theta.coeffs().iter().zip(back.coeffs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn rescale_carries_prior_to_prior() {
        // A draw of the (alpha, tau) prior mapped by the coordinate map has
        // the marginal scale of the (alpha', tau') prior.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let from = PriorSpec::new(2.0, 1.0, 1.0, 6).unwrap();
        let to = PriorSpec::new(2.0, 1.4, 2.0, 6).unwrap();
        let n = 50_000;
        let mut ss = [0.0f64; 6];
        for _ in 0..n {
            let draw = sample_prior(&from, &mut rng);
            let mapped = rescale_noncentered(&draw, 1.0, 2.0, 1.0, 1.4).unwrap();
            for (s, v) in ss.iter_mut().zip(mapped.coeffs()) {
                *s += v * v;
            }
        }
        for (l, s) in ss.iter().enumerate() {
            let var = s / n as f64;
            let expect = to.gamma_at(l + 1).powi(2);
            assert!((var / expect - 1.0).abs() < 0.08, "l = {l}: {var} vs {expect}");
        }
    }

    #[test]
    fn trunc_exp_normalization_and_mean() {
        let ex = ExpHyper { rate: 1.0, lo: 0.5, hi: 100.0 };
        // Density e^-a / (e^-0.5 - e^-100) on [0.5, 100].
        let expect = (-1.2_f64).exp() / ((-0.5_f64).exp() - (-100.0_f64).exp());
        assert_abs_diff_eq!(ex.log_density(1.2).exp(), expect, epsilon = 1e-12);
        assert_eq!(ex.log_density(0.4), f64::NEG_INFINITY);
        assert_eq!(ex.log_density(101.0), f64::NEG_INFINITY);

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| ex.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(
            (mean / ex.mean() - 1.0).abs() < 0.01,
            "empirical {mean} vs analytic {}",
            ex.mean()
        );
    }

    #[test]
    fn inv_gamma_left_bound_and_tail() {
        // n = 200, alpha = 1.75, p = 1: left = 200^(-1/6.5) = 0.442585...
        let rule = TauLeftRule::Auto { n: 200.0, p: 1.0 };
        let left = rule.left(1.75);
        assert_abs_diff_eq!(left, 200.0_f64.powf(-1.0 / 6.5), epsilon = 1e-15);
        assert_abs_diff_eq!(left, 0.442_583_7, epsilon = 1e-6);

        let ig = InvGammaHyper { a: 1.0, b: 1.0, left: rule };
        assert_eq!(ig.log_density(0.9 * left, 1.75), f64::NEG_INFINITY);
        // Density vanishes at infinity.
        assert!(ig.log_density(1e6, 1.75) < -20.0);
        // Normalization: integrate numerically over the support; the
        // polynomial tail beyond 2000 carries about 5e-4 of mass.
        let mut total = 0.0;
        let h = 0.001;
        let mut t = left;
        while t < 2000.0 {
            total += ig.log_density(t + 0.5 * h, 1.75).exp() * h;
            t += h;
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 2e-3);
    }

    #[test]
    fn inv_gamma_sampler_matches_cdf() {
        let ig = InvGammaHyper { a: 1.0, b: 1.0, left: TauLeftRule::Fixed { value: 0.4 } };
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| ig.sample(0.0, &mut rng)).collect();
        assert!(draws.iter().all(|&t| t >= 0.4));
        // CDF via the same normalization: F(x) = 1 - P(a, b/x)/P(a, b/left).
        let mass = gamma_p(1.0, 1.0 / 0.4).unwrap();
        let stat = ks_statistic(&mut draws, |x| {
            if x < 0.4 {
                0.0
            } else {
                1.0 - gamma_p(1.0, 1.0 / x).unwrap() / mass
            }
        });
        let critical = 1.627_62 / (n as f64).sqrt();
        assert!(stat < critical, "KS {stat} vs {critical}");
    }

    #[test]
    fn product_hyper_prior_composes() {
        let hyper = HyperPriorSpec::Product {
            alpha: ExpHyper { rate: 1.0, lo: 0.5, hi: 100.0 },
            tau: InvGammaHyper { a: 1.0, b: 1.0, left: TauLeftRule::Auto { n: 100.0, p: 1.0 } },
        };
        hyper.validate(&HyperParamMode::Both).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let lam = hyper.sample(&HyperParamMode::Both, &mut rng).unwrap();
            assert!(lam.alpha >= 0.5 && lam.alpha <= 100.0);
            let left = TauLeftRule::Auto { n: 100.0, p: 1.0 }.left(lam.alpha);
            assert!(lam.tau >= left);
            assert!(hyper.log_density(&lam).is_finite());
        }
        // Mode mismatch is rejected.
        assert!(hyper.validate(&HyperParamMode::TauOnly { alpha: 1.0 }).is_err());
    }

    #[test]
    fn hyper_prior_serde_uses_kind_params_trunc_keys() {
        let hyper = HyperPriorSpec::TruncInvGamma(InvGammaHyper {
            a: 1.0,
            b: 1.0,
            left: TauLeftRule::Auto { n: 200.0, p: 1.0 },
        });
        let json = serde_json::to_string(&hyper).unwrap();
        assert!(json.contains("\"kind\":\"trunc_inv_gamma\""));
        assert!(json.contains("\"params\":{\"a\":1.0,\"b\":1.0}"));
        assert!(json.contains("\"trunc\":{\"left\""));
        let back: HyperPriorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(hyper, back);

        let joint = HyperPriorSpec::Product {
            alpha: ExpHyper { rate: 1.0, lo: 0.5, hi: 100.0 },
            tau: InvGammaHyper { a: 1.0, b: 1.0, left: TauLeftRule::Fixed { value: 0.3 } },
        };
        let json = serde_json::to_string(&joint).unwrap();
        assert!(json.contains("\"kind\":\"product\""));
        assert!(json.contains("\"trunc\":{\"lo\":0.5,\"hi\":100.0}"));
        let back: HyperPriorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(joint, back);

        // A product with the component kinds swapped is rejected.
        let bad = r#"{"kind":"product","params":{
            "alpha":{"kind":"trunc_inv_gamma","params":{"a":1.0,"b":1.0},
                     "trunc":{"left":{"form":"fixed","value":0.3}}},
            "tau":{"kind":"trunc_inv_gamma","params":{"a":1.0,"b":1.0},
                   "trunc":{"left":{"form":"fixed","value":0.3}}}}}"#;
        assert!(serde_json::from_str::<HyperPriorSpec>(bad).is_err());
    }

    #[test]
    fn prior_spec_serde_round_trip() {
        let spec = PriorSpec::new(1.5, 1.25, 0.7, 40).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        for key in ["\"p\":1.5", "\"alpha\":1.25", "\"tau\":0.7", "\"trunc\":40"] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back: PriorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.p(), 1.5);
        assert_eq!(back.alpha(), 1.25);
        assert_eq!(back.gamma_at(1), spec.gamma_at(1));
        // Validation applies on the way in.
        assert!(serde_json::from_str::<PriorSpec>(
            "{\"p\":2.5,\"alpha\":1.0,\"tau\":1.0,\"trunc\":4}"
        )
        .is_err());
    }
}
