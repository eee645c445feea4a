//! The univariate p-exponential (generalized Gaussian) family with
//! density f_p(x) = exp(-|x|^p / p) / c_p, c_p = 2 Gamma(1/p) p^(1/p - 1),
//! for shape p in [1, 2]. p = 1 is Laplace, p = 2 standard normal.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::special::{gamma_p, gamma_q, inv_gamma_p, inv_gamma_q, ln_gamma, norm_cdf, norm_quantile};
use crate::{Error, Result};

/// Largest cdf value strictly below 1 that survives the internal clamp.
const U_HI: f64 = 1.0 - f64::EPSILON / 2.0;
const U_LO: f64 = 1e-16;

/// A p-exponential distribution with fixed shape.
#[derive(Clone, Copy, Debug)]
pub struct PExp {
    p: f64,
    ln_norm: f64,
    gamma_sampler: Option<Gamma<f64>>,
}

impl PExp {
    /// Builds the distribution; rejects shapes outside [1, 2].
    pub fn new(p: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "p-exponential shape must lie in [1, 2], got {p}"
            )));
        }
        let ln_norm = (2.0_f64).ln() + ln_gamma(1.0 / p) + (1.0 / p - 1.0) * p.ln();
        let gamma_sampler = if p == 1.0 || p == 2.0 {
            None
        } else {
            Some(Gamma::new(1.0 / p, 1.0).expect("shape 1/p is positive"))
        };
        Ok(Self { p, ln_norm, gamma_sampler })
    }

    pub fn shape(&self) -> f64 {
        self.p
    }

    /// ln c_p.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }

    /// Log-density -|x|^p / p - ln c_p.
    pub fn log_density(&self, x: f64) -> f64 {
        -x.abs().powf(self.p) / self.p - self.ln_norm
    }

    /// CDF; closed forms for p = 1 and p = 2, incomplete gamma otherwise.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.p == 1.0 {
            if x >= 0.0 {
                1.0 - 0.5 * (-x).exp()
            } else {
                0.5 * x.exp()
            }
        } else if self.p == 2.0 {
            norm_cdf(x)
        } else {
            self.cdf_via_gamma(x)
        }
    }

    /// CDF through the incomplete gamma for every shape. The dispatching
    /// `cdf` must agree with this path; tests pin the agreement.
    pub fn cdf_via_gamma(&self, x: f64) -> f64 {
        let w = x.abs().powf(self.p) / self.p;
        if x >= 0.0 {
            0.5 + 0.5 * gamma_p(1.0 / self.p, w).expect("gamma_p in-range")
        } else {
            0.5 * gamma_q(1.0 / self.p, w).expect("gamma_q in-range")
        }
    }

    /// Quantile function. Arguments beyond [1e-16, 1 - 2^-53] are clamped
    /// with a logged warning so downstream transforms never see infinities;
    /// exact 0 and 1 are domain errors.
    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0 < u && u < 1.0) {
            return Err(Error::Domain(format!(
                "inv_cdf needs u strictly inside (0, 1), got {u}"
            )));
        }
        let u = if !(U_LO..=U_HI).contains(&u) {
            log::warn!("inv_cdf argument {u:e} saturates double precision; clamping");
            u.clamp(U_LO, U_HI)
        } else {
            u
        };
        if self.p == 1.0 {
            Ok(if u >= 0.5 { -(2.0 * (1.0 - u)).ln() } else { (2.0 * u).ln() })
        } else if self.p == 2.0 {
            norm_quantile(u)
        } else {
            self.inv_cdf_via_gamma(u)
        }
    }

    fn inv_cdf_via_gamma(&self, u: f64) -> Result<f64> {
        let a = 1.0 / self.p;
        if u >= 0.5 {
            Ok((self.p * inv_gamma_p(a, 2.0 * u - 1.0)?).powf(1.0 / self.p))
        } else {
            Ok(-(self.p * inv_gamma_q(a, 2.0 * u)?).powf(1.0 / self.p))
        }
    }

    /// Draws X = S (p G)^(1/p) with G ~ Gamma(1/p, 1) and S a random sign.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.p == 2.0 {
            return rng.sample(StandardNormal);
        }
        let magnitude = if self.p == 1.0 {
            rng.sample::<f64, _>(Exp1)
        } else {
            let g: f64 = self.gamma_sampler.expect("present for interior p").sample(rng);
            (self.p * g).powf(1.0 / self.p)
        };
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    /// E|X|^k = p^(k/p) Gamma((k+1)/p) / Gamma(1/p).
    pub fn abs_moment(&self, k: u32) -> f64 {
        let k = f64::from(k);
        self.p.powf(k / self.p)
            * (ln_gamma((k + 1.0) / self.p) - ln_gamma(1.0 / self.p)).exp()
    }

    /// Var X = E|X|^2 (the distribution is centered).
    pub fn variance(&self) -> f64 {
        self.abs_moment(2)
    }
}
