//! Special functions: log-gamma, regularized incomplete gamma (both
//! tails), their inverses, and the standard normal CDF/quantile built on
//! top of them.
//!
//! The incomplete gamma uses the series expansion for `x < a + 1` and a
//! modified Lentz continued fraction otherwise; inverses are Newton
//! iterations with a bisection safeguard.

use crate::{Error, Result};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 400;

/// Lanczos coefficients, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection keeps the Lanczos argument in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!(
            "incomplete gamma needs a > 0, x >= 0; got a = {a}, x = {x}"
        )));
    }
    Ok(())
}

/// Series expansion of P(a, x), accurate for x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - ln_gamma(a)).exp());
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma series did not converge (a = {a}, x = {x})"
    )))
}

/// Continued fraction for Q(a, x), accurate for x >= a + 1.
fn gamma_q_cf(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok((-x + a * x.ln() - ln_gamma(a)).exp() * h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma continued fraction did not converge (a = {a}, x = {x})"
    )))
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        Ok(1.0 - gamma_q_cf(a, x)?)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), with full
/// relative precision in the far right tail.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x)?)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Inverse of P(a, .): returns x with P(a, x) = p.
///
/// Newton with a maintained bisection bracket; converges to roughly
/// machine precision in the well-conditioned range.
pub fn inv_gamma_p(a: f64, p: f64) -> Result<f64> {
    if !(a > 0.0) || !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "inv_gamma_p needs a > 0 and p in [0, 1]; got a = {a}, p = {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Err(Error::Domain("inv_gamma_p at p = 1 is unbounded".into()));
    }
    let gln = ln_gamma(a);
    let a1 = a - 1.0;

    // Initial guess (Abramowitz-Stegun 26.2.22 based, as in the classic
    // gammpinv routine).
    let mut x = if a > 1.0 {
        let pp = p.min(1.0 - p);
        let t = (-2.0 * pp.ln()).sqrt();
        let mut x0 = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            x0 = -x0;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - x0 / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            (p / t).powf(1.0 / a)
        } else {
            1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
        }
    };

    // Bracket the root so Newton can never escape.
    let mut lo = 0.0_f64;
    let mut hi = x.max(1.0);
    while gamma_p(a, hi)? < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric("inv_gamma_p bracket expansion failed".into()));
        }
    }
    x = x.clamp(lo + FPMIN, hi);

    for _ in 0..60 {
        let f = gamma_p(a, x)? - p;
        if f >= 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        // dP/dx = exp(a1 ln x - x - lnGamma(a))
        let ln_deriv = a1 * x.ln() - x - gln;
        let step = if ln_deriv > -700.0 { f / ln_deriv.exp() } else { f64::INFINITY };
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Inverse of Q(a, .): returns x with Q(a, x) = q. Intended for small q,
/// where going through `inv_gamma_p(a, 1 - q)` would lose the tail.
pub fn inv_gamma_q(a: f64, q: f64) -> Result<f64> {
    if !(a > 0.0) || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!(
            "inv_gamma_q needs a > 0 and q in [0, 1]; got a = {a}, q = {q}"
        )));
    }
    if q == 0.0 {
        return Err(Error::Domain("inv_gamma_q at q = 0 is unbounded".into()));
    }
    if q >= 0.5 {
        return inv_gamma_p(a, 1.0 - q);
    }
    let gln = ln_gamma(a);
    let a1 = a - 1.0;

    // Asymptotic seed: Q(a, x) ~ x^(a-1) e^(-x) / Gamma(a).
    let mut x = -q.ln() - gln;
    for _ in 0..4 {
        x = (-q.ln() - gln + a1 * x.max(1.0).ln()).max(a + 1.0001);
    }

    let mut lo = 0.0_f64;
    let mut hi = x.max(a + 2.0);
    while gamma_q(a, hi)? > q {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric("inv_gamma_q bracket expansion failed".into()));
        }
    }
    x = x.clamp(lo.max(FPMIN), hi);

    for _ in 0..80 {
        let qx = gamma_q(a, x)?;
        if qx <= q {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        // Newton on ln Q to keep steps sane in the far tail.
        let ln_deriv = a1 * x.ln() - x - gln; // -dQ/dx
        let f = qx.ln() - q.ln();
        let step = f * qx / ln_deriv.exp();
        let mut next = x + step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Standard normal CDF with full relative precision in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    let w = 0.5 * x * x;
    if x >= 0.0 {
        0.5 + 0.5 * gamma_p(0.5, w).expect("gamma_p(0.5, .) cannot fail for finite x")
    } else {
        0.5 * gamma_q(0.5, w).expect("gamma_q(0.5, .) cannot fail for finite x")
    }
}

/// Standard normal quantile function.
pub fn norm_quantile(u: f64) -> Result<f64> {
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!("norm_quantile needs u in (0, 1), got {u}")));
    }
    if u >= 0.5 {
        Ok((2.0 * inv_gamma_p(0.5, 2.0 * u - 1.0)?).sqrt())
    } else {
        Ok(-(2.0 * inv_gamma_q(0.5, 2.0 * u)?).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_reference_values() {
        // Gamma(1/2) = sqrt(pi)
        assert_abs_diff_eq!(ln_gamma(0.5), 0.5 * std::f64::consts::PI.ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(5.0), 24.0_f64.ln(), epsilon = 1e-13);
        // Gamma(1/3): reference 2.678938534707747633...
        assert_abs_diff_eq!(ln_gamma(1.0 / 3.0), 2.678_938_534_707_747_6_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn gamma_p_exponential_special_case() {
        // P(1, x) = 1 - exp(-x)
        assert_abs_diff_eq!(gamma_p(1.0, 1.0).unwrap(), 1.0 - (-1.0_f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(gamma_p(1.0, 1.0).unwrap(), 0.632_120_558_828_557_7, epsilon = 1e-12);
    }

    #[test]
    fn gamma_p_gaussian_special_case() {
        // P(1/2, 1/2) = 2 Phi(1) - 1 = erf(1/sqrt(2))
        assert_abs_diff_eq!(gamma_p(0.5, 0.5).unwrap(), 0.682_689_492_137_085_9, epsilon = 1e-12);
    }

    #[test]
    fn gamma_p_limits_and_monotonicity() {
        for &a in &[0.4, 0.5, 1.0, 2.5, 7.0] {
            assert_eq!(gamma_p(a, 0.0).unwrap(), 0.0);
            assert!(gamma_p(a, 1e4).unwrap() > 1.0 - 1e-12);
            let mut prev = 0.0;
            for i in 1..=40 {
                let x = 0.25 * i as f64;
                let v = gamma_p(a, x).unwrap();
                assert!(v >= prev, "P not monotone at a = {a}, x = {x}");
                prev = v;
            }
        }
    }

    #[test]
    fn p_plus_q_is_one() {
        for &a in &[0.3, 0.5, 1.0, 3.0, 10.0] {
            for &x in &[0.01, 0.5, 1.0, 3.0, 10.0, 50.0] {
                let s = gamma_p(a, x).unwrap() + gamma_q(a, x).unwrap();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn inverse_identity_to_1e12() {
        for &a in &[0.4, 0.5, 2.0 / 3.0, 0.8, 1.0, 2.0, 5.0] {
            for i in 1..40 {
                let u = i as f64 / 40.0;
                let x = inv_gamma_p(a, u).unwrap();
                assert_abs_diff_eq!(gamma_p(a, x).unwrap(), u, epsilon = 1e-12);
            }
            // Extreme lower-tail arguments.
            for &u in &[1e-12, 1e-8, 1e-4] {
                let x = inv_gamma_p(a, u).unwrap();
                let back = gamma_p(a, x).unwrap();
                assert!((back - u).abs() <= 1e-12 * u.max(1e-300) + 1e-15);
            }
        }
    }

    #[test]
    fn upper_inverse_hits_far_tail() {
        for &a in &[0.5, 1.0, 2.0] {
            for &q in &[1e-16, 1e-12, 1e-6, 0.01, 0.3] {
                let x = inv_gamma_q(a, q).unwrap();
                let back = gamma_q(a, x).unwrap();
                assert!(
                    (back - q).abs() <= 1e-10 * q,
                    "a = {a}, q = {q}, back = {back}"
                );
            }
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-12);
        // Tail with full relative precision.
        let tail = norm_cdf(-8.0);
        assert!((tail - 6.220_960_574_271_78e-16).abs() < 1e-21);
    }

    #[test]
    fn normal_quantile_roundtrip() {
        for &x in &[-6.0, -3.2, -1.0, -0.1, 0.0, 0.7, 2.5, 5.5] {
            let u = norm_cdf(x);
            assert_abs_diff_eq!(norm_quantile(u).unwrap(), x, epsilon = 1e-9);
        }
        assert!(norm_quantile(0.0).is_err());
        assert!(norm_quantile(1.0).is_err());
    }
}
