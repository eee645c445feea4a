//! Sequence-space white noise observations x_l = theta_l + z_l / sqrt(n)
//! and the exact log-likelihood l_n(theta) = n <x, theta> - (n/2) |theta|^2.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seq::{Basis, CoefficientVector};
use crate::util::{dot, norm2_sq, KahanSum};
use crate::{Error, Result};

/// One realized observation of the model at noise precision n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    x: CoefficientVector,
    n: f64,
}

impl Observation {
    pub fn new(x: CoefficientVector, n: f64) -> Result<Self> {
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise precision must be positive and finite, got {n}"
            )));
        }
        Ok(Self { x, n })
    }

    pub fn x(&self) -> &CoefficientVector {
        &self.x
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn trunc_level(&self) -> usize {
        self.x.trunc_level()
    }

    /// CSV body `index,x_value` plus the JSON sidecar header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.x.write_csv(w)
    }

    pub fn header(&self, seed: Option<u64>) -> ObservationHeader {
        ObservationHeader {
            n: self.n,
            trunc_level: self.x.trunc_level(),
            basis: self.x.basis(),
            seed,
        }
    }
}

/// Sidecar metadata persisted next to the observation CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationHeader {
    pub n: f64,
    #[serde(rename = "L")]
    pub trunc_level: usize,
    pub basis: Basis,
    pub seed: Option<u64>,
}

/// Draws x_l = theta0_l + z_l / sqrt(n), z_l iid standard normal.
pub fn simulate<R: Rng + ?Sized>(
    theta0: &CoefficientVector,
    n: f64,
    rng: &mut R,
) -> Result<Observation> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise precision must be positive and finite, got {n}"
        )));
    }
    let root = n.sqrt();
    let coeffs = theta0
        .coeffs()
        .iter()
        .map(|&t| t + rng.sample::<f64, _>(StandardNormal) / root)
        .collect();
    Observation::new(CoefficientVector::new(coeffs, theta0.basis())?, n)
}

/// Exact evaluation of n <x, theta> - (n/2) |theta|^2; the shorter of the
/// two vectors is zero-padded.
pub fn log_likelihood(obs: &Observation, theta: &CoefficientVector) -> f64 {
    log_likelihood_coeffs(obs, theta.coeffs())
}

pub(crate) fn log_likelihood_coeffs(obs: &Observation, theta: &[f64]) -> f64 {
    let k = theta.len().min(obs.x.coeffs().len());
    // Coordinates of theta beyond the observation contribute only the
    // quadratic penalty; observed coordinates beyond theta contribute 0.
    let cross = dot(&obs.x.coeffs()[..k], &theta[..k]);
    obs.n * cross - 0.5 * obs.n * norm2_sq(theta)
}

/// l_n(theta) - l_n(theta_ref) computed as n <x - (theta + theta_ref)/2,
/// theta - theta_ref>, which avoids the cancellation of subtracting two
/// large quadratic forms at high n.
pub fn log_likelihood_diff(obs: &Observation, theta: &[f64], theta_ref: &[f64]) -> f64 {
    let len = theta.len().max(theta_ref.len());
    let mut acc = KahanSum::new();
    for l in 0..len {
        let a = theta.get(l).copied().unwrap_or(0.0);
        let b = theta_ref.get(l).copied().unwrap_or(0.0);
        let x = obs.x.coeffs().get(l).copied().unwrap_or(0.0);
        acc.add((x - 0.5 * (a + b)) * (a - b));
    }
    obs.n * acc.value()
}

/// How the truncation level scales with the noise precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum TruncationRule {
    Fixed { level: usize },
    /// ceil(n^exponent), with ties within 1e-9 of an integer snapped so
    /// exact powers like 1000^(1/1.5) = 100 resolve cleanly.
    PowerRule { exponent: f64 },
}

pub fn truncation_level(n: f64, rule: &TruncationRule) -> Result<usize> {
    if n < 1.0 {
        return Err(Error::InvalidParameter(format!("truncation rule needs n >= 1, got {n}")));
    }
    let level = match *rule {
        TruncationRule::Fixed { level } => level,
        TruncationRule::PowerRule { exponent } => {
            let raw = n.powf(exponent);
            let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
            snapped as usize
        }
    };
    if level < 1 {
        return Err(Error::InvalidParameter(format!(
            "truncation rule produced level {level} < 1"
        )));
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cv(coeffs: Vec<f64>) -> CoefficientVector {
        CoefficientVector::new(coeffs, Basis::AbstractSequence).unwrap()
    }

    #[test]
    fn simulated_noise_has_chi_square_scale() {
        let theta0 = cv(vec![0.0; 100]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let obs = simulate(&theta0, 1e6, &mut rng).unwrap();
        let ss: f64 = obs.x().coeffs().iter().map(|v| v * v).sum();
        // E = L/n = 1e-4, sd = sqrt(2 L)/n; allow 5 standard errors.
        let se = (2.0 * 100.0_f64).sqrt() / 1e6;
        assert!((ss - 1e-4).abs() < 5.0 * se, "sum of squares {ss}");
    }

    #[test]
    fn vanishing_noise_recovers_truth() {
        let theta0 = cv((1..=100).map(|l| (l as f64).powf(-1.5)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = simulate(&theta0, 1e12, &mut rng).unwrap();
        let max_dev = obs
            .x()
            .coeffs()
            .iter()
            .zip(theta0.coeffs())
            .map(|(x, t)| (x - t).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-4, "max deviation {max_dev}");
    }

    #[test]
    fn equal_seeds_give_identical_observations() {
        let theta0 = cv(vec![0.5; 16]);
        let a = simulate(&theta0, 10.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate(&theta0, 10.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_likelihood_reference_values() {
        let obs = Observation::new(cv(vec![1.0, 0.0]), 2.0).unwrap();
        // theta = 0 is the reference measure.
        assert_eq!(log_likelihood(&obs, &cv(vec![0.0, 0.0])), 0.0);
        // theta = x maximizes the quadratic at (n/2)|x|^2.
        let at_x = log_likelihood(&obs, obs.x());
        assert_abs_diff_eq!(at_x, 1.0, epsilon = 1e-14);
        // Hand evaluation: 2*0.5 - 1*0.25 = 0.75.
        assert_abs_diff_eq!(log_likelihood(&obs, &cv(vec![0.5, 0.0])), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn length_mismatch_zero_pads() {
        let obs = Observation::new(cv(vec![1.0, 2.0, 3.0]), 1.0).unwrap();
        let short = cv(vec![1.0]);
        assert_abs_diff_eq!(log_likelihood(&obs, &short), 0.5, epsilon = 1e-14);
        let long = cv(vec![1.0, 0.0, 0.0, 4.0]);
        // Extra theta coordinate only pays the quadratic penalty.
        assert_abs_diff_eq!(log_likelihood(&obs, &long), 1.0 - 0.5 * 17.0, epsilon = 1e-14);
    }

    #[test]
    fn diff_identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta0 = cv((1..=50).map(|l| (l as f64).powf(-1.2)).collect());
        let obs = simulate(&theta0, 1e5, &mut rng).unwrap();
        for _ in 0..50 {
            let a: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.5).collect();
            let b: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.5).collect();
            let direct = log_likelihood(&obs, &cv(a.clone())) - log_likelihood(&obs, &cv(b.clone()));
            let identity = log_likelihood_diff(&obs, &a, &b);
            assert_abs_diff_eq!(direct, identity, epsilon = 1e-7 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn expected_log_likelihood_matches_formula() {
        let theta0 = cv(vec![0.4, -0.3, 0.2]);
        let theta = cv(vec![0.1, 0.5, -0.2]);
        let n = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let reps = 20_000;
        let mean: f64 = (0..reps)
            .map(|_| log_likelihood(&simulate(&theta0, n, &mut rng).unwrap(), &theta))
            .sum::<f64>()
            / reps as f64;
        let cross: f64 = theta0.coeffs().iter().zip(theta.coeffs()).map(|(a, b)| a * b).sum();
        let norm: f64 = theta.coeffs().iter().map(|v| v * v).sum();
        let expect = n * cross - 0.5 * n * norm;
        // Var of each term is n |theta|^2; 5 standard errors.
        let se = (n * norm / reps as f64).sqrt();
        assert!((mean - expect).abs() < 5.0 * se, "mean {mean} expect {expect}");
    }

    #[test]
    fn truncation_rules() {
        assert_eq!(truncation_level(200.0, &TruncationRule::Fixed { level: 200 }).unwrap(), 200);
        let rule = TruncationRule::PowerRule { exponent: 1.0 / 1.5 };
        assert_eq!(truncation_level(1e3, &rule).unwrap(), 100);
        assert_eq!(truncation_level(1e5, &rule).unwrap(), 2155);
        assert!(truncation_level(0.5, &rule).is_err());
        assert!(truncation_level(2.0, &TruncationRule::Fixed { level: 0 }).is_err());
    }

    #[test]
    fn observation_serializes_with_header() {
        let obs = Observation::new(
            CoefficientVector::new(vec![0.1, 0.2], Basis::Sine).unwrap(),
            200.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("index,value"));
        let header = obs.header(Some(7));
        let json = serde_json::to_string(&header).unwrap();
        let back: ObservationHeader = serde_json::from_str(&json).unwrap();
        assert_eq!(header, back);
        assert!(json.contains("\"L\":2"));
    }
}
