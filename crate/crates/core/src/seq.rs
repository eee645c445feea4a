//! Finite sequence representations of periodic functions, the bases used
//! by the experiments, and the weighted sequence norms.
//!
//! Everything is single-indexed: a function is identified with its
//! coefficient sequence (theta_l) and norms are truncated weighted sums.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::util::{kahan_sum, KahanSum};
use crate::{Error, Result};

/// Orthonormal basis tag for a coefficient vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// e_l(t) = sqrt(2) sin(pi l t)
    Sine,
    /// e_l(t) = sqrt(2) cos(pi (l - 1/2) t)
    CosineHalfShift,
    /// Pure sequence object with no committed function basis.
    AbstractSequence,
}

/// A finite truncation of a square-summable sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    coeffs: Vec<f64>,
    basis: Basis,
}

impl CoefficientVector {
    pub fn new(coeffs: Vec<f64>, basis: Basis) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "coefficient vector needs at least one entry".into(),
            ));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient vector contains non-finite entry {bad}"
            )));
        }
        Ok(Self { coeffs, basis })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Truncation level L.
    pub fn trunc_level(&self) -> usize {
        self.coeffs.len()
    }

    /// L2 distance to another vector; the shorter one is zero-padded.
    pub fn l2_distance(&self, other: &CoefficientVector) -> f64 {
        let long = self.coeffs.len().max(other.coeffs.len());
        let mut acc = KahanSum::new();
        for l in 0..long {
            let a = self.coeffs.get(l).copied().unwrap_or(0.0);
            let b = other.coeffs.get(l).copied().unwrap_or(0.0);
            acc.add((a - b) * (a - b));
        }
        acc.value().sqrt()
    }

    /// Writes `index,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,value")?;
        for (i, v) in self.coeffs.iter().enumerate() {
            writeln!(w, "{},{v:.17e}", i + 1)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, basis: Basis) -> Result<Self> {
        let mut coeffs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let (idx, value) = line.split_once(',').ok_or_else(|| {
                Error::InvalidParameter(format!("malformed csv row {:?}", line))
            })?;
            let idx: usize = idx.trim().parse().map_err(|e| {
                Error::InvalidParameter(format!("bad index in csv row {line:?}: {e}"))
            })?;
            if idx != coeffs.len() + 1 {
                return Err(Error::InvalidParameter(format!(
                    "csv indices must be contiguous from 1, got {idx} at position {}",
                    coeffs.len() + 1
                )));
            }
            let value: f64 = value.trim().parse().map_err(|e| {
                Error::InvalidParameter(format!("bad value in csv row {line:?}: {e}"))
            })?;
            coeffs.push(value);
        }
        Self::new(coeffs, basis)
    }

    /// Serializes the coefficients as a bare JSON array.
    pub fn to_json_array(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.coeffs)?)
    }

    pub fn from_json_array(s: &str, basis: Basis) -> Result<Self> {
        let coeffs: Vec<f64> = serde_json::from_str(s)?;
        Self::new(coeffs, basis)
    }
}

/// Which weighted norm to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NormSpec {
    L2,
    Sobolev { s: f64 },
    Besov { s: f64, q: f64 },
    /// tau^-1 (sum theta_l^2 l^(1+2alpha))^(1/2)
    QNorm { alpha: f64, tau: f64 },
    /// tau^-1 (sum |theta_l|^p l^(p/2+alpha p))^(1/p)
    ZNorm { alpha: f64, tau: f64, p: f64 },
}

/// Truncated weighted norm of `theta` under `spec`.
///
/// Besov(s, q) is (sum_l l^(qs + q/2 - 1) |theta_l|^q)^(1/q); Sobolev(s)
/// is Besov(s, 2) and L2 is Besov(0, 2).
pub fn weighted_norm(theta: &CoefficientVector, spec: &NormSpec) -> Result<f64> {
    let (s, q, scale) = match *spec {
        NormSpec::L2 => (0.0, 2.0, 1.0),
        NormSpec::Sobolev { s } => (s, 2.0, 1.0),
        NormSpec::Besov { s, q } => {
            if q < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "Besov integrability must satisfy q >= 1, got {q}"
                )));
            }
            (s, q, 1.0)
        }
        NormSpec::QNorm { alpha, tau } => {
            check_scale_params(alpha, tau, 2.0)?;
            // l^(1+2alpha) = l^(qs + q/2 - 1) with q = 2, s = 1/2 + alpha.
            (0.5 + alpha, 2.0, 1.0 / tau)
        }
        NormSpec::ZNorm { alpha, tau, p } => {
            check_scale_params(alpha, tau, p)?;
            // l^(p/2 + alpha p) = l^(ps + p/2 - 1) with s = 1/2 + alpha - ... :
            // exponent ps + p/2 - 1 = p/2 + alpha p requires s = alpha + 1/p.
            (alpha + 1.0 / p, p, 1.0 / tau)
        }
    };
    let sum = kahan_sum(theta.coeffs().iter().enumerate().map(|(i, &v)| {
        let l = (i + 1) as f64;
        l.powf(q * s + q / 2.0 - 1.0) * v.abs().powf(q)
    }));
    Ok(scale * sum.powf(1.0 / q))
}

fn check_scale_params(alpha: f64, tau: f64, p: f64) -> Result<()> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [1, 2], got {p}")));
    }
    Ok(())
}

/// Ground-truth coefficient families used by the experiments and studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TruthSpec {
    /// theta_l = l^-a sin(omega l), sine basis.
    PowerSine { a: f64, omega: f64 },
    /// Same coefficients, half-shifted cosine basis.
    PowerSineCos { a: f64, omega: f64 },
    /// theta_l = 2^(-k (beta + 1/2 - 1/q)) k^(-2/q - delta) at l = 2^k,
    /// zero elsewhere. A spatially inhomogeneous truth: finite
    /// Besov(beta, q) norm, strictly lower Sobolev regularity.
    SparseDyadic { beta: f64, q: f64, delta: f64 },
}

/// Materializes a truth at truncation level `trunc`.
pub fn make_truth(spec: &TruthSpec, trunc: usize) -> Result<CoefficientVector> {
    if trunc == 0 {
        return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
    }
    match *spec {
        TruthSpec::PowerSine { a, omega } | TruthSpec::PowerSineCos { a, omega } => {
            if a <= 0.5 {
                return Err(Error::InvalidParameter(format!(
                    "power-sine decay must satisfy a > 1/2 for square summability, got {a}"
                )));
            }
            let basis = if matches!(spec, TruthSpec::PowerSine { .. }) {
                Basis::Sine
            } else {
                Basis::CosineHalfShift
            };
            let coeffs = (1..=trunc)
                .map(|l| {
                    let l = l as f64;
                    l.powf(-a) * (omega * l).sin()
                })
                .collect();
            CoefficientVector::new(coeffs, basis)
        }
        TruthSpec::SparseDyadic { beta, q, delta } => {
            if q < 1.0 {
                return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
            }
            if beta < 1.0 / q {
                return Err(Error::InvalidParameter(format!(
                    "sparse dyadic truth needs beta >= 1/q, got beta = {beta}, q = {q}"
                )));
            }
            if delta <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "delta must be positive to guard summability, got {delta}"
                )));
            }
            let mut coeffs = vec![0.0; trunc];
            let mut k = 1u32;
            loop {
                let l = 1usize << k;
                if l > trunc {
                    break;
                }
                let kf = f64::from(k);
                coeffs[l - 1] =
                    (2.0_f64).powf(-kf * (beta + 0.5 - 1.0 / q)) * kf.powf(-2.0 / q - delta);
                k += 1;
            }
            CoefficientVector::new(coeffs, Basis::AbstractSequence)
        }
    }
}

/// Synthesizes f(t) = sum_l theta_l e_l(t) at the given points.
pub fn evaluate_on_grid(theta: &CoefficientVector, points: &[f64]) -> Result<Vec<f64>> {
    let basis_fn: fn(usize, f64) -> f64 = match theta.basis() {
        Basis::Sine => |l, t| {
            std::f64::consts::SQRT_2 * (std::f64::consts::PI * l as f64 * t).sin()
        },
        Basis::CosineHalfShift => |l, t| {
            std::f64::consts::SQRT_2 * (std::f64::consts::PI * (l as f64 - 0.5) * t).cos()
        },
        Basis::AbstractSequence => return Err(Error::UnsupportedBasis),
    };
    Ok(points
        .iter()
        .map(|&t| {
            let mut acc = KahanSum::new();
            for (i, &c) in theta.coeffs().iter().enumerate() {
                if c != 0.0 {
                    acc.add(c * basis_fn(i + 1, t));
                }
            }
            acc.value()
        })
        .collect())
}

/// Basis matrix B[g][l] = e_{l+1}(t_g) for fast repeated synthesis.
pub fn basis_matrix(basis: Basis, points: &[f64], trunc: usize) -> Result<Vec<Vec<f64>>> {
    if basis == Basis::AbstractSequence {
        return Err(Error::UnsupportedBasis);
    }
    let mut rows = Vec::with_capacity(points.len());
    for &t in points {
        let mut row = Vec::with_capacity(trunc);
        for l in 1..=trunc {
            let v = match basis {
                Basis::Sine => {
                    std::f64::consts::SQRT_2 * (std::f64::consts::PI * l as f64 * t).sin()
                }
                Basis::CosineHalfShift => {
                    std::f64::consts::SQRT_2 * (std::f64::consts::PI * (l as f64 - 0.5) * t).cos()
                }
                Basis::AbstractSequence => unreachable!(),
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}
