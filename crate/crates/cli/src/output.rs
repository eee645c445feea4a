//! Study results and their CSV/JSON persistence.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pexp_core::rates::ols_slope;
use pexp_core::Result;

/// One run of one method at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: f64,
    pub rep: u32,
    pub method: String,
    pub mode: String,
    /// MMLE value (EB) or hyper-parameter posterior mean (HB).
    pub lambda_hat_or_mean: f64,
    pub l2_error: f64,
    pub band_width: f64,
    pub seconds: f64,
    /// Posterior standard deviation of the free hyper-parameter (HB only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sd: Option<f64>,
}

/// Aggregated study output: per-run records plus the fitted log-log slope
/// of the median error against the target exponent.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<RunRecord>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub target_exponent: Option<f64>,
}

impl StudyResult {
    /// Median L2 error per distinct n, ascending in n.
    pub fn median_errors(&self) -> Vec<(f64, f64)> {
        let mut ns: Vec<f64> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        ns.into_iter()
            .map(|n| {
                let mut errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.l2_error)
                    .collect();
                errs.sort_by(f64::total_cmp);
                let mid = errs.len() / 2;
                let median = if errs.len() % 2 == 1 {
                    errs[mid]
                } else {
                    0.5 * (errs[mid - 1] + errs[mid])
                };
                (n, median)
            })
            .collect()
    }

    /// Fits slope and intercept of log(median error) on log n when at
    /// least three distinct noise levels are present.
    pub fn fit_slope(&mut self) {
        let med = self.median_errors();
        if med.len() < 3 {
            self.slope = None;
            self.intercept = None;
            return;
        }
        let xs: Vec<f64> = med.iter().map(|(n, _)| n.ln()).collect();
        let ys: Vec<f64> = med.iter().map(|(_, e)| e.ln()).collect();
        let (slope, intercept) = ols_slope(&xs, &ys);
        self.slope = Some(slope);
        self.intercept = Some(intercept);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,rep,method,mode,lambda_hat_or_mean,l2_error,band_width,seconds")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.3}",
                r.n, r.rep, r.method, r.mode, r.lambda_hat_or_mean, r.l2_error, r.band_width, r.seconds
            )?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut file = std::fs::File::create(dir.join("results.csv"))?;
        self.write_csv(&mut file)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("study.json"), json)?;
        Ok(())
    }
}

/// A plotted curve bundle: truth, posterior mean and band on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSet {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveSet {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,truth,mean,lower,upper")?;
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.grid[i], self.truth[i], self.mean[i], self.lower[i], self.upper[i]
            )?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut me = CurveSet {
            grid: Vec::new(),
            truth: Vec::new(),
            mean: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(pexp_core::Error::InvalidParameter(format!(
                    "curve csv row has {} columns, expected 5",
                    cols.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|e| {
                    pexp_core::Error::InvalidParameter(format!("bad float {s:?}: {e}"))
                })
            };
            me.grid.push(parse(cols[0])?);
            me.truth.push(parse(cols[1])?);
            me.mean.push(parse(cols[2])?);
            me.lower.push(parse(cols[3])?);
            me.upper.push(parse(cols[4])?);
        }
        Ok(me)
    }
}
