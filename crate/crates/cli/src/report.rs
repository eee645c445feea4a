//! Re-renders every figure in an output directory from its curve CSV
//! alone, so plotted curves are always reproducible from the emitted data.

use std::path::{Path, PathBuf};

use pexp_core::Result;

use crate::output::CurveSet;
use crate::svg::Figure;

/// Scans `dir` for `*_curve.csv` files and (re)writes the matching
/// `*.svg`. Returns the figures written.
pub fn render_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with("_curve.csv"))
        })
        .collect();
    entries.sort();
    for csv_path in entries {
        let stem = csv_path
            .file_name()
            .and_then(|s| s.to_str())
            .expect("filtered to utf-8 names")
            .trim_end_matches("_curve.csv")
            .to_string();
        let text = std::fs::read_to_string(&csv_path)?;
        let curves = CurveSet::read_csv(&text)?;
        let svg = Figure {
            title: &title_for(&stem),
            grid: &curves.grid,
            band: Some((&curves.lower, &curves.upper)),
            curves: vec![
                ("truth", "black", &curves.truth),
                ("posterior mean", "red", &curves.mean),
            ],
        }
        .render();
        let out = dir.join(format!("{stem}.svg"));
        std::fs::write(&out, svg)?;
        written.push(out);
    }
    Ok(written)
}

/// Reconstructs the figure title the experiments use for a given stem.
pub fn title_for(stem: &str) -> String {
    if let Some(rest) = stem.strip_prefix("exp1_alpha_") {
        return format!("scale selection, alpha = {rest}");
    }
    if let Some(rest) = stem.strip_prefix("exp2_p") {
        if let Some((p, n)) = rest.split_once("_n") {
            return format!("regularity selection, p = {p}, n = {n}");
        }
    }
    stem.to_string()
}
