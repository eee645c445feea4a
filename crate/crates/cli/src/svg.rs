//! Minimal in-tree SVG renderer: axis box, filled credible band, and
//! polyline curves. Deterministic output so figures regenerate
//! byte-identically from their CSVs.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 42.0;

pub struct Figure<'a> {
    pub title: &'a str,
    pub grid: &'a [f64],
    /// Optional band (lower, upper) drawn behind the curves.
    pub band: Option<(&'a [f64], &'a [f64])>,
    /// (label, css color, values) triples.
    pub curves: Vec<(&'a str, &'a str, &'a [f64])>,
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

impl Figure<'_> {
    pub fn render(&self) -> String {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, _, ys) in &self.curves {
            for &y in ys.iter() {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        if let Some((l, u)) = self.band {
            for &y in l.iter().chain(u.iter()) {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let pad = 0.05 * (hi - lo);
        let (ylo, yhi) = (lo - pad, hi + pad);
        let (xlo, xhi) = (
            self.grid.first().copied().unwrap_or(0.0),
            self.grid.last().copied().unwrap_or(1.0),
        );
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |t: f64| MARGIN_L + (t - xlo) / (xhi - xlo) * plot_w;
        let sy = |y: f64| MARGIN_T + (yhi - y) / (yhi - ylo) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            self.title
        );

        if let Some((lower, upper)) = self.band {
            let mut d = String::from("M");
            for (i, &t) in self.grid.iter().enumerate() {
                let _ = write!(d, " {} {}", fmt(sx(t)), fmt(sy(lower[i])));
            }
            for (i, &t) in self.grid.iter().enumerate().rev() {
                let _ = write!(d, " L {} {}", fmt(sx(t)), fmt(sy(upper[i])));
            }
            d.push('Z');
            let _ = writeln!(out, "<path d=\"{d}\" fill=\"#bbbbbb\" fill-opacity=\"0.55\" stroke=\"none\"/>");
        }

        for (label, color, ys) in &self.curves {
            let mut pts = String::new();
            for (i, &t) in self.grid.iter().enumerate() {
                let _ = write!(pts, "{},{} ", fmt(sx(t)), fmt(sy(ys[i])));
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"><title>{label}</title></polyline>",
                pts.trim_end()
            );
        }

        // Axis box and tick labels.
        let _ = writeln!(
            out,
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            plot_w, plot_h
        );
        for frac in [0.0, 0.5, 1.0] {
            let t = xlo + frac * (xhi - xlo);
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                fmt(sx(t)),
                HEIGHT - 18.0,
                fmt(t)
            );
            let y = ylo + frac * (yhi - ylo);
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                MARGIN_L - 6.0,
                fmt(sy(y) + 4.0),
                fmt(y)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
