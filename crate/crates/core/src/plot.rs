//! Self-contained SVG plots. Coordinates are printed with fixed precision so
//! the output is byte-identical for identical input.

use std::fmt::Write;

use crate::covers::GraphEstimate;
use crate::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555"];

struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(title: &str, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <rect x=\"{m}\" y=\"{m}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{t}</text>\n\
             <text x=\"{cx}\" y=\"{by}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>\n\
             <text x=\"14\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {cy})\">{yl}</text>\n",
            m = MARGIN,
            pw = W - 2.0 * MARGIN,
            ph = H - 2.0 * MARGIN,
            cx = W / 2.0,
            cy = H / 2.0,
            by = H - 12.0,
            t = escape(title),
            xl = escape(xlabel),
            yl = escape(ylabel),
        );
        Canvas { body, x, y }
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        H - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn ticks(&mut self, xs: &[(f64, String)], ys: &[(f64, String)]) {
        for (v, label) in xs {
            let p = self.px(*v);
            let _ = writeln!(
                self.body,
                "<line x1=\"{p:.2}\" y1=\"{b:.2}\" x2=\"{p:.2}\" y2=\"{b2:.2}\" stroke=\"black\"/><text x=\"{p:.2}\" y=\"{t:.2}\" text-anchor=\"middle\" font-size=\"10\">{label}</text>",
                b = H - MARGIN,
                b2 = H - MARGIN + 4.0,
                t = H - MARGIN + 16.0,
            );
        }
        for (v, label) in ys {
            let p = self.py(*v);
            let _ = writeln!(
                self.body,
                "<line x1=\"{l:.2}\" y1=\"{p:.2}\" x2=\"{m:.2}\" y2=\"{p:.2}\" stroke=\"black\"/><text x=\"{t:.2}\" y=\"{ty:.2}\" text-anchor=\"end\" font-size=\"10\">{label}</text>",
                l = MARGIN - 4.0,
                m = MARGIN,
                t = MARGIN - 6.0,
                ty = p + 3.0,
            );
        }
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(self.body, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{color}\"/>", self.px(x), self.py(y));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut s = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", self.px(*x), self.py(*y));
        }
        let _ = writeln!(self.body, "<polyline points=\"{s}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>");
    }

    fn legend(&mut self, labels: &[String]) {
        for (i, l) in labels.iter().enumerate() {
            let y = MARGIN + 14.0 + 14.0 * i as f64;
            let x = W - MARGIN - 150.0;
            let _ = writeln!(
                self.body,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>",
                y - 9.0,
                PALETTE[i % PALETTE.len()],
                x + 14.0,
                y,
                escape(l)
            );
        }
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn unit_ticks() -> Vec<(f64, String)> {
    (0..=4).map(|i| (i as f64 / 4.0, format!("{:.2}", i as f64 / 4.0))).collect()
}

/// Orbit scatter on `[0,1)²`.
pub fn orbit_svg(title: &str, points: &[[f64; 2]]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::MissingArtifact("orbit has no points".into()));
    }
    let mut c = Canvas::new(title, (0.0, 1.0), (0.0, 1.0), "x", "y");
    c.ticks(&unit_ticks(), &unit_ticks());
    for p in points {
        c.dot(p[0], p[1], 0.6, PALETTE[0]);
    }
    Ok(c.finish())
}

/// Cluster centres per base bin; bins with the expected multiplicity are blue.
pub fn graph_svg(title: &str, est: &GraphEstimate) -> Result<String> {
    if est.bins.is_empty() {
        return Err(Error::MissingArtifact("graph estimate has no bins".into()));
    }
    let mut c = Canvas::new(title, (0.0, 1.0), (0.0, 1.0), "x", "cluster centres");
    c.ticks(&unit_ticks(), &unit_ticks());
    for b in &est.bins {
        let color = if b.count() == est.m as usize { PALETTE[0] } else { PALETTE[1] };
        for &y in &b.centers {
            c.dot(b.x_center, y, 1.6, color);
        }
    }
    c.legend(&[format!("{} clusters", est.m), "other".to_string()]);
    Ok(c.finish())
}

/// Log-log plot of `a_N` against `N`, one line per series.
pub fn amplitude_svg(title: &str, series: &[(String, Vec<(u64, f64)>)]) -> Result<String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, v)| v.iter().filter(|p| p.0 > 0 && p.1 > 0.0).map(|p| ((p.0 as f64).log10(), p.1.log10())))
        .collect();
    if pts.is_empty() {
        return Err(Error::MissingArtifact("no positive amplitudes to plot".into()));
    }
    let (x0, x1) = decade_range(pts.iter().map(|p| p.0));
    let (y0, y1) = decade_range(pts.iter().map(|p| p.1));
    let mut c = Canvas::new(title, (x0, x1), (y0, y1), "N", "a_N");
    let xt: Vec<(f64, String)> = (x0 as i32..=x1 as i32).map(|e| (e as f64, format!("1e{e}"))).collect();
    let step = ((y1 - y0) / 8.0).ceil().max(1.0) as usize;
    let yt: Vec<(f64, String)> = (y0 as i32..=y1 as i32).step_by(step).map(|e| (e as f64, format!("1e{e}"))).collect();
    c.ticks(&xt, &yt);
    for (i, (_, v)) in series.iter().enumerate() {
        let line: Vec<(f64, f64)> = v.iter().filter(|p| p.0 > 0 && p.1 > 0.0).map(|p| ((p.0 as f64).log10(), p.1.log10())).collect();
        c.polyline(&line, PALETTE[i % PALETTE.len()]);
        for (x, y) in line {
            c.dot(x, y, 2.5, PALETTE[i % PALETTE.len()]);
        }
    }
    c.legend(&series.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
    Ok(c.finish())
}

fn decade_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Fejér-smoothed spectral density on `θ ∈ [0,1)`.
pub fn density_svg(title: &str, density: &[f64]) -> Result<String> {
    if density.is_empty() {
        return Err(Error::MissingArtifact("empty density".into()));
    }
    let hi = density.iter().copied().fold(0.0f64, f64::max);
    let lo = density.iter().copied().fold(0.0f64, f64::min);
    let top = if hi > lo { hi * 1.05 } else { lo + 1.0 };
    let mut c = Canvas::new(title, (0.0, 1.0), (lo, top), "θ", "density");
    let yt: Vec<(f64, String)> = (0..=4).map(|i| lo + (top - lo) * i as f64 / 4.0).map(|v| (v, format!("{v:.3}"))).collect();
    c.ticks(&unit_ticks(), &yt);
    let n = density.len() as f64;
    let line: Vec<(f64, f64)> = density.iter().enumerate().map(|(i, &d)| (i as f64 / n, d)).collect();
    c.polyline(&line, PALETTE[0]);
    Ok(c.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::GraphBin;

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(orbit_svg("o", &[]).is_err());
        assert!(density_svg("d", &[]).is_err());
        assert!(amplitude_svg("a", &[("s".into(), vec![(10, 0.0)])]).is_err());
    }

    #[test]
    fn output_is_deterministic_and_well_formed() {
        let pts: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 / 100.0, (i * i % 97) as f64 / 97.0]).collect();
        let a = orbit_svg("orbit <1>", &pts).unwrap();
        assert_eq!(a, orbit_svg("orbit <1>", &pts).unwrap());
        assert!(a.starts_with("<?xml") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("orbit &lt;1&gt;"));
        assert_eq!(a.matches("<circle").count(), 100);
        let est = GraphEstimate {
            m: 2,
            n: 10,
            noise_fraction: 0.05,
            bins: vec![GraphBin { x_center: 0.25, points: 5, centers: vec![0.1, 0.6] }],
        };
        assert_eq!(graph_svg("g", &est).unwrap().matches("<circle").count(), 2);
        let s = amplitude_svg("a", &[("x".into(), vec![(10_000, 1e-7), (100_000, 1e-9)])]).unwrap();
        assert!(s.contains("1e4") && s.contains("<polyline"));
    }
}
