//! Minimal SVG plots: log-log exponent fits and slow-scale trajectories.

use std::fmt::Write;

use wvn_core::linalg::Vec2;
use wvn_core::spectral::ExponentFit;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Self { x: span(&mut xs.clone()), y: span(&mut ys.clone()) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, stamp: Option<&str>) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    if let Some(s) = stamp {
        let _ = writeln!(out, "<!-- {s} -->");
    }
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(out, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#, H / 2.0, H / 2.0);
    for (v, anchor, x, y) in [
        (f.x.0, "start", x0, y0 + 15.0),
        (f.x.1, "end", x1, y0 + 15.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (v, y) in [(f.y.0, y0), (f.y.1, y1 + 10.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3}</text>"#, x0 - 4.0);
    }
}

/// `log₁₀ ρ'` against `log₁₀|λ − ν|` with the fitted line and its slope.
pub fn exponent_svg(fit: &ExponentFit, stamp: Option<&str>) -> Result<String, CliError> {
    if fit.samples.is_empty() {
        return Err(CliError::Plot("empty grid".into()));
    }
    let pts: Vec<(f64, f64)> =
        fit.samples.iter().map(|s| ((s.lambda - fit.nu).abs().log10(), s.rho_prime.log10())).collect();
    let frame = Frame::new(pts.iter().map(|p| p.0), pts.iter().map(|p| p.1));
    let mut out = String::new();
    header(&mut out, stamp);
    axes(&mut out, &frame, "log10 |λ − ν|", "log10 ρ'");
    let line = |x: f64| fit.fitted_c.log10() + fit.fitted_exponent * x;
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue" stroke-width="1.5"/>"#,
        frame.px(frame.x.0),
        frame.py(line(frame.x.0)),
        frame.px(frame.x.1),
        frame.py(line(frame.x.1))
    );
    for (x, y) in &pts {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="crimson"/>"#, frame.px(*x), frame.py(*y));
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">slope {:.3} (predicted 2β = {:.3}), r² = {:.5}</text>"#,
        MARGIN + 10.0,
        MARGIN + 20.0,
        fit.fitted_exponent,
        fit.predicted_exponent,
        fit.r_squared
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Real and imaginary parts of both components against `y`.
pub fn trajectory_svg(samples: &[(f64, Vec2)], stamp: Option<&str>) -> Result<String, CliError> {
    if samples.is_empty() {
        return Err(CliError::Plot("empty trajectory".into()));
    }
    let parts = |h: &Vec2| [h[0].re, h[0].im, h[1].re, h[1].im];
    let frame = Frame::new(samples.iter().map(|s| s.0), samples.iter().flat_map(|s| parts(&s.1)));
    let mut out = String::new();
    header(&mut out, stamp);
    axes(&mut out, &frame, "y", "h(y)");
    let colors = ["crimson", "darkorange", "steelblue", "seagreen"];
    let names = ["Re h1", "Im h1", "Re h2", "Im h2"];
    for (c, (color, name)) in colors.iter().zip(names).enumerate() {
        let path: Vec<String> =
            samples.iter().map(|(y, h)| format!("{:.2},{:.2}", frame.px(*y), frame.py(parts(h)[c]))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, path.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#, W - MARGIN - 60.0, MARGIN + 15.0 * (c as f64 + 1.0));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
