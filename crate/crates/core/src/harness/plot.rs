//! Minimal SVG line and scatter plots.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const M_LEFT: f64 = 70.0;
const M_RIGHT: f64 = 150.0;
const M_TOP: f64 = 40.0;
const M_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn unmap(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v),
        }
    }
}

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
    sx: Scale,
    sy: Scale,
}

impl Axes {
    fn fit(series: &[Series], sx: Scale, sy: Scale) -> Self {
        let finite = |s: Scale, v: f64| v.is_finite() && (s == Scale::Linear || v > 0.0);
        let pts = series.iter().flat_map(|s| &s.points).filter(|(x, y)| finite(sx, *x) && finite(sy, *y));
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for &(px, py) in pts {
            let (mx, my) = (sx.map(px), sy.map(py));
            x = (x.0.min(mx), x.1.max(mx));
            y = (y.0.min(my), y.1.max(my));
        }
        let pad = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 - r.0 < 1e-12 {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                let d = 0.05 * (r.1 - r.0);
                (r.0 - d, r.1 + d)
            }
        };
        Self { x: pad(x), y: pad(y), sx, sy }
    }

    fn px(&self, x: f64) -> f64 {
        M_LEFT + (self.sx.map(x) - self.x.0) / (self.x.1 - self.x.0) * (W - M_LEFT - M_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - M_BOTTOM - (self.sy.map(y) - self.y.0) / (self.y.1 - self.y.0) * (H - M_TOP - M_BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, title: &str, xl: &str, yl: &str, ax: &Axes) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (M_LEFT, W - M_RIGHT, M_TOP, H - M_BOTTOM);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let vx = ax.sx.unmap(ax.x.0 + f * (ax.x.1 - ax.x.0));
        let vy = ax.sy.unmap(ax.y.0 + f * (ax.y.1 - ax.y.0));
        let (gx, gy) = (ax.px(vx), ax.py(vy));
        let _ = writeln!(out, r##"<line x1="{gx:.2}" y1="{y0}" x2="{gx:.2}" y2="{y1}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{gy:.2}" x2="{x1}" y2="{gy:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r#"<text x="{gx:.2}" y="{}" text-anchor="middle">{vx:.3e}</text>"#, y1 + 16.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{vy:.3e}</text>"#, x0 - 4.0, gy + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, escape(xl));
    let _ = writeln!(out, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0, escape(yl));
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = M_TOP + 14.0 + 16.0 * i as f64;
        let x = W - M_RIGHT + 10.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{c}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
}

/// One polyline per series; non-finite points break nothing, they are skipped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ax = Axes::fit(series, Scale::Linear, Scale::Linear);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, &ax);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", ax.px(x), ax.py(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#, PALETTE[i % PALETTE.len()], pts.join(" "));
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Markers per series, optionally on log axes (non-positive values dropped).
pub fn scatter_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], scale: Scale) -> String {
    let ax = Axes::fit(series, scale, scale);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, &ax);
    let ok = |v: f64| v.is_finite() && (scale == Scale::Linear || v > 0.0);
    for (i, s) in series.iter().enumerate() {
        for &(x, y) in s.points.iter().filter(|(x, y)| ok(*x) && ok(*y)) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, ax.px(x), ax.py(y), PALETTE[i % PALETTE.len()]);
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> Vec<Series> {
        vec![
            Series { name: "a<b".into(), points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)] },
            Series { name: "c".into(), points: vec![(0.5, 0.1)] },
        ]
    }

    #[test]
    fn line_plot_is_wellformed() {
        let svg = line_plot("t", "x", "y", &series());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn log_scatter_drops_nonpositive() {
        let s = vec![Series { name: "p".into(), points: vec![(1e-3, 1e-2), (0.0, 1.0), (1e-1, 1.0)] }];
        let svg = scatter_plot("t", "x", "y", &s, Scale::Log10);
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn empty_and_constant_inputs() {
        let svg = line_plot("t", "x", "y", &[]);
        assert!(svg.contains("</svg>"));
        let flat = vec![Series { name: "f".into(), points: vec![(1.0, 3.0), (1.0, 3.0)] }];
        assert!(!line_plot("t", "x", "y", &flat).contains("NaN"));
    }

    #[test]
    fn deterministic_output() {
        assert_eq!(line_plot("t", "x", "y", &series()), line_plot("t", "x", "y", &series()));
    }
}
