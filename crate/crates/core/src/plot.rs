//! Self-contained SVG rendering of a regret curve: the median as one path and
//! the quartile band as a shaded polygon. Output depends only on the input,
//! byte for byte.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiments::RegretCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

#[derive(Clone, Debug, Default)]
pub struct PlotOptions {
    pub log_x: bool,
    pub title: Option<String>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short decimal label for a tick value.
fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e4 || v.abs() < 1e-2 {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn render_svg(curve: &RegretCurve, options: &PlotOptions) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::Data("curve has no rows".into()));
    }
    curve.validate()?;
    let n = curve.len();
    let xs: Vec<f64> = (1..=n).map(|t| if options.log_x { (t as f64).ln() } else { t as f64 }).collect();
    let (x_lo, x_hi) = (xs[0], xs[n - 1]);
    let mut y_lo = curve.q25.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let mut y_hi = curve.q75.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        return Err(Error::Data("curve contains non-finite values".into()));
    }
    if y_hi - y_lo < 1e-12 {
        y_hi += 1.0;
        y_lo -= 1.0;
    }
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / x_span * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    if let Some(title) = &options.title {
        writeln!(w, r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    }

    let mut band = String::new();
    for (i, x) in xs.iter().enumerate() {
        write!(band, "{:.2},{:.2} ", px(*x), py(curve.q75[i])).unwrap();
    }
    for (i, x) in xs.iter().enumerate().rev() {
        write!(band, "{:.2},{:.2} ", px(*x), py(curve.q25[i])).unwrap();
    }
    writeln!(w, r##"<polygon class="band" points="{}" fill="#4a7ebb" fill-opacity="0.25" stroke="none"/>"##, band.trim_end()).unwrap();

    let mut d = String::new();
    for (i, x) in xs.iter().enumerate() {
        write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(*x), py(curve.median[i])).unwrap();
    }
    writeln!(w, r##"<path class="median" d="{d}" fill="none" stroke="#1f3f77" stroke-width="1.5"/>"##).unwrap();

    // Axes and ticks.
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#).unwrap();
    writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#).unwrap();
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let xv = x_lo + frac * (x_hi - x_lo);
        let slot = if options.log_x { xv.exp() } else { xv };
        let x = px(xv);
        writeln!(w, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#, y0 + 18.0, label(slot.round())).unwrap();
        let yv = y_lo + frac * (y_hi - y_lo);
        let y = py(yv);
        writeln!(w, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0).unwrap();
        writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#, x0 - 8.0, y + 4.0, label(yv)).unwrap();
    }
    let x_label = if options.log_x { "time slot (log scale)" } else { "time slot" };
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{x_label}</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0).unwrap();
    writeln!(w, r#"<text x="15" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})">regret</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0).unwrap();
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RegretCurve {
        RegretCurve { median: vec![0.0, 1.0, 1.5], q25: vec![0.0, 0.5, 1.0], q75: vec![0.0, 2.0, 2.5] }
    }

    #[test]
    fn one_median_path_and_band() {
        let svg = render_svg(&toy(), &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("time slot") && svg.contains("regret"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn deterministic_and_log_axis() {
        let opts = PlotOptions { log_x: true, title: Some("a < b".into()) };
        let a = render_svg(&toy(), &opts).unwrap();
        assert_eq!(a, render_svg(&toy(), &opts).unwrap());
        assert!(a.contains("log scale") && a.contains("a &lt; b"));
    }

    #[test]
    fn rejects_inverted_band() {
        let bad = RegretCurve { median: vec![1.0], q25: vec![2.0], q75: vec![0.5] };
        assert!(matches!(render_svg(&bad, &PlotOptions::default()), Err(Error::Data(_))));
    }
}
