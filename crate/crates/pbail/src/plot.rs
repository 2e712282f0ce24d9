//! Minimal SVG line charts for report emission. Output is a standalone SVG
//! document: fixed canvas, one polyline per series, labeled axes with a few
//! ticks, and a legend when more than one series is drawn.

use crate::error::{Error, Result};
use crate::Real;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f6fb2", "#d1495b", "#3a7d44", "#8d6a9f"];

/// One named line.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(Real, Real)],
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Evenly spaced axis ticks over [lo, hi].
fn ticks(lo: Real, hi: Real, n: usize) -> Vec<Real> {
    (0..=n).map(|i| lo + (hi - lo) * i as Real / n as Real).collect()
}

fn fmt_tick(v: Real) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders a line chart. Every series must be nonempty and all coordinates
/// finite.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::Config("chart needs nonempty series".into()));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    if all.clone().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Config("chart coordinates must be finite".into()));
    }
    let (mut x_lo, mut x_hi) = (Real::INFINITY, Real::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (Real::INFINITY, Real::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_lo == x_hi {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_lo == y_hi {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: Real| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: Real| MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    ));

    for t in ticks(y_lo, y_hi, 4) {
        let y = py(t);
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }
    for t in ticks(x_lo, x_hi, 5) {
        let x = px(t);
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            HEIGHT - MARGIN_B + 18.0,
            fmt_tick(t)
        ));
    }
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" \
         stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 10.0,
        esc(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        esc(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
    }
    if series.len() > 1 {
        for (i, s) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let y = MARGIN_T + 14.0 * i as f64;
            out.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
                MARGIN_L + 10.0,
                y
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>\n",
                MARGIN_L + 24.0,
                y + 9.0,
                esc(s.label)
            ));
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg_with_all_points() {
        let a = [(0.0, 0.1), (1000.0, 0.5), (2000.0, 0.4)];
        let b = [(0.0, -0.2), (1000.0, 0.0), (2000.0, 0.9)];
        let svg = line_chart(
            "rank correlation",
            "checkpoint step",
            "tau",
            &[
                Series { label: "full", points: &a },
                Series { label: "baseline", points: &b },
            ],
        )
        .unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.contains("rank correlation"));
        assert!(svg.contains("baseline"));
    }

    #[test]
    fn rejects_empty_and_non_finite_input() {
        assert!(line_chart("t", "x", "y", &[]).is_err());
        let empty: [(Real, Real); 0] = [];
        assert!(line_chart("t", "x", "y", &[Series { label: "a", points: &empty }]).is_err());
        let bad = [(0.0, Real::NAN)];
        assert!(line_chart("t", "x", "y", &[Series { label: "a", points: &bad }]).is_err());
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let flat = [(5.0, 1.0), (5.0, 1.0)];
        let svg = line_chart("flat", "x", "y", &[Series { label: "a", points: &flat }]).unwrap();
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn escapes_markup_in_labels() {
        let pts = [(0.0, 1.0), (1.0, 2.0)];
        let svg = line_chart(
            "a < b & c",
            "x",
            "y",
            &[Series { label: "s", points: &pts }],
        )
        .unwrap();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(!svg.contains("a < b"));
    }
}
