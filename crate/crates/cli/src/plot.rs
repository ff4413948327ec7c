//! Minimal SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub color: &'static str,
    pub stroke_width: f64,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Muted colour for per-trial curves.
pub const TRIAL_COLOR: &str = "#9aa7b8";
/// Highlight for the average curve.
pub const AVERAGE_COLOR: &str = "#d62728";

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let n = self
            .series
            .iter()
            .map(|s| s.values.len())
            .max()
            .unwrap_or(0);
        let (mut lo, mut hi) = self
            .series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 1.0;
            hi += 1.0;
        }
        let x_max = n.saturating_sub(1).max(1) as f64;
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let px = |i: f64| LEFT + plot_w * i / x_max;
        let py = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = WIDTH,
            h = HEIGHT
        );
        svg.push('\n');
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        // axes and grid
        let _ = writeln!(
            svg,
            r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#,
            l = LEFT,
            t = TOP,
            b = HEIGHT - BOTTOM,
            r = WIDTH - RIGHT
        );
        for k in 0..=TICKS {
            let v = lo + (hi - lo) * k as f64 / TICKS as f64;
            let y = num(py(v));
            let _ = writeln!(
                svg,
                r##"<path d="M{LEFT} {y} L{} {y}" stroke="#e0e0e0"/><text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end" dominant-baseline="middle">{}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                num(v)
            );
            let i = x_max * k as f64 / TICKS as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                num(px(i)),
                HEIGHT - BOTTOM + 16.0,
                i.round()
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let y = num(py(0.0));
            let _ = writeln!(
                svg,
                r#"<path d="M{LEFT} {y} L{} {y}" stroke="black" stroke-dasharray="4 3"/>"#,
                WIDTH - RIGHT
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{y}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
            escape(&self.y_label),
            y = TOP + plot_h / 2.0
        );

        for s in &self.series {
            if s.values.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, v) in s.values.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{} {}",
                    if i == 0 { "M" } else { " L" },
                    num(px(i as f64)),
                    num(py(*v))
                );
            }
            let _ = writeln!(
                svg,
                r#"<path d="{d}" stroke="{}" stroke-width="{}" fill="none"><title>{}</title></path>"#,
                s.color,
                s.stroke_width,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Per-index mean over curves of unequal length.
pub fn average_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let n = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|i| {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(i).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_handles_ragged_curves() {
        let avg = average_curve(&[vec![1.0, 2.0, 3.0], vec![3.0, 4.0]]);
        assert_eq!(avg, vec![2.0, 3.0, 3.0]);
        assert!(average_curve(&[]).is_empty());
    }

    #[test]
    fn svg_has_one_path_per_series() {
        let chart = LineChart {
            title: "a < b".into(),
            x_label: "frame".into(),
            y_label: "deg".into(),
            series: vec![
                Series {
                    label: "t0".into(),
                    values: vec![1.0, -1.0, 0.5],
                    color: TRIAL_COLOR,
                    stroke_width: 1.0,
                },
                Series {
                    label: "avg".into(),
                    values: vec![0.0, 0.0],
                    color: AVERAGE_COLOR,
                    stroke_width: 2.0,
                },
            ],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<title>").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg, chart.to_svg());
    }

    #[test]
    fn flat_and_empty_charts_render() {
        let chart = LineChart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series {
                label: "flat".into(),
                values: vec![2.0; 4],
                color: TRIAL_COLOR,
                stroke_width: 1.0,
            }],
        };
        assert!(!chart.to_svg().contains("NaN"));
        let empty = LineChart {
            series: vec![],
            ..chart
        };
        assert!(!empty.to_svg().contains("NaN"));
    }
}
