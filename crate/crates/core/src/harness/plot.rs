//! Minimal static SVG line charts: stacked panels, shared x axis, optional
//! symmetric error bars.

use std::fmt::Write;

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Half-widths of error bars, one per point.
    pub errors: Option<Vec<f64>>,
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, color: &'static str, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            color,
            xs,
            ys,
            errors: None,
            markers: false,
        }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self.markers = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 50.0;

/// Keeps at most `max_points` evenly strided samples (always including the last).
pub fn decimate(xs: &[f64], ys: &[f64], max_points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len().min(ys.len());
    if n <= max_points || max_points < 2 {
        return (xs[..n].to_vec(), ys[..n].to_vec());
    }
    let stride = n.div_ceil(max_points - 1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    (
        idx.iter().map(|&i| xs[i]).collect(),
        idx.iter().map(|&i| ys[i]).collect(),
    )
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders stacked panels into a standalone SVG document.
pub fn render(title: &str, x_label: &str, panels: &[Panel], banner: Option<&str>) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP) + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    if let Some(text) = banner {
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="34" fill="#b00" text-anchor="middle">{}</text>"##,
            WIDTH / 2.0,
            escape(text)
        );
    }

    for (i, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP);
        let (x0, x1) = bounds(panel.series.iter().flat_map(|s| s.xs.iter().copied()));
        let (y0, y1) = bounds(panel.series.iter().flat_map(|s| {
            let errs = s.errors.clone().unwrap_or_else(|| vec![0.0; s.ys.len()]);
            s.ys.iter()
                .zip(errs)
                .flat_map(|(&y, e)| [y - e, y + e])
                .collect::<Vec<_>>()
        }));
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| top + PANEL_HEIGHT - (y - y0) / (y1 - y0) * PANEL_HEIGHT;

        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            top - 6.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            top + PANEL_HEIGHT / 2.0,
            top + PANEL_HEIGHT / 2.0,
            escape(&panel.y_label)
        );
        for k in 0..=4 {
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 4.0,
                sy(fy) + 4.0,
                tick(fy)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                sx(fx),
                top + PANEL_HEIGHT + 14.0,
                tick(fx)
            );
        }

        for (j, s) in panel.series.iter().enumerate() {
            let points: Vec<String> =
                s.xs.iter()
                    .zip(&s.ys)
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                s.color,
                points.join(" ")
            );
            if let Some(errs) = &s.errors {
                for ((&x, &y), &e) in s.xs.iter().zip(&s.ys).zip(errs) {
                    let (px, lo, hi) = (sx(x), sy(y - e), sy(y + e));
                    let _ = writeln!(
                        svg,
                        r#"<path d="M{px:.2},{lo:.2}V{hi:.2}M{:.2},{lo:.2}h6M{:.2},{hi:.2}h6" stroke="{}"/>"#,
                        px - 3.0,
                        px - 3.0,
                        s.color
                    );
                }
            }
            if s.markers {
                for (&x, &y) in s.xs.iter().zip(&s.ys) {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                        sx(x),
                        sy(y),
                        s.color
                    );
                }
            }
            let ly = top + 14.0 + 16.0 * j as f64;
            let lx = MARGIN_LEFT + plot_w + 10.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#,
                lx + 18.0,
                s.color
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        height - 6.0,
        escape(x_label)
    );
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
