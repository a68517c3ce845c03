//! Minimal self-contained SVG charts: labelled scatter plots and line
//! charts. Styles are inline and only generic font families are used.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const N_TICKS: usize = 5;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (x0, x1) = padded_range(xs);
        let (y0, y1) = padded_range(ys);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        (WIDTH - MARGIN_RIGHT + MARGIN_LEFT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>"#
    );
    for k in 0..N_TICKS {
        let frac = k as f64 / (N_TICKS - 1) as f64;
        let xv = f.x0 + frac * (f.x1 - f.x0);
        let yv = f.y0 + frac * (f.y1 - f.y0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line class="tick" x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line class="tick" x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Scatter of labelled points with an optional `y = x` reference line.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, points: &[ScatterPoint], diagonal: bool) -> String {
    let xs = points.iter().map(|p| p.x);
    let ys = points.iter().map(|p| p.y);
    let mut frame = Frame::fit(xs.clone(), ys.clone());
    if diagonal {
        let lo = frame.x0.min(frame.y0);
        let hi = frame.x1.max(frame.y1);
        frame = Frame { x0: lo, x1: hi, y0: lo, y1: hi };
    }
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, xlabel, ylabel);
    if diagonal {
        let _ = writeln!(
            out,
            r##"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
            frame.px(frame.x0),
            frame.py(frame.y0),
            frame.px(frame.x1),
            frame.py(frame.y1)
        );
    }
    for (k, p) in points.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"><title>{}: ({}, {})</title></circle>"#,
            frame.px(p.x),
            frame.py(p.y),
            escape(&p.label),
            p.x,
            p.y
        );
    }
    legend(&mut out, points.iter().enumerate().map(|(k, p)| (p.label.as_str(), PALETTE[k % PALETTE.len()], false)));
    out.push_str("</svg>\n");
    out
}

/// Line chart; each series is drawn as a polyline with point markers.
pub fn line_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let frame = Frame::fit(xs.clone(), ys.clone());
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, xlabel, ylabel);
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}><title>{}</title></polyline>"#,
            pts.join(" "),
            s.color,
            escape(&s.name)
        );
    }
    legend(&mut out, series.iter().map(|s| (s.name.as_str(), s.color.as_str(), s.dashed)));
    out.push_str("</svg>\n");
    out
}

fn legend<'a>(out: &mut String, entries: impl Iterator<Item = (&'a str, &'a str, bool)>) {
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    out.push_str("<g class=\"legend\" font-size=\"11\">\n");
    for (k, (name, color, dashed)) in entries.enumerate() {
        let y = MARGIN_TOP + 8.0 + 16.0 * k as f64;
        let dash = if dashed { r#" stroke-dasharray="4 2""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"{dash}/><text x="{}" y="{}">{}</text>"#,
            x + 16.0,
            x + 21.0,
            y + 4.0,
            escape(name)
        );
    }
    out.push_str("</g>\n");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_structure() {
        let pts = vec![
            ScatterPoint { label: "a<b".into(), x: 0.1, y: 0.11 },
            ScatterPoint { label: "dx_bin".into(), x: -0.78, y: -0.781 },
        ];
        let svg = scatter_svg("LME vs GEE", "LME", "GEE", &pts, true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("class=\"diagonal\"").count(), 1);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("font-family=\"Arial"));
    }

    #[test]
    fn line_structure() {
        let series = vec![
            Series { name: "HC".into(), points: vec![(25.0, 0.1), (30.0, 0.05)], color: PALETTE[0].into(), dashed: false },
            Series { name: "SZ".into(), points: vec![(25.0, -0.6), (30.0, -0.65)], color: PALETTE[1].into(), dashed: true },
        ];
        let svg = line_svg("Outcome", "Age", "Y", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"tick\"").count(), 2 * N_TICKS);
        assert!(svg.contains("stroke-dasharray=\"6 4\""));
    }

    #[test]
    fn degenerate_ranges() {
        let svg = line_svg("t", "x", "y", &[]);
        assert!(svg.contains("</svg>"));
        let one = vec![ScatterPoint { label: "p".into(), x: 2.0, y: 2.0 }];
        assert!(!scatter_svg("t", "x", "y", &one, false).contains("NaN"));
    }
}
