//! Minimal static SVG output: line charts, heatmaps and scatter plots.

use std::fmt::Write as _;

use super::curves::MetricCurve;
use super::procrustes::DistanceMatrix;
use super::stats::RegressionFit;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let fold = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (mut x0, mut x1) = fold(&mut xs.clone());
        let (mut y0, mut y1) = fold(&mut ys.clone());
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        Self {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x0 + f * (self.x1 - self.x0);
            let yv = self.y0 + f * (self.y1 - self.y0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#, self.px(xv), b + 16.0, xv);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#, l - 4.0, self.py(yv) + 4.0, yv);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
    }
}

/// Curves as solid polylines, with optional fitted lines dashed.
pub fn line_chart(title: &str, ylabel: &str, curves: &[MetricCurve], fits: &[Option<RegressionFit>]) -> String {
    let xs = curves.iter().flat_map(|c| c.xs());
    let ys = curves.iter().flat_map(|c| c.ys());
    let frame = Frame::new(xs, ys);
    let mut s = String::new();
    header(&mut s, W, H);
    frame.axes(&mut s, "test objects", ylabel);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.px(p.n_test_objects as f64), frame.py(p.mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, pts.join(" "));
        if let Some(Some(f)) = fits.get(i) {
            let (a, b) = (frame.x0, frame.x1);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                frame.px(a),
                frame.py(f.intercept + f.slope * a),
                frame.px(b),
                frame.py(f.intercept + f.slope * b)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            MARGIN + 10.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Yellow (similar) to red (different) heatmap.
pub fn heatmap(title: &str, m: &DistanceMatrix) -> String {
    let n = m.labels.len().max(1);
    let cell = (480.0 / n as f64).min(32.0);
    let left = 110.0;
    let top = 40.0;
    let w = left + cell * n as f64 + 20.0;
    let h = top + cell * n as f64 + 110.0;
    let max = m.max().max(f64::MIN_POSITIVE);
    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for (i, row) in m.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let f = (v / max).clamp(0.0, 1.0);
            let g = (255.0 * (1.0 - f)).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb(255,{g},0)"><title>{:.4}</title></rect>"#,
                left + cell * j as f64,
                top + cell * i as f64,
                v
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 4.0,
            top + cell * (i as f64 + 0.7),
            escape(&m.labels[i])
        );
    }
    for (j, l) in m.labels.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.6);
        let y = top + cell * n as f64 + 6.0;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" transform="rotate(60 {x:.1} {y:.1})">{}</text>"#, escape(l));
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot coloured by integer label.
pub fn scatter(title: &str, coords: &[[f64; 2]], labels: &[usize]) -> String {
    let frame = Frame::new(coords.iter().map(|c| c[0]), coords.iter().map(|c| c[1]));
    let mut s = String::new();
    header(&mut s, W, H);
    frame.axes(&mut s, "", "");
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    for (c, &l) in coords.iter().zip(labels) {
        let hue = (l * 47) % 360;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="hsl({hue},70%,45%)"/>"#,
            frame.px(c[0]),
            frame.py(c[1])
        );
    }
    s.push_str("</svg>\n");
    s
}
