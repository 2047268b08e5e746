//! Minimal SVG line plots and heat maps.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_CELLS_X: usize = 300;
const MAX_CELLS_Y: usize = 200;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: &'static str,
    pub dashed: bool,
    /// Draw points instead of a polyline.
    pub points: bool,
}

impl Series {
    pub fn line(x: Vec<f64>, y: Vec<f64>, color: &'static str) -> Self {
        Self {
            x,
            y,
            color,
            dashed: false,
            points: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    pub vlines: Vec<f64>,
    pub hlines: Vec<f64>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
}

fn axes(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t).unwrap();
    for x in ticks(f.x0, f.x1) {
        let p = f.px(x);
        writeln!(out, r#"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="black"/>"#, b + 5.0).unwrap();
        writeln!(out, r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 20.0, label(x)).unwrap();
    }
    for y in ticks(f.y0, f.y1) {
        let p = f.py(y);
        writeln!(out, r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/>"#, l - 5.0).unwrap();
        writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, p + 4.0, label(y)).unwrap();
    }
    writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 15.0, escape(xlabel)).unwrap();
    writeln!(
        out,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

fn draw_series(out: &mut String, f: &Frame, s: &Series) {
    let visible = |x: f64, y: f64| x >= f.x0 && x <= f.x1 && y >= f.y0 && y <= f.y1;
    if s.points {
        for (x, y) in s.x.iter().zip(&s.y) {
            if visible(*x, *y) {
                writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, f.px(*x), f.py(*y), s.color).unwrap();
            }
        }
        return;
    }
    let pts: Vec<String> = s
        .x
        .iter()
        .zip(&s.y)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(y.clamp(f.y0, f.y1))))
        .collect();
    let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
    writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
        pts.join(" "),
        s.color
    )
    .unwrap();
}

impl Plot {
    pub fn render(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.x.iter().copied()));
        let (y0, y1) = range(
            self.series
                .iter()
                .flat_map(|s| s.y.iter().copied())
                .chain(self.hlines.iter().copied()),
        );
        let pad = 0.05 * (y1 - y0);
        let f = Frame {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
        };
        let mut out = String::new();
        open(&mut out);
        axes(&mut out, &f, &self.title, &self.xlabel, &self.ylabel);
        for s in &self.series {
            draw_series(&mut out, &f, s);
        }
        for &x in &self.vlines {
            let p = f.px(x);
            writeln!(
                out,
                r#"<line x1="{p:.2}" y1="{TOP}" x2="{p:.2}" y2="{}" stroke="gray" stroke-dasharray="3 3"/>"#,
                HEIGHT - BOTTOM
            )
            .unwrap();
        }
        for &y in &self.hlines {
            let p = f.py(y);
            writeln!(
                out,
                r#"<line x1="{LEFT}" y1="{p:.2}" x2="{}" y2="{p:.2}" stroke="gray" stroke-dasharray="3 3"/>"#,
                WIDTH - RIGHT
            )
            .unwrap();
        }
        out.push_str("</svg>\n");
        out
    }
}

fn viridis(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let u = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + u * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heat map of `values[row][col]` over x (columns) and y (rows), sampled
/// down to at most 300 × 200 cells, with optional overlays.
pub fn heatmap(x: &[f64], y: &[f64], values: &dyn Fn(usize, usize) -> f64, overlays: &[Series], plot: &Plot) -> String {
    let (nx, ny) = (x.len(), y.len());
    let cols: Vec<usize> = sample_indices(nx, MAX_CELLS_X);
    let rows: Vec<usize> = sample_indices(ny, MAX_CELLS_Y);
    let (x0, x1) = range(x.iter().copied());
    let (y0, y1) = range(y.iter().copied());
    let f = Frame { x0, x1, y0, y1 };
    let (v0, v1) = range(rows.iter().flat_map(|&i| cols.iter().map(move |&k| values(i, k))));

    let mut out = String::new();
    open(&mut out);
    let cw = (WIDTH - LEFT - RIGHT) / cols.len() as f64;
    let ch = (HEIGHT - TOP - BOTTOM) / rows.len() as f64;
    for (a, &i) in rows.iter().enumerate() {
        for (b, &k) in cols.iter().enumerate() {
            let t = (values(i, k) - v0) / (v1 - v0);
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + b as f64 * cw,
                HEIGHT - BOTTOM - (a + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3,
                viridis(t)
            )
            .unwrap();
        }
    }
    axes(&mut out, &f, &plot.title, &plot.xlabel, &plot.ylabel);
    for s in overlays {
        draw_series(&mut out, &f, s);
    }
    out.push_str("</svg>\n");
    out
}

fn sample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * (n - 1) / (max - 1)).collect()
}
