//! Minimal SVG plotting. Coordinates are written with fixed precision so the
//! same data always produce the same bytes.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub width: f64,
    pub opacity: f64,
    pub label: Option<String>,
    pub dashed: bool,
}

impl Series {
    pub fn line(points: Vec<(f64, f64)>, color: &str) -> Self {
        Series {
            points,
            color: color.to_string(),
            width: 1.5,
            opacity: 1.0,
            label: None,
            dashed: false,
        }
    }

    pub fn labelled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn thin(mut self, width: f64, opacity: f64) -> Self {
        self.width = width;
        self.opacity = opacity;
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Clone, Copy)]
struct Axes {
    rect: Rect,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Axes {
    fn new(rect: Rect, xr: (f64, f64), yr: (f64, f64)) -> Self {
        Axes {
            rect,
            xr: widen(xr),
            yr: widen(yr),
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.rect.x + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.rect.w
    }

    fn py(&self, y: f64) -> f64 {
        self.rect.y + self.rect.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.rect.h
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        let d = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - d, hi + d)
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad((lo, hi): (f64, f64), frac: f64) -> (f64, f64) {
    let d = (hi - lo) * frac;
    (lo - d, hi + d)
}

/// Roughly five round tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (lo, hi) = widen((lo, hi));
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Self {
        Canvas {
            width,
            height,
            body: String::new(),
        }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, rotate: bool, s: &str) {
        let rot = if rotate {
            format!(" transform=\"rotate(-90 {x:.2} {y:.2})\"")
        } else {
            String::new()
        };
        writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" text-anchor=\"{anchor}\"{rot}>{}</text>",
            esc(s)
        )
        .unwrap();
    }

    fn frame(&mut self, ax: &Axes, xlabel: &str, ylabel: &str, xticks: bool, yticks: bool) {
        let r = ax.rect;
        writeln!(
            self.body,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333\"/>",
            r.x, r.y, r.w, r.h
        )
        .unwrap();
        for t in ticks(ax.xr.0, ax.xr.1) {
            let x = ax.px(t);
            writeln!(
                self.body,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>",
                r.y + r.h,
                r.y + r.h + 4.0
            )
            .unwrap();
            if xticks {
                self.text(x, r.y + r.h + 16.0, 10.0, "middle", false, &label(t));
            }
        }
        for t in ticks(ax.yr.0, ax.yr.1) {
            let y = ax.py(t);
            writeln!(
                self.body,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#333\"/>",
                r.x - 4.0,
                r.x
            )
            .unwrap();
            if yticks {
                self.text(r.x - 6.0, y + 3.5, 10.0, "end", false, &label(t));
            }
        }
        if !xlabel.is_empty() {
            self.text(r.x + r.w / 2.0, r.y + r.h + 36.0, 12.0, "middle", false, xlabel);
        }
        if !ylabel.is_empty() {
            let (x, y) = (r.x - 62.0, r.y + r.h / 2.0);
            self.text(x, y, 12.0, "middle", true, ylabel);
        }
    }

    fn polyline(&mut self, ax: &Axes, s: &Series) {
        if s.points.is_empty() {
            return;
        }
        let mut pts = String::new();
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                write!(pts, "{:.2},{:.2} ", ax.px(x), ax.py(y)).unwrap();
            }
        }
        let dash = if s.dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-opacity=\"{}\"{dash}/>",
            pts.trim_end(),
            s.color,
            s.width,
            s.opacity
        )
        .unwrap();
    }

    fn dots(&mut self, ax: &Axes, points: &[(f64, f64)], color: &str) {
        for &(x, y) in points {
            writeln!(
                self.body,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"{color}\" fill-opacity=\"0.5\"/>",
                ax.px(x),
                ax.py(y)
            )
            .unwrap();
        }
    }

    fn bars(&mut self, ax: &Axes, edges: &[f64], heights: &[f64], color: &str) {
        for (i, &h) in heights.iter().enumerate() {
            let (x0, x1) = (ax.px(edges[i]), ax.px(edges[i + 1]));
            let (y0, y1) = (ax.py(h), ax.py(0.0));
            writeln!(
                self.body,
                "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.6\"/>",
                (x1 - x0).max(0.0),
                (y1 - y0).max(0.0)
            )
            .unwrap();
        }
    }

    fn legend(&mut self, ax: &Axes, series: &[Series]) {
        let mut y = ax.rect.y + 14.0;
        let x = ax.rect.x + ax.rect.w - 150.0;
        for s in series {
            if let Some(l) = &s.label {
                writeln!(
                    self.body,
                    "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
                    y - 4.0,
                    x + 18.0,
                    y - 4.0,
                    s.color
                )
                .unwrap();
                self.text(x + 24.0, y, 11.0, "start", false, l);
                y += 15.0;
            }
        }
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Single-panel line plot.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let mut c = Canvas::new(720.0, 460.0);
    let rect = Rect {
        x: 90.0,
        y: 40.0,
        w: 600.0,
        h: 360.0,
    };
    let xr = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = pad(extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))), 0.04);
    let ax = Axes::new(rect, xr, yr);
    c.text(rect.x + rect.w / 2.0, 24.0, 14.0, "middle", false, title);
    c.frame(&ax, xlabel, ylabel, true, true);
    for s in series {
        c.polyline(&ax, s);
    }
    c.legend(&ax, series);
    c.finish()
}

/// Density-normalised histogram of `values` with `bins` equal bins on `range`.
pub fn histogram(values: &[f64], range: (f64, f64), bins: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = widen(range);
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
    let mut counts = vec![0.0; bins];
    for &v in values {
        if v >= lo && v <= hi {
            let i = (((v - lo) / w) as usize).min(bins - 1);
            counts[i] += 1.0;
        }
    }
    let n = values.len().max(1) as f64;
    (edges, counts.into_iter().map(|c| c / (n * w)).collect())
}

/// Pairwise scatter plots below the diagonal and marginal histograms on it.
/// `columns[j]` holds the draws of parameter `names[j]`.
pub fn scatter_matrix(title: &str, names: &[String], columns: &[Vec<f64>]) -> String {
    let d = names.len();
    let cell = 180.0;
    let gap = 14.0;
    let left = 100.0;
    let top = 40.0;
    let size = left + d as f64 * (cell + gap) + 20.0;
    let mut c = Canvas::new(size, size + 20.0);
    c.text(size / 2.0, 24.0, 14.0, "middle", false, title);
    let ranges: Vec<(f64, f64)> = columns.iter().map(|v| widen(extent(v.iter().copied()))).collect();
    for i in 0..d {
        for j in 0..=i {
            let rect = Rect {
                x: left + j as f64 * (cell + gap),
                y: top + i as f64 * (cell + gap),
                w: cell,
                h: cell,
            };
            let xlabel = if i + 1 == d { names[j].as_str() } else { "" };
            if i == j {
                let (edges, h) = histogram(&columns[i], ranges[i], 30);
                let hmax = h.iter().copied().fold(0.0, f64::max);
                let ax = Axes::new(rect, ranges[i], (0.0, 1.05 * hmax));
                c.bars(&ax, &edges, &h, PALETTE[0]);
                c.frame(&ax, xlabel, "", i + 1 == d, false);
            } else {
                let ax = Axes::new(rect, ranges[j], ranges[i]);
                let pts: Vec<(f64, f64)> = columns[j].iter().copied().zip(columns[i].iter().copied()).collect();
                c.dots(&ax, &pts, PALETTE[0]);
                let ylabel = if j == 0 { names[i].as_str() } else { "" };
                c.frame(&ax, xlabel, "", i + 1 == d, j == 0);
                if !ylabel.is_empty() {
                    c.text(rect.x - 62.0, rect.y + rect.h / 2.0, 12.0, "middle", true, ylabel);
                }
            }
        }
    }
    c.finish()
}

/// Every `k`-th point, keeping at most about `max` points.
pub fn decimate<T: Clone>(values: &[T], max: usize) -> Vec<T> {
    let stride = values.len().div_ceil(max.max(1)).max(1);
    values.iter().step_by(stride).cloned().collect()
}
