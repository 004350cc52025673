//! Minimal standalone SVG renderer for the inspection and trajectory plots.
//!
//! Every plot is also written as CSV by the callers, so this renderer only
//! needs to produce readable standalone files: fixed canvas, linear scales,
//! a handful of ticks, and a small color cycle.

use crate::data::YearlyStats;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One polyline series.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

struct Scale {
    xlo: f64,
    xhi: f64,
    ylo: f64,
    yhi: f64,
}

impl Scale {
    fn from_bounds(xlo: f64, xhi: f64, ylo: f64, yhi: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs().max(1e-9);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (xlo, xhi) = pad(xlo, xhi);
        let (ylo, yhi) = pad(ylo, yhi);
        Self { xlo, xhi, ylo, yhi }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.xlo) / (self.xhi - self.xlo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.ylo) / (self.yhi - self.ylo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"25\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(scale: &Scale, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    s.push_str(&format!(
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=5 {
        let fx = scale.xlo + (scale.xhi - scale.xlo) * i as f64 / 5.0;
        let px = scale.x(fx);
        s.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{:.2}</text>\n",
            y0 + 5.0,
            y0 + 20.0,
            fx
        ));
        let fy = scale.ylo + (scale.yhi - scale.ylo) * i as f64 / 5.0;
        let py = scale.y(fy);
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{:.2}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fy
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(xlabel)
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    ));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Multi-series line chart.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut xlo, mut xhi, mut ylo, mut yhi) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    if !xlo.is_finite() {
        xlo = 0.0;
        xhi = 1.0;
        ylo = 0.0;
        yhi = 1.0;
    }
    let scale = Scale::from_bounds(xlo, xhi, ylo, yhi);
    let mut out = header(title);
    out.push_str(&axes(&scale, xlabel, ylabel));
    let show_legend = series.len() <= 6 && series.iter().all(|s| !s.label.is_empty());
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", scale.x(x), scale.y(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             opacity=\"{}\"/>\n",
            coords.join(" "),
            if series.len() > 6 { 0.45 } else { 0.9 }
        ));
        if show_legend {
            let ly = MARGIN_T + 16.0 * i as f64;
            out.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
                WIDTH - MARGIN_R - 150.0,
                ly,
                WIDTH - MARGIN_R - 132.0,
                ly + 6.0,
                escape(s.label)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram from precomputed bins.
pub fn histogram(title: &str, xlabel: &str, bins: &[(f64, f64, usize)]) -> String {
    let xlo = bins.first().map(|b| b.0).unwrap_or(0.0);
    let xhi = bins.last().map(|b| b.1).unwrap_or(1.0);
    let ymax = bins.iter().map(|b| b.2).max().unwrap_or(1) as f64;
    let scale = Scale::from_bounds(xlo, xhi, 0.0, ymax);
    let mut out = header(title);
    out.push_str(&axes(&scale, xlabel, "count"));
    for &(lo, hi, n) in bins {
        let x = scale.x(lo);
        let w = (scale.x(hi) - x).max(1.0) - 1.0;
        let y = scale.y(n as f64);
        let h = scale.y(0.0) - y;
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{w:.1}\" height=\"{h:.1}\" \
             fill=\"#1f77b4\" opacity=\"0.8\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Box-and-whisker panel per integer year.
pub fn boxplot(title: &str, xlabel: &str, ylabel: &str, stats: &[YearlyStats]) -> String {
    let filled: Vec<&YearlyStats> = stats.iter().filter(|s| s.n > 0).collect();
    if filled.is_empty() {
        return header(title) + "</svg>\n";
    }
    let xlo = filled.first().unwrap().year as f64 - 0.5;
    let xhi = filled.last().unwrap().year as f64 + 1.5;
    let ylo = filled.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
    let yhi = filled.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max);
    let scale = Scale::from_bounds(xlo, xhi, ylo, yhi);
    let mut out = header(title);
    out.push_str(&axes(&scale, xlabel, ylabel));
    for s in filled {
        let cx = scale.x(s.year as f64 + 0.5);
        let half = ((scale.x(1.0) - scale.x(0.0)).abs() * 0.3).clamp(2.0, 18.0);
        let (q1, q3) = (scale.y(s.q1), scale.y(s.q3));
        out.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            scale.y(s.min),
            scale.y(s.max)
        ));
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{q3:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"#aec7e8\" stroke=\"black\"/>\n",
            cx - half,
            2.0 * half,
            (q1 - q3).max(0.5)
        ));
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
             stroke=\"black\" stroke-width=\"2\"/>\n",
            cx - half,
            scale.y(s.median),
            cx + half,
            scale.y(s.median)
        ));
    }
    out.push_str("</svg>\n");
    out
}
