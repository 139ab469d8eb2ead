//! Minimal static SVG line plots for quick-look output. Data emission is
//! the CSV files; these renders exist only so a fit can be eyeballed
//! without external tooling.

use std::io::Write;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const PALETTE: [&str; 6] = [
    "#4363d8", "#e6194b", "#3cb44b", "#f58231", "#911eb4", "#808000",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Axes<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

fn transform(v: f64, log: bool) -> Option<f64> {
    if log {
        (v > 0.0).then(|| v.log10())
    } else {
        v.is_finite().then_some(v)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let step = 10f64.powf((span / 4.0).log10().round());
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span && out.len() < 12 {
        out.push(t);
        t += step;
    }
    out
}

/// Render one multi-series line plot.
pub fn line_plot(path: &Path, axes: &Axes, series: &[Series]) -> std::io::Result<()> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if let (Some(x), Some(y)) = (transform(x, axes.log_x), transform(y, axes.log_y)) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        axes.title
    ));

    // frame
    out.push_str(&format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{w}\" height=\"{h}\" fill=\"none\" \
         stroke=\"#333\" stroke-width=\"1\"/>\n",
        M = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN
    ));

    for t in ticks(x_lo, x_hi) {
        let x = px(t);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"#ccc\" \
             stroke-width=\"0.5\"/>\n<text x=\"{x}\" y=\"{ty}\" text-anchor=\"middle\" \
             font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            y0 = MARGIN,
            y1 = HEIGHT - MARGIN,
            ty = HEIGHT - MARGIN + 16.0,
            label = tick_label(t, axes.log_x),
        ));
    }
    for t in ticks(y_lo, y_hi) {
        let y = py(t);
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"#ccc\" \
             stroke-width=\"0.5\"/>\n<text x=\"{tx}\" y=\"{ty}\" text-anchor=\"end\" \
             font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            x0 = MARGIN,
            x1 = WIDTH - MARGIN,
            tx = MARGIN - 6.0,
            ty = y + 4.0,
            label = tick_label(t, axes.log_y),
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 14.0,
        axes.x_label
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        axes.y_label
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(x, y)| {
                let x = transform(x, axes.log_x)?;
                let y = transform(y, axes.log_y)?;
                Some(format!("{:.2},{:.2}", px(x), py(y)))
            })
            .collect();
        if pts.len() > 1 {
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{label}</text>\n",
            x = WIDTH - MARGIN + 6.0,
            y = MARGIN + 16.0 * (i as f64 + 1.0),
            label = s.label
        ));
    }
    out.push_str("</svg>\n");

    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(t: f64, log: bool) -> String {
    if log {
        format!("1e{t:.0}")
    } else if t.abs() >= 1e4 || (t != 0.0 && t.abs() < 1e-3) {
        format!("{t:.2e}")
    } else {
        format!("{t}")
    }
}
