//! Minimal SVG line charts for trajectories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::system::CoordinateLabels;

/// Traces longer than this are decimated before drawing.
pub const MAX_POINTS: usize = 2000;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 240.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self { label: label.into(), values }
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn decimated_indices(len: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride(len)).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    fn py(&self, v: f64) -> f64 {
        self.top + (self.y.1 - v) / (self.y.1 - self.y.0) * self.height
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            self.left, self.top, self.width, self.height
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (gx, gy) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r##"<line x1="{gx:.1}" y1="{:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#ddd"/>"##,
                self.top,
                self.top + self.height
            );
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#ddd"/>"##,
                self.left,
                self.left + self.width
            );
            let _ = writeln!(
                out,
                r#"<text x="{gx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                self.top + self.height + 15.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                self.left - 5.0,
                gy + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
            self.left + self.width / 2.0,
            self.top - 10.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            self.left + self.width / 2.0,
            self.top + self.height + 32.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="15" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
            self.top + self.height / 2.0,
            self.top + self.height / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str) {
        let mut pts = String::new();
        for i in decimated_indices(xs.len().min(ys.len())) {
            if xs[i].is_finite() && ys[i].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.px(xs[i]), self.py(ys[i]));
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
    }

    fn legend(&self, out: &mut String, labels: &[&str]) {
        for (i, label) in labels.iter().enumerate() {
            let y = self.top + 14.0 + 15.0 * i as f64;
            let x = self.left + self.width - 110.0;
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#,
                x + 20.0,
                COLORS[i % COLORS.len()]
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                x + 25.0,
                y + 4.0,
                escape(label)
            );
        }
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn document(height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn frame(top: f64, x: (f64, f64), y: (f64, f64)) -> Frame {
    Frame {
        left: MARGIN_LEFT,
        top: top + MARGIN_TOP,
        width: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        height: PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        x,
        y,
    }
}

/// All series on one set of axes against time.
pub fn time_chart(title: &str, times: &[f64], series: &[Series]) -> String {
    let f = frame(0.0, range(times.iter().copied()), range(series.iter().flat_map(|s| s.values.iter().copied())));
    let mut body = String::new();
    f.axes(&mut body, title, "t [s]", "");
    for (i, s) in series.iter().enumerate() {
        f.polyline(&mut body, times, &s.values, COLORS[i % COLORS.len()]);
    }
    f.legend(&mut body, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    document(PANEL_HEIGHT, &body)
}

/// One panel per series, stacked top to bottom in the given order.
pub fn stacked_chart(times: &[f64], series: &[Series]) -> String {
    let xr = range(times.iter().copied());
    let mut body = String::new();
    for (i, s) in series.iter().enumerate() {
        let f = frame(i as f64 * PANEL_HEIGHT, xr, range(s.values.iter().copied()));
        f.axes(&mut body, &s.label, "t [s]", &s.label);
        f.polyline(&mut body, times, &s.values, COLORS[i % COLORS.len()]);
    }
    document(PANEL_HEIGHT * series.len().max(1) as f64, &body)
}

/// Parametric plot of `ys` against `xs` with a circle at the start and a
/// cross at the end.
pub fn plane_chart(title: &str, xs: &[f64], ys: &[f64], xlabel: &str, ylabel: &str) -> String {
    let f = frame(0.0, range(xs.iter().copied()), range(ys.iter().copied()));
    let mut body = String::new();
    f.axes(&mut body, title, xlabel, ylabel);
    f.polyline(&mut body, xs, ys, COLORS[0]);
    if let (Some(&x0), Some(&y0)) = (xs.first(), ys.first()) {
        let _ = writeln!(
            body,
            r##"<circle class="start" cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="#2ca02c" stroke-width="2"/>"##,
            f.px(x0),
            f.py(y0)
        );
    }
    if let (Some(&x1), Some(&y1)) = (xs.last(), ys.last()) {
        let (cx, cy) = (f.px(x1), f.py(y1));
        let _ = writeln!(
            body,
            r##"<path class="end" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#d62728" stroke-width="2"/>"##,
            cx - 4.0,
            cy - 4.0,
            cx + 4.0,
            cy + 4.0,
            cx - 4.0,
            cy + 4.0,
            cx + 4.0,
            cy - 4.0
        );
    }
    document(PANEL_HEIGHT, &body)
}

fn write(dir: &Path, name: &str, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, svg).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())))
    })?;
    written.push(path);
    Ok(())
}

/// Writes the time traces of the shape and cyclic variables, a stacked panel
/// view (shape first, then cyclic), and for two cyclic variables a plane plot.
/// Returns the paths written.
pub fn emit_plots(traj: &Trajectory, labels: &CoordinateLabels, dir: &Path) -> Result<Vec<PathBuf>> {
    if traj.is_empty() {
        return Err(Error::validation("cannot plot an empty trajectory"));
    }
    std::fs::create_dir_all(dir)?;
    let shape: Vec<Series> = (0..traj.dims.shape())
        .map(|a| Series::new(labels.shape[a].clone(), traj.shape_series(a)))
        .collect();
    let cyclic: Vec<Series> = (0..traj.dims.r())
        .map(|a| Series::new(labels.cyclic[a].clone(), traj.cyclic_series(a)))
        .collect();
    let mut written = Vec::new();
    write(
        dir,
        &format!("{}_time.svg", labels.shape_stem),
        time_chart("actuated variables", &traj.times, &shape),
        &mut written,
    )?;
    write(
        dir,
        &format!("{}_time.svg", labels.cyclic_stem),
        time_chart("cyclic variables", &traj.times, &cyclic),
        &mut written,
    )?;
    if cyclic.len() == 2 {
        write(
            dir,
            &format!("{}_plane.svg", labels.cyclic_stem),
            plane_chart(
                "cyclic variables",
                &cyclic[0].values,
                &cyclic[1].values,
                &cyclic[0].label,
                &cyclic[1].label,
            ),
            &mut written,
        )?;
    }
    let stacked: Vec<Series> = shape.into_iter().chain(cyclic).collect();
    write(dir, "stacked_time.svg", stacked_chart(&traj.times, &stacked), &mut written)?;
    Ok(written)
}
