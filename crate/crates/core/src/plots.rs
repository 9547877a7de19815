//! Hand-emitted SVG figures: per-method MAE boxplots, method-vs-method MAE
//! scatters, and Shapley bar charts for selected observations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::engine::Explanation;
use crate::error::Result;
use crate::evaluation::{quantile_type7, EvaluationReport};

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const TRUTH_COLOR: &str = "#222222";

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn file_stem(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" {extra}/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="{stroke}"/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{fill}" fill-opacity="0.8"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(text)
        );
    }

    fn vertical_text(&mut self, x: f64, y: f64, size: f64, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" font-size="{size}" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
            escape(text)
        );
    }

    fn finish(self) -> String {
        format!(
            concat!(
                r#"<?xml version="1.0" encoding="UTF-8"?>"#,
                "\n",
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
                "\n",
                r#"<rect width="100%" height="100%" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Linear map from a data range onto a pixel range.
#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        Self { lo, hi, from, to }
    }

    fn padded(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let pad = 0.05 * (hi - lo).max(1e-12);
        Self::new(lo - pad, hi + pad, from, to)
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self, count: usize) -> Vec<f64> {
        let raw = (self.hi - self.lo) / count as f64;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn y_axis(svg: &mut Svg, scale: &Scale, x: f64, x_end: f64, label: &str) {
    svg.line(x, scale.from, x, scale.to, "black", "");
    for t in scale.ticks(6) {
        let y = scale.map(t);
        svg.line(x - 4.0, y, x, y, "black", "");
        svg.line(x, y, x_end, y, "#dddddd", "");
        svg.text(x - 6.0, y + 4.0, "end", 11.0, &tick_label(t));
    }
    svg.vertical_text(x - 45.0, (scale.from + scale.to) / 2.0, 13.0, label);
}

fn x_axis(svg: &mut Svg, scale: &Scale, y: f64, label: &str) {
    svg.line(scale.from, y, scale.to, y, "black", "");
    for t in scale.ticks(6) {
        let x = scale.map(t);
        svg.line(x, y, x, y + 4.0, "black", "");
        svg.text(x, y + 16.0, "middle", 11.0, &tick_label(t));
    }
    svg.text(
        (scale.from + scale.to) / 2.0,
        y + 36.0,
        "middle",
        13.0,
        label,
    );
}

/// Per-instance MAE boxplots, one box per method, ordered by overall MAE.
pub fn mae_boxplot(report: &EvaluationReport) -> String {
    let mut methods: Vec<_> = report.methods.iter().collect();
    methods.sort_by(|a, b| {
        a.overall_mae
            .total_cmp(&b.overall_mae)
            .then(a.method.cmp(&b.method))
    });
    let slot = 110.0;
    let (left, top, bottom) = (80.0, 40.0, 320.0);
    let width = left + slot * methods.len() as f64 + 20.0;
    let mut svg = Svg::new(width, 380.0);
    let max = methods
        .iter()
        .flat_map(|m| m.per_instance_mae.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    let y = Scale::padded(0.0, max, bottom, top);
    svg.text(
        width / 2.0,
        24.0,
        "middle",
        15.0,
        "Per-instance MAE against the true Shapley values",
    );
    y_axis(
        &mut svg,
        &y,
        left,
        width - 20.0,
        "MAE (Shapley value units)",
    );
    svg.line(left, bottom, width - 20.0, bottom, "black", "");
    for (i, m) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = left + slot * (i as f64 + 0.5);
        let mut sorted = m.per_instance_mae.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_type7(&sorted, 0.25);
        let med = quantile_type7(&sorted, 0.5);
        let q3 = quantile_type7(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let lo = sorted
            .iter()
            .copied()
            .find(|v| *v >= lo_fence)
            .unwrap_or(q1);
        let hi = sorted
            .iter()
            .rev()
            .copied()
            .find(|v| *v <= hi_fence)
            .unwrap_or(q3);
        svg.line(cx, y.map(lo), cx, y.map(q1), "black", "");
        svg.line(cx, y.map(q3), cx, y.map(hi), "black", "");
        svg.line(cx - 12.0, y.map(lo), cx + 12.0, y.map(lo), "black", "");
        svg.line(cx - 12.0, y.map(hi), cx + 12.0, y.map(hi), "black", "");
        svg.rect(
            cx - 30.0,
            y.map(q3),
            60.0,
            y.map(q1) - y.map(q3),
            color,
            "black",
        );
        svg.line(
            cx - 30.0,
            y.map(med),
            cx + 30.0,
            y.map(med),
            "black",
            r#"stroke-width="2""#,
        );
        for &v in sorted.iter().filter(|v| **v < lo_fence || **v > hi_fence) {
            svg.circle(cx, y.map(v), 2.5, "black");
        }
        svg.circle(cx, y.map(m.overall_mae), 3.5, "white");
        svg.text(cx, bottom + 18.0, "middle", 11.0, &m.method);
        svg.text(
            cx,
            bottom + 32.0,
            "middle",
            10.0,
            &format!("mean {:.3}", m.overall_mae),
        );
    }
    svg.text(
        width / 2.0,
        372.0,
        "middle",
        12.0,
        "Method (ordered by overall MAE; white dot = mean)",
    );
    svg.finish()
}

fn distance_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t).round() as u8;
    let g = (90.0 + 60.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
    let b = (220.0 - 190.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Per-instance MAE of method `first` against method `second`, coloured by
/// distance to the training center.
pub fn mae_scatter(report: &EvaluationReport, first: &str, second: &str) -> Option<String> {
    let a = report.method(first)?;
    let b = report.method(second)?;
    let (left, right, top, bottom) = (80.0, 420.0, 40.0, 380.0);
    let mut svg = Svg::new(560.0, 440.0);
    let max = a
        .per_instance_mae
        .iter()
        .chain(&b.per_instance_mae)
        .fold(0.0f64, |m, &v| m.max(v));
    let x = Scale::padded(0.0, max, left, right);
    let y = Scale::padded(0.0, max, bottom, top);
    svg.text(
        (left + right) / 2.0,
        24.0,
        "middle",
        15.0,
        &format!("Per-instance MAE: {first} vs {second}"),
    );
    y_axis(&mut svg, &y, left, right, &format!("MAE {second}"));
    x_axis(&mut svg, &x, bottom, &format!("MAE {first}"));
    let diag = max * 1.05;
    svg.line(
        x.map(0.0),
        y.map(0.0),
        x.map(diag),
        y.map(diag),
        "#888888",
        r#"stroke-dasharray="4 3""#,
    );
    let dmax = report.distance.iter().fold(0.0f64, |m, &v| m.max(v));
    let dmin = report.distance.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let span = (dmax - dmin).max(1e-12);
    for i in 0..a.per_instance_mae.len() {
        let c = distance_color((report.distance[i] - dmin) / span);
        svg.circle(
            x.map(a.per_instance_mae[i]),
            y.map(b.per_instance_mae[i]),
            3.0,
            &c,
        );
    }
    // legend
    let (lx, ly, lh) = (470.0, 80.0, 200.0);
    let steps = 20;
    for s in 0..steps {
        let t = s as f64 / (steps - 1) as f64;
        svg.rect(
            lx,
            ly + lh * (1.0 - t) - lh / steps as f64,
            16.0,
            lh / steps as f64 + 0.5,
            &distance_color(t),
            "none",
        );
    }
    svg.text(lx + 8.0, ly - 24.0, "middle", 11.0, "distance to");
    svg.text(lx + 8.0, ly - 11.0, "middle", 11.0, "train center");
    svg.text(lx + 20.0, ly + 4.0, "start", 10.0, &format!("{dmax:.2}"));
    svg.text(lx + 20.0, ly + lh, "start", 10.0, &format!("{dmin:.2}"));
    Some(svg.finish())
}

/// Observations whose predictions are lowest, closest to `φ₀`, and highest
/// (ties resolved by position).
pub fn select_observations(truth: &[Explanation]) -> Option<[usize; 3]> {
    if truth.is_empty() {
        return None;
    }
    let pick = |key: &dyn Fn(&Explanation) -> f64| {
        (0..truth.len())
            .min_by(|&a, &b| key(&truth[a]).total_cmp(&key(&truth[b])).then(a.cmp(&b)))
            .expect("non-empty")
    };
    Some([
        pick(&|e| e.prediction),
        pick(&|e| (e.prediction - e.phi0).abs()),
        pick(&|e| -e.prediction),
    ])
}

/// Grouped bars of true and estimated `φ_j` for three observations.
pub fn shapley_bars(
    truth: &[Explanation],
    estimates: &[(String, Vec<Explanation>)],
    selected: [usize; 3],
) -> String {
    let m = truth[0].phi.len();
    let series = 1 + estimates.len();
    let panel_w = (m as f64 * (series as f64 * 9.0 + 12.0)).max(260.0) + 90.0;
    let (top, bottom) = (70.0, 330.0);
    let legend_h = 18.0 * series as f64;
    let width = panel_w * 3.0 + 20.0;
    let mut svg = Svg::new(width, bottom + 60.0 + legend_h);
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for &i in &selected {
        for v in truth[i]
            .phi
            .iter()
            .chain(estimates.iter().flat_map(|(_, e)| e[i].phi.iter()))
        {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let y = Scale::padded(lo, hi, bottom, top);
    let captions = [
        "lowest prediction",
        "prediction closest to phi0",
        "highest prediction",
    ];
    svg.text(
        width / 2.0,
        22.0,
        "middle",
        15.0,
        "True and estimated Shapley values",
    );
    for (p, &obs) in selected.iter().enumerate() {
        let left = 70.0 + panel_w * p as f64;
        let right = left + panel_w - 90.0;
        let t = &truth[obs];
        svg.text(
            (left + right) / 2.0,
            44.0,
            "middle",
            12.0,
            &format!(
                "obs {} ({}): f(x*) = {:.3}, phi0 = {:.3}",
                t.observation, captions[p], t.prediction, t.phi0
            ),
        );
        y_axis(&mut svg, &y, left, right, "Shapley value");
        let zero = y.map(0.0);
        svg.line(left, zero, right, zero, "black", "");
        let group = (right - left) / m as f64;
        let bar = (group - 8.0) / series as f64;
        for j in 0..m {
            let gx = left + group * j as f64 + 4.0;
            let values = std::iter::once((TRUTH_COLOR, t.phi[j])).chain(
                estimates
                    .iter()
                    .enumerate()
                    .map(|(k, (_, e))| (PALETTE[k % PALETTE.len()], e[obs].phi[j])),
            );
            for (s, (color, v)) in values.enumerate() {
                let yv = y.map(v);
                svg.rect(
                    gx + bar * s as f64,
                    yv.min(zero),
                    bar,
                    (yv - zero).abs(),
                    color,
                    "none",
                );
            }
            svg.text(
                gx + group / 2.0 - 4.0,
                bottom + 16.0,
                "middle",
                11.0,
                &format!("x{}", j + 1),
            );
        }
        svg.text(
            (left + right) / 2.0,
            bottom + 34.0,
            "middle",
            12.0,
            "Feature",
        );
    }
    let mut ly = bottom + 52.0;
    let names = std::iter::once(("truth", TRUTH_COLOR)).chain(
        estimates
            .iter()
            .enumerate()
            .map(|(k, (n, _))| (n.as_str(), PALETTE[k % PALETTE.len()])),
    );
    for (name, color) in names {
        svg.rect(80.0, ly - 10.0, 12.0, 12.0, color, "none");
        svg.text(98.0, ly, "start", 11.0, name);
        ly += 18.0;
    }
    svg.finish()
}

/// Writes every figure into `dir` and returns the paths, in write order.
pub fn emit_plots(
    report: &EvaluationReport,
    truth: &[Explanation],
    estimates: &[(String, Vec<Explanation>)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    write("mae_boxplot.svg".into(), mae_boxplot(report))?;
    for (i, a) in report.methods.iter().enumerate() {
        for b in &report.methods[i + 1..] {
            if let Some(svg) = mae_scatter(report, &a.method, &b.method) {
                write(
                    format!(
                        "mae_scatter_{}__{}.svg",
                        file_stem(&a.method),
                        file_stem(&b.method)
                    ),
                    svg,
                )?;
            }
        }
    }
    if let Some(selected) = select_observations(truth) {
        write(
            "shapley_bars.svg".into(),
            shapley_bars(truth, estimates, selected),
        )?;
    }
    Ok(written)
}
