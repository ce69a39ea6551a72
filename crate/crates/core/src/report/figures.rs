use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Error;
use crate::causal::Phase;
use crate::evaluation::{
    AccuracyScatter, BalanceTable, CalibrationCurve, CurveSeries, DistributionMode, DistributionSeries,
    IgnorabilityReport, PhaseDiagnostics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Line,
    Points,
    Bars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandAxis {
    X,
    Y,
}

/// Lower and upper bound for every point of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub axis: BandAxis,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub style: Style,
    pub points: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
}

/// A fixed guide line such as the chance diagonal or a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub label: String,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub dotted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoveRow {
    pub name: String,
    pub smd_unweighted: f64,
    pub smd_weighted: f64,
}

/// Plot data of one figure. The SVG is rendered from this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    pub name: String,
    pub kind: String,
    pub phase: Phase,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub references: Vec<Reference>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub covariates: Vec<LoveRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub annotations: Vec<String>,
}

impl Figure {
    fn new(name: &str, kind: &str, phase: Phase, title: &str, x_label: &str, y_label: &str) -> Self {
        Figure {
            name: format!("{name}_{phase}"),
            kind: kind.into(),
            phase,
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            references: Vec::new(),
            covariates: Vec::new(),
            annotations: Vec::new(),
        }
    }
}

fn diagonal(label: &str) -> Reference {
    Reference {
        label: label.into(),
        from: [0.0, 0.0],
        to: [1.0, 1.0],
        dotted: true,
    }
}

fn summary_text(label: &str, s: &CurveSeries) -> Option<String> {
    Some(format!("{label} {:.3} ± {:.3}", s.summary_mean?, s.summary_std.unwrap_or(0.0)))
}

fn pooled(label: &str, s: &CurveSeries) -> Series {
    let p = &s.pooled;
    Series {
        label: label.into(),
        style: Style::Line,
        points: p.grid.iter().zip(&p.mean).map(|(&x, &y)| [x, y]).collect(),
        band: Some(Band {
            axis: BandAxis::Y,
            lower: p.mean.iter().zip(&p.std).map(|(m, s)| m - s).collect(),
            upper: p.mean.iter().zip(&p.std).map(|(m, s)| m + s).collect(),
        }),
    }
}

/// Love plot: covariates in table order, one marker per weighting.
pub fn love_plot(table: &BalanceTable, phase: Phase) -> Figure {
    let mut f = Figure::new("balance", "love_plot", phase, "Covariate balance", "absolute SMD", "covariate");
    f.covariates = table
        .rows
        .iter()
        .map(|r| LoveRow {
            name: r.covariate.clone(),
            smd_unweighted: r.unweighted_mean,
            smd_weighted: r.weighted_mean,
        })
        .collect();
    let n = table.rows.len() as f64;
    let marker = |label: &str, pick: fn(&LoveRow) -> f64| Series {
        label: label.into(),
        style: Style::Points,
        points: f.covariates.iter().enumerate().map(|(i, r)| [pick(r), n - 1.0 - i as f64]).collect(),
        band: None,
    };
    let series = vec![marker("unweighted", |r| r.smd_unweighted), marker("weighted", |r| r.smd_weighted)];
    f.series = series;
    f.references.push(Reference {
        label: format!("threshold {}", table.threshold),
        from: [table.threshold, -0.5],
        to: [table.threshold, n - 0.5],
        dotted: true,
    });
    let flagged = table.flagged();
    if !flagged.is_empty() {
        f.annotations.push(format!("above threshold: {}", flagged.join(", ")));
    }
    f
}

pub fn calibration_plot(curve: &CalibrationCurve, phase: Phase, title: &str, name: &str) -> Figure {
    let mut f = Figure::new(name, "calibration", phase, title, "mean predicted", "observed frequency");
    f.series.push(Series {
        label: "bins".into(),
        style: Style::Points,
        points: curve.bins.iter().map(|b| [b.r_mean, b.p_observed]).collect(),
        band: Some(Band {
            axis: BandAxis::X,
            lower: curve.bins.iter().map(|b| b.ci_low).collect(),
            upper: curve.bins.iter().map(|b| b.ci_high).collect(),
        }),
    });
    f.references.push(diagonal("perfect calibration"));
    if curve.skipped > 0 {
        f.annotations.push(format!("{} empty bins skipped", curve.skipped));
    }
    f
}

pub fn distribution_plot(series: &DistributionSeries, phase: Phase) -> Figure {
    let y_label = match series.mode {
        DistributionMode::Histogram => "density",
        DistributionMode::PdfReflected => "density (treated reflected)",
        DistributionMode::Cdf => "cumulative fraction",
    };
    let mut f = Figure::new("propensity_distribution", "distribution", phase, "Propensity by arm", "propensity", y_label);
    let centers: Vec<f64> = series.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    for (arm, values) in series.values.iter().enumerate() {
        f.series.push(Series {
            label: format!("arm {arm}"),
            style: if series.mode == DistributionMode::Cdf { Style::Line } else { Style::Bars },
            points: centers.iter().zip(values).map(|(&x, &y)| [x, y]).collect(),
            band: None,
        });
    }
    for s in &series.suspects {
        f.annotations
            .push(format!("bin [{}, {}) holds {} samples of arm {} only", series.edges[s.bin], series.edges[s.bin + 1], s.count, s.arm));
    }
    f
}

/// Propensity, expected and weighted ROC on one panel with the chance line.
pub fn roc_panel(d: &PhaseDiagnostics) -> Figure {
    let mut f = Figure::new("roc", "roc_panel", d.phase, "Propensity ROC", "false positive rate", "true positive rate");
    for (label, s) in [("propensity", &d.roc), ("expected", &d.expected_roc), ("weighted", &d.weighted_roc)] {
        if !s.pooled.grid.is_empty() {
            f.series.push(pooled(label, s));
        }
        f.annotations.extend(summary_text(&format!("{label} AUC"), s));
    }
    f.references.push(diagonal("chance"));
    if let Some(m) = d.roc.summary_mean {
        if !(0.7..=0.8).contains(&m) {
            f.annotations
                .push(format!("propensity AUC {m:.3} lies outside the advisory range 0.7 to 0.8"));
        }
    }
    f
}

pub fn pr_plot(s: &CurveSeries, phase: Phase) -> Figure {
    let mut f = Figure::new("pr", "pr", phase, "Propensity precision-recall", "recall", "precision");
    if !s.pooled.grid.is_empty() {
        f.series.push(pooled("propensity", s));
    }
    f.annotations.extend(summary_text("average precision", s));
    f
}

pub fn outcome_roc_plot(s: &CurveSeries, phase: Phase) -> Figure {
    let mut f = Figure::new("outcome_roc", "roc", phase, "Outcome ROC", "false positive rate", "true positive rate");
    if !s.pooled.grid.is_empty() {
        f.series.push(pooled("factual", s));
    }
    f.annotations.extend(summary_text("AUC", s));
    f.references.push(diagonal("chance"));
    f
}

pub fn accuracy_plot(a: &AccuracyScatter, phase: Phase) -> Figure {
    let y_label = if a.residual_mode { "predicted - observed" } else { "observed" };
    let mut f = Figure::new("accuracy", "accuracy_scatter", phase, "Outcome accuracy", "predicted", y_label);
    for arm in 0..2 {
        f.series.push(Series {
            label: format!("arm {arm}"),
            style: Style::Points,
            points: a.points.iter().filter(|p| p.arm == arm).map(|p| [p.x, p.y]).collect(),
            band: None,
        });
        if let Some(r2) = a.r2[arm] {
            f.annotations
                .push(format!("arm {arm} r2 {r2:.3} ± {:.3}", a.r2_fold_std[arm].unwrap_or(0.0)));
        }
    }
    if !a.residual_mode {
        let (lo, hi) = a
            .points
            .iter()
            .flat_map(|p| [p.x, p.y])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if lo.is_finite() {
            f.references.push(Reference {
                label: "identity".into(),
                from: [lo, lo],
                to: [hi, hi],
                dotted: true,
            });
        }
    }
    f
}

pub fn counterfactual_plot(r: &IgnorabilityReport, phase: Phase) -> Figure {
    let mut f = Figure::new(
        "counterfactual_scatter",
        "counterfactual_scatter",
        phase,
        "Predicted potential outcomes",
        "predicted under control",
        "predicted under treatment",
    );
    for arm in 0..2 {
        f.series.push(Series {
            label: format!("arm {arm}"),
            style: Style::Points,
            points: r.points.iter().filter(|p| p.arm == arm).map(|p| [p.x, p.y]).collect(),
            band: None,
        });
    }
    let lo = r.x_range.0.min(r.y_range.0);
    let hi = r.x_range.1.max(r.y_range.1);
    f.references.push(Reference {
        label: "x = y".into(),
        from: [lo, lo],
        to: [hi, hi],
        dotted: true,
    });
    f.annotations.push(format!(
        "violation score {:.3} ({} of {} populated cells single-arm)",
        r.violation_score,
        r.flagged.len(),
        r.populated.len()
    ));
    if r.low_evidence {
        f.annotations.push("no populated cells; score not informative".into());
    }
    f
}

/// Every figure of one phase.
pub fn phase_figures(d: &PhaseDiagnostics) -> Vec<Figure> {
    let mut figs = vec![
        love_plot(&d.balance, d.phase),
        calibration_plot(&d.calibration, d.phase, "Propensity calibration", "calibration"),
        distribution_plot(&d.distribution, d.phase),
        roc_panel(d),
        pr_plot(&d.pr, d.phase),
    ];
    if let Some(o) = &d.outcome {
        if let Some(roc) = &o.roc {
            figs.push(outcome_roc_plot(roc, d.phase));
        }
        if let Some(c) = &o.calibration {
            figs.push(calibration_plot(c, d.phase, "Outcome calibration", "outcome_calibration"));
        }
        if let Some(a) = &o.accuracy {
            figs.push(accuracy_plot(a, d.phase));
        }
        figs.push(counterfactual_plot(&o.ignorability, d.phase));
    }
    figs
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn bounds(f: &Figure) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    let mut take = |p: [f64; 2]| {
        if p[0].is_finite() && p[1].is_finite() {
            xs = (xs.0.min(p[0]), xs.1.max(p[0]));
            ys = (ys.0.min(p[1]), ys.1.max(p[1]));
        }
    };
    for s in &f.series {
        s.points.iter().copied().for_each(&mut take);
        if let Some(b) = &s.band {
            for (i, p) in s.points.iter().enumerate() {
                match b.axis {
                    BandAxis::X => {
                        take([b.lower[i], p[1]]);
                        take([b.upper[i], p[1]]);
                    }
                    BandAxis::Y => {
                        take([p[0], b.lower[i]]);
                        take([p[0], b.upper[i]]);
                    }
                }
            }
        }
        if s.style == Style::Bars {
            s.points.iter().for_each(|p| take([p[0], 0.0]));
        }
    }
    for r in &f.references {
        take(r.from);
        take(r.to);
    }
    let widen = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi <= lo {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    (widen(xs), widen(ys))
}

/// Deterministic SVG rendering of a figure: axes, series, guide lines and a
/// legend.
pub fn render_svg(f: &Figure) -> String {
    let ((x0, x1), (y0, y1)) = bounds(f);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&f.title));
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(xv), HEIGHT - MARGIN + 16.0, tick(xv));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 18.0, escape(&f.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        HEIGHT / 2.0,
        escape(&f.y_label)
    );
    for r in &f.references {
        if r.from.iter().chain(&r.to).all(|v| v.is_finite()) {
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555"{}/>"##,
                sx(r.from[0]),
                sy(r.from[1]),
                sx(r.to[0]),
                sy(r.to[1]),
                if r.dotted { r#" stroke-dasharray="2,3""# } else { "" }
            );
        }
    }
    for (k, s) in f.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let finite: Vec<(usize, [f64; 2])> = s
            .points
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| p[0].is_finite() && p[1].is_finite())
            .collect();
        if let Some(b) = &s.band {
            match (b.axis, s.style) {
                (BandAxis::Y, Style::Line) => {
                    let mut poly: Vec<String> = finite.iter().map(|&(i, p)| format!("{:.2},{:.2}", sx(p[0]), sy(b.upper[i]))).collect();
                    poly.extend(finite.iter().rev().map(|&(i, p)| format!("{:.2},{:.2}", sx(p[0]), sy(b.lower[i]))));
                    let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, poly.join(" "));
                }
                _ => {
                    for &(i, p) in &finite {
                        let (a, c) = match b.axis {
                            BandAxis::X => ([b.lower[i], p[1]], [b.upper[i], p[1]]),
                            BandAxis::Y => ([p[0], b.lower[i]], [p[0], b.upper[i]]),
                        };
                        let _ = writeln!(
                            out,
                            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                            sx(a[0]),
                            sy(a[1]),
                            sx(c[0]),
                            sy(c[1])
                        );
                    }
                }
            }
        }
        match s.style {
            Style::Line => {
                let pts: Vec<String> = finite.iter().map(|(_, p)| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
                let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
            }
            Style::Points => {
                for (_, p) in &finite {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#, sx(p[0]), sy(p[1]));
                }
            }
            Style::Bars => {
                let width = if s.points.len() > 1 {
                    (sx(s.points[1][0]) - sx(s.points[0][0])).abs() * 0.9
                } else {
                    8.0
                };
                for (_, p) in &finite {
                    let (top, bottom) = (sy(p[1].max(0.0)), sy(p[1].min(0.0)));
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5"/>"#,
                        sx(p[0]) - width / 2.0,
                        top,
                        width,
                        bottom - top
                    );
                }
            }
        }
        let ly = MARGIN + 16.0 + 16.0 * k as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, WIDTH - MARGIN - 130.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, WIDTH - MARGIN - 115.0, escape(&s.label));
    }
    if !f.covariates.is_empty() {
        let n = f.covariates.len() as f64;
        for (i, c) in f.covariates.iter().enumerate() {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#, MARGIN + 4.0, sy(n - 1.0 - i as f64) + 3.0, escape(&c.name));
        }
    }
    for (i, a) in f.annotations.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, MARGIN + 8.0, MARGIN + 14.0 + 13.0 * i as f64, escape(a));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes `<name>.json` and `<name>.svg` for every figure; returns the file
/// names written.
pub fn emit_figures(figures: &[Figure], dir: &Path) -> Result<Vec<String>, Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::with_capacity(2 * figures.len());
    for f in figures {
        let json = serde_json::to_string_pretty(f).map_err(|e| Error::Json(e.to_string()))?;
        for (ext, body) in [("json", json + "\n"), ("svg", render_svg(f))] {
            let file = format!("{}.{ext}", f.name);
            let path = dir.join(&file);
            std::fs::write(&path, body).map_err(|source| Error::Io { path, source })?;
            written.push(file);
        }
    }
    Ok(written)
}
