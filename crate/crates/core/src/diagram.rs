//! Bifurcation diagrams in the `(lambda, ||u||_L2)` plane, eigencurve plots
//! and solution profiles, with CSV and SVG export.
//!
//! Every series carries a `source` naming the branch id or eigencurve mode it
//! was built from; nothing here synthesizes data points.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::Branch;
use crate::discretize::Grid;
use crate::eigencurve::{BifurcationPoint, EigencurveSample};
use crate::{Error, Result};

/// Relative tolerance for deciding that two branches share `mu`.
const MU_MATCH_TOL: f64 = 1e-12;

pub const DEFAULT_SVG_SIZE: (u32, u32) = (800, 560);

const EIGENCURVE_PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Plot role of a series; decides its color.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesRole {
    Positive,
    OneNode,
    TwoNode,
    /// Three or more interior zeros.
    HigherNodes,
    Eigencurve,
    Trivial,
}

impl SeriesRole {
    pub fn from_nodes(nodes: usize) -> Self {
        match nodes {
            0 => SeriesRole::Positive,
            1 => SeriesRole::OneNode,
            2 => SeriesRole::TwoNode,
            _ => SeriesRole::HigherNodes,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeriesRole::Positive => "positive",
            SeriesRole::OneNode => "1-node",
            SeriesRole::TwoNode => "2-node",
            SeriesRole::HigherNodes => "3+-node",
            SeriesRole::Eigencurve => "eigencurve",
            SeriesRole::Trivial => "trivial",
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            SeriesRole::Positive => "#1f4fd8",
            SeriesRole::OneNode => "#d62728",
            SeriesRole::TwoNode => "#000000",
            SeriesRole::HigherNodes => "#2ca02c",
            SeriesRole::Eigencurve => "#1f77b4",
            SeriesRole::Trivial => "#7f7f7f",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub role: SeriesRole,
    /// Branch id, `eigencurve:<n>` or `trivial`.
    pub source: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramDocument {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagramOptions {
    pub title: String,
    /// Fixed horizontal window; otherwise fitted to the data.
    pub lambda_window: Option<(f64, f64)>,
}

fn same_mu(a: f64, b: f64) -> bool {
    (a - b).abs() <= MU_MATCH_TOL * a.abs().max(b.abs()).max(1.0)
}

fn data_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

fn padded((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let w = lo.abs().max(1.0);
        (lo - w, hi + w)
    }
}

fn fit_ranges(series: &[Series], annotations: &[Annotation], x_fixed: Option<(f64, f64)>, y_floor_zero: bool) -> ((f64, f64), (f64, f64)) {
    let xs = series
        .iter()
        .filter(|s| s.role != SeriesRole::Trivial)
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .chain(annotations.iter().map(|a| a.x));
    let x_range = x_fixed.unwrap_or_else(|| padded(data_range(xs).unwrap_or((-1.0, 1.0))));
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().filter(|p| p.0 >= x_range.0 && p.0 <= x_range.1).map(|p| p.1))
        .chain(annotations.iter().map(|a| a.y));
    let (mut lo, hi) = data_range(ys).unwrap_or((0.0, 1.0));
    if y_floor_zero {
        lo = lo.min(0.0);
    }
    let (ylo, yhi) = padded((lo, hi.max(lo)));
    (x_range, (if y_floor_zero { ylo.max(-0.04 * (yhi - lo)) } else { ylo }, yhi))
}

/// One series per branch colored by node count, the trivial line `l2 = 0`
/// and the bifurcation points as annotations.
pub fn assemble_diagram(branches: &[Branch], bifpoints: &[BifurcationPoint], options: &DiagramOptions) -> Result<DiagramDocument> {
    if let Some(first) = branches.first() {
        if let Some(b) = branches.iter().find(|b| !same_mu(b.mu, first.mu)) {
            return Err(Error::Consistency(format!(
                "branches at different mu in one diagram: {} ({}) vs {} ({})",
                first.id, first.mu, b.id, b.mu
            )));
        }
        if let Some(p) = bifpoints.iter().find(|p| !same_mu(p.mu, first.mu)) {
            return Err(Error::Consistency(format!(
                "bifurcation point at mu = {} does not match branch mu = {}",
                p.mu, first.mu
            )));
        }
    }
    let mut series: Vec<Series> = branches
        .iter()
        .map(|b| {
            let role = SeriesRole::from_nodes(b.node_count().unwrap_or(0));
            Series {
                label: b.id.clone(),
                role,
                source: b.id.clone(),
                color: role.color().to_string(),
                points: b.points.iter().map(|p| (p.state.lambda, p.l2)).collect(),
            }
        })
        .collect();
    let annotations: Vec<Annotation> = bifpoints
        .iter()
        .map(|p| Annotation {
            label: format!("n={} {} lambda={:.4}", p.mode, p.label, p.lambda),
            x: p.lambda,
            y: 0.0,
        })
        .collect();
    let (x_range, y_range) = fit_ranges(&series, &annotations, options.lambda_window, true);
    series.insert(
        0,
        Series {
            label: "u = 0".to_string(),
            role: SeriesRole::Trivial,
            source: "trivial".to_string(),
            color: SeriesRole::Trivial.color().to_string(),
            points: vec![(x_range.0, 0.0), (x_range.1, 0.0)],
        },
    );
    Ok(DiagramDocument {
        title: options.title.clone(),
        x_label: "lambda".to_string(),
        y_label: "||u||_L2".to_string(),
        x_range,
        y_range,
        series,
        annotations,
    })
}

/// Eigencurves `Sigma_n(lambda)`, one series per mode.
pub fn eigencurve_diagram(samples: &[EigencurveSample], title: &str) -> DiagramDocument {
    let series: Vec<Series> = samples
        .iter()
        .map(|s| Series {
            label: format!("Sigma_{}", s.mode),
            role: SeriesRole::Eigencurve,
            source: format!("eigencurve:{}", s.mode),
            color: EIGENCURVE_PALETTE[(s.mode.max(1) - 1) % EIGENCURVE_PALETTE.len()].to_string(),
            points: s.lambdas.iter().copied().zip(s.values.iter().copied()).collect(),
        })
        .collect();
    let (x_range, y_range) = fit_ranges(&series, &[], None, false);
    DiagramDocument {
        title: title.to_string(),
        x_label: "lambda".to_string(),
        y_label: "Sigma_n(lambda)".to_string(),
        x_range,
        y_range,
        series,
        annotations: Vec::new(),
    }
}

/// Profiles `x -> u(x)` of selected points of a branch, boundary zeros included.
pub fn profile_diagram(branch: &Branch, indices: &[usize], grid: &Grid, title: &str) -> Result<DiagramDocument> {
    let mut series = Vec::with_capacity(indices.len());
    for &i in indices {
        let rec = branch.points.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            dim: branch.points.len(),
        })?;
        if rec.state.u.len() != grid.len() {
            return Err(Error::Consistency(format!(
                "profile length {} does not match grid size {}",
                rec.state.u.len(),
                grid.len()
            )));
        }
        let role = SeriesRole::from_nodes(rec.node_count);
        series.push(Series {
            label: format!("lambda={:.3}", rec.state.lambda),
            role,
            source: format!("{}#{}", branch.id, i),
            color: EIGENCURVE_PALETTE[series.len() % EIGENCURVE_PALETTE.len()].to_string(),
            points: grid.nodes_with_boundary().into_iter().zip(with_boundary(&rec.state.u)).collect(),
        });
    }
    let (x_range, y_range) = fit_ranges(&series, &[], Some(grid.interval()), false);
    Ok(DiagramDocument {
        title: title.to_string(),
        x_label: "x".to_string(),
        y_label: "u(x)".to_string(),
        x_range,
        y_range,
        series,
        annotations: Vec::new(),
    })
}

fn with_boundary(u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() + 2);
    out.push(0.0);
    out.extend_from_slice(u);
    out.push(0.0);
    out
}

// ---------------------------------------------------------------------------
// CSV

/// Twelve significant digits, the only float format used in CSV output.
pub fn format_number(v: f64) -> String {
    format!("{v:.11e}")
}

/// Anything that can be written as CSV.
#[derive(Clone, Copy, Debug)]
pub enum CsvSource<'a> {
    Document(&'a DiagramDocument),
    Branch(&'a Branch),
    Eigencurves(&'a [EigencurveSample]),
    Profile { grid: &'a Grid, u: &'a [f64] },
}

pub const BRANCH_HEADER: &str = "index,lambda,mu,l2,nodes,residual,stability_hint";
pub const EIGENCURVE_HEADER: &str = "n,lambda,sigma,d1,d2";
pub const PROFILE_HEADER: &str = "x,u";
pub const DOCUMENT_HEADER: &str = "series,role,source,x,y";

pub fn to_csv(src: CsvSource<'_>) -> Result<String> {
    let mut out = String::new();
    let f = format_number;
    match src {
        CsvSource::Document(doc) => {
            out.push_str(DOCUMENT_HEADER);
            out.push('\n');
            for (k, s) in doc.series.iter().enumerate() {
                for &(x, y) in &s.points {
                    let _ = writeln!(out, "{k},{},{},{},{}", s.role.name(), csv_field(&s.source), f(x), f(y));
                }
            }
        }
        CsvSource::Branch(b) => {
            out.push_str(BRANCH_HEADER);
            out.push('\n');
            for (i, p) in b.points.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{i},{},{},{},{},{},{}",
                    f(p.state.lambda),
                    f(p.state.mu),
                    f(p.l2),
                    p.node_count,
                    f(p.residual),
                    p.stability_hint
                );
            }
        }
        CsvSource::Eigencurves(samples) => {
            out.push_str(EIGENCURVE_HEADER);
            out.push('\n');
            for s in samples {
                for i in 0..s.len() {
                    let _ = writeln!(out, "{},{},{},{},{}", s.mode, f(s.lambdas[i]), f(s.values[i]), f(s.d1[i]), f(s.d2[i]));
                }
            }
        }
        CsvSource::Profile { grid, u } => {
            if u.len() != grid.len() {
                return Err(Error::Consistency(format!(
                    "profile length {} does not match grid size {}",
                    u.len(),
                    grid.len()
                )));
            }
            out.push_str(PROFILE_HEADER);
            out.push('\n');
            for (x, v) in grid.nodes_with_boundary().into_iter().zip(with_boundary(u)) {
                let _ = writeln!(out, "{},{}", f(x), f(v));
            }
        }
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn export_csv(src: CsvSource<'_>, path: &Path) -> Result<()> {
    write_text(path, &to_csv(src)?)
}

/// Write a text artifact, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One row of a branch CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchRow {
    pub index: usize,
    pub lambda: f64,
    pub mu: f64,
    pub l2: f64,
    pub nodes: usize,
    pub residual: f64,
    pub stability_hint: usize,
}

fn rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first.trim_end() != header {
        return Err(Error::Parse(format!("expected header `{header}`, found `{first}`")));
    }
    let width = header.split(',').count();
    let parsed: Vec<(usize, Vec<&str>)> = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect::<Vec<_>>()))
        .collect();
    if let Some((line, cols)) = parsed.iter().find(|(_, c)| c.len() != width) {
        return Err(Error::Parse(format!("line {line}: expected {width} columns, found {}", cols.len())));
    }
    Ok(parsed.into_iter())
}

fn field<T: std::str::FromStr>(cols: &[&str], k: usize, line: usize) -> Result<T> {
    cols[k]
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}, column {}: cannot parse `{}`", k + 1, cols[k])))
}

pub fn parse_branch_csv(text: &str) -> Result<Vec<BranchRow>> {
    rows(text, BRANCH_HEADER)?
        .map(|(line, c)| {
            Ok(BranchRow {
                index: field(&c, 0, line)?,
                lambda: field(&c, 1, line)?,
                mu: field(&c, 2, line)?,
                l2: field(&c, 3, line)?,
                nodes: field(&c, 4, line)?,
                residual: field(&c, 5, line)?,
                stability_hint: field(&c, 6, line)?,
            })
        })
        .collect()
}

/// Eigencurve samples grouped by mode in file order.
pub fn parse_eigencurve_csv(text: &str) -> Result<Vec<EigencurveSample>> {
    let mut out: Vec<EigencurveSample> = Vec::new();
    for (line, c) in rows(text, EIGENCURVE_HEADER)? {
        let n: usize = field(&c, 0, line)?;
        if out.last().is_none_or(|s| s.mode != n) {
            out.push(EigencurveSample {
                mode: n,
                lambdas: Vec::new(),
                values: Vec::new(),
                d1: Vec::new(),
                d2: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.lambdas.push(field(&c, 1, line)?);
        s.values.push(field(&c, 2, line)?);
        s.d1.push(field(&c, 3, line)?);
        s.d2.push(field(&c, 4, line)?);
    }
    Ok(out)
}

/// Diagram from re-imported branch CSVs; `named` pairs a source name with its rows.
pub fn diagram_from_rows(named: &[(String, Vec<BranchRow>)], title: &str) -> Result<DiagramDocument> {
    let mu0 = named.iter().flat_map(|(_, r)| r.first()).map(|r| r.mu).next();
    let mut series = Vec::with_capacity(named.len());
    for (name, rows) in named {
        if let Some(r) = mu0.and_then(|mu0| rows.iter().find(|r| !same_mu(r.mu, mu0))) {
            return Err(Error::Consistency(format!("{name}: mu = {} differs from {}", r.mu, mu0.unwrap_or(f64::NAN))));
        }
        let role = SeriesRole::from_nodes(rows.first().map_or(0, |r| r.nodes));
        series.push(Series {
            label: name.clone(),
            role,
            source: name.clone(),
            color: role.color().to_string(),
            points: rows.iter().map(|r| (r.lambda, r.l2)).collect(),
        });
    }
    let (x_range, y_range) = fit_ranges(&series, &[], None, true);
    series.insert(
        0,
        Series {
            label: "u = 0".to_string(),
            role: SeriesRole::Trivial,
            source: "trivial".to_string(),
            color: SeriesRole::Trivial.color().to_string(),
            points: vec![(x_range.0, 0.0), (x_range.1, 0.0)],
        },
    );
    Ok(DiagramDocument {
        title: title.to_string(),
        x_label: "lambda".to_string(),
        y_label: "||u||_L2".to_string(),
        x_range,
        y_range,
        series,
        annotations: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// SVG

const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;

/// Round tick positions covering `[lo, hi]`, roughly `target` of them.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Vec::new();
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).map(|t| if t.abs() < step * 1e-9 { 0.0 } else { t }).collect()
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG 1.1 rendering: one polyline per series, axes with ticks,
/// a legend per distinct (role, color) and circles at annotations.
pub fn render_svg(doc: &DiagramDocument, size: (u32, u32)) -> String {
    let (w, h) = (size.0 as f64, size.1 as f64);
    let (x0, x1) = (MARGIN_LEFT, (w - MARGIN_RIGHT).max(MARGIN_LEFT + 10.0));
    let (y0, y1) = (MARGIN_TOP, (h - MARGIN_BOTTOM).max(MARGIN_TOP + 10.0));
    let (xl, xh) = doc.x_range;
    let (yl, yh) = doc.y_range;
    let sx = |x: f64| x0 + (x - xl) / (xh - xl) * (x1 - x0);
    let sy = |y: f64| y1 - (y - yl) / (yh - yl) * (y1 - y0);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        size.0, size.1, size.0, size.1
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, size.0, size.1);
    let _ = writeln!(
        out,
        r#"<defs><clipPath id="plot-area"><rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}"/></clipPath></defs>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="15">{}</text>"#,
        (x0 + x1) / 2.0,
        MARGIN_TOP / 2.0 + 5.0,
        xml_escape(&doc.title)
    );

    // Axes and ticks.
    let _ = writeln!(out, r#"<g stroke="black" stroke-width="1" fill="none">"#);
    let _ = writeln!(out, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}"/>"#, x1 - x0, y1 - y0);
    let xticks = nice_ticks(xl, xh, 8);
    let yticks = nice_ticks(yl, yh, 6);
    for &t in &xticks {
        let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#, sx(t), y1, y1 + 5.0);
    }
    for &t in &yticks {
        let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}"/>"#, x0 - 5.0, sy(t), x0);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g fill="black">"#);
    for &t in &xticks {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(t), y1 + 18.0, tick_label(t));
    }
    for &t in &yticks {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, sy(t) + 4.0, tick_label(t));
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        h - 12.0,
        xml_escape(&doc.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
        (y0 + y1) / 2.0,
        xml_escape(&doc.y_label)
    );
    let _ = writeln!(out, "</g>");

    // Data.
    let _ = writeln!(out, r#"<g clip-path="url(#plot-area)" fill="none" stroke-width="1.5">"#);
    for s in &doc.series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if s.role == SeriesRole::Trivial { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline data-source="{}" stroke="{}"{} points="{}"/>"#,
            xml_escape(&s.source),
            s.color,
            dash,
            pts.join(" ")
        );
    }
    let _ = writeln!(out, "</g>");
    if !doc.annotations.is_empty() {
        let _ = writeln!(out, r#"<g fill="white" stroke="black" stroke-width="1">"#);
        for a in &doc.annotations {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3"><title>{}</title></circle>"#,
                sx(a.x),
                sy(a.y),
                xml_escape(&a.label)
            );
        }
        let _ = writeln!(out, "</g>");
    }

    // Legend: branch series grouped by role, eigencurves and profiles by label.
    let mut entries: Vec<(String, String)> = Vec::new();
    for s in &doc.series {
        let label = match s.role {
            SeriesRole::Eigencurve => s.label.clone(),
            _ if doc.x_label == "x" => s.label.clone(),
            r => r.name().to_string(),
        };
        if !entries.iter().any(|(l, c)| *l == label && *c == s.color) {
            entries.push((label, s.color.clone()));
        }
    }
    let _ = writeln!(out, r#"<g font-size="11">"#);
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = y0 + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 12.0,
            x1 + 32.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x1 + 38.0, y + 4.0, xml_escape(label));
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

pub fn export_svg(doc: &DiagramDocument, path: &Path, size: (u32, u32)) -> Result<()> {
    write_text(path, &render_svg(doc, size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{BranchOrigin, Termination};
    use crate::nonlinear::{SolutionRecord, StateVector};

    fn branch(id: &str, mu: f64, nodes: usize, n: usize) -> Branch {
        let points = (0..n)
            .map(|i| SolutionRecord {
                state: StateVector {
                    u: vec![0.1 * i as f64; 3],
                    lambda: -10.0 + i as f64 / 3.0,
                    mu,
                },
                l2: (i as f64).sqrt() / 7.0,
                node_count: nodes,
                residual: 1e-12 * (i + 1) as f64,
                scaled_residual: 1e-13,
                stability_hint: i % 3,
                iterations: 2,
            })
            .collect();
        Branch {
            id: id.to_string(),
            mu,
            origin: BranchOrigin::Manual,
            points,
            termination: Termination::MaxPoints,
            backward_termination: None,
            notes: Vec::new(),
        }
    }

    #[test]
    fn empty_diagram_has_only_the_trivial_line() {
        let doc = assemble_diagram(&[], &[], &DiagramOptions::default()).unwrap();
        assert_eq!(doc.series.len(), 1);
        assert_eq!(doc.series[0].role, SeriesRole::Trivial);
        let svg = render_svg(&doc, DEFAULT_SVG_SIZE);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<?xml") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn one_series_per_branch_with_matching_length() {
        let b = branch("b0", 35.0, 1, 17);
        let doc = assemble_diagram(std::slice::from_ref(&b), &[], &DiagramOptions::default()).unwrap();
        assert_eq!(doc.series.len(), 2);
        assert_eq!(doc.series[1].points.len(), 17);
        assert_eq!(doc.series[1].role, SeriesRole::OneNode);
        assert_eq!(doc.series[1].source, "b0");
    }

    #[test]
    fn three_color_groups() {
        let bs = [branch("p", 0.0, 0, 4), branch("one", 0.0, 1, 4), branch("two", 0.0, 2, 4)];
        let doc = assemble_diagram(&bs, &[], &DiagramOptions::default()).unwrap();
        let colors: std::collections::BTreeSet<_> = doc.series[1..].iter().map(|s| s.color.clone()).collect();
        assert_eq!(colors.len(), 3);
        assert_eq!(doc.series[1].color, "#1f4fd8");
        assert_eq!(doc.series[2].color, "#d62728");
        assert_eq!(doc.series[3].color, "#000000");
    }

    #[test]
    fn mixed_mu_is_rejected() {
        let bs = [branch("a", 35.0, 1, 3), branch("b", 45.0, 1, 3)];
        assert!(matches!(
            assemble_diagram(&bs, &[], &DiagramOptions::default()),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn series_count_equals_polyline_count() {
        let bs = [branch("a", 35.0, 1, 5), branch("b", 35.0, 2, 6)];
        let doc = assemble_diagram(&bs, &[], &DiagramOptions::default()).unwrap();
        let svg = render_svg(&doc, DEFAULT_SVG_SIZE);
        assert_eq!(svg.matches("<polyline").count(), doc.series.len());
        assert_eq!(svg, render_svg(&doc, DEFAULT_SVG_SIZE));
    }

    #[test]
    fn branch_csv_round_trip_to_twelve_digits() {
        let b = branch("a", 35.123456789012345, 1, 9);
        let text = to_csv(CsvSource::Branch(&b)).unwrap();
        assert_eq!(text, to_csv(CsvSource::Branch(&b)).unwrap());
        let rows = parse_branch_csv(&text).unwrap();
        assert_eq!(rows.len(), 9);
        for (r, p) in rows.iter().zip(&b.points) {
            for (x, y) in [(r.lambda, p.state.lambda), (r.mu, p.state.mu), (r.l2, p.l2), (r.residual, p.residual)] {
                assert!((x - y).abs() <= 5e-12 * y.abs().max(1e-300), "{x} vs {y}");
            }
            assert_eq!(r.nodes, p.node_count);
            assert_eq!(r.stability_hint, p.stability_hint);
        }
    }

    #[test]
    fn eigencurve_csv_has_five_columns() {
        let s = EigencurveSample::from_values(1, vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        let text = to_csv(CsvSource::Eigencurves(std::slice::from_ref(&s))).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == 5));
        let back = parse_eigencurve_csv(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].values, s.values);
        assert!(back[0].d1[0].is_nan());
    }

    #[test]
    fn profile_csv_includes_boundary_zeros() {
        let grid = Grid::unit(8).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        let text = to_csv(CsvSource::Profile { grid: &grid, u: &u }).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 10);
        assert!(lines[1].ends_with(",0.00000000000e0"));
        assert!(lines[10].starts_with("1.00000000000e0,"));
    }

    #[test]
    fn export_reports_the_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_text(&blocker.join("sub/out.csv"), "a").unwrap_err();
        assert!(err.to_string().contains("file"));
    }

    #[test]
    fn ticks_are_round_and_inside() {
        let t = nice_ticks(-200.0, 200.0, 8);
        assert_eq!(t, vec![-200.0, -150.0, -100.0, -50.0, 0.0, 50.0, 100.0, 150.0, 200.0]);
        assert!(nice_ticks(1.0, 1.0, 5).is_empty());
    }
}
