//! Deterministic SVG figures and CSV/JSON tables.
//!
//! Every figure carries the SHA-256 of the JSON serialization of the data it
//! was drawn from. Output contains no timestamps and iterates only over
//! ordered collections, so identical inputs render byte-identically.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cox::{CoefficientRow, CoxFit};
use crate::error::{Error, Result};
use crate::survival::SurvivalCurve;
use crate::velocity::VelocityCurve;

pub const SIGNIFICANCE_THRESHOLD: f64 = 0.01;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveStyle {
    /// Right-continuous step function.
    Step,
    Line,
}

/// One stratum's curve, with an optional confidence band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl CurveSeries {
    /// Accumulation F(t) on `0..=epochs` with the CI of S mapped to 1 − S.
    pub fn accumulation(label: impl Into<String>, curve: &SurvivalCurve, epochs: u32) -> Self {
        let mut y = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for t in 0..=epochs {
            match curve.times.partition_point(|&x| x <= t) {
                0 => {
                    y.push(0.0);
                    lower.push(0.0);
                    upper.push(0.0);
                }
                i => {
                    y.push(curve.accumulation[i - 1]);
                    lower.push(1.0 - curve.ci_upper[i - 1]);
                    upper.push(1.0 - curve.ci_lower[i - 1]);
                }
            }
        }
        Self {
            label: label.into(),
            x: (0..=epochs).map(f64::from).collect(),
            y,
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn velocity(label: impl Into<String>, curve: &VelocityCurve) -> Self {
        Self {
            label: label.into(),
            x: curve.epochs.iter().map(|&e| f64::from(e)).collect(),
            y: curve.v.clone(),
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub style: CurveStyle,
    /// Fixed y range; derived from the data when `None`.
    pub y_range: Option<(f64, f64)>,
}

impl PlotSpec {
    pub fn accumulation(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: "Epoch".into(),
            y_label: "Cumulative fraction F(t)".into(),
            style: CurveStyle::Step,
            y_range: Some((0.0, 1.0)),
        }
    }

    pub fn velocity(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: "Epoch".into(),
            y_label: "Velocity V(t) per epoch".into(),
            style: CurveStyle::Line,
            y_range: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn source_hash<T: Serialize + ?Sized>(data: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(data)?))
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Shortest decimal that reads back as the same value.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

/// Roughly five round-numbered ticks covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let (x, x0, x1) = if self.log_x {
            (x.ln(), self.x0.ln(), self.x1.ln())
        } else {
            (x, self.x0, self.x1)
        };
        LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, hash: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-source-sha256="{hash}">"#
    );
    let _ = writeln!(out, "<!-- source-sha256: {hash} -->");
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_ticks: &[f64], y_ticks: &[f64], x_label: &str, y_label: &str) {
    let (l, r) = (LEFT, WIDTH - RIGHT);
    let (t, b) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        r - l,
        b - t
    );
    out.push_str("<g class=\"x-ticks\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\n");
    for &x in x_ticks {
        let px = frame.px(x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}">{}</text>"#,
            b + 5.0,
            b + 18.0,
            tick_label(x)
        );
    }
    out.push_str("</g>\n<g class=\"y-ticks\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">\n");
    for &y in y_ticks {
        let py = frame.py(y);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{l:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            l - 5.0,
            l - 8.0,
            py + 4.0,
            tick_label(y)
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn step_points(frame: &Frame, x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(2 * x.len());
    for i in 0..x.len() {
        if i > 0 {
            pts.push((frame.px(x[i]), frame.py(y[i - 1])));
        }
        pts.push((frame.px(x[i]), frame.py(y[i])));
    }
    pts
}

fn line_points(frame: &Frame, x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().zip(y).map(|(&a, &b)| (frame.px(a), frame.py(b))).collect()
}

fn points_attr(pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Step or line plot of one or more strata sharing an x grid.
pub fn render_curves(series: &[CurveSeries], spec: &PlotSpec) -> Result<String> {
    let first = series
        .first()
        .ok_or_else(|| Error::Render("no curves to render".into()))?;
    for s in series {
        if s.x != first.x {
            return Err(Error::GridMismatch(format!(
                "curve {:?} does not share the grid of {:?}",
                s.label, first.label
            )));
        }
        let bad_len = s.y.len() != s.x.len()
            || s.lower.as_ref().is_some_and(|v| v.len() != s.x.len())
            || s.upper.as_ref().is_some_and(|v| v.len() != s.x.len());
        if bad_len || s.x.is_empty() {
            return Err(Error::Render(format!("curve {:?} has inconsistent lengths", s.label)));
        }
        let values = s.y.iter().chain(s.lower.iter().flatten()).chain(s.upper.iter().flatten());
        if values.chain(&s.x).any(|v| !v.is_finite()) {
            return Err(Error::Render(format!("curve {:?} has non-finite values", s.label)));
        }
    }
    let hash = source_hash(series)?;

    let x0 = first.x[0];
    let x1 = *first.x.last().unwrap();
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let (y0, y1) = match spec.y_range {
        Some(r) => r,
        None => {
            let all = series.iter().flat_map(|s| {
                s.y.iter().chain(s.lower.iter().flatten()).chain(s.upper.iter().flatten())
            });
            let (lo, hi) = all.fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let hi = if hi > lo { hi * 1.05 } else { lo + 1.0 };
            (lo, hi)
        }
    };
    let frame = Frame { x0, x1, y0, y1, log_x: false };

    let mut out = String::new();
    header(&mut out, &spec.title, &hash);
    let x_ticks = nice_ticks(x0, x1);
    let y_ticks = nice_ticks(y0, y1);
    axes(&mut out, &frame, &x_ticks, &y_ticks, &spec.x_label, &spec.y_label);

    let points = |x: &[f64], y: &[f64]| match spec.style {
        CurveStyle::Step => step_points(&frame, x, y),
        CurveStyle::Line => line_points(&frame, x, y),
    };
    out.push_str("<g class=\"bands\">\n");
    for (i, s) in series.iter().enumerate() {
        if let (Some(lo), Some(hi)) = (&s.lower, &s.upper) {
            let mut pts = points(&s.x, hi);
            let mut back = points(&s.x, lo);
            back.reverse();
            pts.extend(back);
            let _ = writeln!(
                out,
                r#"<polygon class="band" points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                points_attr(&pts),
                PALETTE[i % PALETTE.len()]
            );
        }
    }
    out.push_str("</g>\n<g class=\"curves\">\n");
    for (i, s) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points_attr(&points(&s.x, &s.y)),
            PALETTE[i % PALETTE.len()]
        );
    }
    out.push_str("</g>\n");
    legend(&mut out, series.iter().map(|s| s.label.as_str()));
    out.push_str("</svg>\n");
    Ok(out)
}

fn legend<'a>(out: &mut String, labels: impl Iterator<Item = &'a str>) {
    out.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let x = WIDTH - RIGHT + 15.0;
    for (i, label) in labels.enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><rect x="{x:.2}" y="{:.2}" width="14" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 20.0,
            y,
            escape(label)
        );
    }
    out.push_str("</g>\n");
}

/// Forest plot of a fitted model's hazard ratios.
pub fn render_forest(fit: &CoxFit) -> Result<String> {
    let rows: Vec<CoefficientRow> = (0..fit.names.len())
        .map(|j| CoefficientRow {
            name: fit.names[j].clone(),
            label: crate::cox::covariate_label(&fit.names[j]),
            beta: fit.coefficients[j],
            se: fit.se[j],
            hr: fit.hazard_ratios[j],
            ci_low: fit.ci_lower[j],
            ci_high: fit.ci_upper[j],
            p: fit.wald_p[j],
        })
        .collect();
    render_forest_rows("Hazard ratios", &rows)
}

/// Forest plot: one row per covariate in the given order, log-scaled HR axis,
/// dashed reference at HR = 1.
pub fn render_forest_rows(title: &str, rows: &[CoefficientRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Render("no covariates to plot".into()));
    }
    for r in rows {
        for v in [r.hr, r.ci_low, r.ci_high] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Render(format!(
                    "non-positive hazard ratio or interval for {}",
                    r.name
                )));
            }
        }
    }
    let hash = source_hash(rows)?;
    let lo = rows.iter().map(|r| r.ci_low).fold(1.0f64, f64::min) / 1.25;
    let hi = rows.iter().map(|r| r.ci_high).fold(1.0f64, f64::max) * 1.25;
    let frame = Frame {
        x0: lo,
        x1: hi,
        y0: 0.0,
        y1: rows.len() as f64,
        log_x: true,
    };
    let mut ticks = Vec::new();
    let mut decade = 10f64.powf(lo.log10().floor());
    while decade <= hi {
        for m in [1.0, 2.0, 5.0] {
            let v = m * decade;
            if v >= lo && v <= hi {
                ticks.push(v);
            }
        }
        decade *= 10.0;
    }

    let mut out = String::new();
    header(&mut out, title, &hash);
    axes(&mut out, &frame, &ticks, &[], "Hazard ratio (log scale)", "");
    let (rx, top, bottom) = (frame.px(1.0), TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<line class="reference" x1="{rx:.2}" y1="{top:.2}" x2="{rx:.2}" y2="{bottom:.2}" stroke="grey" stroke-dasharray="4,3"/>"#
    );
    out.push_str("<g class=\"rows\" font-family=\"sans-serif\" font-size=\"12\">\n");
    for (i, r) in rows.iter().enumerate() {
        let y = frame.py(rows.len() as f64 - i as f64 - 0.5);
        let _ = writeln!(
            out,
            r#"<g class="row" data-name="{}"><line class="whisker" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="1.5"/><circle class="point" cx="{:.2}" cy="{y:.2}" r="4" fill="black"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            escape(&r.name),
            frame.px(r.ci_low),
            frame.px(r.ci_high),
            frame.px(r.hr),
            WIDTH - RIGHT + 10.0,
            y + 4.0,
            escape(&r.label)
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Integer(i64),
    Text(String),
    Flag(bool),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Number(v) => num(*v),
            Cell::Integer(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Number(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Integer(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Flag(b) => Value::from(*b),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Number(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Number)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Integer(v as i64)
    }
}

impl From<Option<u32>> for Cell {
    fn from(v: Option<u32>) -> Self {
        v.map_or(Cell::Missing, |v| Cell::Integer(v.into()))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.columns).map_err(|e| Error::Render(e.to_string()))?;
        for row in &self.rows {
            writer
                .write_record(row.iter().map(Cell::csv))
                .map_err(|e| Error::Render(e.to_string()))?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Render(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Render(e.to_string()))
    }

    /// Array of row objects keyed by column name, in column order.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::Map::new();
                    for (c, cell) in self.columns.iter().zip(row) {
                        obj.insert(c.clone(), cell.json());
                    }
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

pub fn is_significant(p: f64, threshold: f64) -> bool {
    p < threshold
}

/// Covariate, HR, 95% CI and p, with a strict `p < threshold` flag.
pub fn hazard_ratio_table(rows: &[CoefficientRow], threshold: f64) -> Table {
    let mut table = Table::new(&["covariate", "hr", "ci_low", "ci_high", "p", "significant"]);
    for r in rows {
        table.push(vec![
            r.label.as_str().into(),
            r.hr.into(),
            r.ci_low.into(),
            r.ci_high.into(),
            r.p.into(),
            is_significant(r.p, threshold).into(),
        ]);
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub name: String,
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

pub fn test_table(rows: &[TestRow], threshold: f64) -> Table {
    let mut table = Table::new(&["test", "chi2", "df", "p", "significant"]);
    for r in rows {
        table.push(vec![
            r.name.as_str().into(),
            r.statistic.into(),
            r.df.into(),
            r.p.into(),
            is_significant(r.p, threshold).into(),
        ]);
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummaryRow {
    pub name: String,
    pub n: usize,
    pub events: usize,
    pub final_accumulation: f64,
    pub median: Option<u32>,
    pub rmst: Option<f64>,
    pub rmst_se: Option<f64>,
}

pub fn curve_table(rows: &[CurveSummaryRow]) -> Table {
    let mut table = Table::new(&["stratum", "n", "events", "final_f", "median_epoch", "rmst", "rmst_se"]);
    for r in rows {
        table.push(vec![
            r.name.as_str().into(),
            r.n.into(),
            r.events.into(),
            r.final_accumulation.into(),
            r.median.into(),
            r.rmst.into(),
            r.rmst_se.into(),
        ]);
    }
    table
}

pub fn velocity_table(rows: &[(String, &VelocityCurve)]) -> Table {
    let mut table = Table::new(&[
        "stratum",
        "sigma",
        "epsilon",
        "peak_velocity",
        "peak_epoch",
        "convergence_epoch",
    ]);
    for (name, v) in rows {
        table.push(vec![
            name.as_str().into(),
            v.sigma.into(),
            v.epsilon.into(),
            v.summary.peak_velocity.into(),
            Some(v.summary.peak_epoch).into(),
            v.summary.convergence_epoch.into(),
        ]);
    }
    table
}

/// Renders figures and tables from upstream results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub figures: Vec<(String, String)>,
    pub tables: Vec<(String, Table)>,
    pub metadata: Value,
}

impl ReportBundle {
    pub fn add_figure(&mut self, name: impl Into<String>, svg: String) {
        self.figures.push((name.into(), svg));
    }

    pub fn add_table(&mut self, name: impl Into<String>, table: Table) {
        self.tables.push((name.into(), table));
    }

    /// Relative paths and contents, sorted by path.
    pub fn files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = Vec::new();
        for (name, svg) in &self.figures {
            files.push((format!("figures/{name}.svg"), svg.clone().into_bytes()));
        }
        for (name, table) in &self.tables {
            files.push((format!("tables/{name}.csv"), table.to_csv()?.into_bytes()));
            let mut json = serde_json::to_vec_pretty(&table.to_json())?;
            json.push(b'\n');
            files.push((format!("tables/{name}.json"), json));
        }
        let mut meta = serde_json::to_vec_pretty(&self.metadata)?;
        meta.push(b'\n');
        files.push(("meta.json".to_string(), meta));
        files.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(files)
    }
}
