use std::collections::BTreeMap;
use std::path::Path;

use factsurv::events::EventKind;
use factsurv::report::{
    curve_table, hazard_ratio_table, render_curves, render_forest_rows, sha256_hex, test_table, velocity_table,
    CurveSeries, CurveSummaryRow, PlotSpec, ReportBundle, TestRow,
};
use serde_json::{json, Value};

use super::analysis::read_kind_artifacts;
use crate::artifacts::{CoxArtifact, KmArtifact, LogrankArtifact, Meta, VelocityArtifact};
use crate::config::Params;
use crate::error::CliError;
use crate::fsio::{json_files, read_json, OutputSet};

fn grouped<T>(items: &[(EventKind, T)], group: impl Fn(&T) -> String) -> BTreeMap<(EventKind, String), Vec<&T>> {
    let mut out: BTreeMap<(EventKind, String), Vec<&T>> = BTreeMap::new();
    for (kind, item) in items {
        out.entry((*kind, group(item))).or_default().push(item);
    }
    out
}

/// Figures and tables from the km, logrank, cox and velocity outputs under `input`.
pub fn report(input: &Path, params: &Params) -> Result<OutputSet, CliError> {
    let km: Vec<(EventKind, KmArtifact)> = read_kind_artifacts(&input.join("km"))?;
    let velocity: Vec<(EventKind, VelocityArtifact)> = read_kind_artifacts(&input.join("velocity"))?;
    let mut logrank: Vec<LogrankArtifact> = Vec::new();
    for path in json_files(&input.join("logrank"))? {
        logrank.push(read_json(&path)?);
    }
    let mut cox: Vec<CoxArtifact> = Vec::new();
    for path in json_files(&input.join("cox"))? {
        cox.push(read_json(&path)?);
    }
    if km.is_empty() && cox.is_empty() && logrank.is_empty() {
        return Err(CliError::Data(format!("nothing to report in {}", input.display())));
    }
    logrank.sort_by(|a, b| (a.kind, &a.key).cmp(&(b.kind, &b.key)));
    cox.sort_by_key(|c| c.kind);

    let mut bundle = ReportBundle::default();
    for ((kind, group), curves) in grouped(&km, |k| k.stratum.group().to_string()) {
        let series: Vec<CurveSeries> = curves
            .iter()
            .map(|k| CurveSeries::accumulation(k.stratum.legend(), &k.curve, k.epochs))
            .collect();
        let title = format!("Cumulative {kind} ({group})");
        bundle.add_figure(
            format!("accumulation_{kind}_{}", crate::fsio::stem(&group)),
            render_curves(&series, &PlotSpec::accumulation(title))?,
        );
    }
    for ((kind, group), curves) in grouped(&velocity, |v| v.stratum.group().to_string()) {
        let series: Vec<CurveSeries> = curves
            .iter()
            .map(|v| CurveSeries::velocity(v.stratum.legend(), &v.curve))
            .collect();
        let title = format!("{kind} velocity ({group})");
        bundle.add_figure(
            format!("velocity_{kind}_{}", crate::fsio::stem(&group)),
            render_curves(&series, &PlotSpec::velocity(title))?,
        );
    }
    for c in &cox {
        if !c.summary.covariates.is_empty() {
            let title = format!("Hazard ratios, {} ({})", c.kind, c.summary.hr_interpretation);
            bundle.add_figure(format!("forest_{}", c.kind), render_forest_rows(&title, &c.summary.covariates)?);
        }
        bundle.add_table(
            format!("hazard_ratios_{}", c.kind),
            hazard_ratio_table(&c.summary.covariates, params.significance),
        );
    }

    let curve_rows: Vec<CurveSummaryRow> = km
        .iter()
        .map(|(kind, k)| CurveSummaryRow {
            name: format!("{kind}/{}", k.stratum.stratum),
            n: k.curve.n_subjects(),
            events: k.curve.n_events(),
            final_accumulation: k.curve.accumulation.last().copied().unwrap_or(0.0),
            median: k.median,
            rmst: k.rmst.map(|r| r.mean),
            rmst_se: k.rmst.map(|r| r.se),
        })
        .collect();
    if !curve_rows.is_empty() {
        bundle.add_table("curves", curve_table(&curve_rows));
    }

    let mut tests: Vec<TestRow> = logrank
        .iter()
        .map(|l| TestRow {
            name: format!("{} log-rank by {}", l.kind, l.key),
            statistic: l.test.statistic,
            df: l.test.df,
            p: l.test.p_value,
        })
        .collect();
    for c in &cox {
        tests.push(TestRow {
            name: format!("{} cox likelihood ratio", c.kind),
            statistic: c.summary.lr.stat,
            df: c.summary.lr.df,
            p: c.summary.lr.p,
        });
        if let Some(global) = c.summary.ph_test.as_ref().and_then(|ph| ph.global.as_ref()) {
            tests.push(TestRow {
                name: format!("{} proportional hazards (global)", c.kind),
                statistic: global.statistic,
                df: global.df,
                p: global.p_value,
            });
        }
    }
    if !tests.is_empty() {
        bundle.add_table("tests", test_table(&tests, params.significance));
    }

    let velocity_rows: Vec<(String, &factsurv::velocity::VelocityCurve)> = velocity
        .iter()
        .map(|(kind, v)| (format!("{kind}/{}", v.stratum.stratum), &v.curve))
        .collect();
    if !velocity_rows.is_empty() {
        bundle.add_table("velocity", velocity_table(&velocity_rows));
    }

    // configuration echo from upstream steps plus hashes of every consumed file
    let mut upstream = serde_json::Map::new();
    for path in json_files(&input.join("meta"))? {
        let meta: Meta = read_json(&path)?;
        if meta.command != "report" {
            upstream.insert(meta.command.clone(), serde_json::to_value(&meta).unwrap_or(Value::Null));
        }
    }
    let mut sources = serde_json::Map::new();
    for sub in ["km", "velocity", "logrank", "cox"] {
        let root = input.join(sub);
        let mut files = json_files(&root)?;
        for kind in EventKind::ALL {
            files.extend(json_files(&root.join(kind.as_str()))?);
        }
        files.sort();
        for f in files {
            let rel = f.strip_prefix(input).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            sources.insert(rel, Value::from(sha256_hex(&std::fs::read(&f)?)));
        }
    }
    let transforms: serde_json::Map<String, Value> = cox
        .iter()
        .map(|c| (c.kind.to_string(), serde_json::to_value(&c.summary.transforms).unwrap_or(Value::Null)))
        .collect();
    let meta = Meta::new(
        "report",
        params.seed,
        json!({
            "significance": params.significance,
            "sigma": velocity.first().map(|(_, v)| v.curve.sigma),
            "epsilon": velocity.first().map(|(_, v)| v.curve.epsilon),
            "transforms": transforms,
        }),
    );
    bundle.metadata = json!({
        "report": meta,
        "upstream": upstream,
        "sources": sources,
    });

    let mut out = OutputSet::default();
    for (rel, bytes) in bundle.files()? {
        out.add(format!("report/{rel}"), bytes);
    }
    Ok(out)
}
