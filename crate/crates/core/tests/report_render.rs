use std::path::PathBuf;

use factsurv::cox::CoefficientRow;
use factsurv::report::{
    hazard_ratio_table, render_curves, render_forest_rows, sha256_hex, CurveSeries, PlotSpec, ReportBundle,
};
use factsurv::survival::km_fit_times;
use factsurv::velocity::VelocityCurve;
use regex::Regex;

fn row(label: &str, hr: f64, lo: f64, hi: f64, p: f64) -> CoefficientRow {
    CoefficientRow {
        name: label.to_lowercase().replace(' ', "_"),
        label: label.to_string(),
        beta: hr.ln(),
        se: 0.1,
        hr,
        ci_low: lo,
        ci_high: hi,
        p,
    }
}

fn table_one() -> Vec<CoefficientRow> {
    vec![
        row("HPO term PMC", 0.96, 0.89, 1.04, 0.30),
        row("HPO ID PMC", 1.44, 1.08, 1.93, 0.01),
        row("HPO annotations", 2.42, 2.06, 2.85, 0.0005),
        row("Latent knowledge", 2.72, 1.98, 3.73, 0.0005),
    ]
}

fn fixture_series() -> Vec<CurveSeries> {
    let a = km_fit_times([(2, true), (3, true), (5, false), (7, true), (10, false), (10, false)], 0.05).unwrap();
    let b = km_fit_times([(1, true), (1, true), (4, true), (6, false), (8, true), (10, false)], 0.05).unwrap();
    vec![CurveSeries::accumulation("absent", &a, 10), CurveSeries::accumulation("present", &b, 10)]
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn accumulation_figure_matches_golden_file() {
    let svg = render_curves(&fixture_series(), &PlotSpec::accumulation("Fixture")).unwrap();
    let path = golden("two_strata.svg");
    if std::env::var_os("FACTSURV_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &svg).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(svg, expected);
}

#[test]
fn figures_embed_a_hash_of_their_data() {
    let a = render_curves(&fixture_series(), &PlotSpec::accumulation("Fixture")).unwrap();
    let mut changed = fixture_series();
    changed[0].y[3] += 0.01;
    let b = render_curves(&changed, &PlotSpec::accumulation("Fixture")).unwrap();
    let hash = Regex::new(r#"data-source-sha256="([0-9a-f]{64})""#).unwrap();
    let ha = &hash.captures(&a).unwrap()[1];
    let hb = &hash.captures(&b).unwrap()[1];
    assert_ne!(ha, hb);
    assert_eq!(a.matches("class=\"legend-entry\"").count(), 2);
    assert_eq!(a.matches("class=\"band\"").count(), 2);
}

#[test]
fn velocity_figure_is_a_line_plot() {
    let f: Vec<f64> = (0..=10).map(|t| (t as f64 / 10.0).powi(2)).collect();
    let curve = VelocityCurve::from_accumulation(f, 1.0, 1e-3).unwrap();
    let svg = render_curves(&[CurveSeries::velocity("all", &curve)], &PlotSpec::velocity("V")).unwrap();
    assert!(svg.contains("class=\"curve\""));
    assert!(!svg.contains("class=\"band\""));
}

#[test]
fn forest_rows_follow_input_order() {
    let svg = render_forest_rows("Table", &table_one()).unwrap();
    let names = Regex::new(r#"class="row" data-name="([^"]+)""#).unwrap();
    let order: Vec<String> = names.captures_iter(&svg).map(|c| c[1].to_string()).collect();
    assert_eq!(order, ["hpo_term_pmc", "hpo_id_pmc", "hpo_annotations", "latent_knowledge"]);

    let cx = Regex::new(r#"class="point" cx="([0-9.]+)""#).unwrap();
    let xs: Vec<f64> = cx.captures_iter(&svg).map(|c| c[1].parse().unwrap()).collect();
    let rightmost = xs.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(xs[3], rightmost);

    let reference = Regex::new(r#"class="reference" x1="([0-9.]+)""#).unwrap();
    let rx: f64 = reference.captures(&svg).unwrap()[1].parse().unwrap();
    let whisker = Regex::new(r#"class="whisker" x1="([0-9.]+)" y1="[0-9.]+" x2="([0-9.]+)""#).unwrap();
    let first = whisker.captures(&svg).unwrap();
    let (w0, w1): (f64, f64) = (first[1].parse().unwrap(), first[2].parse().unwrap());
    assert!(w0 < rx && rx < w1, "CI crossing 1 straddles the reference line");
}

#[test]
fn unit_hazard_ratios_sit_on_the_reference() {
    let rows = vec![row("a", 1.0, 0.5, 2.0, 0.9), row("b", 1.0, 0.8, 1.25, 0.9)];
    let svg = render_forest_rows("null", &rows).unwrap();
    let reference = Regex::new(r#"class="reference" x1="([0-9.]+)""#).unwrap();
    let rx = reference.captures(&svg).unwrap()[1].to_string();
    let cx = Regex::new(r#"class="point" cx="([0-9.]+)""#).unwrap();
    for c in cx.captures_iter(&svg) {
        assert_eq!(&c[1], rx);
    }
}

#[test]
fn seen_during_training_row_is_flagged() {
    let rows = vec![
        row("Seen during training", 0.10, 0.03, 0.32, 0.001),
        row("GO ID PMC", 0.33, 0.10, 1.16, 0.08),
    ];
    let csv = hazard_ratio_table(&rows, 0.01).to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "covariate,hr,ci_low,ci_high,p,significant");
    assert_eq!(lines[1], "Seen during training,0.1,0.03,0.32,0.001,true");
    assert!(lines[2].ends_with(",false"));
}

#[test]
fn table_numbers_round_trip() {
    let rows = table_one();
    let json = hazard_ratio_table(&rows, 0.01).to_json();
    let text = serde_json::to_string(&json).unwrap();
    let back: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back, json);
    let csv = hazard_ratio_table(&rows, 0.01).to_csv().unwrap();
    for (line, r) in csv.lines().skip(1).zip(&rows) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), r.hr);
        assert_eq!(fields[4].parse::<f64>().unwrap(), r.p);
    }
}

#[test]
fn bundle_is_deterministic() {
    let build = || {
        let mut b = ReportBundle::default();
        b.add_figure("forest", render_forest_rows("t", &table_one()).unwrap());
        b.add_figure("acc", render_curves(&fixture_series(), &PlotSpec::accumulation("A")).unwrap());
        b.add_table("hr", hazard_ratio_table(&table_one(), 0.01));
        b.metadata = serde_json::json!({"sigma": 1.0, "seed": 3});
        b.files().unwrap()
    };
    let a = build();
    let b = build();
    assert_eq!(a, b);
    let digest: Vec<String> = a.iter().map(|(_, bytes)| sha256_hex(bytes)).collect();
    let again: Vec<String> = b.iter().map(|(_, bytes)| sha256_hex(bytes)).collect();
    assert_eq!(digest, again);
}
