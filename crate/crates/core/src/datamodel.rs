//! Shared domain types and ingestion of the three input files: ontology terms,
//! per-epoch correctness traces, and popularity / latent-knowledge covariates.
//!
//! Covariates are transformed for regression by [`transform_covariates`]:
//! count fields become `ln(x + 1)` followed by a population z-score, binary
//! fields pass through as 0/1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convention string echoed in output metadata so the transform can be reproduced.
pub const TRANSFORM_CONVENTION: &str =
    "continuous_count: ln(x+1) then z-score with population std (divisor N); binary: 0/1 unscaled";

pub const TERMS_FILE: &str = "terms.jsonl";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const COVARIATES_FILE: &str = "covariates.csv";

const COVARIATE_HEADER: [&str; 6] = [
    "term_id",
    "term_count",
    "id_count",
    "annotation_count",
    "latent_hits",
    "latent_n",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Ontology {
    Hpo,
    Go,
    Other(String),
}

impl From<String> for Ontology {
    fn from(s: String) -> Self {
        match s.as_str() {
            "HPO" => Ontology::Hpo,
            "GO" => Ontology::Go,
            _ => Ontology::Other(s),
        }
    }
}

impl From<Ontology> for String {
    fn from(o: Ontology) -> Self {
        o.to_string()
    }
}

impl fmt::Display for Ontology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ontology::Hpo => f.write_str("HPO"),
            Ontology::Go => f.write_str("GO"),
            Ontology::Other(name) => f.write_str(name),
        }
    }
}

impl Ontology {
    /// Identifier prefix (without the colon) for the built-in ontologies.
    pub fn prefix(&self) -> Option<&'static str> {
        match self {
            Ontology::Hpo => Some("HP"),
            Ontology::Go => Some("GO"),
            Ontology::Other(_) => None,
        }
    }

    pub fn is_valid_identifier(&self, identifier: &str) -> bool {
        static HPO: OnceLock<Regex> = OnceLock::new();
        static GO: OnceLock<Regex> = OnceLock::new();
        match self {
            Ontology::Hpo => HPO
                .get_or_init(|| Regex::new(r"^HP:[0-9]{7}$").unwrap())
                .is_match(identifier),
            Ontology::Go => GO
                .get_or_init(|| Regex::new(r"^GO:[0-9]{7}$").unwrap())
                .is_match(identifier),
            Ontology::Other(_) => !identifier.trim().is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        })
    }
}

/// One ontology fact: a term label and its canonical identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub term_id: String,
    pub label: String,
    pub identifier: String,
    pub ontology: Ontology,
    pub split: Split,
}

/// Deterministic-decoding correctness of one term at epochs `0..=E`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochTrace {
    pub term_id: String,
    pub correct: Vec<bool>,
}

impl EpochTrace {
    pub fn new(term_id: impl Into<String>, correct: Vec<bool>) -> Self {
        Self {
            term_id: term_id.into(),
            correct,
        }
    }

    pub fn max_epoch(&self) -> u32 {
        self.correct.len().saturating_sub(1) as u32
    }

    pub fn baseline_correct(&self) -> bool {
        self.correct.first().copied().unwrap_or(false)
    }
}

/// Per-term predictors, raw and (optionally) transformed.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateVector {
    pub term_id: String,
    pub term_count: u64,
    pub id_count: u64,
    pub annotation_count: u64,
    pub latent_hits: u32,
    pub latent_n: u32,
    pub latent: bool,
    pub latent_dose: f64,
    pub seen_flag: Option<bool>,
    pub transformed: Option<Vec<f64>>,
}

impl CovariateVector {
    pub fn new(
        term_id: impl Into<String>,
        term_count: u64,
        id_count: u64,
        annotation_count: u64,
        latent_hits: u32,
        latent_n: u32,
    ) -> Result<Self> {
        let term_id = term_id.into();
        if latent_n == 0 {
            return Err(Error::InvalidInput(format!(
                "latent_n must be at least 1 for {term_id}"
            )));
        }
        if latent_hits > latent_n {
            return Err(Error::InvalidInput(format!(
                "latent_hits {latent_hits} exceeds latent_n {latent_n} for {term_id}"
            )));
        }
        Ok(Self {
            term_id,
            term_count,
            id_count,
            annotation_count,
            latent_hits,
            latent_n,
            latent: latent_hits >= 1,
            latent_dose: latent_hits as f64 / latent_n as f64,
            seen_flag: None,
            transformed: None,
        })
    }

    pub fn with_seen_flag(mut self, seen: bool) -> Self {
        self.seen_flag = Some(seen);
        self
    }
}

/// Input serialization for term files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn validate_term(term: &TermRecord, line: usize) -> Result<()> {
    if term.term_id.is_empty() {
        return Err(parse_error(line, "empty field term_id"));
    }
    if let Ontology::Other(name) = &term.ontology {
        if name.trim().is_empty() {
            return Err(parse_error(line, "empty field ontology"));
        }
    }
    if !term.ontology.is_valid_identifier(&term.identifier) {
        return Err(parse_error(line, "identifier pattern mismatch"));
    }
    Ok(())
}

/// Parses and validates term records, preserving input order.
pub fn parse_terms<R: BufRead>(source: R, format: InputFormat) -> Result<Vec<TermRecord>> {
    let mut terms = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |term: TermRecord, line: usize| -> Result<()> {
        validate_term(&term, line)?;
        if !seen.insert(term.term_id.clone()) {
            return Err(Error::DuplicateKey(term.term_id));
        }
        terms.push(term);
        Ok(())
    };
    match format {
        InputFormat::Jsonl => {
            for (idx, line) in source.lines().enumerate() {
                let line_no = idx + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let term: TermRecord = serde_json::from_str(&line)
                    .map_err(|e| parse_error(line_no, format!("invalid term record ({e})")))?;
                push(term, line_no)?;
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().from_reader(source);
            let headers = reader
                .headers()
                .map_err(|e| parse_error(1, format!("invalid header ({e})")))?
                .clone();
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    parse_error(line, format!("invalid term record ({e})"))
                })?;
                let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let term: TermRecord = record
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_error(line_no, format!("invalid term record ({e})")))?;
                push(term, line_no)?;
            }
        }
    }
    Ok(terms)
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    term_id: String,
    epoch: u32,
    correct: bool,
}

/// Assembles dense per-term traces from `(term_id, epoch, correct)` JSONL rows.
///
/// Term order follows first appearance in the stream.
pub fn parse_traces<R: BufRead>(source: R, max_epoch: u32) -> Result<Vec<EpochTrace>> {
    let width = max_epoch as usize + 1;
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, Vec<Option<bool>>> = HashMap::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceRow = serde_json::from_str(&line)
            .map_err(|e| parse_error(line_no, format!("invalid trace row ({e})")))?;
        if row.epoch > max_epoch {
            return Err(parse_error(
                line_no,
                format!("epoch {} exceeds max epoch {max_epoch}", row.epoch),
            ));
        }
        let slots = cells.entry(row.term_id.clone()).or_insert_with(|| {
            order.push(row.term_id.clone());
            vec![None; width]
        });
        let slot = &mut slots[row.epoch as usize];
        if slot.is_some() {
            return Err(Error::DuplicateEpoch {
                term_id: row.term_id,
                epoch: row.epoch,
            });
        }
        *slot = Some(row.correct);
    }
    order
        .into_iter()
        .map(|term_id| {
            let slots = cells.remove(&term_id).unwrap_or_default();
            let mut correct = Vec::with_capacity(width);
            for (epoch, slot) in slots.into_iter().enumerate() {
                match slot {
                    Some(value) => correct.push(value),
                    None => {
                        return Err(Error::MissingEpoch {
                            term_id,
                            epoch: epoch as u32,
                        })
                    }
                }
            }
            Ok(EpochTrace { term_id, correct })
        })
        .collect()
}

/// Largest epoch index present in a traces stream.
pub fn scan_max_epoch<R: BufRead>(source: R) -> Result<u32> {
    let mut max_epoch = 0;
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceRow = serde_json::from_str(&line)
            .map_err(|e| parse_error(idx + 1, format!("invalid trace row ({e})")))?;
        max_epoch = max_epoch.max(row.epoch);
    }
    Ok(max_epoch)
}

fn parse_count(field: &str, name: &str, line: usize) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| parse_error(line, format!("field {name} is not an integer: {field:?}")))
}

fn parse_nonnegative(field: &str, name: &str, line: usize) -> Result<u64> {
    let value = parse_count(field, name, line)?;
    if value < 0 {
        return Err(parse_error(line, format!("negative count in field {name}")));
    }
    Ok(value as u64)
}

fn parse_flag(field: &str, line: usize) -> Result<Option<bool>> {
    match field.trim() {
        "" => Ok(None),
        "true" | "1" => Ok(Some(true)),
        "false" | "0" => Ok(Some(false)),
        other => Err(parse_error(
            line,
            format!("field seen_flag is not a boolean: {other:?}"),
        )),
    }
}

/// Parses `covariates.csv`; the header must be exactly
/// `term_id,term_count,id_count,annotation_count,latent_hits,latent_n[,seen_flag]`.
pub fn parse_covariates<R: BufRead>(source: R) -> Result<Vec<CovariateVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => header.map_err(|e| parse_error(1, e.to_string()))?,
    };
    let names: Vec<&str> = header.iter().collect();
    let has_seen = match names.len() {
        6 => false,
        7 if names[6] == "seen_flag" => true,
        _ => {
            return Err(parse_error(1, format!("unexpected covariate header {names:?}")));
        }
    };
    if names[..6] != COVARIATE_HEADER {
        return Err(parse_error(1, format!("unexpected covariate header {names:?}")));
    }
    let width = names.len();

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for record in records {
        let record = record.map_err(|e| {
            parse_error(
                e.position().map(|p| p.line() as usize).unwrap_or(0),
                e.to_string(),
            )
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(parse_error(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let term_id = record[0].trim().to_string();
        if term_id.is_empty() {
            return Err(parse_error(line, "empty field term_id"));
        }
        let term_count = parse_nonnegative(&record[1], "term_count", line)?;
        let id_count = parse_nonnegative(&record[2], "id_count", line)?;
        let annotation_count = parse_nonnegative(&record[3], "annotation_count", line)?;
        let hits = parse_nonnegative(&record[4], "latent_hits", line)?;
        let n = parse_nonnegative(&record[5], "latent_n", line)?;
        let hits = u32::try_from(hits).map_err(|_| parse_error(line, "latent_hits too large"))?;
        let n = u32::try_from(n).map_err(|_| parse_error(line, "latent_n too large"))?;
        let mut cov = CovariateVector::new(term_id, term_count, id_count, annotation_count, hits, n)
            .map_err(|e| parse_error(line, e.to_string()))?;
        if has_seen {
            cov.seen_flag = parse_flag(&record[6], line)?;
        }
        if !ids.insert(cov.term_id.clone()) {
            return Err(Error::DuplicateKey(cov.term_id));
        }
        out.push(cov);
    }
    Ok(out)
}

/// Raw field a regression covariate is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSource {
    TermCount,
    IdCount,
    AnnotationCount,
    Latent,
    SeenFlag,
}

impl CovariateSource {
    pub fn field_name(self) -> &'static str {
        match self {
            CovariateSource::TermCount => "term_count",
            CovariateSource::IdCount => "id_count",
            CovariateSource::AnnotationCount => "annotation_count",
            CovariateSource::Latent => "latent",
            CovariateSource::SeenFlag => "seen_flag",
        }
    }

    pub fn from_field_name(name: &str) -> Option<Self> {
        Some(match name {
            "term_count" => CovariateSource::TermCount,
            "id_count" => CovariateSource::IdCount,
            "annotation_count" => CovariateSource::AnnotationCount,
            "latent" => CovariateSource::Latent,
            "seen_flag" | "seen" => CovariateSource::SeenFlag,
            _ => return None,
        })
    }

    pub fn natural_kind(self) -> CovariateKind {
        match self {
            CovariateSource::TermCount
            | CovariateSource::IdCount
            | CovariateSource::AnnotationCount => CovariateKind::ContinuousCount,
            CovariateSource::Latent | CovariateSource::SeenFlag => CovariateKind::Binary,
        }
    }

    /// Human-readable row label for tables and plots.
    pub fn display_label(self) -> &'static str {
        match self {
            CovariateSource::TermCount => "Term PMC",
            CovariateSource::IdCount => "ID PMC",
            CovariateSource::AnnotationCount => "Annotations",
            CovariateSource::Latent => "Latent knowledge",
            CovariateSource::SeenFlag => "Seen during training",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    ContinuousCount,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub source: CovariateSource,
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn new(source: CovariateSource) -> Self {
        Self {
            name: source.field_name().to_string(),
            source,
            kind: source.natural_kind(),
        }
    }

    /// Parses `field` or `field:kind` (`kind` ∈ {continuous_count, continuous, binary}).
    pub fn parse(text: &str) -> Result<Self> {
        let (field, kind) = match text.split_once(':') {
            Some((f, k)) => (f.trim(), Some(k.trim())),
            None => (text.trim(), None),
        };
        let source = CovariateSource::from_field_name(field)
            .ok_or_else(|| Error::Config(format!("unknown covariate field {field:?}")))?;
        let kind = match kind {
            None => source.natural_kind(),
            Some("continuous_count") | Some("continuous") => CovariateKind::ContinuousCount,
            Some("binary") => CovariateKind::Binary,
            Some(other) => return Err(Error::Config(format!("unknown covariate kind {other:?}"))),
        };
        if kind != source.natural_kind() {
            return Err(Error::Config(format!(
                "covariate {field} cannot be treated as {kind:?}"
            )));
        }
        Ok(Self {
            name: source.field_name().to_string(),
            source,
            kind,
        })
    }

    pub fn parse_list(text: &str) -> Result<Vec<Self>> {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Self::parse)
            .collect()
    }

    fn raw_value(&self, cov: &CovariateVector) -> Result<f64> {
        Ok(match self.source {
            CovariateSource::TermCount => cov.term_count as f64,
            CovariateSource::IdCount => cov.id_count as f64,
            CovariateSource::AnnotationCount => cov.annotation_count as f64,
            CovariateSource::Latent => f64::from(u8::from(cov.latent)),
            CovariateSource::SeenFlag => match cov.seen_flag {
                Some(flag) => f64::from(u8::from(flag)),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "seen_flag missing for {}",
                        cov.term_id
                    )))
                }
            },
        })
    }
}

/// Standard four-covariate model: three popularity counts plus latent knowledge.
pub fn default_covariate_specs() -> Vec<CovariateSpec> {
    [
        CovariateSource::TermCount,
        CovariateSource::IdCount,
        CovariateSource::AnnotationCount,
        CovariateSource::Latent,
    ]
    .into_iter()
    .map(CovariateSpec::new)
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParam {
    pub name: String,
    pub kind: CovariateKind,
    /// Mean of `ln(x+1)`; absent for binary covariates.
    pub mean: Option<f64>,
    /// Population standard deviation of `ln(x+1)`; absent for binary covariates.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub convention: String,
    pub covariates: Vec<TransformParam>,
}

impl TransformParams {
    /// Applies stored parameters to raw covariates, one row per input vector.
    pub fn apply(&self, specs: &[CovariateSpec], raw: &[CovariateVector]) -> Result<Vec<Vec<f64>>> {
        if specs.len() != self.covariates.len() {
            return Err(Error::InvalidInput(
                "transform parameters do not match covariate specs".into(),
            ));
        }
        raw.iter()
            .map(|cov| {
                specs
                    .iter()
                    .zip(&self.covariates)
                    .map(|(spec, param)| {
                        let value = spec.raw_value(cov)?;
                        Ok(match (param.mean, param.std) {
                            (Some(mean), Some(std)) => (value.ln_1p() - mean) / std,
                            _ => value,
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Mean and population std of `ln(x+1)`; `None` when the values cannot be standardized.
pub fn log_count_moments(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| v.ln_1p()).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (std > 1e-12 * mean.abs().max(1.0)).then_some((mean, std))
}

/// Laplace-smoothed log transform plus standardization over the supplied rows.
pub fn transform_covariates(
    raw: &[CovariateVector],
    specs: &[CovariateSpec],
) -> Result<(Vec<CovariateVector>, TransformParams)> {
    let mut params = Vec::with_capacity(specs.len());
    for spec in specs {
        let param = match spec.kind {
            CovariateKind::Binary => {
                for cov in raw {
                    spec.raw_value(cov)?;
                }
                TransformParam {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    mean: None,
                    std: None,
                }
            }
            CovariateKind::ContinuousCount => {
                let counts = raw
                    .iter()
                    .map(|cov| spec.raw_value(cov))
                    .collect::<Result<Vec<_>>>()?;
                let (mean, std) = log_count_moments(&counts)
                    .ok_or_else(|| Error::DegenerateCovariate(spec.name.clone()))?;
                TransformParam {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    mean: Some(mean),
                    std: Some(std),
                }
            }
        };
        params.push(param);
    }
    let params = TransformParams {
        convention: TRANSFORM_CONVENTION.to_string(),
        covariates: params,
    };
    let rows = params.apply(specs, raw)?;
    let transformed = raw
        .iter()
        .zip(rows)
        .map(|(cov, row)| CovariateVector {
            transformed: Some(row),
            ..cov.clone()
        })
        .collect();
    Ok((transformed, params))
}

/// A validated collection of terms, traces and covariates sharing one epoch horizon.
#[derive(Debug, Clone)]
pub struct Dataset {
    terms: Vec<TermRecord>,
    traces: Vec<EpochTrace>,
    covariates: Vec<CovariateVector>,
    max_epoch: u32,
    term_index: HashMap<String, usize>,
    trace_index: HashMap<String, usize>,
    covariate_index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        terms: Vec<TermRecord>,
        traces: Vec<EpochTrace>,
        covariates: Vec<CovariateVector>,
        max_epoch: u32,
    ) -> Result<Self> {
        let mut term_index = HashMap::with_capacity(terms.len());
        for (i, term) in terms.iter().enumerate() {
            if term_index.insert(term.term_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey(term.term_id.clone()));
            }
        }
        let mut trace_index = HashMap::with_capacity(traces.len());
        for (i, trace) in traces.iter().enumerate() {
            if !term_index.contains_key(&trace.term_id) {
                return Err(Error::UnknownTerm {
                    term_id: trace.term_id.clone(),
                    source_file: TRACES_FILE,
                });
            }
            if trace.correct.len() != max_epoch as usize + 1 {
                return Err(Error::InvalidInput(format!(
                    "trace for {} has {} epochs, expected {}",
                    trace.term_id,
                    trace.correct.len(),
                    max_epoch + 1
                )));
            }
            if trace_index.insert(trace.term_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey(trace.term_id.clone()));
            }
        }
        if let Some(term) = terms.iter().find(|t| !trace_index.contains_key(&t.term_id)) {
            return Err(Error::InvalidInput(format!(
                "term {} has no epoch trace",
                term.term_id
            )));
        }
        let mut covariate_index = HashMap::with_capacity(covariates.len());
        for (i, cov) in covariates.iter().enumerate() {
            if !term_index.contains_key(&cov.term_id) {
                return Err(Error::UnknownTerm {
                    term_id: cov.term_id.clone(),
                    source_file: COVARIATES_FILE,
                });
            }
            if covariate_index.insert(cov.term_id.clone(), i).is_some() {
                return Err(Error::DuplicateKey(cov.term_id.clone()));
            }
        }
        Ok(Self {
            terms,
            traces,
            covariates,
            max_epoch,
            term_index,
            trace_index,
            covariate_index,
        })
    }

    /// Loads `terms.jsonl`, `traces.jsonl` and (if present) `covariates.csv` from `dir`.
    ///
    /// When `max_epoch` is `None` the horizon is the largest epoch found in the traces.
    pub fn load_dir(dir: &Path, max_epoch: Option<u32>) -> Result<Self> {
        let open = |name: &str| -> Result<std::io::BufReader<std::fs::File>> {
            let path = dir.join(name);
            let file = std::fs::File::open(&path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            Ok(std::io::BufReader::new(file))
        };
        let terms = parse_terms(open(TERMS_FILE)?, InputFormat::Jsonl)?;
        let max_epoch = match max_epoch {
            Some(e) => e,
            None => scan_max_epoch(open(TRACES_FILE)?)?,
        };
        let traces = parse_traces(open(TRACES_FILE)?, max_epoch)?;
        let covariates = if dir.join(COVARIATES_FILE).exists() {
            parse_covariates(open(COVARIATES_FILE)?)?
        } else {
            Vec::new()
        };
        Self::new(terms, traces, covariates, max_epoch)
    }

    pub fn terms(&self) -> &[TermRecord] {
        &self.terms
    }

    pub fn traces(&self) -> &[EpochTrace] {
        &self.traces
    }

    pub fn covariates(&self) -> &[CovariateVector] {
        &self.covariates
    }

    pub fn max_epoch(&self) -> u32 {
        self.max_epoch
    }

    pub fn term(&self, term_id: &str) -> Option<&TermRecord> {
        self.term_index.get(term_id).map(|&i| &self.terms[i])
    }

    pub fn trace(&self, term_id: &str) -> Option<&EpochTrace> {
        self.trace_index.get(term_id).map(|&i| &self.traces[i])
    }

    pub fn covariate(&self, term_id: &str) -> Option<&CovariateVector> {
        self.covariate_index.get(term_id).map(|&i| &self.covariates[i])
    }

    /// Covariate vectors keyed by term id, for joins in downstream modules.
    pub fn covariate_map(&self) -> BTreeMap<&str, &CovariateVector> {
        self.covariates
            .iter()
            .map(|c| (c.term_id.as_str(), c))
            .collect()
    }
}

pub fn write_terms_jsonl<W: Write>(mut out: W, terms: &[TermRecord]) -> Result<()> {
    for term in terms {
        serde_json::to_writer(&mut out, term)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_traces_jsonl<W: Write>(mut out: W, traces: &[EpochTrace]) -> Result<()> {
    for trace in traces {
        for (epoch, &correct) in trace.correct.iter().enumerate() {
            let row = TraceRow {
                term_id: trace.term_id.clone(),
                epoch: epoch as u32,
                correct,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Writes raw covariates; the `seen_flag` column appears when any row carries one.
pub fn write_covariates_csv<W: Write>(mut out: W, covariates: &[CovariateVector]) -> Result<()> {
    let with_seen = covariates.iter().any(|c| c.seen_flag.is_some());
    let mut header = COVARIATE_HEADER.join(",");
    if with_seen {
        header.push_str(",seen_flag");
    }
    writeln!(out, "{header}")?;
    for c in covariates {
        write!(
            out,
            "{},{},{},{},{},{}",
            c.term_id, c.term_count, c.id_count, c.annotation_count, c.latent_hits, c.latent_n
        )?;
        if with_seen {
            match c.seen_flag {
                Some(flag) => write!(out, ",{flag}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
