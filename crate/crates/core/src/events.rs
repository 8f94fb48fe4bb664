//! Conversion of epoch traces into right-censored event records.
//!
//! Only the first transition counts. Acquisition and generalization look for
//! the first epoch `t ≥ 1` with a correct answer, degradation for the first
//! `t ≥ 1` with an incorrect one. Terms correct at epoch 0 are censored at 0
//! for acquisition, excluded from generalization, and form the degradation
//! cohort.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, EpochTrace, Split};
use crate::error::{Error, Result};
use crate::probe::{DoseBand, LatentProbeResult};

pub const EVENTS_FILE: &str = "events.jsonl";

/// Label keys attached by [`build_cohort`].
pub const LABEL_SPLIT: &str = "split";
pub const LABEL_ONTOLOGY: &str = "ontology";
pub const LABEL_LATENT: &str = "latent";
pub const LABEL_LATENT_BAND: &str = "latent_band";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Acquisition,
    Generalization,
    Degradation,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [
        EventKind::Acquisition,
        EventKind::Generalization,
        EventKind::Degradation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Acquisition => "acquisition",
            EventKind::Generalization => "generalization",
            EventKind::Degradation => "degradation",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acquisition" => Ok(EventKind::Acquisition),
            "generalization" => Ok(EventKind::Generalization),
            "degradation" => Ok(EventKind::Degradation),
            other => Err(Error::Config(format!("unknown event kind {other:?}"))),
        }
    }
}

/// One subject in a survival analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub term_id: String,
    pub kind: EventKind,
    pub time: u32,
    /// `true` for an observed event, `false` for right-censoring.
    pub observed: bool,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn new(term_id: impl Into<String>, kind: EventKind, time: u32, observed: bool) -> Self {
        Self {
            term_id: term_id.into(),
            kind,
            time,
            observed,
            labels: BTreeMap::new(),
        }
    }

    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels.get(key).map(String::as_str)
    }
}

fn first_epoch_with(trace: &EpochTrace, value: bool) -> Option<u32> {
    trace
        .correct
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &c)| c == value)
        .map(|(t, _)| t as u32)
}

fn onset(trace: &EpochTrace, kind: EventKind) -> EventRecord {
    match first_epoch_with(trace, true) {
        Some(t) => EventRecord::new(&trace.term_id, kind, t, true),
        None => EventRecord::new(&trace.term_id, kind, trace.max_epoch(), false),
    }
}

pub fn extract_acquisition(trace: &EpochTrace) -> EventRecord {
    if trace.baseline_correct() {
        return EventRecord::new(&trace.term_id, EventKind::Acquisition, 0, false);
    }
    onset(trace, EventKind::Acquisition)
}

/// Unseen terms incorrect at baseline only.
pub fn extract_generalization(trace: &EpochTrace, split: Split) -> Option<EventRecord> {
    if split != Split::Unseen || trace.baseline_correct() {
        return None;
    }
    Some(onset(trace, EventKind::Generalization))
}

/// Baseline-correct terms only.
pub fn extract_degradation(trace: &EpochTrace) -> Option<EventRecord> {
    if !trace.baseline_correct() {
        return None;
    }
    Some(match first_epoch_with(trace, false) {
        Some(t) => EventRecord::new(&trace.term_id, EventKind::Degradation, t, true),
        None => EventRecord::new(&trace.term_id, EventKind::Degradation, trace.max_epoch(), false),
    })
}

pub fn extract(trace: &EpochTrace, split: Split, kind: EventKind) -> Option<EventRecord> {
    match kind {
        EventKind::Acquisition => Some(extract_acquisition(trace)),
        EventKind::Generalization => extract_generalization(trace, split),
        EventKind::Degradation => extract_degradation(trace),
    }
}

fn latent_labels(latent: bool, band: DoseBand) -> [(String, String); 2] {
    [
        (
            LABEL_LATENT.to_string(),
            if latent { "present" } else { "absent" }.to_string(),
        ),
        (LABEL_LATENT_BAND.to_string(), band.as_str().to_string()),
    ]
}

/// Applies the per-kind extractor over all terms and attaches group labels.
///
/// `split` and `ontology` labels come from the term records; `latent` and
/// `latent_band` come from the covariates file (hits / n).
pub fn build_cohort(dataset: &Dataset, kind: EventKind, strata: &[String]) -> Result<Vec<EventRecord>> {
    build_cohort_with_probes(dataset, kind, strata, None)
}

/// As [`build_cohort`], with latent labels taken from probe results where available.
pub fn build_cohort_with_probes(
    dataset: &Dataset,
    kind: EventKind,
    strata: &[String],
    probes: Option<&[LatentProbeResult]>,
) -> Result<Vec<EventRecord>> {
    let probe_map: HashMap<&str, &LatentProbeResult> = probes
        .unwrap_or_default()
        .iter()
        .map(|p| (p.term_id.as_str(), p))
        .collect();
    let mut cohort = Vec::new();
    for term in dataset.terms() {
        let trace = dataset
            .trace(&term.term_id)
            .expect("dataset invariant: every term has a trace");
        let Some(mut record) = extract(trace, term.split, kind) else {
            continue;
        };
        record
            .labels
            .insert(LABEL_SPLIT.to_string(), term.split.to_string());
        record
            .labels
            .insert(LABEL_ONTOLOGY.to_string(), term.ontology.to_string());
        if let Some(probe) = probe_map.get(term.term_id.as_str()) {
            record.labels.extend(latent_labels(probe.latent, probe.dose_band));
        } else if let Some(cov) = dataset.covariate(&term.term_id) {
            record.labels.extend(latent_labels(
                cov.latent,
                DoseBand::classify(cov.latent_hits, cov.latent_n),
            ));
        }
        for key in strata {
            if !record.labels.contains_key(key) {
                return Err(Error::MissingStratum {
                    label: key.clone(),
                    term_id: term.term_id.clone(),
                });
            }
        }
        cohort.push(record);
    }
    Ok(cohort)
}

/// Splits a cohort by the value of one label, in sorted label order.
pub fn stratify<'a>(cohort: &'a [EventRecord], key: &str) -> Result<BTreeMap<String, Vec<&'a EventRecord>>> {
    let mut groups: BTreeMap<String, Vec<&EventRecord>> = BTreeMap::new();
    for record in cohort {
        let value = record.label(key).ok_or_else(|| Error::MissingStratum {
            label: key.to_string(),
            term_id: record.term_id.clone(),
        })?;
        groups.entry(value.to_string()).or_default().push(record);
    }
    Ok(groups)
}

pub fn count_observed(cohort: &[EventRecord]) -> (usize, usize) {
    let observed = cohort.iter().filter(|r| r.observed).count();
    (observed, cohort.len() - observed)
}

pub fn write_events_jsonl<W: Write>(mut out: W, records: &[EventRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(source: R) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("invalid event record ({e})"),
        })?);
    }
    Ok(out)
}
