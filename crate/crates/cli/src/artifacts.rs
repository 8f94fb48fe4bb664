//! On-disk JSON documents exchanged between subcommands.

use std::collections::BTreeMap;

use factsurv::cox::CoxSummary;
use factsurv::events::EventKind;
use factsurv::logrank::TestResult;
use factsurv::survival::{RestrictedMean, SurvivalCurve};
use factsurv::velocity::VelocityCurve;
use serde::{Deserialize, Serialize};

pub const EVENTS_SUMMARY_FILE: &str = "events_summary.json";
pub const OVERALL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    pub subjects: usize,
    pub observed: usize,
    pub censored: usize,
    pub censored_at_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsSummary {
    pub epochs: u32,
    pub terms: usize,
    /// Where latent labels came from: `probes`, `covariates` or `none`.
    pub latent_source: String,
    pub kinds: BTreeMap<EventKind, KindCounts>,
}

/// Stratum identity shared by curve artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub kind: EventKind,
    /// `all`, or `key=value`.
    pub stratum: String,
    pub key: Option<String>,
    pub value: Option<String>,
}

impl Stratum {
    pub fn overall(kind: EventKind) -> Self {
        Self {
            kind,
            stratum: OVERALL.to_string(),
            key: None,
            value: None,
        }
    }

    pub fn labelled(kind: EventKind, key: &str, value: &str) -> Self {
        Self {
            kind,
            stratum: format!("{key}={value}"),
            key: Some(key.to_string()),
            value: Some(value.to_string()),
        }
    }

    pub fn file_stem(&self) -> String {
        match (&self.key, &self.value) {
            (Some(k), Some(v)) => crate::fsio::stem(&format!("{k}-{v}")),
            _ => OVERALL.to_string(),
        }
    }

    /// Grouping a curve belongs to in figures: `all` or the stratum key.
    pub fn group(&self) -> &str {
        self.key.as_deref().unwrap_or(OVERALL)
    }

    /// Legend label.
    pub fn legend(&self) -> String {
        match (&self.key, &self.value) {
            (Some(k), Some(v)) => format!("{k}: {v}"),
            _ => "all terms".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmArtifact {
    #[serde(flatten)]
    pub stratum: Stratum,
    pub epochs: u32,
    #[serde(flatten)]
    pub curve: SurvivalCurve,
    pub median: Option<u32>,
    /// Restricted mean time to event up to `epochs`.
    pub rmst: Option<RestrictedMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogrankArtifact {
    pub kind: EventKind,
    pub key: String,
    #[serde(flatten)]
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxArtifact {
    pub kind: EventKind,
    #[serde(flatten)]
    pub summary: CoxSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityArtifact {
    #[serde(flatten)]
    pub stratum: Stratum,
    #[serde(flatten)]
    pub curve: VelocityCurve,
}

/// Per-command metadata, written to `meta/<command>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

impl Meta {
    pub fn new(command: &str, seed: u64, params: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            params,
        }
    }

    pub fn path(&self) -> String {
        format!("meta/{}.json", self.command)
    }
}
