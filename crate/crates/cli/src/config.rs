//! Optional TOML configuration merged under command-line flags.
//!
//! Top-level keys: `epochs`, `alpha`, `sigma`, `epsilon`, `strata` (array of
//! label keys), `covariates` (string or array of `field[:kind]`), `seed`,
//! `significance`, `ph_transform`. The `[probe]` table holds probe settings
//! and `[simulate]` holds simulator settings, both by field name.

use std::path::Path;

use factsurv::cox::TimeTransform;
use factsurv::datamodel::{default_covariate_specs, CovariateSpec};
use factsurv::probe::ProbeConfig;
use factsurv::simulate::SimConfig;
use factsurv::velocity::{DEFAULT_EPSILON, DEFAULT_SIGMA};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecList {
    Joined(String),
    Items(Vec<String>),
}

impl SpecList {
    fn joined(&self) -> String {
        match self {
            SpecList::Joined(s) => s.clone(),
            SpecList::Items(items) => items.join(","),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epochs: Option<u32>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
    pub strata: Option<Vec<String>>,
    pub covariates: Option<SpecList>,
    pub seed: Option<u64>,
    pub significance: Option<f64>,
    pub ph_transform: Option<String>,
    pub probe: Option<toml::Table>,
    pub simulate: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn probe_config(&self) -> Result<ProbeConfig, CliError> {
        overlay(ProbeConfig::default(), self.probe.as_ref(), "probe")
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        overlay(SimConfig::default(), self.simulate.as_ref(), "simulate")
    }
}

/// Replaces fields of `base` with those present in `table`.
fn overlay<T: Serialize + for<'de> Deserialize<'de>>(
    base: T,
    table: Option<&toml::Table>,
    section: &str,
) -> Result<T, CliError> {
    let Some(table) = table else {
        return Ok(base);
    };
    let mut value = serde_json::to_value(base).map_err(|e| CliError::Usage(e.to_string()))?;
    let fields = value.as_object_mut().expect("config serializes as an object");
    for (key, v) in table {
        if !fields.contains_key(key) {
            return Err(CliError::Usage(format!("unknown key {key:?} in [{section}]")));
        }
        let v = serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))?;
        fields.insert(key.clone(), v);
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid [{section}]: {e}")))
}

/// Analysis parameters after merging flags over the config file over defaults.
#[derive(Debug, Clone, Serialize)]
pub struct Params {
    pub epochs: Option<u32>,
    pub alpha: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// `None` when neither flag nor config named strata.
    pub strata: Option<Vec<String>>,
    #[serde(serialize_with = "spec_names")]
    pub covariates: Vec<CovariateSpec>,
    pub ph_transform: TimeTransform,
    pub seed: u64,
    pub significance: f64,
}

fn spec_names<S: serde::Serializer>(specs: &[CovariateSpec], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(specs.iter().map(|c| c.name.as_str()))
}

/// Flag values that override the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub epochs: Option<u32>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
    pub strata: Option<Vec<String>>,
    pub covariates: Option<String>,
    pub ph_transform: Option<String>,
    pub seed: Option<u64>,
    pub significance: Option<f64>,
}

impl Params {
    pub fn resolve(file: &FileConfig, flags: Overrides) -> Result<Self, CliError> {
        let covariates = match flags
            .covariates
            .or_else(|| file.covariates.as_ref().map(SpecList::joined))
        {
            Some(text) => CovariateSpec::parse_list(&text).map_err(|e| CliError::Usage(e.to_string()))?,
            None => default_covariate_specs(),
        };
        let ph_transform = match flags.ph_transform.or_else(|| file.ph_transform.clone()) {
            Some(t) => t.parse().map_err(|e: factsurv::Error| CliError::Usage(e.to_string()))?,
            None => TimeTransform::default(),
        };
        let params = Self {
            epochs: flags.epochs.or(file.epochs),
            alpha: flags.alpha.or(file.alpha).unwrap_or(0.05),
            sigma: flags.sigma.or(file.sigma).unwrap_or(DEFAULT_SIGMA),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            strata: flags.strata.or_else(|| file.strata.clone()),
            covariates,
            ph_transform,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            significance: flags
                .significance
                .or(file.significance)
                .unwrap_or(factsurv::report::SIGNIFICANCE_THRESHOLD),
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), CliError> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open_unit("alpha", self.alpha)?;
        open_unit("significance", self.significance)?;
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(CliError::Usage(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(CliError::Usage(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.epochs == Some(0) {
            return Err(CliError::Usage("epochs must be at least 1".into()));
        }
        if self.covariates.is_empty() {
            return Err(CliError::Usage("at least one covariate is required".into()));
        }
        Ok(())
    }
}
