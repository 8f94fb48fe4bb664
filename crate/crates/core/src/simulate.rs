//! Discrete-time proportional-hazards generator for synthetic cohorts with
//! known effects.
//!
//! Each term draws from its own ChaCha8 stream keyed by the root seed and the
//! term index, so output does not depend on evaluation order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    transform_covariates, write_covariates_csv, write_terms_jsonl, write_traces_jsonl,
    CovariateSource, CovariateSpec, CovariateVector, EpochTrace, Ontology, Split, TermRecord,
    TransformParams, COVARIATES_FILE, TERMS_FILE, TRACES_FILE,
};
use crate::error::{Error, Result};

pub const TRUTH_FILE: &str = "truth.json";

const COVARIATE_STREAM: u64 = 0;
const TRACE_STREAM: u64 = 1;

/// h₀(t), constant or one value per epoch `1..=E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaselineHazard {
    Constant(f64),
    PerEpoch(Vec<f64>),
}

impl BaselineHazard {
    /// Baseline hazard at epoch `t ≥ 1`.
    pub fn at(&self, t: u32) -> f64 {
        match self {
            BaselineHazard::Constant(h) => *h,
            BaselineHazard::PerEpoch(hs) => hs[t as usize - 1],
        }
    }

    /// Constant hazard giving per-epoch event probability `p` at βᵀx = 0.
    pub fn from_probability(p: f64) -> Self {
        BaselineHazard::Constant(-(1.0 - p).ln())
    }
}

/// Log-normal count model: `round(exp(mu + sigma·Z))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateModel {
    pub latent_prevalence: f64,
    /// Stochastic samples per simulated probe.
    pub latent_n: u32,
    pub term_count: CountModel,
    pub id_count: CountModel,
    pub annotation_count: CountModel,
    pub seen_fraction: f64,
}

impl Default for CovariateModel {
    fn default() -> Self {
        Self {
            latent_prevalence: 0.3,
            latent_n: 50,
            term_count: CountModel { mu: 4.0, sigma: 1.5 },
            id_count: CountModel { mu: 1.0, sigma: 1.2 },
            annotation_count: CountModel { mu: 2.5, sigma: 1.0 },
            seen_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_terms: usize,
    pub epochs: u32,
    pub baseline_hazard: BaselineHazard,
    /// True log hazard ratios keyed by covariate field name; absent fields are 0.
    pub beta: BTreeMap<String, f64>,
    pub covariates: CovariateModel,
    pub baseline_correct_fraction: f64,
    /// Simulate first correct→incorrect transitions instead of acquisitions.
    pub degrade: bool,
    /// From this epoch on the linear predictor changes sign (non-proportional hazards).
    pub flip_epoch: Option<u32>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_terms: 800,
            epochs: 20,
            baseline_hazard: BaselineHazard::Constant(0.05),
            beta: BTreeMap::new(),
            covariates: CovariateModel::default(),
            baseline_correct_fraction: 0.0,
            degrade: false,
            flip_epoch: None,
            seed: 0,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms == 0 {
            return Err(Error::Config("n_terms must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let hazards: Vec<f64> = match &self.baseline_hazard {
            BaselineHazard::Constant(h) => vec![*h],
            BaselineHazard::PerEpoch(hs) => {
                if hs.len() != self.epochs as usize {
                    return Err(Error::Config(format!(
                        "baseline_hazard has {} values, expected {}",
                        hs.len(),
                        self.epochs
                    )));
                }
                hs.clone()
            }
        };
        if let Some(h) = hazards.iter().find(|h| !(0.0..1.0).contains(*h)) {
            return Err(Error::Config(format!("baseline hazard {h} outside [0, 1)")));
        }
        for (name, value) in &self.beta {
            if CovariateSource::from_field_name(name).is_none() {
                return Err(Error::Config(format!("unknown covariate {name:?} in beta")));
            }
            if !value.is_finite() {
                return Err(Error::Config(format!("beta for {name} is not finite")));
            }
        }
        let m = &self.covariates;
        unit_interval("latent_prevalence", m.latent_prevalence)?;
        unit_interval("seen_fraction", m.seen_fraction)?;
        unit_interval("baseline_correct_fraction", self.baseline_correct_fraction)?;
        if m.latent_n == 0 {
            return Err(Error::Config("latent_n must be at least 1".into()));
        }
        for (name, c) in [
            ("term_count", m.term_count),
            ("id_count", m.id_count),
            ("annotation_count", m.annotation_count),
        ] {
            if !c.mu.is_finite() || !(c.sigma >= 0.0) || !c.sigma.is_finite() {
                return Err(Error::Config(format!("invalid count model for {name}")));
            }
        }
        if let Some(f) = self.flip_epoch {
            if f == 0 || f > self.epochs {
                return Err(Error::Config(format!("flip_epoch {f} outside 1..={}", self.epochs)));
            }
        }
        Ok(())
    }

    /// Covariates with a nonzero effect, in a fixed field order.
    pub fn effect_specs(&self) -> Vec<(CovariateSpec, f64)> {
        [
            CovariateSource::TermCount,
            CovariateSource::IdCount,
            CovariateSource::AnnotationCount,
            CovariateSource::Latent,
            CovariateSource::SeenFlag,
        ]
        .into_iter()
        .filter_map(|source| {
            let beta = self
                .beta
                .iter()
                .find(|(k, _)| CovariateSource::from_field_name(k) == Some(source))
                .map(|(_, v)| *v)
                .unwrap_or(0.0);
            (beta != 0.0).then(|| (CovariateSpec::new(source), beta))
        })
        .collect()
    }
}

fn term_rng(seed: u64, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + purpose);
    rng
}

fn draw_count(rng: &mut ChaCha8Rng, model: CountModel) -> u64 {
    let z: f64 = StandardNormal.sample(rng);
    let v = (model.mu + model.sigma * z).exp().round();
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}

pub fn term_id(index: usize) -> String {
    format!("HP:{:07}", index + 1)
}

/// Raw covariates for every term.
pub fn gen_covariates(config: &SimConfig) -> Result<Vec<CovariateVector>> {
    config.validate()?;
    let m = &config.covariates;
    (0..config.n_terms)
        .map(|i| {
            let mut rng = term_rng(config.seed, COVARIATE_STREAM, i);
            let latent = rng.random::<f64>() < m.latent_prevalence;
            let hits = if latent { rng.random_range(1..=m.latent_n) } else { 0 };
            let term_count = draw_count(&mut rng, m.term_count);
            let id_count = draw_count(&mut rng, m.id_count);
            let annotation_count = draw_count(&mut rng, m.annotation_count);
            let seen = rng.random::<f64>() < m.seen_fraction;
            Ok(CovariateVector::new(term_id(i), term_count, id_count, annotation_count, hits, m.latent_n)?
                .with_seen_flag(seen))
        })
        .collect()
}

/// Term records matching [`gen_covariates`] output.
pub fn gen_terms(covariates: &[CovariateVector]) -> Vec<TermRecord> {
    covariates
        .iter()
        .enumerate()
        .map(|(i, c)| TermRecord {
            term_id: c.term_id.clone(),
            label: format!("synthetic term {}", i + 1),
            identifier: c.term_id.clone(),
            ontology: Ontology::Hpo,
            split: if c.seen_flag.unwrap_or(true) { Split::Seen } else { Split::Unseen },
        })
        .collect()
}

/// Linear predictors βᵀx on covariates transformed as in the fitting pipeline.
pub fn linear_predictors(
    config: &SimConfig,
    covariates: &[CovariateVector],
) -> Result<(Vec<f64>, Option<TransformParams>)> {
    let effects = config.effect_specs();
    if effects.is_empty() {
        return Ok((vec![0.0; covariates.len()], None));
    }
    let specs: Vec<CovariateSpec> = effects.iter().map(|(s, _)| s.clone()).collect();
    let (transformed, params) = transform_covariates(covariates, &specs)?;
    let eta = transformed
        .iter()
        .map(|c| {
            c.transformed
                .as_ref()
                .expect("transformed above")
                .iter()
                .zip(&effects)
                .map(|(x, (_, b))| x * b)
                .sum()
        })
        .collect();
    Ok((eta, Some(params)))
}

/// Per-term epoch traces under the configured hazard model.
pub fn simulate_traces(config: &SimConfig, covariates: &[CovariateVector]) -> Result<Vec<EpochTrace>> {
    config.validate()?;
    let (eta, _) = linear_predictors(config, covariates)?;
    let epochs = config.epochs;
    covariates
        .iter()
        .zip(&eta)
        .enumerate()
        .map(|(i, (cov, &eta))| {
            let mut rng = term_rng(config.seed, TRACE_STREAM, i);
            let start_correct = rng.random::<f64>() < config.baseline_correct_fraction;
            let mut event = None;
            for t in 1..=epochs {
                let sign = match config.flip_epoch {
                    Some(f) if t >= f => -1.0,
                    _ => 1.0,
                };
                let p = 1.0 - (-config.baseline_hazard.at(t) * (sign * eta).exp()).exp();
                if !(p < 1.0) {
                    return Err(Error::HazardTooLarge { term_index: i, epoch: t });
                }
                let u: f64 = rng.random();
                if event.is_none() && u < p {
                    event = Some(t);
                }
            }
            let at_risk = start_correct == config.degrade;
            let correct = (0..=epochs)
                .map(|t| match (at_risk, event) {
                    (true, Some(e)) if t >= e => !start_correct,
                    _ => start_correct,
                })
                .collect();
            Ok(EpochTrace::new(cov.term_id.clone(), correct))
        })
        .collect()
}

/// Ground truth echoed next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub config: SimConfig,
    /// Transform applied to covariates with nonzero effect before the linear predictor.
    pub transform: Option<TransformParams>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub terms: Vec<TermRecord>,
    pub traces: Vec<EpochTrace>,
    pub covariates: Vec<CovariateVector>,
    pub truth: SimTruth,
}

impl SimOutput {
    /// Serialized dataset files as `(file name, bytes)`.
    pub fn files(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        let mut terms = Vec::new();
        write_terms_jsonl(&mut terms, &self.terms)?;
        let mut traces = Vec::new();
        write_traces_jsonl(&mut traces, &self.traces)?;
        let mut covariates = Vec::new();
        write_covariates_csv(&mut covariates, &self.covariates)?;
        let mut truth = serde_json::to_vec_pretty(&self.truth)?;
        truth.push(b'\n');
        Ok(vec![
            (TERMS_FILE, terms),
            (TRACES_FILE, traces),
            (COVARIATES_FILE, covariates),
            (TRUTH_FILE, truth),
        ])
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    let covariates = gen_covariates(config)?;
    let traces = simulate_traces(config, &covariates)?;
    let (_, transform) = linear_predictors(config, &covariates)?;
    Ok(SimOutput {
        terms: gen_terms(&covariates),
        traces,
        covariates,
        truth: SimTruth {
            config: config.clone(),
            transform,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SimConfig {
        SimConfig {
            n_terms: 200,
            seed: 11,
            ..SimConfig::default()
        }
    }

    #[test]
    fn prevalence_extremes() {
        let mut c = config();
        c.covariates.latent_prevalence = 1.0;
        assert!(gen_covariates(&c).unwrap().iter().all(|v| v.latent));
        c.covariates.latent_prevalence = 0.0;
        assert!(gen_covariates(&c).unwrap().iter().all(|v| !v.latent));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate(&config()).unwrap().files().unwrap();
        let b = simulate(&config()).unwrap().files().unwrap();
        assert_eq!(a, b);
        let mut other = config();
        other.seed = 12;
        assert_ne!(a, simulate(&other).unwrap().files().unwrap());
    }

    #[test]
    fn zero_hazard_gives_no_events() {
        let mut c = config();
        c.baseline_hazard = BaselineHazard::Constant(0.0);
        let traces = simulate(&c).unwrap().traces;
        assert!(traces.iter().all(|t| t.correct.iter().all(|&x| !x)));
    }

    #[test]
    fn hazard_too_large() {
        let mut c = config();
        c.baseline_hazard = BaselineHazard::Constant(0.9);
        c.beta.insert("latent".into(), 200.0);
        c.covariates.latent_prevalence = 0.5;
        assert!(matches!(simulate(&c), Err(Error::HazardTooLarge { .. })));
    }

    #[test]
    fn degrade_mode_starts_correct() {
        let mut c = config();
        c.degrade = true;
        c.baseline_correct_fraction = 1.0;
        let traces = simulate(&c).unwrap().traces;
        assert!(traces.iter().all(|t| t.correct[0]));
        assert!(traces.iter().any(|t| !t.correct[20]));
        // once lost, never regained
        for t in &traces {
            let first_false = t.correct.iter().position(|&x| !x).unwrap_or(t.correct.len());
            assert!(t.correct[first_false..].iter().all(|&x| !x));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = config();
        c.baseline_hazard = BaselineHazard::PerEpoch(vec![0.1; 3]);
        assert!(c.validate().is_err());
        let mut c = config();
        c.beta.insert("bogus".into(), 1.0);
        assert!(c.validate().is_err());
        let mut c = config();
        c.baseline_hazard = BaselineHazard::Constant(1.0);
        assert!(c.validate().is_err());
    }
}
