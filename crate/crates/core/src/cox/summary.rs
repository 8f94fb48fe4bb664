use serde::{Deserialize, Serialize};

use crate::datamodel::{CovariateSource, TransformParams};
use crate::logrank::TestResult;

use super::{CoxFit, CovariatePhTest, PhDiagnostics, TieMethod, TimeTransform};

/// Global PH rejection level above which HRs are read as time-averaged effects.
pub const PH_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub label: String,
    pub beta: f64,
    pub se: f64,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSummary {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhSummary {
    pub transform: TimeTransform,
    pub per_covariate: Vec<CovariatePhTest>,
    pub global: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_undefined_reason: Option<String>,
}

/// Serializable model report (`cox.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSummary {
    pub covariates: Vec<CoefficientRow>,
    pub lr: LrSummary,
    pub concordance: Option<f64>,
    pub n: usize,
    pub n_events: usize,
    pub n_excluded_baseline: usize,
    pub n_missing_covariates: usize,
    pub log_likelihood: f64,
    pub log_likelihood_null: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ties: TieMethod,
    pub ci_method: String,
    /// `"proportional"`, or `"time-averaged"` when the global PH test rejects.
    pub hr_interpretation: String,
    pub ph_test: Option<PhSummary>,
    pub transforms: TransformParams,
}

pub fn covariate_label(name: &str) -> String {
    CovariateSource::from_field_name(name)
        .map(|s| s.display_label().to_string())
        .unwrap_or_else(|| name.to_string())
}

impl CoxSummary {
    pub fn new(fit: &CoxFit, ph: Option<&PhDiagnostics>, transforms: TransformParams) -> Self {
        let covariates = (0..fit.names.len())
            .map(|j| CoefficientRow {
                name: fit.names[j].clone(),
                label: covariate_label(&fit.names[j]),
                beta: fit.coefficients[j],
                se: fit.se[j],
                hr: fit.hazard_ratios[j],
                ci_low: fit.ci_lower[j],
                ci_high: fit.ci_upper[j],
                p: fit.wald_p[j],
            })
            .collect();
        let time_averaged = ph.is_some_and(|ph| ph.rejects(PH_ALPHA));
        Self {
            covariates,
            lr: LrSummary {
                stat: fit.lr_statistic,
                df: fit.lr_df,
                p: fit.lr_p,
            },
            concordance: fit.concordance,
            n: fit.n,
            n_events: fit.n_events,
            n_excluded_baseline: fit.n_excluded_baseline,
            n_missing_covariates: fit.n_missing_covariates,
            log_likelihood: fit.log_likelihood,
            log_likelihood_null: fit.log_likelihood_null,
            iterations: fit.iterations,
            converged: fit.converged,
            ties: fit.ties,
            ci_method: "wald".to_string(),
            hr_interpretation: if time_averaged { "time-averaged" } else { "proportional" }.to_string(),
            ph_test: ph.map(|ph| PhSummary {
                transform: ph.transform,
                per_covariate: ph.per_covariate.clone(),
                global: ph.global.clone(),
                global_undefined_reason: ph.global_undefined_reason.clone(),
            }),
            transforms,
        }
    }
}
