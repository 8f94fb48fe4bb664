//! Cox proportional-hazards regression on event cohorts.
//!
//! β̂ maximizes the Efron partial likelihood by Newton–Raphson with step
//! halving, starting from β = 0. Subjects censored at epoch 0 never enter a
//! risk set and are dropped before fitting; subjects without covariates are
//! dropped and counted.

mod concordance;
mod likelihood;
mod schoenfeld;
mod summary;

use std::borrow::Borrow;
use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use concordance::{concordance, harrell_c};
pub use likelihood::{CoxProblem, LikelihoodEval, TieMethod};
pub use schoenfeld::{schoenfeld_test, CovariatePhTest, PhDiagnostics, TimeTransform};
pub use summary::{covariate_label, CoefficientRow, CoxSummary, LrSummary, PhSummary, PH_ALPHA};

use crate::datamodel::{transform_covariates, CovariateSpec, CovariateVector, TransformParams};
use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::logrank::TestResult;
use crate::special::{two_sided_normal_p, Z_95};

pub const MAX_ITERATIONS: usize = 50;
pub const MAX_HALVINGS: usize = 10;
pub const LOGLIK_TOLERANCE: f64 = 1e-9;
pub const SCORE_TOLERANCE: f64 = 1e-6;
/// |β| beyond this after step-halving is treated as monotone likelihood.
pub const SEPARATION_BOUND: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub ties: TieMethod,
    pub max_iterations: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ties: TieMethod::Efron,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub hazard_ratios: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub wald_p: Vec<f64>,
    /// Wald 95% interval on the hazard-ratio scale.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Inverse observed information at β̂, row-major.
    pub covariance: Vec<f64>,
    pub log_likelihood: f64,
    pub log_likelihood_null: f64,
    pub lr_statistic: f64,
    pub lr_df: usize,
    pub lr_p: f64,
    /// Harrell's C; `None` when no pair is comparable.
    pub concordance: Option<f64>,
    pub n: usize,
    pub n_events: usize,
    pub n_excluded_baseline: usize,
    pub n_missing_covariates: usize,
    pub iterations: usize,
    pub converged: bool,
    pub ties: TieMethod,
    pub log_likelihood_trace: Vec<f64>,
}

impl CoxFit {
    pub fn covariance_at(&self, r: usize, c: usize) -> f64 {
        self.covariance[r * self.names.len() + c]
    }
}

/// Joins a cohort with transformed covariate rows into a fitting problem.
///
/// Returns the problem, the number of baseline-censored subjects dropped and
/// the number dropped for missing covariates.
pub fn build_problem<R: Borrow<EventRecord>>(
    cohort: &[R],
    covariates: &[CovariateVector],
    names: &[String],
) -> Result<(CoxProblem, usize, usize)> {
    let rows: HashMap<&str, &CovariateVector> =
        covariates.iter().map(|c| (c.term_id.as_str(), c)).collect();
    let mut subjects = Vec::with_capacity(cohort.len());
    let mut baseline = 0;
    let mut missing = 0;
    for record in cohort {
        let record = record.borrow();
        if record.time == 0 && !record.observed {
            baseline += 1;
            continue;
        }
        match rows.get(record.term_id.as_str()).and_then(|c| c.transformed.as_ref()) {
            Some(x) => subjects.push((record.time, record.observed, x.clone())),
            None => missing += 1,
        }
    }
    Ok((CoxProblem::new(names.to_vec(), subjects)?, baseline, missing))
}

/// Selects the raw covariates of subjects that will enter a fit and transforms them.
pub fn prepare_covariates<R: Borrow<EventRecord>>(
    cohort: &[R],
    raw: &[CovariateVector],
    specs: &[CovariateSpec],
) -> Result<(Vec<CovariateVector>, TransformParams)> {
    let by_id: HashMap<&str, &CovariateVector> = raw.iter().map(|c| (c.term_id.as_str(), c)).collect();
    let selected: Vec<CovariateVector> = cohort
        .iter()
        .map(Borrow::borrow)
        .filter(|r| !(r.time == 0 && !r.observed))
        .filter_map(|r| by_id.get(r.term_id.as_str()).map(|c| (*c).clone()))
        .collect();
    transform_covariates(&selected, specs)
}

/// Names columns that are constant or linear combinations of earlier columns.
fn check_rank(problem: &CoxProblem) -> Result<()> {
    let n = problem.n_subjects();
    let p = problem.n_covariates();
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..n).map(|i| problem.row(i)[j]).collect())
        .collect();
    // modified Gram–Schmidt on centered columns
    let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = problem.centers()[j].abs().max(1.0) * (n as f64).sqrt();
        if norm0 <= 1e-10 * scale {
            return Err(Error::RankDeficient(vec![problem.names()[j].clone()]));
        }
        let mut resid = col.clone();
        let mut involved = Vec::new();
        for (k, q) in &basis {
            let coef: f64 = resid.iter().zip(q).map(|(a, b)| a * b).sum();
            if coef.abs() > 1e-8 * norm0 {
                involved.push(*k);
            }
            resid.iter_mut().zip(q).for_each(|(r, b)| *r -= coef * b);
        }
        let norm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-8 * norm0 {
            let mut names: Vec<String> = involved
                .iter()
                .map(|&k| problem.names()[k].clone())
                .collect();
            names.push(problem.names()[j].clone());
            return Err(Error::RankDeficient(names));
        }
        resid.iter_mut().for_each(|r| *r /= norm);
        basis.push((j, resid));
    }
    Ok(())
}

fn solve_spd(matrix: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let p = rhs.len();
    let m = DMatrix::from_row_slice(p, p, matrix);
    let chol = m.cholesky()?;
    let x = chol.solve(&nalgebra::DVector::from_column_slice(rhs));
    Some(x.iter().copied().collect())
}

fn invert_spd(matrix: &[f64], p: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(p, p, matrix);
    let inv = m.cholesky()?.inverse();
    let mut out = Vec::with_capacity(p * p);
    for r in 0..p {
        for c in 0..p {
            out.push(inv[(r, c)]);
        }
    }
    Some(out)
}

/// Newton–Raphson maximization on a prepared problem.
pub fn fit_problem(problem: &CoxProblem, options: &CoxOptions) -> Result<CoxFit> {
    let p = problem.n_covariates();
    let n_events = problem.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    check_rank(problem)?;

    let mut beta = vec![0.0; p];
    let mut current = problem.evaluate(&beta, options.ties);
    let null_loglik = current.log_likelihood;
    let mut trace = vec![null_loglik];
    let mut converged = p == 0;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let delta = solve_spd(&current.information, &current.score)
            .ok_or(Error::SingularInformation)?;
        let mut step = 1.0;
        let mut candidate;
        let mut evaluated;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect::<Vec<_>>();
            evaluated = problem.evaluate(&candidate, options.ties);
            let ok = evaluated.log_likelihood.is_finite()
                && evaluated.log_likelihood >= current.log_likelihood - 1e-12 * current.log_likelihood.abs();
            if ok || halvings == MAX_HALVINGS {
                break;
            }
            step /= 2.0;
            halvings += 1;
        }
        if let Some((j, _)) = candidate
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > SEPARATION_BOUND)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            return Err(Error::Separation(problem.names()[j].clone()));
        }
        let change = (evaluated.log_likelihood - current.log_likelihood).abs();
        beta = candidate;
        current = evaluated;
        trace.push(current.log_likelihood);
        let max_score = current.score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        converged = change < LOGLIK_TOLERANCE && max_score < SCORE_TOLERANCE;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            trace,
        });
    }

    let covariance = if p == 0 {
        Vec::new()
    } else {
        invert_spd(&current.information, p).ok_or(Error::SingularInformation)?
    };
    let se: Vec<f64> = (0..p).map(|j| covariance[j * p + j].sqrt()).collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let lr_statistic = (2.0 * (current.log_likelihood - null_loglik)).max(0.0);
    let lr = TestResult::chi2(lr_statistic, p);
    let risk = problem.linear_predictors(&beta);
    let c_index = harrell_c(problem.times(), problem.observed(), &risk).ok();

    Ok(CoxFit {
        names: problem.names().to_vec(),
        hazard_ratios: beta.iter().map(|b| b.exp()).collect(),
        ci_lower: beta.iter().zip(&se).map(|(b, s)| (b - Z_95 * s).exp()).collect(),
        ci_upper: beta.iter().zip(&se).map(|(b, s)| (b + Z_95 * s).exp()).collect(),
        wald_p: z.iter().map(|&z| two_sided_normal_p(z)).collect(),
        coefficients: beta,
        se,
        z,
        covariance,
        log_likelihood: current.log_likelihood,
        log_likelihood_null: null_loglik,
        lr_statistic,
        lr_df: p,
        lr_p: lr.p_value,
        concordance: c_index,
        n: problem.n_subjects(),
        n_events,
        n_excluded_baseline: 0,
        n_missing_covariates: 0,
        iterations,
        converged,
        ties: options.ties,
        log_likelihood_trace: trace,
    })
}

/// Fits a Cox model to a cohort using the `transformed` vectors of `covariates`.
pub fn cox_fit<R: Borrow<EventRecord>>(
    cohort: &[R],
    covariates: &[CovariateVector],
    names: &[String],
    options: &CoxOptions,
) -> Result<CoxFit> {
    let (problem, baseline, missing) = build_problem(cohort, covariates, names)?;
    let mut fit = fit_problem(&problem, options)?;
    fit.n_excluded_baseline = baseline;
    fit.n_missing_covariates = missing;
    Ok(fit)
}

/// Model-level likelihood-ratio test against β = 0.
pub fn lr_test(fit: &CoxFit) -> TestResult {
    TestResult::chi2(fit.lr_statistic, fit.lr_df)
}
