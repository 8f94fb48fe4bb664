//! Scaled Schoenfeld residual tests of proportional hazards
//! (Grambsch–Therneau score form).

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::CovariateVector;
use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::logrank::TestResult;
use crate::survival::km_fit_times;

use super::{build_problem, CoxFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeTransform {
    /// Event epoch as is.
    #[default]
    Identity,
    /// Rank of the event time among event times, ties averaged.
    Rank,
    /// Left-continuous Kaplan–Meier accumulation 1 − S(t−).
    Km,
}

impl TimeTransform {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeTransform::Identity => "identity",
            TimeTransform::Rank => "rank",
            TimeTransform::Km => "km",
        }
    }
}

impl fmt::Display for TimeTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(TimeTransform::Identity),
            "rank" => Ok(TimeTransform::Rank),
            "km" => Ok(TimeTransform::Km),
            other => Err(Error::Config(format!("unknown time transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePhTest {
    pub name: String,
    /// Correlation of the scaled residual with transformed time.
    pub rho: Option<f64>,
    /// `None` when the test is undefined; see `undefined_reason`.
    pub test: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhDiagnostics {
    pub transform: TimeTransform,
    pub per_covariate: Vec<CovariatePhTest>,
    pub global: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_undefined_reason: Option<String>,
    /// Event epoch of each residual row.
    pub event_times: Vec<u32>,
    /// Transformed time of each residual row.
    pub transformed_times: Vec<f64>,
    /// Unscaled residuals, one row per event, one column per covariate.
    pub residuals: Vec<Vec<f64>>,
    /// Scaled residuals `n_events · V̂ · r + β̂`.
    pub scaled_residuals: Vec<Vec<f64>>,
}

impl PhDiagnostics {
    /// Whether the global test rejects at `alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.global.as_ref().is_some_and(|g| g.p_value < alpha)
    }
}

fn average_ranks(values: &[u32]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 0.0).then(|| sab / denom)
}

/// Tests each covariate, and all jointly, for a trend of its scaled
/// Schoenfeld residuals in transformed time.
pub fn schoenfeld_test<R: Borrow<EventRecord>>(
    fit: &CoxFit,
    cohort: &[R],
    covariates: &[CovariateVector],
    transform: TimeTransform,
) -> Result<PhDiagnostics> {
    let (problem, _, _) = build_problem(cohort, covariates, &fit.names)?;
    let p = problem.n_covariates();
    let d = problem.n_events();
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "proportional-hazards test needs at least 2 events, got {d}"
        )));
    }
    if fit.coefficients.len() != p {
        return Err(Error::InvalidInput("fit does not match covariates".into()));
    }

    let means = problem.risk_set_means(&fit.coefficients, fit.ties);
    let groups = problem.groups();
    let mut event_times = Vec::with_capacity(d);
    let mut residuals = Vec::with_capacity(d);
    for (g, mean) in &means {
        let (start, end) = groups[*g];
        for i in start..end {
            if problem.observed()[i] {
                event_times.push(problem.times()[i]);
                residuals.push(problem.row(i).iter().zip(mean).map(|(x, m)| x - m).collect::<Vec<f64>>());
            }
        }
    }

    let transformed_times: Vec<f64> = match transform {
        TimeTransform::Identity => event_times.iter().map(|&t| t as f64).collect(),
        TimeTransform::Rank => average_ranks(&event_times),
        TimeTransform::Km => {
            let km = km_fit_times(
                problem.times().iter().copied().zip(problem.observed().iter().copied()),
                0.05,
            )?;
            event_times
                .iter()
                .map(|&t| if t == 0 { 0.0 } else { km.accumulation_at(t - 1) })
                .collect()
        }
    };

    let df = d as f64;
    let var = |r: usize, c: usize| fit.covariance_at(r, c);
    let scaled_residuals: Vec<Vec<f64>> = residuals
        .iter()
        .map(|r| {
            (0..p)
                .map(|j| df * (0..p).map(|k| var(j, k) * r[k]).sum::<f64>() + fit.coefficients[j])
                .collect()
        })
        .collect();

    let gbar = transformed_times.iter().sum::<f64>() / df;
    let gc: Vec<f64> = transformed_times.iter().map(|g| g - gbar).collect();
    let sgg: f64 = gc.iter().map(|g| g * g).sum();

    let mut per_covariate = Vec::with_capacity(p);
    for j in 0..p {
        let column: Vec<f64> = scaled_residuals.iter().map(|r| r[j]).collect();
        let rho = correlation(&transformed_times, &column);
        let reason = if sgg <= 0.0 {
            Some("all events share one transformed time".to_string())
        } else if var(j, j) <= 0.0 || !var(j, j).is_finite() {
            Some(format!("non-positive variance for {}", fit.names[j]))
        } else {
            None
        };
        let test = reason.is_none().then(|| {
            let num: f64 = gc.iter().zip(&column).map(|(g, r)| g * r).sum();
            TestResult::chi2(num * num / (df * var(j, j) * sgg), 1)
        });
        per_covariate.push(CovariatePhTest {
            name: fit.names[j].clone(),
            rho,
            test,
            undefined_reason: reason,
        });
    }

    let (global, global_undefined_reason) = if p == 0 {
        (None, Some("no covariates".to_string()))
    } else if sgg <= 0.0 {
        (None, Some("all events share one transformed time".to_string()))
    } else {
        let u: Vec<f64> = (0..p)
            .map(|k| gc.iter().zip(&residuals).map(|(g, r)| g * r[k]).sum())
            .collect();
        let quad: f64 = (0..p)
            .map(|r| (0..p).map(|c| u[r] * var(r, c) * u[c]).sum::<f64>())
            .sum();
        if quad.is_finite() && quad >= 0.0 {
            (Some(TestResult::chi2(df * quad / sgg, p)), None)
        } else {
            (None, Some("covariance is not positive semi-definite".to_string()))
        }
    };

    Ok(PhDiagnostics {
        transform,
        per_covariate,
        global,
        global_undefined_reason,
        event_times,
        transformed_times,
        residuals,
        scaled_residuals,
    })
}
