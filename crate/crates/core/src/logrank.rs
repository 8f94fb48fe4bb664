//! Mantel–Cox log-rank test across two or more groups.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::special::chi2_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub observed: f64,
    pub expected: f64,
}

/// A chi-square test outcome. `groups` is empty for model-level tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    #[serde(rename = "chi2")]
    pub statistic: f64,
    pub df: usize,
    #[serde(rename = "p")]
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_events: bool,
}

impl TestResult {
    pub fn chi2(statistic: f64, df: usize) -> Self {
        Self {
            statistic,
            df,
            p_value: chi2_sf(statistic, df),
            groups: Vec::new(),
            no_events: false,
        }
    }
}

/// Log-rank test over named groups (iteration order of the map is the group order).
pub fn logrank_test<R: Borrow<EventRecord>>(groups: &BTreeMap<String, Vec<R>>) -> Result<TestResult> {
    let subjects: Vec<(String, Vec<(u32, bool)>)> = groups
        .iter()
        .map(|(name, records)| {
            let times = records
                .iter()
                .map(|r| {
                    let r = r.borrow();
                    (r.time, r.observed)
                })
                .collect();
            (name.clone(), times)
        })
        .collect();
    logrank_test_times(&subjects)
}

/// Log-rank test over `(group name, [(time, observed)])`.
pub fn logrank_test_times(groups: &[(String, Vec<(u32, bool)>)]) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "log-rank test needs at least 2 groups, got {k}"
        )));
    }
    if let Some((name, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(Error::InvalidInput(format!("group {name} is empty")));
    }

    // time -> per-group (events, censored)
    let mut table: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (g, (_, subjects)) in groups.iter().enumerate() {
        for &(time, observed) in subjects {
            let row = table.entry(time).or_insert_with(|| vec![(0, 0); k]);
            if observed {
                row[g].0 += 1;
            } else {
                row[g].1 += 1;
            }
        }
    }

    let mut at_risk: Vec<usize> = groups.iter().map(|(_, g)| g.len()).collect();
    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut variance = DMatrix::<f64>::zeros(k, k);
    let mut any_event = false;
    for row in table.values() {
        let n: usize = at_risk.iter().sum();
        let d: usize = row.iter().map(|&(e, _)| e).sum();
        if d > 0 {
            any_event = true;
            let nf = n as f64;
            let df = d as f64;
            for g in 0..k {
                observed[g] += row[g].0 as f64;
                expected[g] += df * at_risk[g] as f64 / nf;
            }
            // a lone subject carries no information
            if n > 1 {
                let scale = df * (nf - df) / (nf * nf * (nf - 1.0));
                for g in 0..k {
                    let ng = at_risk[g] as f64;
                    for h in 0..k {
                        let nh = at_risk[h] as f64;
                        let cov = if g == h { ng * (nf - ng) } else { -ng * nh };
                        variance[(g, h)] += scale * cov;
                    }
                }
            }
        }
        for g in 0..k {
            at_risk[g] -= row[g].0 + row[g].1;
        }
    }

    let summaries = groups
        .iter()
        .enumerate()
        .map(|(g, (name, subjects))| GroupSummary {
            name: name.clone(),
            n: subjects.len(),
            observed: observed[g],
            expected: expected[g],
        })
        .collect();

    if !any_event {
        return Ok(TestResult {
            statistic: 0.0,
            df: k - 1,
            p_value: 1.0,
            groups: summaries,
            no_events: true,
        });
    }

    let m = k - 1;
    let deviation = DVector::from_iterator(m, (0..m).map(|g| observed[g] - expected[g]));
    let v = variance.view((0, 0), (m, m)).into_owned();
    let (statistic, rank) = if m == 1 {
        let v = v[(0, 0)];
        if v > 0.0 {
            (deviation[0] * deviation[0] / v, 1)
        } else {
            (0.0, 0)
        }
    } else {
        quadratic_form_pinv(&v, &deviation)
    };
    let df = if rank == 0 || rank == m { m } else { rank };
    Ok(TestResult {
        statistic,
        df,
        p_value: chi2_sf(statistic, df),
        groups: summaries,
        no_events: false,
    })
}

/// `uᵀ V⁺ u` through the symmetric eigendecomposition, with the numerical rank of V.
fn quadratic_form_pinv(v: &DMatrix<f64>, u: &DVector<f64>) -> (f64, usize) {
    let eig = v.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-12 * v.nrows() as f64;
    let mut stat = 0.0;
    let mut rank = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let proj = eig.eigenvectors.column(i).dot(u);
            stat += proj * proj / lambda;
            rank += 1;
        }
    }
    (stat, rank)
}
