use std::borrow::Borrow;

use crate::datamodel::CovariateVector;
use crate::error::{Error, Result};
use crate::events::EventRecord;

use super::{build_problem, CoxFit};

/// Harrell's C. A pair (i, j) is comparable when i has an event and
/// `t_j > t_i`; it is concordant when `risk_i > risk_j`, and a risk tie
/// counts one half.
pub fn harrell_c(times: &[u32], observed: &[bool], risk: &[f64]) -> Result<f64> {
    assert_eq!(times.len(), observed.len());
    assert_eq!(times.len(), risk.len());
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].cmp(&times[a]));

    // risks of subjects strictly later than the current time, sorted
    let mut later: Vec<f64> = Vec::with_capacity(times.len());
    let mut concordant = 0.0;
    let mut tied = 0.0;
    let mut comparable = 0.0;
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let end = start + order[start..].iter().take_while(|&&i| times[i] == t).count();
        for &i in &order[start..end] {
            if !observed[i] {
                continue;
            }
            let below = later.partition_point(|&r| r < risk[i]);
            let not_above = later.partition_point(|&r| r <= risk[i]);
            concordant += below as f64;
            tied += (not_above - below) as f64;
            comparable += later.len() as f64;
        }
        for &i in &order[start..end] {
            let at = later.partition_point(|&r| r < risk[i]);
            later.insert(at, risk[i]);
        }
        start = end;
    }
    if comparable == 0.0 {
        return Err(Error::ConcordanceUndefined);
    }
    Ok((concordant + 0.5 * tied) / comparable)
}

/// Harrell's C of a fitted model's risk scores over the cohort.
pub fn concordance<R: Borrow<EventRecord>>(
    fit: &CoxFit,
    cohort: &[R],
    covariates: &[CovariateVector],
) -> Result<f64> {
    let (problem, _, _) = build_problem(cohort, covariates, &fit.names)?;
    let risk = problem.linear_predictors(&fit.coefficients);
    harrell_c(problem.times(), problem.observed(), &risk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        let times = [1, 2, 3, 4];
        let obs = [true; 4];
        assert_eq!(harrell_c(&times, &obs, &[4.0, 3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(harrell_c(&times, &obs, &[1.0; 4]).unwrap(), 0.5);
        assert_eq!(harrell_c(&times, &obs, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn same_time_pairs_are_not_comparable() {
        let c = harrell_c(&[2, 2, 5], &[true, true, false], &[1.0, 0.0, 0.5]).unwrap();
        // pairs (0,2) concordant, (1,2) discordant
        assert_eq!(c, 0.5);
        assert!(matches!(
            harrell_c(&[3, 3], &[true, true], &[1.0, 2.0]),
            Err(Error::ConcordanceUndefined)
        ));
        assert!(harrell_c(&[1, 2], &[false, false], &[1.0, 2.0]).is_err());
    }
}
