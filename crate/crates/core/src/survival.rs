//! Product-limit estimation on the integer epoch grid.
//!
//! Each row of a [`SurvivalCurve`] is a distinct epoch with at least one event
//! or censoring. Events at an epoch are processed before censorings at the
//! same epoch, so a subject censored at `t` is still in the risk set at `t`.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecord;
use crate::special::z_critical;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub alpha: f64,
    pub times: Vec<u32>,
    #[serde(rename = "n")]
    pub at_risk: Vec<usize>,
    #[serde(rename = "d")]
    pub events: Vec<usize>,
    #[serde(rename = "c")]
    pub censored: Vec<usize>,
    #[serde(rename = "S")]
    pub survival: Vec<f64>,
    /// Greenwood variance of S.
    #[serde(rename = "var")]
    pub variance: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Rows where the log–log interval is undefined (S = 0 or S = 1) and the CI collapses to S.
    pub ci_degenerate: Vec<bool>,
    /// Nelson–Aalen cumulative hazard.
    #[serde(rename = "H")]
    pub cumulative_hazard: Vec<f64>,
    /// Discrete hazard d/n.
    #[serde(rename = "h")]
    pub hazard: Vec<f64>,
    /// Accumulation 1 − S.
    #[serde(rename = "F")]
    pub accumulation: Vec<f64>,
}

/// Kaplan–Meier fit with Greenwood variance, log–log CIs and Nelson–Aalen hazard.
pub fn km_fit<R: Borrow<EventRecord>>(cohort: &[R], alpha: f64) -> Result<SurvivalCurve> {
    km_fit_times(
        cohort.iter().map(|r| {
            let r = r.borrow();
            (r.time, r.observed)
        }),
        alpha,
    )
}

/// Same as [`km_fit`] over bare `(time, observed)` pairs.
pub fn km_fit_times<I>(subjects: I, alpha: f64) -> Result<SurvivalCurve>
where
    I: IntoIterator<Item = (u32, bool)>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut tally: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut total = 0usize;
    for (time, observed) in subjects {
        let entry = tally.entry(time).or_default();
        if observed {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyCohort);
    }
    let z = z_critical(alpha);

    let rows = tally.len();
    let mut curve = SurvivalCurve {
        alpha,
        times: Vec::with_capacity(rows),
        at_risk: Vec::with_capacity(rows),
        events: Vec::with_capacity(rows),
        censored: Vec::with_capacity(rows),
        survival: Vec::with_capacity(rows),
        variance: Vec::with_capacity(rows),
        ci_lower: Vec::with_capacity(rows),
        ci_upper: Vec::with_capacity(rows),
        ci_degenerate: Vec::with_capacity(rows),
        cumulative_hazard: Vec::with_capacity(rows),
        hazard: Vec::with_capacity(rows),
        accumulation: Vec::with_capacity(rows),
    };

    let mut at_risk = total;
    let mut s = 1.0f64;
    let mut greenwood = 0.0f64;
    let mut nelson_aalen = 0.0f64;
    for (time, (d, c)) in tally {
        let n = at_risk;
        let nf = n as f64;
        let df = d as f64;
        if d > 0 {
            s *= 1.0 - df / nf;
            if n > d {
                greenwood += df / (nf * (nf - df));
            }
            nelson_aalen += df / nf;
        }
        let var = if s > 0.0 { s * s * greenwood } else { 0.0 };
        let (lo, hi, degenerate) = if s <= 0.0 || s >= 1.0 {
            (s, s, true)
        } else {
            let log_s = s.ln();
            let se = greenwood.sqrt() / log_s.abs();
            // S^{exp(±z·se)}: the larger exponent gives the lower bound
            let lo = s.powf((z * se).exp());
            let hi = s.powf((-z * se).exp());
            (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0), false)
        };
        curve.times.push(time);
        curve.at_risk.push(n);
        curve.events.push(d);
        curve.censored.push(c);
        curve.survival.push(s);
        curve.variance.push(var);
        curve.ci_lower.push(lo);
        curve.ci_upper.push(hi);
        curve.ci_degenerate.push(degenerate);
        curve.cumulative_hazard.push(nelson_aalen);
        curve.hazard.push(df / nf);
        curve.accumulation.push(1.0 - s);
        at_risk = n - d - c;
    }
    Ok(curve)
}

impl SurvivalCurve {
    /// Last epoch with an event or censoring.
    pub fn horizon(&self) -> u32 {
        self.times.last().copied().unwrap_or(0)
    }

    pub fn n_subjects(&self) -> usize {
        self.at_risk.first().copied().unwrap_or(0)
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().sum()
    }

    /// Right-continuous S(t); 1 before the first row.
    pub fn survival_at(&self, t: u32) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            i => self.survival[i - 1],
        }
    }

    pub fn accumulation_at(&self, t: u32) -> f64 {
        1.0 - self.survival_at(t)
    }

    /// F(t) sampled on the integer grid `0..=horizon`.
    pub fn accumulation_on_grid(&self, horizon: u32) -> Vec<f64> {
        (0..=horizon).map(|t| self.accumulation_at(t)).collect()
    }

    /// First epoch with S(t) ≤ 0.5.
    pub fn median_time(&self) -> Option<u32> {
        self.times
            .iter()
            .zip(&self.survival)
            .find(|(_, &s)| s <= 0.5)
            .map(|(&t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedMean {
    pub tau: u32,
    pub mean: f64,
    /// Standard error (not a CI half-width).
    pub se: f64,
}

/// Area under the step function S on `[0, tau]` with its Greenwood-based standard error.
pub fn restricted_mean_time(curve: &SurvivalCurve, tau: u32) -> Result<RestrictedMean> {
    if tau == 0 {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    if tau > curve.horizon() && curve.survival.last().copied().unwrap_or(1.0) > 0.0 {
        return Err(Error::InvalidInput(format!(
            "tau {tau} exceeds last follow-up epoch {}",
            curve.horizon()
        )));
    }
    // Breakpoints where S changes, restricted to (0, tau).
    let steps: Vec<(u32, f64)> = curve
        .times
        .iter()
        .zip(&curve.survival)
        .zip(&curve.events)
        .filter(|((&t, _), &d)| d > 0 && t < tau)
        .map(|((&t, &s), _)| (t, s))
        .collect();

    let mut mean = 0.0;
    let mut prev_t = 0u32;
    let mut prev_s = 1.0;
    for &(t, s) in &steps {
        mean += prev_s * f64::from(t - prev_t);
        prev_t = t;
        prev_s = s;
    }
    mean += prev_s * f64::from(tau - prev_t);

    // area from each event epoch to tau, accumulated right to left
    let mut variance = 0.0;
    let mut tail_area = 0.0;
    let mut right = tau;
    for &(t, s) in steps.iter().rev() {
        tail_area += s * f64::from(right - t);
        right = t;
        let row = curve.times.binary_search(&t).expect("step epoch is a curve row");
        let n = curve.at_risk[row] as f64;
        let d = curve.events[row] as f64;
        if n > d {
            variance += tail_area * tail_area * d / (n * (n - d));
        }
    }
    Ok(RestrictedMean {
        tau,
        mean,
        se: variance.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulationDelta {
    pub epoch: u32,
    pub f_a: f64,
    pub f_b: f64,
    pub delta: f64,
}

/// Per-epoch F_a(t) − F_b(t) on the shared grid `0..=horizon`.
pub fn curve_difference_summary(a: &SurvivalCurve, b: &SurvivalCurve) -> Result<Vec<AccumulationDelta>> {
    if a.horizon() != b.horizon() {
        return Err(Error::GridMismatch(format!(
            "horizon {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    Ok((0..=a.horizon())
        .map(|epoch| {
            let f_a = a.accumulation_at(epoch);
            let f_b = b.accumulation_at(epoch);
            AccumulationDelta {
                epoch,
                f_a,
                f_b,
                delta: f_a - f_b,
            }
        })
        .collect())
}
