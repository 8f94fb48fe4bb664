//! Partial log-likelihood with Efron or Breslow tie handling, plus its
//! analytic gradient and observed information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// A Cox design: subjects sorted by time, covariates centered column-wise.
///
/// Centering does not change β̂ or the log-likelihood; it only keeps the
/// exponentials well scaled.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    names: Vec<String>,
    times: Vec<u32>,
    observed: Vec<bool>,
    /// Row-major `n × p`, centered.
    x: Vec<f64>,
    centers: Vec<f64>,
    /// `(start, end)` index ranges of subjects sharing a time, ascending.
    groups: Vec<(usize, usize)>,
}

/// Log-likelihood, score and observed information (negative Hessian) at one β.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub log_likelihood: f64,
    pub score: Vec<f64>,
    /// Row-major `p × p`.
    pub information: Vec<f64>,
}

impl CoxProblem {
    /// Builds a problem from `(time, observed, covariate row)` subjects.
    pub fn new(names: Vec<String>, subjects: Vec<(u32, bool, Vec<f64>)>) -> Result<Self> {
        let p = names.len();
        if let Some((_, _, row)) = subjects.iter().find(|(_, _, row)| row.len() != p) {
            return Err(Error::InvalidInput(format!(
                "covariate row has {} entries, expected {p}",
                row.len()
            )));
        }
        if subjects
            .iter()
            .any(|(_, _, row)| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput("non-finite covariate value".into()));
        }
        let mut subjects = subjects;
        // stable: ties keep input order
        subjects.sort_by_key(|(t, _, _)| *t);
        let n = subjects.len();
        let mut centers = vec![0.0; p];
        for (_, _, row) in &subjects {
            for (c, v) in centers.iter_mut().zip(row) {
                *c += v;
            }
        }
        if n > 0 {
            for c in &mut centers {
                *c /= n as f64;
            }
        }
        let mut times = Vec::with_capacity(n);
        let mut observed = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * p);
        for (t, o, row) in subjects {
            times.push(t);
            observed.push(o);
            x.extend(row.iter().zip(&centers).map(|(v, c)| v - c));
        }
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || times[i] != times[start] {
                groups.push((start, i));
                start = i;
            }
        }
        Ok(Self {
            names,
            times,
            observed,
            x,
            centers,
            groups,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_subjects(&self) -> usize {
        self.times.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn n_events(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Centered covariate row of subject `i` (in time order).
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_covariates();
        &self.x[i * p..(i + 1) * p]
    }

    pub(crate) fn groups(&self) -> &[(usize, usize)] {
        &self.groups
    }

    /// Linear predictors βᵀx on the centered design, in time order.
    pub fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n_subjects())
            .map(|i| dot(self.row(i), beta))
            .collect()
    }

    /// Log partial likelihood only.
    pub fn log_likelihood(&self, beta: &[f64], ties: TieMethod) -> f64 {
        self.evaluate(beta, ties).log_likelihood
    }

    /// Full evaluation. Risk-set sums are accumulated from the latest time
    /// backwards in a fixed order, so results are bitwise reproducible.
    pub fn evaluate(&self, beta: &[f64], ties: TieMethod) -> LikelihoodEval {
        let p = self.n_covariates();
        assert_eq!(beta.len(), p, "beta has wrong dimension");
        let eta = self.linear_predictors(beta);
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut loglik = 0.0;
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];

        let mut a = vec![0.0; p];
        let mut t1 = vec![0.0; p];
        let mut t2 = vec![0.0; p * p];
        for &(start, end) in self.groups.iter().rev() {
            // everyone at this time joins the risk set
            for i in start..end {
                let xi = self.row(i);
                s0 += w[i];
                for r in 0..p {
                    s1[r] += w[i] * xi[r];
                    for c in 0..p {
                        s2[r * p + c] += w[i] * xi[r] * xi[c];
                    }
                }
            }
            let deaths: Vec<usize> = (start..end).filter(|&i| self.observed[i]).collect();
            let d = deaths.len();
            if d == 0 {
                continue;
            }
            let mut t0 = 0.0;
            t1.iter_mut().for_each(|v| *v = 0.0);
            t2.iter_mut().for_each(|v| *v = 0.0);
            for &i in &deaths {
                let xi = self.row(i);
                loglik += eta[i];
                for r in 0..p {
                    score[r] += xi[r];
                }
                t0 += w[i];
                for r in 0..p {
                    t1[r] += w[i] * xi[r];
                    for c in 0..p {
                        t2[r * p + c] += w[i] * xi[r] * xi[c];
                    }
                }
            }
            for l in 0..d {
                let frac = match ties {
                    TieMethod::Efron => l as f64 / d as f64,
                    TieMethod::Breslow => 0.0,
                };
                let phi = s0 - frac * t0;
                loglik -= phi.ln() + shift;
                for r in 0..p {
                    a[r] = s1[r] - frac * t1[r];
                    score[r] -= a[r] / phi;
                }
                for r in 0..p {
                    for c in 0..p {
                        let b = s2[r * p + c] - frac * t2[r * p + c];
                        info[r * p + c] += b / phi - a[r] * a[c] / (phi * phi);
                    }
                }
            }
        }
        LikelihoodEval {
            log_likelihood: loglik,
            score,
            information: info,
        }
    }

    /// Covariate means over the (Efron-adjusted) risk set at each event time,
    /// returned as `(group index, mean vector)` for groups with events.
    pub(crate) fn risk_set_means(&self, beta: &[f64], ties: TieMethod) -> Vec<(usize, Vec<f64>)> {
        let p = self.n_covariates();
        let eta = self.linear_predictors(beta);
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut out = Vec::new();
        for (g, &(start, end)) in self.groups.iter().enumerate().rev() {
            for i in start..end {
                s0 += w[i];
                for (r, v) in self.row(i).iter().enumerate() {
                    s1[r] += w[i] * v;
                }
            }
            let deaths: Vec<usize> = (start..end).filter(|&i| self.observed[i]).collect();
            let d = deaths.len();
            if d == 0 {
                continue;
            }
            let mut t0 = 0.0;
            let mut t1 = vec![0.0; p];
            for &i in &deaths {
                t0 += w[i];
                for (r, v) in self.row(i).iter().enumerate() {
                    t1[r] += w[i] * v;
                }
            }
            let mut mean = vec![0.0; p];
            for l in 0..d {
                let frac = match ties {
                    TieMethod::Efron => l as f64 / d as f64,
                    TieMethod::Breslow => 0.0,
                };
                let phi = s0 - frac * t0;
                for r in 0..p {
                    mean[r] += (s1[r] - frac * t1[r]) / phi / d as f64;
                }
            }
            out.push((g, mean));
        }
        out.reverse();
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
