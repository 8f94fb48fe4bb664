//! Accumulation velocity: the numerical derivative of a Gaussian-smoothed
//! accumulation curve on the epoch grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalCurve;

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySummary {
    pub peak_velocity: f64,
    pub peak_epoch: u32,
    pub convergence_epoch: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityCurve {
    pub epochs: Vec<u32>,
    #[serde(rename = "F_raw")]
    pub f_raw: Vec<f64>,
    #[serde(rename = "F_smooth")]
    pub f_smooth: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub sigma: f64,
    pub epsilon: f64,
    #[serde(flatten)]
    pub summary: VelocitySummary,
}

impl VelocityCurve {
    /// Builds the full curve from a KM fit on the grid `0..=epochs`.
    pub fn from_survival(curve: &SurvivalCurve, epochs: u32, sigma: f64, epsilon: f64) -> Result<Self> {
        let f_raw = curve.accumulation_on_grid(epochs);
        Self::from_accumulation(f_raw, sigma, epsilon)
    }

    /// Builds the full curve from F already sampled on `0..len`.
    pub fn from_accumulation(f_raw: Vec<f64>, sigma: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let f_smooth = gaussian_smooth(&f_raw, sigma)?;
        let v = velocity(&f_smooth)?;
        let summary = summarize(&v, epsilon);
        Ok(Self {
            epochs: (0..f_raw.len() as u32).collect(),
            f_raw,
            f_smooth,
            v,
            sigma,
            epsilon,
            summary,
        })
    }
}

/// Half-sample symmetric reflection of `i` into `0..n`.
fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Discrete Gaussian convolution, radius `ceil(4σ)`, reflected boundary,
/// weights normalized to sum to one.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let n = values.len();
    Ok((0..n as i64)
        .map(|i| {
            weights
                .iter()
                .zip(-radius..=radius)
                .map(|(w, k)| w * values[reflect(i + k, n)])
                .sum()
        })
        .collect())
}

/// F sampled on the integer grid `0..=epochs` and smoothed.
pub fn smooth_accumulation(curve: &SurvivalCurve, epochs: u32, sigma: f64) -> Result<Vec<f64>> {
    gaussian_smooth(&curve.accumulation_on_grid(epochs), sigma)
}

/// Central differences inside the grid, one-sided differences at both ends.
pub fn velocity(f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "velocity needs at least 3 grid points, got {n}"
        )));
    }
    let mut v = Vec::with_capacity(n);
    v.push(f[1] - f[0]);
    for i in 1..n - 1 {
        v.push((f[i + 1] - f[i - 1]) / 2.0);
    }
    v.push(f[n - 1] - f[n - 2]);
    Ok(v)
}

/// Peak (first argmax) and the first epoch after it with `V < epsilon`.
pub fn summarize(v: &[f64], epsilon: f64) -> VelocitySummary {
    let (peak_epoch, peak_velocity) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
    let peak_velocity = if v.is_empty() { 0.0 } else { peak_velocity };
    let convergence_epoch = v
        .iter()
        .enumerate()
        .skip(peak_epoch + 1)
        .find(|(_, &x)| x < epsilon)
        .map(|(i, _)| i as u32);
    VelocitySummary {
        peak_velocity,
        peak_epoch: peak_epoch as u32,
        convergence_epoch,
    }
}

/// Trapezoid-rule integral of `V` over a unit-spaced grid.
pub fn integrate(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> Vec<f64> {
        (0..=20).map(|t| t as f64 / 20.0).collect()
    }

    #[test]
    fn constant_is_fixed_point() {
        let f = vec![0.3; 21];
        let s = gaussian_smooth(&f, 1.0).unwrap();
        assert!(s.iter().all(|x| (x - 0.3).abs() < 1e-15));
        assert!(velocity(&s).unwrap().iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn linear_interior_is_preserved() {
        let f = linear();
        let s = gaussian_smooth(&f, 1.0).unwrap();
        for t in 4..=16 {
            assert!((s[t] - f[t]).abs() < 1e-10, "epoch {t}");
        }
        let v = velocity(&s).unwrap();
        for t in 5..=15 {
            assert!((v[t] - 0.05).abs() < 1e-10);
        }
    }

    #[test]
    fn reflection_matches_half_sample_symmetry() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-6, 5), 4);
        assert_eq!(reflect(11, 5), 1);
    }

    #[test]
    fn integral_telescopes() {
        let f = [0.0, 0.1, 0.35, 0.5, 0.52, 0.9, 0.91];
        let s = gaussian_smooth(&f, 1.3).unwrap();
        let v = velocity(&s).unwrap();
        assert!((integrate(&v) - (s[6] - s[0])).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(gaussian_smooth(&linear(), 0.0).is_err());
        assert!(gaussian_smooth(&linear(), -1.0).is_err());
        assert!(velocity(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn summaries() {
        let s = summarize(&[0.0; 6], 1e-3);
        assert_eq!((s.peak_velocity, s.peak_epoch, s.convergence_epoch), (0.0, 0, Some(1)));

        let mut v = vec![0.0; 21];
        for (t, x) in [(1, 0.1), (2, 0.21), (3, 0.15), (4, 0.1), (5, 0.06), (6, 0.04), (7, 0.02), (8, 0.01), (9, 0.005)] {
            v[t] = x;
        }
        let s = summarize(&v, 1e-3);
        assert_eq!((s.peak_epoch, s.convergence_epoch), (2, Some(10)));

        let up: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(summarize(&up, 1e-3).convergence_epoch, None);
    }
}
