use factsurv::velocity::{gaussian_smooth, integrate, summarize, velocity, VelocityCurve};
use proptest::prelude::*;

fn total_variation(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Nondecreasing step curves on 0..=20 starting at 0.
fn accumulation() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..0.2, 20).prop_map(|steps| {
        let mut f = vec![0.0];
        let mut acc = 0.0;
        for s in steps {
            acc = (acc + s).min(1.0);
            f.push(acc);
        }
        f
    })
}

proptest! {
    #[test]
    fn smoothing_never_increases_total_variation(
        x in prop::collection::vec(-1.0f64..1.0, 3..40),
        sigma in 0.2f64..4.0,
    ) {
        let s = gaussian_smooth(&x, sigma).unwrap();
        prop_assert!(total_variation(&s) <= total_variation(&x) + 1e-12);
    }

    #[test]
    fn velocity_ignores_constant_offset(f in accumulation(), c in -5.0f64..5.0) {
        let a = VelocityCurve::from_accumulation(f.clone(), 1.0, 1e-3).unwrap();
        let b = VelocityCurve::from_accumulation(f.iter().map(|v| v + c).collect(), 1.0, 1e-3).unwrap();
        for (x, y) in a.v.iter().zip(&b.v) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_reconstructs_smoothed_change(f in accumulation(), sigma in 0.5f64..3.0) {
        let curve = VelocityCurve::from_accumulation(f, sigma, 1e-3).unwrap();
        let delta = curve.f_smooth.last().unwrap() - curve.f_smooth[0];
        prop_assert!((integrate(&curve.v) - delta).abs() < 1e-8);
    }

    #[test]
    fn doubling_sigma_flattens_the_peak(f in accumulation(), sigma in 0.5f64..2.0) {
        let narrow = VelocityCurve::from_accumulation(f.clone(), sigma, 1e-3).unwrap();
        let wide = VelocityCurve::from_accumulation(f, 2.0 * sigma, 1e-3).unwrap();
        prop_assert!(wide.summary.peak_velocity <= narrow.summary.peak_velocity + 1e-12);
    }

    #[test]
    fn smoothing_preserves_the_mean_of_symmetric_extension(x in prop::collection::vec(-1.0f64..1.0, 5..30)) {
        // the reflected kernel is doubly stochastic, so the sum is preserved
        let s = gaussian_smooth(&x, 1.3).unwrap();
        let a: f64 = x.iter().sum();
        let b: f64 = s.iter().sum();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn linear_accumulation_has_constant_velocity() {
    let f: Vec<f64> = (0..=20).map(|t| 0.05 * t as f64).collect();
    let v = velocity(&gaussian_smooth(&f, 1.0).unwrap()).unwrap();
    // smoothed values are exact on 4..=16, so central differences are exact on 5..=15
    for &x in &v[5..=15] {
        assert!((x - 0.05).abs() < 1e-6);
    }
}

#[test]
fn convergence_epoch_is_first_drop_below_epsilon_after_peak() {
    let v = [0.0, 0.1, 0.3, 0.2, 0.05, 0.0005, 0.002, 0.0];
    let s = summarize(&v, 1e-3);
    assert_eq!(s.peak_epoch, 2);
    assert_eq!(s.convergence_epoch, Some(5));
}
