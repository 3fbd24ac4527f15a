mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rec_core::exogenous::*;

fn lag1_and_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
    (cov / var, var)
}

#[test]
fn red_noise_statistics() {
    let (r, sigma) = (0.5, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x = red_noise(100_000, r, sigma, &mut rng);
    let (rho, var) = lag1_and_variance(&x);
    assert!((rho - r).abs() <= 0.05, "lag-1 autocorrelation {rho}");
    assert!((var / (sigma * sigma) - 1.0).abs() <= 0.10, "variance {var}");
}

#[test]
fn red_noise_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(red_noise(0, 0.5, 0.3, &mut rng).is_empty());
    assert!(red_noise(50, 0.5, 0.0, &mut rng).iter().all(|&v| v == 0.0));
    // r = 1 freezes the first draw.
    let x = red_noise(20, 1.0, 0.3, &mut rng);
    assert!(x.iter().all(|&v| v == x[0]));
}

#[test]
fn scenarios_are_reproducible_and_streams_differ() {
    let rec2 = load("rec2");
    let p = |seed, stream| NoiseParams::from_spec(&rec2.noise, seed, stream);
    let a = sample_sequence(&rec2, &p(7, 0));
    assert_eq!(a, sample_sequence(&rec2, &p(7, 0)));
    assert_ne!(a, sample_sequence(&rec2, &p(7, 1)));
    assert_ne!(a, sample_sequence(&rec2, &p(8, 0)));
    assert_eq!(a.len(), rec2.time_grid.horizon);
    for e in &a {
        for m in 0..2 {
            assert!(e.consumption[m] >= 0.0 && e.production[m] >= 0.0);
            assert!(e.consumption[m] * e.production[m] == 0.0);
        }
    }
}

#[test]
fn zero_sigma_reproduces_the_base_profiles() {
    let mut rec2 = load("rec2");
    rec2.noise.sigma = 0.0;
    let s = sample_sequence(&rec2, &NoiseParams::from_spec(&rec2.noise, 1, 0));
    assert_eq!(s, base_sequence(&rec2));
}

#[test]
fn relative_noise_scales_with_column_means() {
    let rec7 = load("rec7");
    assert!(rec7.noise.relative);
    let noisy = sample_profiles(&rec7, &NoiseParams::from_spec(&rec7.noise, 1, 0));
    let t = rec7.time_grid.horizon;
    for (base, col) in rec7.profiles.columns.iter().zip(&noisy.columns) {
        let mean = base.values[..t].iter().sum::<f64>() / t as f64;
        let spread = base.values[..t].iter().zip(&col.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // Six standard deviations of noise bound the largest deviation.
        assert!(spread <= 6.0 * 0.3 * mean + 1e-12);
    }
}

#[test]
fn foresight_blend() {
    let rec2 = load("rec2");
    let truth = sample_sequence(&rec2, &NoiseParams::from_spec(&rec2.noise, 3, 0));
    let base = base_sequence(&rec2);
    let exact = blend_foresight(&truth, &base, 1.0, 10, 30).unwrap();
    assert_eq!(&exact[..], &truth[10..40]);
    let f = blend_foresight(&truth, &base, 0.5, 10, 30).unwrap();
    assert_eq!(f[0], truth[10]);
    assert_eq!(f[1], truth[11]);
    for d in 2..30 {
        let w = 0.5f64.powi(d as i32);
        for m in 0..2 {
            let want = w * truth[10 + d].net(m) + (1.0 - w) * base[10 + d].net(m);
            assert!((f[d].net(m) - want).abs() < 1e-12);
        }
    }
    assert!(blend_foresight(&truth, &base, 0.5, 90, 30).is_err());
}

proptest! {
    #[test]
    fn forecast_error_shrinks_as_alpha_grows(seed in any::<u64>(), a1 in 0.01f64..1.0, a2 in 0.01f64..1.0, t in 0usize..60) {
        let rec2 = load("rec2");
        let truth = sample_sequence(&rec2, &NoiseParams::from_spec(&rec2.noise, seed, 0));
        let base = base_sequence(&rec2);
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let f_lo = blend_foresight(&truth, &base, lo, t, 24).unwrap();
        let f_hi = blend_foresight(&truth, &base, hi, t, 24).unwrap();
        for d in 0..24 {
            for m in 0..2 {
                let err_lo = (f_lo[d].net(m) - truth[t + d].net(m)).abs();
                let err_hi = (f_hi[d].net(m) - truth[t + d].net(m)).abs();
                prop_assert!(err_hi <= err_lo + 1e-12);
            }
        }
    }
}
