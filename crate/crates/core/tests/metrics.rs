mod common;

use common::*;
use downscale_core::data::field::Dims;
use downscale_core::eval::metrics::{ms_ssim_plane, ms_ssim_scales};
use downscale_core::eval::{crps, lsd, ms_ssim, rank_count, RankTally};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(h: usize, w: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // smooth-ish: sum of a few random waves plus noise, kept in [0, 1]
    let waves: Vec<(f64, f64, f64)> = (0..4).map(|_| (rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5), rng.gen_range(0.0..6.3))).collect();
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let s: f64 = waves.iter().map(|(a, b, p)| (a * y + b * x + p).sin()).sum();
            (0.5 + 0.1 * s + 0.05 * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn crps_matches_integral(members in prop::collection::vec(-5.0f64..5.0, 1..11), obs in -6.0f64..6.0) {
        let want = crps_integral(&members, obs);
        let got = crps(&mut members.clone(), obs);
        prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn rank_statistics_match_direct_counts(n_p in 1usize..12, ranks in prop::collection::vec(0usize..12, 1..300)) {
        let ranks: Vec<usize> = ranks.into_iter().map(|r| r % (n_p + 1)).collect();
        let mut t = RankTally::new(n_p);
        for &r in &ranks {
            t.add(r);
        }
        prop_assert!((t.ks().unwrap() - ks_direct(&ranks, n_p)).abs() <= 1e-12);
        prop_assert!((t.kl().unwrap() - kl_direct(&ranks, n_p)).abs() <= 1e-12);
        prop_assert!((t.outlier_fraction().unwrap() - outliers_direct(&ranks, n_p)).abs() <= 1e-12);
    }

    #[test]
    fn rank_without_ties_counts_members_below(members in prop::collection::vec(0.0f64..1.0, 1..30), truth in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let below = members.iter().filter(|&&x| x < truth).count();
        if members.iter().all(|&x| x != truth) {
            prop_assert_eq!(rank_count(&members, truth, &mut rng), below);
        }
    }
}

#[test]
fn crps_quadrature_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let m: Vec<f64> = (0..rng.gen_range(1..=10)).map(|_| rng.gen_range(0.0..1.0)).collect();
        let obs = rng.gen_range(-0.2..1.2);
        let got = crps(&mut m.clone(), obs);
        assert!((got - crps_quadrature(&m, obs, 400_000)).abs() < 1e-5);
    }
}

#[test]
fn lsd_matches_direct_periodogram() {
    for (h, w, steps) in [(16, 16, 2), (12, 20, 1), (9, 9, 3)] {
        let d = Dims::new(steps, h, w, 1);
        let a: Vec<Vec<f64>> = (0..steps).map(|t| field(h, w, t as u64)).collect();
        let b: Vec<Vec<f64>> = (0..steps).map(|t| field(h, w, 100 + t as u64).iter().map(|v| v * v).collect()).collect();
        let fa: Vec<f32> = a.concat().iter().map(|&v| v as f32).collect();
        let fb: Vec<f32> = b.concat().iter().map(|&v| v as f32).collect();
        // the oracle sees exactly the f32 values
        let a64: Vec<Vec<f64>> = fa.chunks(h * w).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let b64: Vec<Vec<f64>> = fb.chunks(h * w).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let got = lsd(&fa, &fb, d).unwrap();
        let want = lsd_direct(&a64, &b64, h, w);
        assert!((got - want).abs() <= 1e-9, "{h}x{w}: {got} vs {want}");
    }
}

#[test]
fn ms_ssim_matches_direct_windows() {
    for (h, w) in [(24, 24), (48, 40), (11, 15)] {
        let a = field(h, w, 1);
        let b: Vec<f64> = field(h, w, 2).iter().zip(&a).map(|(x, y)| 0.5 * (x + y)).collect();
        let s = ms_ssim_scales(h, w);
        let got = ms_ssim_plane(&a, &b, h, w, s).unwrap();
        let want = ms_ssim_direct(&a, &b, h, w, s);
        assert!((got - want).abs() <= 1e-9, "{h}x{w}: {got} vs {want}");
        assert!((ms_ssim_plane(&a, &a, h, w, s).unwrap() - 1.0).abs() < 1e-12);
    }
    let d = Dims::new(1, 8, 8, 1);
    assert!(ms_ssim(&[0.0; 64], &[0.0; 64], d).is_err());
}
