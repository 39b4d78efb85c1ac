//! Cross-module properties of the fit / whiten / test pipeline.

use proptest::prelude::*;
use tyler_gof::engine::{calibrate_null, calibrate_null_with_scatter, run_test_with_table, TestConfig};
use tyler_gof::gof::{ks_two_sample, mean};
use tyler_gof::matrix::{frob_dist, mat_mul};
use tyler_gof::samplers::{random_spd, sample_acg, sample_elliptical, sample_offset_alternative, sample_uniform_sphere};
use tyler_gof::statistics::combined;
use tyler_gof::tyler::tyler_fit_raw;
use tyler_gof::{tyler_fit, DataMatrix, RadialLaw, SeedSpec, SpdMatrix, TylerConfig, UnitSample, Verdict};

fn seed(a: u64, b: u64) -> SeedSpec {
    SeedSpec::new(a, b)
}

fn to_data(s: &UnitSample) -> DataMatrix {
    DataMatrix::new(s.len(), s.dim(), s.as_slice().to_vec()).unwrap()
}

/// A random orthogonal matrix (row-major) from the eigenvectors of a random
/// SPD matrix.
fn orthogonal(p: usize, s: u64) -> Vec<f64> {
    let m = random_spd(p, 50.0, seed(s, 99)).unwrap();
    let mut q = vec![0.0; p * p];
    for k in 0..p {
        for (i, v) in m.eigenvector(k).into_iter().enumerate() {
            q[i * p + k] = v;
        }
    }
    q
}

fn apply_rows(sample: &UnitSample, a: &[f64]) -> UnitSample {
    let p = sample.dim();
    let mut out = Vec::with_capacity(sample.as_slice().len());
    for r in sample.rows() {
        for i in 0..p {
            out.push((0..p).map(|j| a[i * p + j] * r[j]).sum::<f64>());
        }
    }
    UnitSample::from_raw(p, out).unwrap()
}

#[test]
fn tyler_is_scale_invariant() {
    let omega = random_spd(4, 20.0, seed(1, 0)).unwrap();
    let y = sample_elliptical(&[0.0; 4], &omega, &RadialLaw::StudentT { nu: 2.0 }, 120, seed(1, 1)).unwrap();
    let scaled = DataMatrix::new(120, 4, y.values().iter().map(|v| v * 37.5).collect()).unwrap();
    let cfg = TylerConfig::default();
    let a = tyler_fit_raw(&y, &cfg).unwrap().estimate;
    let b = tyler_fit_raw(&scaled, &cfg).unwrap().estimate;
    assert!(frob_dist(&a, &b).unwrap() < 1e-10);
}

#[test]
fn tyler_is_affine_equivariant() {
    let p = 4;
    let x = sample_acg(&random_spd(p, 10.0, seed(2, 0)).unwrap(), 150, seed(2, 1)).unwrap();
    let cfg = TylerConfig {
        tol: 1e-13,
        max_iters: 5000,
        ..TylerConfig::default()
    };
    let t = tyler_fit(&x, &cfg).unwrap().estimate;
    // a general invertible map: SPD times orthogonal
    let b = random_spd(p, 8.0, seed(2, 2)).unwrap();
    let a = mat_mul(b.entries(), &orthogonal(p, 3), p, p, p);
    let ta = tyler_fit(&apply_rows(&x, &a), &cfg).unwrap().estimate;
    // expected p * A T A^T / Tr(A T A^T)
    let at = mat_mul(&a, t.entries(), p, p, p);
    let mut a_t = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            a_t[i * p + j] = a[j * p + i];
        }
    }
    let ata = mat_mul(&at, &a_t, p, p, p);
    let expected = SpdMatrix::from_entries(p, ata).unwrap().with_trace(p as f64).unwrap();
    assert!(frob_dist(&ta, &expected).unwrap() < 1e-8 * p as f64);
}

#[test]
fn tyler_is_consistent() {
    let p = 3;
    let omega = random_spd(p, 6.0, seed(4, 0)).unwrap();
    let err = |n: usize| -> f64 {
        let errs: Vec<f64> = (0..6)
            .map(|r| {
                let x = sample_acg(&omega, n, seed(4, 10 + r + n as u64)).unwrap();
                let t = tyler_fit(&x, &TylerConfig::default()).unwrap().estimate;
                frob_dist(&t, &omega).unwrap()
            })
            .collect();
        mean(&errs)
    };
    let (small, large) = (err(200), err(3200));
    // n^{-1/2} rate: a 16-fold sample gives roughly a quarter of the error
    assert!(large < small / 2.5, "{small} -> {large}");
}

#[test]
fn whitened_row_sums_are_approximately_standard_normal() {
    let (p, n, reps) = (3usize, 400usize, 300usize);
    let sums: Vec<Vec<f64>> = (0..reps)
        .map(|r| {
            let x = sample_acg(&random_spd(p, 5.0, seed(5, 0)).unwrap(), n, seed(5, r as u64 + 1)).unwrap();
            tyler_fit(&x, &TylerConfig::default()).unwrap().whitened.scaled_row_sum()
        })
        .collect();
    for i in 0..p {
        for j in 0..p {
            let c = sums.iter().map(|s| s[i] * s[j]).sum::<f64>() / reps as f64;
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 0.25, "cov[{i}][{j}] = {c}");
        }
        let m = sums.iter().map(|s| s[i]).sum::<f64>() / reps as f64;
        assert!(m.abs() < 0.25, "mean[{i}] = {m}");
    }
}

#[test]
fn statistics_are_rotation_invariant() {
    let s = sample_uniform_sphere(5, 60, seed(6, 0)).unwrap();
    let q = orthogonal(5, 7);
    let a = combined(&s, 1.0, 1.0).unwrap();
    let b = combined(&apply_rows(&s, &q), 1.0, 1.0).unwrap();
    assert!((a.t_ajne - b.t_ajne).abs() < 1e-10);
    assert!((a.t_gine - b.t_gine).abs() < 1e-10);
    assert!((a.trace_s2 - b.trace_s2).abs() < 1e-10);
}

#[test]
fn whitened_statistic_is_pivotal() {
    let cfg = TestConfig {
        mc_null_reps: 400,
        seed: seed(8, 0),
        ..TestConfig::default()
    };
    let (p, n) = (3, 40);
    let identity = calibrate_null(p, n, &cfg).unwrap();
    for (k, cond) in [10.0, 200.0].into_iter().enumerate() {
        let omega = random_spd(p, cond, seed(8, k as u64 + 1)).unwrap();
        // different replicate streams, so compare distributions, not values
        let other_cfg = TestConfig {
            seed: seed(80 + k as u64, 0),
            ..cfg
        };
        let t = calibrate_null_with_scatter(p, n, &other_cfg, Some(&omega)).unwrap();
        let ks = ks_two_sample(&identity.values, &t.values);
        assert!(ks.p_value > 0.001, "cond {cond}: {ks:?}");
    }
}

#[test]
fn same_data_same_scatter_gives_identical_table() {
    // with a shared seed the whitened samples coincide up to rounding, so the
    // tables agree closely, not just in distribution
    let cfg = TestConfig {
        mc_null_reps: 100,
        seed: seed(9, 0),
        ..TestConfig::default()
    };
    let omega = random_spd(3, 30.0, seed(9, 1)).unwrap();
    let a = calibrate_null(3, 30, &cfg).unwrap();
    let b = calibrate_null_with_scatter(3, 30, &cfg, Some(&omega)).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn gaussian_and_heavy_tailed_data_share_the_null() {
    let (p, n, reps) = (3usize, 40usize, 300u64);
    let omega = random_spd(p, 10.0, seed(10, 0)).unwrap();
    let stats = |law: RadialLaw, tag: u64| -> Vec<f64> {
        (0..reps)
            .map(|r| {
                let y = sample_elliptical(&[0.0; 3], &omega, &law, n, seed(10 + tag, r)).unwrap();
                let fit = tyler_fit_raw(&y, &TylerConfig::default()).unwrap();
                combined(&fit.whitened, 1.0, 1.0).unwrap().combined
            })
            .collect()
    };
    let g = stats(RadialLaw::ChiP, 1);
    let t = stats(RadialLaw::StudentT { nu: 1.0 }, 2);
    assert!(ks_two_sample(&g, &t).p_value > 0.001);
}

#[test]
fn size_is_controlled_at_small_scale() {
    let (p, n, runs) = (3usize, 50usize, 300u64);
    let cfg = TestConfig {
        mc_null_reps: 500,
        seed: seed(12, 0),
        ..TestConfig::default()
    };
    let table = calibrate_null(p, n, &cfg).unwrap();
    let omega = random_spd(p, 25.0, seed(12, 1)).unwrap();
    let rejections = (0..runs)
        .filter(|&r| {
            let x = sample_acg(&omega, n, seed(13, r)).unwrap();
            run_test_with_table(&to_data(&x), &cfg, &table).unwrap().verdict == Verdict::Rejected
        })
        .count() as f64;
    let freq = rejections / runs as f64;
    let se = (0.05f64 * 0.95 / runs as f64).sqrt();
    assert!((freq - 0.05).abs() < 3.0 * se, "rejection rate {freq}");
}

#[test]
fn power_grows_with_offset() {
    let (p, n, runs) = (3usize, 100usize, 150u64);
    let cfg = TestConfig {
        mc_null_reps: 300,
        seed: seed(14, 0),
        ..TestConfig::default()
    };
    let table = calibrate_null(p, n, &cfg).unwrap();
    let omega = SpdMatrix::identity(p);
    let power = |scale: f64| -> f64 {
        (0..runs)
            .filter(|&r| {
                let x = sample_offset_alternative(p, n, scale, &omega, seed(15, r)).unwrap();
                run_test_with_table(&to_data(&x), &cfg, &table).unwrap().verdict == Verdict::Rejected
            })
            .count() as f64
            / runs as f64
    };
    let rates: Vec<f64> = [0.0, 0.4, 0.8].into_iter().map(power).collect();
    assert!(rates[0] < 0.15, "{rates:?}");
    assert!(rates[1] >= rates[0] && rates[2] >= rates[1], "{rates:?}");
    assert!(rates[2] > 0.5, "{rates:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_bound_holds(p in 2usize..7, extra in 0usize..20, s in any::<u64>()) {
        let n = p + extra;
        let x = sample_uniform_sphere(p, n, seed(s, 0)).unwrap();
        prop_assert!(x.trace_s2() >= 1.0 / p as f64 - 1e-12);
    }

    #[test]
    fn whitening_attains_the_frame_bound(p in 2usize..6, extra in 2usize..30, s in any::<u64>()) {
        let n = p + extra;
        let omega = random_spd(p, 30.0, seed(s, 1)).unwrap();
        let x = sample_acg(&omega, n, seed(s, 2)).unwrap();
        let cfg = TylerConfig { max_iters: 20_000, ..TylerConfig::default() };
        let fit = tyler_fit(&x, &cfg).unwrap();
        prop_assert!((fit.whitened.trace_s2() - 1.0 / p as f64).abs() < 1e-9);
        prop_assert!((fit.estimate.trace() - p as f64).abs() < 1e-10);
    }
}
