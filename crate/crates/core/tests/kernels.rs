mod common;

use nalgebra::DMatrix;
use pillar_core::kernels::{
    check_psd, combine_kernels, gamma_heuristic, kernel_gram, normalize_kernel, self_kernel,
    GammaMode, Normalization, PsdCheck, PSD_TOL,
};
use pillar_core::{FeatureMatrix, KernelMatrix, KernelParams, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (FeatureMatrix, Vec<Vec<f64>>) {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| common::gaussian(rng) as f32 as f64)
                .collect()
        })
        .collect();
    (FeatureMatrix::from_f64_rows(&rows).unwrap(), rows)
}

fn min_eigenvalue(m: &Matrix) -> f64 {
    let n = m.rows();
    DMatrix::from_row_slice(n, n, m.as_slice())
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn rbf_matches_double_loop_and_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, rows) = random_features(&mut rng, 5, 3);
    let k = self_kernel(&x, &KernelParams::Rbf { gamma: 0.7 }, None).unwrap();
    let oracle = common::naive_rbf(&rows, &rows, 0.7);
    for i in 0..5 {
        for j in 0..5 {
            assert!((k.get(i, j) - oracle[i][j]).abs() <= 1e-12);
        }
    }
    assert_eq!(check_psd(&k, PSD_TOL), PsdCheck::Pass);
}

#[test]
fn analytic_rbf_entries() {
    let x = FeatureMatrix::from_f64_rows(&[vec![0.0, 0.0]]).unwrap();
    let z = FeatureMatrix::from_f64_rows(&[vec![0.0, 1.0]]).unwrap();
    let p = KernelParams::Rbf { gamma: 1.0 };
    assert_eq!(kernel_gram(&x, &x, &p).unwrap().get(0, 0), 1.0);
    assert!((kernel_gram(&x, &z, &p).unwrap().get(0, 0) - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn rbf_grams_pass_psd_by_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let n = rng.random_range(3..40);
        let d = rng.random_range(1..8);
        let (x, _) = random_features(&mut rng, n, d);
        let gamma = rng.random_range(0.01..5.0);
        let k = self_kernel(&x, &KernelParams::Rbf { gamma }, None).unwrap();
        let lo = min_eigenvalue(k.matrix());
        assert!(lo >= -1e-8, "eigen oracle says {lo}");
        assert_eq!(check_psd(&k, PSD_TOL), PsdCheck::Pass);
    }
}

#[test]
fn psd_verdict_agrees_with_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..30 {
        let n = rng.random_range(2..8);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
            a[i][i] += rng.random_range(0.0..1.5);
        }
        let k = common::kernel_from_rows(a);
        let lo = min_eigenvalue(k.matrix());
        match check_psd(&k, PSD_TOL) {
            PsdCheck::Pass => assert!(lo >= -1e-7, "passed with eigenvalue {lo}"),
            PsdCheck::Fail { min_eigenvalue } => {
                assert!(lo < 0.0);
                assert!((min_eigenvalue - lo).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn median_heuristic_matches_exhaustive_median() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, rows) = random_features(&mut rng, 100, 4);
    let mut d: Vec<f64> = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(
                rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    d.sort_by(f64::total_cmp);
    let m = 0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2]);
    let g = gamma_heuristic(&x, GammaMode::Median, 0).unwrap();
    assert!((g - 1.0 / (2.0 * m * m)).abs() <= 1e-12 * g);

    let two = FeatureMatrix::from_f64_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    assert!((gamma_heuristic(&two, GammaMode::Median, 0).unwrap() - 0.125).abs() < 1e-15);
}

#[test]
fn scale_heuristic_with_unit_variance() {
    // entries ±1 → pooled variance 1, d = 4
    let x = FeatureMatrix::from_f64_rows(&[vec![1.0, -1.0, 1.0, -1.0], vec![-1.0, 1.0, -1.0, 1.0]])
        .unwrap();
    assert_eq!(gamma_heuristic(&x, GammaMode::Scale, 0).unwrap(), 0.25);
}

#[test]
fn combination_matches_triple_loop_and_stays_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 12;
    let ks: Vec<KernelMatrix> = (0..3)
        .map(|_| {
            let (x, _) = random_features(&mut rng, n, 3);
            self_kernel(
                &x,
                &KernelParams::Rbf {
                    gamma: rng.random_range(0.1..2.0),
                },
                None,
            )
            .unwrap()
        })
        .collect();
    let beta: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
    let refs: Vec<&KernelMatrix> = ks.iter().collect();
    let fused = combine_kernels(&refs, &beta).unwrap();
    for i in 0..n {
        for j in 0..n {
            let mut want = 0.0;
            for (k, b) in ks.iter().zip(&beta) {
                want += b * k.get(i, j);
            }
            assert!((fused.get(i, j) - want).abs() <= 1e-12);
        }
    }
    assert_eq!(fused.provenance.beta.as_deref(), Some(&beta[..]));
    assert_eq!(check_psd(&fused, PSD_TOL), PsdCheck::Pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rbf_diagonal_and_range(seed in 0u64..10_000, n in 1usize..20, gamma in 0.001f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _) = random_features(&mut rng, n, 3);
        let k = self_kernel(&x, &KernelParams::Rbf { gamma }, None).unwrap();
        for i in 0..n {
            prop_assert_eq!(k.get(i, i), 1.0);
            for j in 0..n {
                prop_assert!(k.get(i, j) >= 0.0 && k.get(i, j) <= 1.0);
                prop_assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }

    #[test]
    fn gram_is_permutation_equivariant(seed in 0u64..10_000, n in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, rows) = random_features(&mut rng, n, 4);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let xp = FeatureMatrix::from_f64_rows(&permuted).unwrap();
        for p in [KernelParams::Rbf { gamma: 0.3 }, KernelParams::Linear] {
            let k = kernel_gram(&x, &x, &p).unwrap();
            let kp = kernel_gram(&xp, &xp, &p).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((kp.get(i, j) - k.get(perm[i], perm[j])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalization_cancels_scale_and_is_idempotent(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _) = random_features(&mut rng, 8, 3);
        let k = self_kernel(&x, &KernelParams::Linear, None).unwrap();
        let mut scaled = k.matrix().clone();
        scaled.scale(c);
        let scaled = KernelMatrix::new(scaled, k.provenance.clone()).unwrap();
        let a = normalize_kernel(&k, Normalization::UnitMeanDiag).unwrap();
        let b = normalize_kernel(&scaled, Normalization::UnitMeanDiag).unwrap();
        let twice = normalize_kernel(&a, Normalization::UnitMeanDiag).unwrap();
        prop_assert!((a.mean_diagonal() - 1.0).abs() <= 1e-12);
        prop_assert!(a.matrix().max_abs_diff(b.matrix()) <= 1e-12);
        prop_assert!(a.matrix().max_abs_diff(twice.matrix()) <= 1e-12);
    }

    #[test]
    fn nonnegative_combinations_stay_psd(seed in 0u64..10_000, b0 in 0.0f64..3.0, b1 in 0.0f64..3.0) {
        prop_assume!(b0 + b1 > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _) = random_features(&mut rng, 10, 3);
        let k0 = self_kernel(&x, &KernelParams::Rbf { gamma: 1.0 }, None).unwrap();
        let k1 = self_kernel(&x, &KernelParams::Linear, None).unwrap();
        let fused = combine_kernels(&[&k0, &k1], &[b0, b1]).unwrap();
        prop_assert_eq!(check_psd(&fused, PSD_TOL), PsdCheck::Pass);
    }
}
