mod common;

use pillar_core::dataio::{
    encode_feature_matrix, encode_kernel_cache, generate_synthetic_pillars, load_feature_matrix,
    load_labels, load_split, read_feature_matrix, read_kernel_cache, write_feature_matrix,
    write_labels, write_split, DataError, PillarSpec, PLRF_HEADER_LEN,
};
use pillar_core::mkl::{l2_mkl, mkl_predict, MklParams};
use pillar_core::pipeline::accuracy;
use pillar_core::svm::{predict_multiclass, train_one_vs_rest};
use pillar_core::{FeatureMatrix, LabelVector, Matrix, SplitDefinition, SyntheticSpec};
use proptest::prelude::*;

fn feature_matrix() -> impl Strategy<Value = FeatureMatrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-1e6f32..1e6, n * d)
            .prop_map(move |v| FeatureMatrix::new(n, d, v).unwrap())
    })
}

proptest! {
    #[test]
    fn plrf_round_trips_byte_for_byte(m in feature_matrix()) {
        let bytes = encode_feature_matrix(&m);
        prop_assert_eq!(bytes.len(), PLRF_HEADER_LEN + 4 * m.n_samples() * m.n_dims());
        let back = read_feature_matrix(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_feature_matrix(&back), bytes);
    }

    #[test]
    fn plrf_truncation_is_always_rejected(m in feature_matrix(), cut in 0.0f64..1.0) {
        let bytes = encode_feature_matrix(&m);
        let keep = (cut * bytes.len() as f64) as usize;
        prop_assert!(read_feature_matrix(&bytes[..keep]).is_err());
    }

    #[test]
    fn plrk_round_trips_byte_for_byte(n in 1usize..7, seed in any::<u64>()) {
        let mut k = Matrix::zeros(n, n);
        let mut x = seed;
        for i in 0..n {
            for j in 0..n {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                k.set(i, j, (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
            }
        }
        let bytes = encode_kernel_cache(&k);
        prop_assert_eq!(bytes.len(), 16 + 8 * n * n);
        let back = read_kernel_cache(&bytes).unwrap();
        prop_assert_eq!(encode_kernel_cache(&back), bytes);
        prop_assert_eq!(back, k);
    }

    #[test]
    fn labels_and_splits_round_trip(labels in proptest::collection::vec(0usize..6, 2..60), seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let lv = LabelVector::new(labels.clone()).unwrap();
        write_labels(&lv, dir.path().join("l.txt")).unwrap();
        prop_assert_eq!(load_labels(dir.path().join("l.txt")).unwrap(), lv);

        let n = labels.len();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for i in 0..n {
            match (seed >> (i % 64)) & 3 {
                0 => {}
                1 => test.push(i),
                _ => train.push(i),
            }
        }
        let split = SplitDefinition { split_id: 2, train_indices: train, test_indices: test };
        write_split(&split, dir.path().join("s.txt")).unwrap();
        prop_assert_eq!(load_split(dir.path().join("s.txt"), 2, n).unwrap(), split);
    }
}

#[test]
fn corrupted_headers_name_the_offset() {
    let m = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let good = encode_feature_matrix(&m);

    let mut bad = good.clone();
    bad[1] = b'X';
    assert!(matches!(
        read_feature_matrix(&bad),
        Err(DataError::BadMagic { offset: 0, .. })
    ));

    let mut bad = good.clone();
    bad[4] = 2;
    assert!(matches!(
        read_feature_matrix(&bad),
        Err(DataError::UnsupportedVersion {
            offset: 4,
            version: 2
        })
    ));

    let mut bad = good.clone();
    bad[PLRF_HEADER_LEN + 8..PLRF_HEADER_LEN + 12].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert!(matches!(
        read_feature_matrix(&bad),
        Err(DataError::NonFiniteValue { offset: 32 })
    ));

    let short = &good[..good.len() - 1];
    let err = read_feature_matrix(short).unwrap_err();
    assert!(matches!(err, DataError::TruncatedPayload { .. }), "{err}");

    assert!(read_kernel_cache(&good).is_err());
}

#[test]
fn io_failures_name_the_path() {
    let err = load_feature_matrix("/definitely/missing/x.plrf").unwrap_err();
    assert!(err.to_string().contains("/definitely/missing/x.plrf"));
    let dir = tempfile::tempdir().unwrap();
    let m = FeatureMatrix::new(1, 1, vec![0.0]).unwrap();
    let err = write_feature_matrix(&m, dir.path().join("no/such/dir/x.plrf")).unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
}

#[test]
fn synthetic_generation_is_a_pure_function_of_the_spec() {
    let a = common::four_pillar_fixture(21);
    let b = common::four_pillar_fixture(21);
    assert_eq!(a, b);
    let bytes = |d: &pillar_core::dataio::SyntheticData| -> Vec<Vec<u8>> {
        d.pillars.iter().map(encode_feature_matrix).collect()
    };
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&common::four_pillar_fixture(22)));
    assert_eq!(a.splits.len(), 3);
    for s in &a.splits {
        s.validate(&a.labels).unwrap();
        let mut per_class = [0usize; 4];
        s.train_indices
            .iter()
            .for_each(|&i| per_class[a.labels.labels()[i]] += 1);
        assert_eq!(per_class, [70; 4]);
    }
}

fn pillar_svm_accuracy(x: &FeatureMatrix, labels: &LabelVector, split: &SplitDefinition) -> f64 {
    let plan = common::plan_for(1, &[], &[]);
    let data = pillar_core::dataio::SyntheticData {
        pillars: vec![x.clone()],
        labels: labels.clone(),
        splits: vec![split.clone()],
    };
    let pk = &common::split_kernels(&data, 0, &[0])[0];
    let train_labels = labels.subset(&split.train_indices);
    let model = train_one_vs_rest(&pk.train, &train_labels, &plan.mkl.svm).unwrap();
    let (pred, _) = predict_multiclass(&model, &pk.test).unwrap();
    accuracy(&pred, labels.subset(&split.test_indices).labels()).unwrap()
}

#[test]
fn noiseless_fully_informative_pillar_is_perfect() {
    let spec = SyntheticSpec {
        n_samples: 120,
        n_classes: 4,
        pillars: vec![PillarSpec {
            n_dims: 8,
            informative_classes: vec![0, 1, 2, 3],
            noise_sigma: 0.0,
        }],
        seed: 4,
    };
    let data = generate_synthetic_pillars(&spec).unwrap();
    for split in &data.splits {
        assert_eq!(
            pillar_svm_accuracy(&data.pillars[0], &data.labels, split),
            1.0
        );
    }
}

#[test]
fn disjoint_halves_need_fusion() {
    let spec = SyntheticSpec {
        n_samples: 200,
        n_classes: 4,
        pillars: vec![
            PillarSpec {
                n_dims: 8,
                informative_classes: vec![0, 1],
                noise_sigma: 0.5,
            },
            PillarSpec {
                n_dims: 8,
                informative_classes: vec![2, 3],
                noise_sigma: 0.5,
            },
        ],
        seed: 8,
    };
    let data = generate_synthetic_pillars(&spec).unwrap();
    let params = MklParams::default();
    let split = &data.splits[0];
    let truth = data.labels.subset(&split.test_indices).labels().to_vec();
    let singles: Vec<f64> = (0..2)
        .map(|p| pillar_svm_accuracy(&data.pillars[p], &data.labels, split))
        .collect();

    let pks = common::split_kernels(&data, 0, &[0, 1]);
    let ks: Vec<_> = pks.iter().map(|p| &p.train).collect();
    let model = l2_mkl(&ks, &data.labels.subset(&split.train_indices), &params).unwrap();
    let blocks: Vec<&Matrix> = pks.iter().map(|p| &p.test).collect();
    let (pred, _) = mkl_predict(&model, &blocks).unwrap();
    let fused = accuracy(&pred, &truth).unwrap();

    let best_grid = common::simplex_grid(2, 20)
        .into_iter()
        .map(|beta| {
            let k = pillar_core::kernels::combine_kernels(&ks, &beta).unwrap();
            let m = train_one_vs_rest(&k, &data.labels.subset(&split.train_indices), &params.svm)
                .unwrap();
            let t = pillar_core::kernels::combine_blocks(&blocks, &beta).unwrap();
            accuracy(&predict_multiclass(&m, &t).unwrap().0, &truth).unwrap()
        })
        .fold(0.0, f64::max);
    for s in &singles {
        assert!(fused > *s, "fused {fused} vs single {s}");
        assert!(best_grid > *s);
    }
    assert!(singles.iter().all(|&s| s <= 0.75 + 1e-12), "{singles:?}");
}
