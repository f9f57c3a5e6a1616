mod common;

use cap_lab::attacks::clean_accuracy;
use cap_lab::data::{gen_blobs, gen_moons, load_csv, split_indices, CsvSchema, FeatureScaling, LabelColumn};
use cap_lab::train::{train, PolytopeConfig, TrainConfig, TrainerKind};
use cap_lab::{Activation, Mlp};
use proptest::prelude::*;
use std::io::Write;

#[test]
fn blob_means_obey_the_clt_bound() {
    let n = 10_000;
    let centers = vec![vec![2.0, -1.0], vec![-3.0, 0.5]];
    let data = gen_blobs(8, n, &centers, 1.0).unwrap();
    for (k, c) in centers.iter().enumerate() {
        let rows: Vec<&[f64]> = (0..data.len()).filter(|&i| data.labels()[i] == k).map(|i| data.sample(i).0).collect();
        assert_eq!(rows.len(), n);
        for j in 0..2 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            assert!((mean - c[j]).abs() <= 3.0 / (n as f64).sqrt(), "class {k} dim {j}: {mean}");
        }
    }
}

#[test]
fn small_mlp_fits_noiseless_moons() {
    let data = gen_moons(2, 100, 0.0).unwrap();
    let mut cfg = TrainConfig::new(TrainerKind::Clean, 300, 0.05, PolytopeConfig::new(0.1));
    cfg.batch_size = 16;
    cfg.probe_size = 0;
    cfg.seed = 2;
    let model = Mlp::init(2, &[2, 16, 2], Activation::Relu).unwrap();
    let (model, _) = train(model, &data, &cfg).unwrap();
    assert_eq!(clean_accuracy(&model, &data).unwrap(), 1.0);
}

proptest! {
    #[test]
    fn minmax_scaled_features_land_in_the_unit_interval(
        rows in prop::collection::vec((-1e3f64..1e3, -5.0f64..5.0, 0usize..3), 2..40),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        for (a, b, y) in &rows {
            writeln!(f, "{a:?},{b:?},{y}").unwrap();
        }
        drop(f);
        let schema = CsvSchema {
            label_column: LabelColumn::Index(2),
            header: false,
            feature_scaling: FeatureScaling::MinmaxToUnit,
            classes: Some(3),
        };
        let data = load_csv(&path, &schema).unwrap();
        prop_assert!(data.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn splits_partition_the_indices(n in 2usize..500, fraction in 0.01f64..0.99, seed in 0u64..1000) {
        match split_indices(n, fraction, seed) {
            Ok((a, b)) => {
                prop_assert!(!a.is_empty() && !b.is_empty());
                let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(split_indices(n, fraction, seed).unwrap(), (a, b));
            }
            Err(_) => {
                let k = (n as f64 * fraction).round() as usize;
                prop_assert!(k == 0 || k == n);
            }
        }
    }
}
