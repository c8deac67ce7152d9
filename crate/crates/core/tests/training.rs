use sand_core::data::Correlation;
use sand_core::linreg::{brute_force_best_subset, ols_fit, sand_vs_oracle};
use sand_core::trainer::{train_baseline, TrainConfig};
use sand_core::{train, Dataset, SyntheticSpec, TargetData, Tensor};

fn prepared(spec: &SyntheticSpec) -> Dataset {
    spec.generate().unwrap().standardize().unwrap().standardize_targets().unwrap()
}

#[test]
fn recovery_run_polarizes_and_finds_support() {
    let data = prepared(&SyntheticSpec::planted_linear(2000, 20, 5, 0.1, 3).unwrap());
    let o = train(TrainConfig::new(5, 400, 3), &data).unwrap();
    assert_eq!(Some(&o.report.selected_indices), data.ground_truth.as_ref());

    let first = o.trajectory.first().unwrap();
    let last = o.trajectory.last().unwrap();
    let init = (5.0f64 / 20.0).sqrt();
    assert_eq!(first.epoch, 0);
    assert!(first.gains.iter().all(|g| (g - init).abs() < 1e-12));
    assert_eq!(last.epoch, 400);
    assert!(last.polarization() < first.polarization());
    assert!(last.gains[..5].iter().all(|&g| g >= 0.9), "{:?}", last.gains);
    for row in &o.trajectory {
        assert!(row.gains.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn well_separated_blobs_are_learned_without_selection() {
    let spec = SyntheticSpec::NuisanceBlobs {
        n_samples: 2000,
        n_informative: 2,
        n_nuisance: 0,
        classes: 2,
        nuisance_variance: 0.1,
        min_center_distance: 8.0,
        center_spread: 6.0,
        permute: true,
        seed: 5,
    };
    let data = prepared(&spec);
    let o = train_baseline(TrainConfig::new(2, 60, 5), &data).unwrap();
    assert!(o.test_metric >= 0.99, "{}", o.test_metric);
}

#[test]
fn linear_selection_matches_oracle_on_planted_support() {
    let spec = SyntheticSpec::SparseLinear {
        n_samples: 2000,
        n_features: 10,
        support: vec![2, 5, 8],
        coefficients: vec![1.5, -2.0, 2.5],
        noise_std: 0.1,
        correlations: vec![],
        seed: 21,
    };
    let data = prepared(&spec);
    let (c, _) = sand_vs_oracle(&data, 3, &TrainConfig::new(3, 200, 1)).unwrap();
    assert_eq!(c.sand_subset, vec![2, 5, 8]);
    assert_eq!(c.oracle_subset, vec![2, 5, 8]);
    assert_eq!(c.relative_gap, 0.0);
}

#[test]
fn correlated_informative_pair_stays_near_optimal() {
    let spec = SyntheticSpec::SparseLinear {
        n_samples: 2000,
        n_features: 10,
        support: vec![0, 1, 6],
        coefficients: vec![2.0, 1.5, -1.0],
        noise_std: 0.1,
        correlations: vec![Correlation {
            source: 0,
            target: 1,
            noise_std: 0.3,
        }],
        seed: 4,
    };
    let data = prepared(&spec);
    let (c, _) = sand_vs_oracle(&data, 3, &TrainConfig::new(3, 400, 4)).unwrap();
    assert!(c.relative_gap <= 0.05, "{c:?}");
}

#[test]
fn pure_noise_targets_give_a_well_formed_record() {
    let mut data = prepared(&SyntheticSpec::planted_linear(500, 6, 0, 1.0, 8).unwrap());
    let TargetData::Values(y) = &data.targets else { unreachable!() };
    assert!(y.values().iter().all(|v| v.is_finite()));
    data.ground_truth = None;
    let (c, _) = sand_vs_oracle(&data, 2, &TrainConfig::new(2, 20, 8)).unwrap();
    assert!(c.relative_gap >= 0.0);
    assert_eq!(c.sand_subset.len(), 2);
    let best = brute_force_best_subset(&data.features, y, 2).unwrap();
    assert_eq!(best.best_loss, c.oracle_loss);
    let sand = ols_fit(&data.features.select_cols(&c.sand_subset), y).unwrap();
    assert_eq!(sand.loss, c.sand_loss);
}

#[test]
fn k_equal_n_tracks_the_plain_model() {
    let data = prepared(&SyntheticSpec::planted_linear(1000, 8, 3, 0.1, 2).unwrap());
    let cfg = TrainConfig::new(8, 150, 2);
    let with = train(cfg.clone(), &data).unwrap();
    let without = train_baseline(cfg, &data).unwrap();
    assert_eq!(with.report.selected_indices, (0..8).collect::<Vec<_>>());
    assert!((with.test_metric_masked - without.test_metric).abs() <= 0.02);
    assert_eq!(with.test_metric_masked, with.test_metric_unmasked);
}

#[test]
fn standardized_columns_have_unit_scale() {
    let raw = SyntheticSpec::planted_linear(400, 5, 2, 0.5, 1).unwrap().generate().unwrap();
    let mut x = raw.features.values().to_vec();
    for r in 0..400 {
        x[r * 5] = 3.0 * x[r * 5] + 7.0;
        x[r * 5 + 4] = -2.5;
    }
    let d = Dataset::new(Tensor::matrix(400, 5, x).unwrap(), raw.targets.clone())
        .unwrap()
        .standardize()
        .unwrap();
    for j in 0..5 {
        let col: Vec<f64> = (0..400).map(|r| d.features.get(r, j)).collect();
        let mean = col.iter().sum::<f64>() / 400.0;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 400.0).sqrt();
        assert!(mean.abs() < 1e-9);
        if j == 4 {
            assert!(col.iter().all(|&v| v == 0.0));
        } else {
            assert!((sd - 1.0).abs() < 1e-6);
        }
    }
}
