mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{affine_rows, dot, kkt_min_norm, records, separable_instance, AFFINE};
use strategic_usage::models::{loss, FeatureMap, Model, ModelFamily};
use strategic_usage::training::{min_norm_separator, sticky_retrain, Solver, TrainError};
use strategic_usage::{Dataset, Label, LossSpec, TrainerConfig, UserRecord};

fn weights(model: &Model) -> Vec<f64> {
    match model {
        Model::Linear(m) => m.weights.clone(),
        other => panic!("expected a linear model, got {other:?}"),
    }
}

#[test]
fn both_solvers_agree_with_the_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(2..=7);
        let data = separable_instance(&mut rng, n, 2, 0.3);
        let expected = kkt_min_norm(&affine_rows(&data)).expect("separable");
        for solver in [Solver::DualAscent, Solver::ProjectedGradient] {
            let cfg = TrainerConfig {
                solver,
                ..Default::default()
            };
            let got = weights(&min_norm_separator(&records(&data), AFFINE, &cfg).unwrap());
            let err = got
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{solver:?}: {got:?} vs {expected:?}");
        }
    }
}

#[test]
fn no_feasible_perturbation_has_smaller_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let data = separable_instance(&mut rng, 8, 3, 0.2);
        let rows = affine_rows(&data);
        let theta = weights(
            &min_norm_separator(&records(&data), AFFINE, &TrainerConfig::default()).unwrap(),
        );
        let base = dot(&theta, &theta);
        for _ in 0..500 {
            let cand: Vec<f64> = theta
                .iter()
                .map(|t| t + rng.random_range(-0.05..0.05))
                .collect();
            if rows.iter().all(|z| dot(z, &cand) >= 1.0) {
                assert!(dot(&cand, &cand) >= base - 1e-9);
            }
        }
    }
}

#[test]
fn only_the_support_of_the_memory_matters() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data = separable_instance(&mut rng, 10, 2, 0.2);
    // A deliberately wrong previous model forces a refit.
    let prev = Arc::new(Model::linear(vec![0.0, 0.0, -1.0], FeatureMap::AppendOne));
    let cfg = TrainerConfig::default();
    let support: Vec<bool> = (0..10).map(|i| i % 3 != 1).collect();
    let col_a: Vec<f64> = support.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let col_b: Vec<f64> = support
        .iter()
        .map(|&s| if s { rng.random_range(1e-6..50.0) } else { 0.0 })
        .collect();
    let a = sticky_retrain(&prev, &col_a, &data, &LossSpec::HINGE_LINEAR, &cfg, 1e-9).unwrap();
    let b = sticky_retrain(&prev, &col_b, &data, &LossSpec::HINGE_LINEAR, &cfg, 1e-9).unwrap();
    assert!(a.approx_eq(&b, 1e-12));
}

#[test]
fn rbf_separator_fits_xor() {
    let data = Dataset::from_pairs(&[
        (vec![1.0, 1.0], 1),
        (vec![-1.0, -1.0], 1),
        (vec![1.0, -1.0], -1),
        (vec![-1.0, 1.0], -1),
    ])
    .unwrap();
    assert!(matches!(
        min_norm_separator(&records(&data), AFFINE, &TrainerConfig::default()),
        Err(TrainError::InfeasibleSupport { support: 4 })
    ));
    let model = min_norm_separator(
        &records(&data),
        ModelFamily::Rbf { gamma: 0.5 },
        &TrainerConfig::default(),
    )
    .unwrap();
    for u in data.users() {
        assert!(loss(&model, &u.features, u.label, &LossSpec::HINGE_LINEAR).unwrap() <= 1e-9);
    }
}

#[test]
fn threshold_separator_is_the_smallest_offset() {
    let pts = [
        UserRecord::new(vec![2.0], Label::Positive),
        UserRecord::new(vec![-3.0], Label::Negative),
    ];
    let refs: Vec<&UserRecord> = pts.iter().collect();
    let model =
        min_norm_separator(&refs, ModelFamily::Threshold, &TrainerConfig::default()).unwrap();
    assert_eq!(model, Model::threshold(0.0));

    let pts = [UserRecord::new(vec![-0.7], Label::Positive)];
    let refs: Vec<&UserRecord> = pts.iter().collect();
    let model =
        min_norm_separator(&refs, ModelFamily::Threshold, &TrainerConfig::default()).unwrap();
    assert!(model.approx_eq(&Model::threshold(1.7), 1e-12));

    let pts = [
        UserRecord::new(vec![0.0], Label::Positive),
        UserRecord::new(vec![0.5], Label::Negative),
    ];
    let refs: Vec<&UserRecord> = pts.iter().collect();
    assert!(matches!(
        min_norm_separator(&refs, ModelFamily::Threshold, &TrainerConfig::default()),
        Err(TrainError::InfeasibleSupport { .. })
    ));
}

#[test]
fn sticky_keeps_the_allocation_when_still_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let data = separable_instance(&mut rng, 12, 2, 0.3);
    let cfg = TrainerConfig::default();
    let col = vec![1.0; 12];
    let first = sticky_retrain(
        &Arc::new(Model::linear(vec![0.0; 3], FeatureMap::AppendOne)),
        &col,
        &data,
        &LossSpec::HINGE_LINEAR,
        &cfg,
        1e-9,
    )
    .unwrap();
    let half: Vec<f64> = (0..12).map(|i| if i < 6 { 2.0 } else { 0.0 }).collect();
    let again = sticky_retrain(&first, &half, &data, &LossSpec::HINGE_LINEAR, &cfg, 1e-9).unwrap();
    assert!(Arc::ptr_eq(&first, &again));
}
