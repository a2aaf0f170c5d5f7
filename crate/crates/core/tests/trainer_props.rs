mod common;

use proptest::prelude::*;
use snapclass::augment::AugmentConfig;
use snapclass::optim::ScheduleConfig;
use snapclass::trainer::{
    cross_entropy, grad_check, snapshot, softmax, synth_dataset, train_snapshot, train_two_phase, MlpModel, ModelShape,
    SnapshotTrainConfig, SynthConfig, TrainConfig, TrainMode, TwoPhaseConfig,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradients_match_finite_differences(seed in any::<u64>()) {
        let (case, _) = common::grad_case(seed, 1e-3);
        let n = case.model.num_params();
        let err = grad_check(&case.model, &case.inputs, &case.labels, 1e-5, n).unwrap();
        prop_assert!(err < 1e-4, "relative error {err:e}");
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-700.0f64..700.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_files_round_trip(seed in any::<u64>(), hidden in 0usize..6, epoch in any::<u32>()) {
        let shape = if hidden == 0 { ModelShape::linear(3, 2) } else { ModelShape::one_hidden(3, hidden, 2) };
        let m = MlpModel::new(&shape, seed).unwrap();
        let snap = snapclass::trainer::Snapshot { epoch, params: m.params(), train_loss: 0.5 };
        let bytes = snapshot::encode(&shape, seed, &snap).unwrap();
        let file = snapshot::decode(&bytes).unwrap();
        prop_assert_eq!(file.shape, shape);
        prop_assert_eq!(file.seed, seed);
        prop_assert_eq!(file.snapshot, snap);
    }
}

#[test]
fn cross_entropy_is_floored() {
    let loss = cross_entropy(&[vec![1.0, 0.0]], &[1]).unwrap();
    assert!(loss.is_finite());
    assert!((loss - 1e-12f64.ln().abs()).abs() < 1e-9);
}

fn small_data() -> snapclass::trainer::SyntheticDataset {
    synth_dataset(&SynthConfig {
        classes: 4,
        train_per_class: 20,
        test_per_class: 5,
        image_size: 8,
        seed: 6,
    })
    .unwrap()
}

#[test]
fn training_is_deterministic() {
    let ds = small_data();
    let shape = ModelShape::one_hidden(64, 8, 4);
    let cfg = TrainConfig {
        batch_size: 8,
        seed: 13,
        procedure: TrainMode::Snapshot(SnapshotTrainConfig {
            schedule: ScheduleConfig::new(0.03, 6, 3).unwrap(),
            momentum: 0.9,
        }),
    };
    let run = || {
        let mut m = MlpModel::new(&shape, 1).unwrap();
        train_snapshot(&mut m, (&ds).into(), &AugmentConfig::default(), &cfg).unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a, b);
    assert_eq!(ta.to_csv(), tb.to_csv());
}

#[test]
fn twenty_epochs_five_cycles_give_five_snapshots() {
    let ds = small_data();
    let mut m = MlpModel::new(&ModelShape::one_hidden(64, 8, 4), 2).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        seed: 0,
        procedure: TrainMode::Snapshot(SnapshotTrainConfig {
            schedule: ScheduleConfig::new(0.03, 20, 5).unwrap(),
            momentum: 0.9,
        }),
    };
    let (set, trace) = train_snapshot(&mut m, (&ds).into(), &AugmentConfig::default(), &cfg).unwrap();
    let epochs: Vec<u32> = set.snapshots().iter().map(|s| s.epoch).collect();
    assert_eq!(epochs, vec![4, 8, 12, 16, 20]);
    assert_eq!(trace.epochs.len(), 20);
}

#[test]
fn two_phase_training_reduces_loss() {
    let ds = small_data();
    let mut m = MlpModel::new(&ModelShape::one_hidden(64, 16, 4), 3).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        seed: 1,
        procedure: TrainMode::TwoPhase(TwoPhaseConfig {
            phase1_epochs: 4,
            phase2_epochs: 2,
            ..TwoPhaseConfig::default()
        }),
    };
    let trace = train_two_phase(&mut m, (&ds).into(), &AugmentConfig::identity(), &cfg).unwrap();
    assert_eq!(trace.epochs.len(), 6);
    assert!(trace.epochs[3].train_loss < trace.epochs[0].train_loss);
}
