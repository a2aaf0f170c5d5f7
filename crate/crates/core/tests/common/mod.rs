#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snapclass::augment::AugmentConfig;
use snapclass::ensemble::{evaluate, individual_accuracies};
use snapclass::metrics::{ConfusionMatrix, PredictionRecord};
use snapclass::optim::ScheduleConfig;
use snapclass::trainer::{
    default_schedule, derive_seed, synth_dataset, train_snapshot, MlpModel, ModelShape, SnapshotTrainConfig,
    SynthConfig, TrainConfig, TrainMode, STREAM_DATA, STREAM_INIT,
};
use snapclass::ImageBuffer;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn reference_matrix() -> ConfusionMatrix {
    ConfusionMatrix::read_csv(fixture("reference_confusion.csv")).unwrap()
}

/// α(t) for α₀ = 0.1, cycle length 5, written out to 25 significant digits.
/// Position `k = (t − 1) mod 5` within the cycle.
pub const LR_CYCLE_DECIMAL: [&str; 5] = [
    "0.1",
    "0.09045084971874737120511467",
    "0.06545084971874737120511467",
    "0.03454915028125262879488533",
    "0.009549150281252628794885329",
];

/// Same table from cos(π/5) = (1 + √5)/4 and cos(2π/5) = (√5 − 1)/4.
pub fn lr_cycle_closed_form(alpha0: f64) -> [f64; 5] {
    let s5 = 5f64.sqrt();
    let c1 = (1.0 + s5) / 4.0;
    let c2 = (s5 - 1.0) / 4.0;
    let h = alpha0 / 2.0;
    [alpha0, h * (1.0 + c1), h * (1.0 + c2), h * (1.0 - c2), h * (1.0 - c1)]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn random_gray(rng: &mut ChaCha8Rng, max_side: usize) -> ImageBuffer {
    let h = rng.random_range(1..=max_side);
    let w = rng.random_range(1..=max_side);
    let data = (0..h * w).map(|_| rng.random::<u8>()).collect();
    ImageBuffer::from_bytes(h, w, 1, data).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, max_side: usize) -> ImageBuffer {
    let h = rng.random_range(1..=max_side);
    let w = rng.random_range(1..=max_side);
    let c = if rng.random::<bool>() { 1 } else { 3 };
    let data = (0..h * w * c).map(|_| rng.random::<u8>()).collect();
    ImageBuffer::from_bytes(h, w, c, data).unwrap()
}

/// Single-label records over `classes` classes, every class predicted and
/// actual at random.
pub fn random_records(rng: &mut ChaCha8Rng, classes: usize, n: usize) -> Vec<PredictionRecord> {
    (0..n as u64)
        .map(|sample_id| PredictionRecord {
            sample_id,
            predicted: rng.random_range(0..classes),
            actual: rng.random_range(0..classes),
        })
        .collect()
}

/// Records where each actual class occurs exactly `per_class` times.
pub fn balanced_records(rng: &mut ChaCha8Rng, classes: usize, per_class: usize) -> Vec<PredictionRecord> {
    let mut out = Vec::with_capacity(classes * per_class);
    for a in 0..classes {
        for _ in 0..per_class {
            out.push(PredictionRecord {
                sample_id: out.len() as u64,
                predicted: rng.random_range(0..classes),
                actual: a,
            });
        }
    }
    out
}

pub struct GradCase {
    pub model: MlpModel,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Random model and batch. Draws whose hidden pre-activations come within
/// `min_margin` of a ReLU kink are redrawn; returns the case and the number
/// of redraws.
pub fn grad_case(seed: u64, min_margin: f64) -> (GradCase, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut redraws = 0;
    loop {
        let inputs_dim = rng.random_range(1..=12);
        let classes = rng.random_range(2..=6);
        let shape = if rng.random_range(0..4) == 0 {
            ModelShape::linear(inputs_dim, classes)
        } else {
            ModelShape::one_hidden(inputs_dim, rng.random_range(1..=10), classes)
        };
        let mut model = MlpModel::new(&shape, rng.random()).unwrap();
        // non-zero biases so logits and hidden units are not centred at 0
        let mut params = model.params();
        for p in params.iter_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
        model.set_params(&params).unwrap();
        let batch = rng.random_range(1..=8);
        let inputs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..inputs_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        if model.kink_margin(&inputs).unwrap() >= min_margin {
            return (GradCase { model, inputs, labels }, redraws);
        }
        redraws += 1;
    }
}

pub struct EnsembleRun {
    pub ensemble: f64,
    pub individual: Vec<f64>,
}

impl EnsembleRun {
    pub fn mean_individual(&self) -> f64 {
        self.individual.iter().sum::<f64>() / self.individual.len() as f64
    }
}

/// Snapshot training on the 4-class synthetic set (200/50 per class),
/// T = 20, M = 5, default augmentation.
pub fn ensemble_run(seed: u64) -> EnsembleRun {
    ensemble_run_with(seed, default_schedule())
}

pub fn ensemble_run_with(seed: u64, schedule: ScheduleConfig) -> EnsembleRun {
    let ds = synth_dataset(&SynthConfig {
        classes: 4,
        train_per_class: 200,
        test_per_class: 50,
        image_size: 16,
        seed: derive_seed(seed, STREAM_DATA),
    })
    .unwrap();
    let shape = ModelShape::one_hidden(16 * 16, 64, 4);
    let mut model = MlpModel::new(&shape, derive_seed(seed, STREAM_INIT)).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        seed,
        procedure: TrainMode::Snapshot(SnapshotTrainConfig { schedule, momentum: 0.9 }),
    };
    let (set, _) = train_snapshot(&mut model, (&ds).into(), &AugmentConfig::default(), &cfg).unwrap();
    assert_eq!(set.len(), 5);
    EnsembleRun {
        ensemble: evaluate(&set, &ds.test).unwrap().accuracy(),
        individual: individual_accuracies(&set, &ds.test).unwrap(),
    }
}
