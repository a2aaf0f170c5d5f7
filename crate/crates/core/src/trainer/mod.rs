//! Training procedures for the dense classifier.
//!
//! Two procedures are provided. [`train_two_phase`] first fits only the output
//! layer with Adam while the rest of the network is frozen, then unfreezes
//! everything and fine-tunes with low-rate SGD + momentum.
//! [`train_snapshot`] runs SGD + momentum under the cyclic cosine schedule and
//! captures the parameters at the end of every cycle.
//!
//! Batches come from an [`AugmentStream`](crate::augment::AugmentStream) over
//! the training split; one epoch is `⌈N / batch_size⌉` batches.

pub mod data;
pub mod model;
pub mod snapshot;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_stream, AugmentConfig, AugmentStream};
use crate::ensemble::SnapshotSet;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, LabeledImage, ValueDomain};
use crate::optim::{lr_at, snapshot_epochs, Adam, AdamConfig, Optimizer, ScheduleConfig, SgdConfig, SgdMomentum};

pub use data::{load_image_dir, synth_dataset, write_image_dir, SynthConfig, SyntheticDataset};
pub use model::{
    argmax, compare_gradients, cross_entropy, grad_check, softmax, Activation, LayerShape, MlpModel, ModelShape,
};
pub use snapshot::Snapshot;

/// Seed of an independent sub-stream, so that data generation, weight
/// initialisation and augmentation never share random draws.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(stream))
}

pub const STREAM_DATA: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_AUGMENT: u64 = 3;

/// Flattened unit-domain model input for an image.
pub fn model_input(img: &ImageBuffer) -> Vec<f64> {
    match img.domain() {
        ValueDomain::Byte => img.normalize().expect("byte image").values(),
        ValueDomain::Unit => img.values(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPhaseConfig {
    pub phase1_epochs: u32,
    pub phase2_epochs: u32,
    pub adam: AdamConfig,
    pub sgd: SgdConfig,
}

impl Default for TwoPhaseConfig {
    fn default() -> Self {
        Self {
            phase1_epochs: 5,
            phase2_epochs: 17,
            adam: AdamConfig::default(),
            sgd: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotTrainConfig {
    pub schedule: ScheduleConfig,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TrainMode {
    TwoPhase(TwoPhaseConfig),
    Snapshot(SnapshotTrainConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    pub procedure: TrainMode,
}

fn default_batch_size() -> usize {
    16
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        match &self.procedure {
            TrainMode::TwoPhase(p) => {
                if p.phase1_epochs == 0 || p.phase2_epochs == 0 {
                    return Err(Error::invalid("both training phases need at least one epoch"));
                }
            }
            TrainMode::Snapshot(s) => {
                s.schedule.validate()?;
                if !(0.0..1.0).contains(&s.momentum) {
                    return Err(Error::invalid("momentum must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Output layer only, Adam.
    Head,
    /// All layers, SGD + momentum.
    FineTune,
    /// All layers, SGD + momentum under the cyclic schedule.
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: u32,
    pub phase: Phase,
    pub lr: f64,
    /// Mean batch loss over the epoch's augmented batches.
    pub train_loss: f64,
    /// Loss over the unaugmented test split after the epoch.
    pub test_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub epochs: Vec<EpochLoss>,
}

impl LossTrace {
    /// `epoch,train_loss,test_loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.test_loss));
        }
        out
    }
}

/// Train and test splits handed to a training procedure.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a [LabeledImage],
    pub test: &'a [LabeledImage],
}

impl<'a> From<&'a SyntheticDataset> for TrainData<'a> {
    fn from(ds: &'a SyntheticDataset) -> Self {
        Self {
            train: &ds.train,
            test: &ds.test,
        }
    }
}

struct Loop<'a> {
    stream: AugmentStream<'a>,
    batch_size: usize,
    batches_per_epoch: usize,
    test_inputs: Vec<Vec<f64>>,
    test_labels: Vec<usize>,
}

impl<'a> Loop<'a> {
    fn new(data: TrainData<'a>, augment: &AugmentConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.test.is_empty() {
            return Err(Error::invalid("test split is empty"));
        }
        let stream = augment_stream(data.train, augment, derive_seed(cfg.seed, STREAM_AUGMENT))?;
        Ok(Self {
            stream,
            batch_size: cfg.batch_size,
            batches_per_epoch: data.train.len().div_ceil(cfg.batch_size),
            test_inputs: data.test.iter().map(|x| model_input(&x.image)).collect(),
            test_labels: data.test.iter().map(|x| x.label).collect(),
        })
    }

    /// Runs one epoch, updating only trainable parameters; returns the mean batch loss.
    fn epoch(&mut self, model: &mut MlpModel, opt: &mut dyn Optimizer) -> Result<f64> {
        let trainable: Vec<usize> = model
            .trainable_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, &t)| t.then_some(i))
            .collect();
        let mut total = 0.0;
        for _ in 0..self.batches_per_epoch {
            let batch = self.stream.next_batch(self.batch_size);
            let inputs: Vec<Vec<f64>> = batch.iter().map(|x| model_input(&x.image)).collect();
            let labels: Vec<usize> = batch.iter().map(|x| x.label).collect();
            let (loss, grads) = model.backward(&inputs, &labels)?;
            total += loss;
            let mut params = model.params();
            let mut p: Vec<f64> = trainable.iter().map(|&i| params[i]).collect();
            let g: Vec<f64> = trainable.iter().map(|&i| grads[i]).collect();
            opt.step(&mut p, &g)?;
            for (&i, v) in trainable.iter().zip(p) {
                params[i] = v;
            }
            model.set_params(&params)?;
        }
        Ok(total / self.batches_per_epoch as f64)
    }

    fn test_loss(&self, model: &MlpModel) -> Result<f64> {
        model.loss(&self.test_inputs, &self.test_labels)
    }
}

fn trainable_count(model: &MlpModel) -> usize {
    model.trainable_mask().iter().filter(|&&t| t).count()
}

/// Head-only Adam phase followed by full-network SGD fine-tuning. On return
/// every layer is unfrozen.
pub fn train_two_phase(
    model: &mut MlpModel,
    data: TrainData<'_>,
    augment: &AugmentConfig,
    cfg: &TrainConfig,
) -> Result<LossTrace> {
    let TrainMode::TwoPhase(phases) = cfg.procedure else {
        return Err(Error::invalid("train_two_phase needs a two_phase config"));
    };
    let mut lp = Loop::new(data, augment, cfg)?;
    let mut trace = LossTrace::default();
    let mut epoch = 0;

    model.freeze_backbone();
    let mut adam = Adam::new(phases.adam, trainable_count(model))?;
    for _ in 0..phases.phase1_epochs {
        epoch += 1;
        let train_loss = lp.epoch(model, &mut adam)?;
        trace.epochs.push(EpochLoss {
            epoch,
            phase: Phase::Head,
            lr: adam.learning_rate(),
            train_loss,
            test_loss: lp.test_loss(model)?,
        });
    }

    model.unfreeze_all();
    let mut sgd = SgdMomentum::new(phases.sgd, trainable_count(model))?;
    for _ in 0..phases.phase2_epochs {
        epoch += 1;
        let train_loss = lp.epoch(model, &mut sgd)?;
        trace.epochs.push(EpochLoss {
            epoch,
            phase: Phase::FineTune,
            lr: sgd.learning_rate(),
            train_loss,
            test_loss: lp.test_loss(model)?,
        });
    }
    Ok(trace)
}

/// SGD + momentum with the epoch learning rate taken from the cyclic cosine
/// schedule; a snapshot is captured at each of
/// [`snapshot_epochs`](crate::optim::snapshot_epochs).
pub fn train_snapshot(
    model: &mut MlpModel,
    data: TrainData<'_>,
    augment: &AugmentConfig,
    cfg: &TrainConfig,
) -> Result<(SnapshotSet, LossTrace)> {
    let TrainMode::Snapshot(snap_cfg) = cfg.procedure else {
        return Err(Error::invalid("train_snapshot needs a snapshot config"));
    };
    let schedule = snap_cfg.schedule;
    let mut lp = Loop::new(data, augment, cfg)?;
    let capture = snapshot_epochs(&schedule);
    model.unfreeze_all();
    let mut sgd = SgdMomentum::new(
        SgdConfig {
            lr: schedule.alpha0,
            momentum: snap_cfg.momentum,
        },
        model.num_params(),
    )?;
    let mut trace = LossTrace::default();
    let mut snapshots = Vec::with_capacity(capture.len());
    for epoch in 1..=schedule.total_epochs {
        let lr = lr_at(&schedule, epoch)?;
        sgd.set_learning_rate(lr);
        let train_loss = lp.epoch(model, &mut sgd)?;
        trace.epochs.push(EpochLoss {
            epoch,
            phase: Phase::Snapshot,
            lr,
            train_loss,
            test_loss: lp.test_loss(model)?,
        });
        if capture.contains(&epoch) {
            snapshots.push(Snapshot {
                epoch,
                params: model.params(),
                train_loss,
            });
        }
    }
    Ok((SnapshotSet::new(model.shape(), snapshots)?, trace))
}

/// Default schedule for snapshot training runs: 20 epochs, 5 cycles,
/// restarting at 0.03.
pub fn default_schedule() -> ScheduleConfig {
    ScheduleConfig {
        alpha0: 0.03,
        total_epochs: 20,
        num_snapshots: 5,
    }
}
