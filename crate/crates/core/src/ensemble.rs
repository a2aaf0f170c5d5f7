//! Snapshot ensembles: average the softmax outputs of every captured model.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::LabeledImage;
use crate::metrics::{confusion_from_predictions, ConfusionMatrix, PredictionRecord};
use crate::trainer::model::{argmax, MlpModel, ModelShape};
use crate::trainer::snapshot::{self, Snapshot};
use crate::trainer::model_input;

/// Non-empty list of snapshots sharing one model shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    shape: ModelShape,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(shape: ModelShape, snapshots: Vec<Snapshot>) -> Result<Self> {
        shape.validate()?;
        if snapshots.is_empty() {
            return Err(Error::invalid("snapshot set is empty"));
        }
        let n = shape.num_params();
        if let Some(bad) = snapshots.iter().find(|s| s.params.len() != n) {
            return Err(Error::invalid(format!(
                "snapshot from epoch {} has {} parameters, shape needs {n}",
                bad.epoch,
                bad.params.len()
            )));
        }
        Ok(Self { shape, snapshots })
    }

    pub fn single(model: &MlpModel, epoch: u32, train_loss: f64) -> Self {
        Self {
            shape: model.shape(),
            snapshots: vec![Snapshot {
                epoch,
                params: model.params(),
                train_loss,
            }],
        }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn models(&self) -> Result<Vec<MlpModel>> {
        self.snapshots
            .iter()
            .map(|s| MlpModel::from_params(&self.shape, &s.params))
            .collect()
    }

    /// Reads every `*.bin` snapshot in `dir`, in file-name order.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        let mut shape: Option<ModelShape> = None;
        let mut snapshots = Vec::with_capacity(files.len());
        for f in &files {
            let file = snapshot::read(f)?;
            match &shape {
                None => shape = Some(file.shape),
                Some(s) if *s != file.shape => {
                    return Err(Error::invalid(format!(
                        "{} has a different model shape from the other snapshots",
                        f.display()
                    )))
                }
                Some(_) => {}
            }
            snapshots.push(file.snapshot);
        }
        let shape = shape.ok_or_else(|| Error::invalid(format!("no snapshot files in {}", dir.display())))?;
        Self::new(shape, snapshots)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Mean of the snapshots' softmax outputs, then argmax (ties to the lowest
/// class). Per-snapshot passes run in parallel; sums are taken in snapshot
/// order.
pub fn ensemble_predict<X>(set: &SnapshotSet, inputs: &[X]) -> Result<Vec<EnsemblePrediction>>
where
    X: AsRef<[f64]> + Sync,
{
    let models = set.models()?;
    let per_model: Vec<Vec<Vec<f64>>> = models
        .par_iter()
        .map(|m| m.forward(inputs))
        .collect::<Result<_>>()?;
    Ok(average_probabilities(&per_model)
        .into_iter()
        .map(|probs| EnsemblePrediction {
            class: argmax(&probs),
            probs,
        })
        .collect())
}

/// Averages `per_model[m][sample][class]` over `m`.
pub fn average_probabilities(per_model: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let Some(first) = per_model.first() else {
        return Vec::new();
    };
    let count = per_model.len() as f64;
    (0..first.len())
        .map(|s| {
            let mut acc = per_model[0][s].clone();
            for m in &per_model[1..] {
                for (a, v) in acc.iter_mut().zip(&m[s]) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= count);
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub records: Vec<PredictionRecord>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        crate::metrics::accuracy(&self.confusion).unwrap_or(0.0)
    }
}

/// Ensemble predictions over `test`, as a confusion matrix (rows =
/// predicted) plus one record per sample, in input order.
pub fn evaluate(set: &SnapshotSet, test: &[LabeledImage]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let classes = set.shape().num_classes();
    let inputs: Vec<Vec<f64>> = test.iter().map(|x| model_input(&x.image)).collect();
    let preds = ensemble_predict(set, &inputs)?;
    let records: Vec<PredictionRecord> = preds
        .iter()
        .zip(test)
        .enumerate()
        .map(|(i, (p, x))| PredictionRecord {
            sample_id: i as u64,
            predicted: p.class,
            actual: x.label,
        })
        .collect();
    let confusion = confusion_from_predictions(&records, classes)?;
    Ok(Evaluation { confusion, records })
}

/// Accuracy of each snapshot on its own, in snapshot order.
pub fn individual_accuracies(set: &SnapshotSet, test: &[LabeledImage]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    for (shape, s) in std::iter::repeat(set.shape()).zip(set.snapshots()) {
        let single = SnapshotSet::new(shape.clone(), vec![s.clone()])?;
        out.push(evaluate(&single, test)?.accuracy());
    }
    Ok(out)
}
