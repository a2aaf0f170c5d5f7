//! Procedural stand-in dataset and directory loading.
//!
//! Synthetic classes combine two factors that every augmentation in
//! [`crate::augment`] leaves intact: overall brightness and texture contrast.
//! Each image is a randomly oriented, randomly phased sinusoidal grating plus
//! pixel noise. Brightness is linearly decodable; contrast is not, because
//! the grating's sign pattern is random per image.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, LabeledImage};
use crate::pnm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            train_per_class: 200,
            test_per_class: 50,
            image_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub labels: Vec<String>,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl SyntheticDataset {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }
}

const BRIGHTNESS: [f64; 2] = [0.36, 0.64];
const MIN_AMPLITUDE: f64 = 0.04;
const MAX_AMPLITUDE: f64 = 0.3;
const NOISE_STD: f64 = 0.05;

fn class_factors(class: usize, classes: usize) -> (f64, f64) {
    let levels = classes.div_ceil(2);
    let level = class / 2;
    let amplitude = if levels == 1 {
        MAX_AMPLITUDE
    } else {
        MIN_AMPLITUDE + (MAX_AMPLITUDE - MIN_AMPLITUDE) * level as f64 / (levels - 1) as f64
    };
    (BRIGHTNESS[class % 2], amplitude)
}

fn render(class: usize, classes: usize, size: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let (brightness, amplitude) = class_factors(class, classes);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let theta = rng.random::<f64>() * std::f64::consts::PI;
    let cycles = 1.5 + 1.5 * rng.random::<f64>();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let offset = brightness + 0.04 * (rng.random::<f64>() - 0.5);
    let (s, c) = theta.sin_cos();
    let k = std::f64::consts::TAU * cycles / size as f64;
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for col in 0..size {
            let u = c * col as f64 + s * r as f64;
            let v = offset + amplitude * (k * u + phase).sin() + noise.sample(rng);
            data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    ImageBuffer::from_bytes(size, size, 1, data).expect("consistent dims")
}

/// Balanced, seeded dataset with disjoint train and test splits, each
/// shuffled so classes are interleaved in stream order.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    if cfg.classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if cfg.train_per_class + cfg.test_per_class < 2 || cfg.train_per_class == 0 {
        return Err(Error::invalid("need at least two images per class and a non-empty train split"));
    }
    if cfg.image_size < 2 {
        return Err(Error::invalid("image_size must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split = |per_class: usize| {
        let mut items: Vec<LabeledImage> = (0..per_class)
            .flat_map(|_| 0..cfg.classes)
            .map(|label| LabeledImage {
                image: render(label, cfg.classes, cfg.image_size, &mut rng),
                label,
            })
            .collect();
        items.shuffle(&mut rng);
        items
    };
    let train = split(cfg.train_per_class);
    let test = split(cfg.test_per_class);
    Ok(SyntheticDataset {
        labels: (0..cfg.classes).map(|k| format!("class{k}")).collect(),
        train,
        test,
    })
}

/// Loads a directory whose subdirectories are classes (sorted by name) and
/// contain PGM/PPM images (sorted by file name).
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<(Vec<String>, Vec<LabeledImage>)> {
    let dir = dir.as_ref();
    let mut class_dirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!("{} has no class subdirectories", dir.display())));
    }
    let mut labels = Vec::with_capacity(class_dirs.len());
    let mut items = Vec::new();
    for (label, class_dir) in class_dirs.iter().enumerate() {
        labels.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        let mut files: Vec<_> = fs::read_dir(class_dir)
            .map_err(|e| Error::io(class_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("pgm" | "ppm")))
            .collect();
        files.sort();
        for f in files {
            items.push(LabeledImage {
                image: pnm::read(&f)?,
                label,
            });
        }
    }
    if items.is_empty() {
        return Err(Error::invalid(format!("{} contains no images", dir.display())));
    }
    Ok((labels, items))
}

/// Writes `items` as `<dir>/<label name>/<index>.<pgm|ppm>`.
pub fn write_image_dir(dir: impl AsRef<Path>, labels: &[String], items: &[LabeledImage]) -> Result<()> {
    let dir = dir.as_ref();
    for name in labels {
        let sub = dir.join(name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    for (i, item) in items.iter().enumerate() {
        let name = labels
            .get(item.label)
            .ok_or_else(|| Error::invalid(format!("label {} has no name", item.label)))?;
        let path = dir.join(name).join(format!("{i:05}.{}", pnm::extension(&item.image)));
        pnm::write(path, &item.image)?;
    }
    Ok(())
}
