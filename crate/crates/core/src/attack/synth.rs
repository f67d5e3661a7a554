//! Synthetic colored-shape dataset and a deterministic SGD trainer for
//! [`TinyClassifier`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{argmax, Classifier, TinyClassifier};
use crate::error::{Error, Result};
use crate::image::{RasterImage, SaliencyMap};

pub const SHAPE_CLASSES: [&str; 3] = ["square", "circle", "triangle"];
pub const DEFAULT_STEP: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct ShapeSample {
    pub image: RasterImage,
    pub label: usize,
    /// 255 inside the shape, 0 elsewhere.
    pub mask: SaliencyMap,
}

fn inside(class: usize, x: f64, y: f64, cx: f64, cy: f64, r: f64) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    match class {
        0 => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
        1 => dx * dx + dy * dy <= r * r,
        _ => {
            // upward isosceles triangle with apex at (cx, cy - r)
            let t = (dy + r) / (2.0 * r);
            (0.0..=1.0).contains(&t) && dx.abs() <= t * r
        }
    }
}

/// `n` shapes on a `side`×`side` canvas; labels cycle through
/// [`SHAPE_CLASSES`]. Backgrounds are dark smooth gradients with mild noise,
/// shapes are bright random colors.
pub fn synthetic_shapes(n: usize, side: usize, seed: u64) -> Vec<ShapeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % SHAPE_CLASSES.len();
            let s = side as f64;
            let r = rng.gen_range(0.22..0.32) * s;
            let jitter = s / 10.0;
            let cx = s / 2.0 + rng.gen_range(-jitter..jitter);
            let cy = s / 2.0 + rng.gen_range(-jitter..jitter);
            let fg: [f64; 3] = std::array::from_fn(|_| rng.gen_range(150.0..255.0));
            let bg0: [f64; 3] = std::array::from_fn(|_| rng.gen_range(10.0..90.0));
            let bg1: [f64; 3] = std::array::from_fn(|_| rng.gen_range(10.0..90.0));
            let mut data = Vec::with_capacity(side * side * 3);
            let mut mask = Vec::with_capacity(side * side);
            for y in 0..side {
                for x in 0..side {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let hit = inside(label, px, py, cx, cy, r);
                    let t = (px + py) / (2.0 * s);
                    for c in 0..3 {
                        let base = if hit { fg[c] } else { bg0[c] * (1.0 - t) + bg1[c] * t };
                        let v = base + rng.gen_range(-6.0..6.0);
                        data.push(v.round().clamp(0.0, 255.0) as u8);
                    }
                    mask.push(if hit { 255 } else { 0 });
                }
            }
            ShapeSample {
                image: RasterImage::new(side, side, data).expect("side >= 1"),
                label,
                mask: SaliencyMap::new(side, side, mask).expect("side >= 1"),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss over the whole dataset after each epoch, preceded by
    /// the loss before training.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

pub fn mean_loss(model: &impl Classifier, data: &[(Vec<f64>, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in data {
        total += model.loss_and_gradient(x, *y)?.0;
    }
    Ok(total / data.len() as f64)
}

pub fn accuracy(model: &impl Classifier, data: &[(Vec<f64>, usize)]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, y) in data {
        if argmax(&model.logits(x)?) == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Plain per-sample SGD with a fixed step; the visiting order is reshuffled
/// every epoch from `seed`.
pub fn train_tiny(
    model: &TinyClassifier,
    dataset: &[(Vec<f64>, usize)],
    epochs: usize,
    step: f64,
    seed: u64,
) -> Result<(TinyClassifier, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::DegenerateDataset("no samples".into()));
    }
    let mut seen = vec![false; model.class_count()];
    for (x, y) in dataset {
        if *y >= model.class_count() {
            return Err(Error::DegenerateDataset(format!("label {y} out of range")));
        }
        if x.len() != model.input_len() {
            return Err(Error::DegenerateDataset(format!(
                "sample of length {} for model input {}",
                x.len(),
                model.input_len()
            )));
        }
        seen[*y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateDataset(
            "fewer than two classes present".into(),
        ));
    }

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = vec![mean_loss(&model, dataset)?];
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &dataset[i];
            let (_, _, grad) = model.param_gradient(x, *y)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient);
            }
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= step * g;
            }
        }
        epoch_losses.push(mean_loss(&model, dataset)?);
    }
    let train_accuracy = accuracy(&model, dataset)?;
    Ok((
        model,
        TrainReport {
            epoch_losses,
            train_accuracy,
        },
    ))
}

/// Converts samples to the classifier's input layout.
pub fn to_training_set(samples: &[ShapeSample]) -> Vec<(Vec<f64>, usize)> {
    samples.iter().map(|s| (s.image.to_unit(), s.label)).collect()
}

/// Trains the default shape classifier: `samples` shapes at `side`×`side`.
pub fn train_shape_classifier(
    side: usize,
    samples: usize,
    epochs: usize,
    seed: u64,
) -> Result<(TinyClassifier, TrainReport)> {
    let data = to_training_set(&synthetic_shapes(samples, side, seed));
    let init = TinyClassifier::random(side, SHAPE_CLASSES.len(), seed)?;
    train_tiny(&init, &data, epochs, DEFAULT_STEP, seed)
}
