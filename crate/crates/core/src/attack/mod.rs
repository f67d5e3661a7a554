//! FGSM and DeepFool against differentiable classifiers.
//!
//! Attacks work on inputs scaled to [0,1]; the image-level wrappers convert
//! from and back to 8-bit with round-half-up so stored adversarial images are
//! reproducible.

mod model;
mod synth;

pub use model::{argmax, cross_entropy, AffineClassifier, Classifier, TinyClassifier, CONV_FILTERS};
pub use synth::{
    accuracy, mean_loss, synthetic_shapes, to_training_set, train_shape_classifier, train_tiny,
    ShapeSample, TrainReport, DEFAULT_STEP, SHAPE_CLASSES,
};

use crate::error::{Error, Result};
use crate::image::RasterImage;

pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;
pub const DEFAULT_OVERSHOOT: f64 = 0.02;
pub const DEFAULT_MAX_ITERS: usize = 50;

/// Added to each DeepFool step length so a linearized step lands strictly
/// past the boundary.
const DEEPFOOL_STEP_PAD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttackConfig {
    Fgsm { epsilon: f64 },
    DeepFool { overshoot: f64, max_iters: usize },
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            AttackConfig::Fgsm { epsilon } => ("epsilon", epsilon),
            AttackConfig::DeepFool { overshoot, .. } => ("overshoot", overshoot),
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{name} must be finite and nonnegative, got {v}"
            )))
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AttackConfig::Fgsm { .. } => "FGSM",
            AttackConfig::DeepFool { .. } => "DeepFool",
        }
    }
}

/// `clamp(x + epsilon * sign(grad), 0, 1)` with the cross-entropy gradient
/// against `true_class`.
pub fn fgsm(model: &impl Classifier, x: &[f64], true_class: usize, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    let (_, grad) = model.loss_and_gradient(x, true_class)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(x.iter()
        .zip(&grad)
        .map(|(&v, &g)| {
            let step = if g > 0.0 {
                epsilon
            } else if g < 0.0 {
                -epsilon
            } else {
                0.0
            };
            (v + step).clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepFoolResult {
    pub adversarial: Vec<f64>,
    pub iterations: usize,
    /// L2 norm of `adversarial - x`.
    pub perturbation_norm: f64,
    pub original_class: usize,
    pub final_class: usize,
}

impl DeepFoolResult {
    pub fn flipped(&self) -> bool {
        self.original_class != self.final_class
    }
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterative minimal-perturbation attack: at each step the classifier is
/// linearized, the closest other class boundary is found, and the
/// accumulated step is applied as `x + (1 + overshoot) * r_total`, clamped
/// to [0,1]. Stops at the first iterate whose prediction differs from the
/// model's prediction on `x`, or after `max_iters`.
pub fn deepfool(
    model: &impl Classifier,
    x: &[f64],
    max_iters: usize,
    overshoot: f64,
) -> Result<DeepFoolResult> {
    if !(overshoot.is_finite() && overshoot >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "overshoot must be finite and nonnegative, got {overshoot}"
        )));
    }
    let classes: Vec<usize> = (0..model.class_count()).collect();
    let original_class = model.predict(x)?;
    let mut r_total = vec![0.0; x.len()];
    let mut current = x.to_vec();
    let mut current_class = original_class;
    let mut iterations = 0;

    while current_class == original_class && iterations < max_iters {
        let (logits, grads) = model.logit_gradients(&current, &classes)?;
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let base = &grads[original_class];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in classes.iter().copied().filter(|&k| k != original_class) {
            let w: Vec<f64> = grads[k].iter().zip(base).map(|(a, b)| a - b).collect();
            let norm = l2(w.iter().copied());
            if norm == 0.0 {
                continue;
            }
            let dist = (logits[k] - logits[original_class]).abs() / norm;
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, w));
            }
        }
        let Some((dist, w)) = best else {
            // flat in every direction: no boundary reachable by linearization
            break;
        };
        let norm = l2(w.iter().copied());
        let scale = (dist + DEEPFOOL_STEP_PAD) / norm;
        for (r, wi) in r_total.iter_mut().zip(&w) {
            *r += scale * wi;
        }
        for ((c, &x0), &r) in current.iter_mut().zip(x).zip(&r_total) {
            *c = (x0 + (1.0 + overshoot) * r).clamp(0.0, 1.0);
        }
        current_class = model.predict(&current)?;
        iterations += 1;
    }

    let perturbation_norm = l2(current.iter().zip(x).map(|(a, b)| a - b));
    Ok(DeepFoolResult {
        adversarial: current,
        iterations,
        perturbation_norm,
        original_class,
        final_class: current_class,
    })
}

fn check_image(model: &TinyClassifier, img: &RasterImage) -> Result<()> {
    let side = model.input_size();
    if img.dims() != (side, side) {
        return Err(Error::dims((side, side), img.dims()));
    }
    Ok(())
}

/// Attacks an 8-bit image and re-quantizes the result. FGSM uses `label`, or
/// the model's own prediction when none is given.
pub fn attack_image(
    model: &TinyClassifier,
    img: &RasterImage,
    cfg: &AttackConfig,
    label: Option<usize>,
) -> Result<RasterImage> {
    cfg.validate()?;
    check_image(model, img)?;
    let x = img.to_unit();
    let adv = match *cfg {
        AttackConfig::Fgsm { epsilon } => {
            let label = match label {
                Some(l) => l,
                None => model.predict(&x)?,
            };
            fgsm(model, &x, label, epsilon)?
        }
        AttackConfig::DeepFool {
            overshoot,
            max_iters,
        } => deepfool(model, &x, max_iters, overshoot)?.adversarial,
    };
    RasterImage::from_unit(img.width(), img.height(), &adv)
}

pub fn classify_image(model: &TinyClassifier, img: &RasterImage) -> Result<usize> {
    check_image(model, img)?;
    model.predict(&img.to_unit())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_affine() -> AffineClassifier {
        AffineClassifier {
            weights: vec![vec![0.0, 0.0], vec![1.0, -2.0]],
            bias: vec![0.0, 0.3],
        }
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let m = two_class_affine();
        let x = vec![0.2, 0.7];
        assert_eq!(fgsm(&m, &x, 0, 0.0).unwrap(), x);
        assert!(fgsm(&m, &x, 0, -0.1).is_err());
        assert!(fgsm(&m, &x, 0, f64::NAN).is_err());
    }

    #[test]
    fn fgsm_steps_exactly_epsilon() {
        let m = two_class_affine();
        let x = vec![0.5, 0.5];
        let adv = fgsm(&m, &x, 0, 0.1).unwrap();
        // d loss / d logit_1 > 0 for label 0, so x moves along sign(w_1)
        assert!((adv[0] - 0.6).abs() < 1e-15);
        assert!((adv[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn fgsm_clamps() {
        let m = two_class_affine();
        let adv = fgsm(&m, &[0.99, 0.01], 0, 0.5).unwrap();
        assert_eq!(adv, vec![1.0, 0.0]);
    }

    #[test]
    fn deepfool_linear_flip_without_overshoot() {
        // f1 - f0 = x0 - 2 x1 + 0.3; at (0.2, 0.4) the margin is -0.3
        let m = two_class_affine();
        let x = vec![0.2, 0.4];
        assert_eq!(m.predict(&x).unwrap(), 0);
        let res = deepfool(&m, &x, 50, 0.0).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.flipped());
        let expected = 0.3 / 5f64.sqrt() + 1e-4;
        assert!((res.perturbation_norm - expected).abs() < 1e-12);
    }

    #[test]
    fn deepfool_respects_max_iters() {
        let m = two_class_affine();
        let res = deepfool(&m, &[0.2, 0.4], 0, 0.02).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(!res.flipped());
        assert_eq!(res.perturbation_norm, 0.0);
    }

    #[test]
    fn attack_config_validation() {
        assert!(AttackConfig::Fgsm { epsilon: -1.0 }.validate().is_err());
        assert!(AttackConfig::DeepFool { overshoot: f64::INFINITY, max_iters: 3 }
            .validate()
            .is_err());
        assert_eq!(AttackConfig::Fgsm { epsilon: 0.1 }.label(), "FGSM");
    }

    #[test]
    fn image_attack_checks_size() {
        let m = TinyClassifier::random(8, 3, 0).unwrap();
        let img = RasterImage::filled(9, 8, [0, 0, 0]).unwrap();
        let cfg = AttackConfig::Fgsm { epsilon: 0.1 };
        assert!(attack_image(&m, &img, &cfg, None).is_err());
        let img = RasterImage::filled(8, 8, [100, 50, 0]).unwrap();
        let adv = attack_image(&m, &img, &cfg, Some(1)).unwrap();
        let max = img.data().iter().zip(adv.data()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        assert!(max <= 26);
    }
}
