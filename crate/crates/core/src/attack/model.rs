//! Small differentiable classifiers with analytic input gradients.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Anything the gradient attacks can differentiate through.
pub trait Classifier {
    fn input_len(&self) -> usize;

    fn class_count(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Logits at `x` together with the input gradient of each logit in
    /// `classes`.
    fn logit_gradients(&self, x: &[f64], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;

    /// Softmax cross-entropy loss against `label` and its input gradient.
    fn loss_and_gradient(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        check_class(label, self.class_count())?;
        let all: Vec<usize> = (0..self.class_count()).collect();
        let (logits, grads) = self.logit_gradients(x, &all)?;
        let (loss, dlogits) = cross_entropy(&logits, label);
        let mut g = vec![0.0; x.len()];
        for (grad_k, &d) in grads.iter().zip(&dlogits) {
            for (gi, &v) in g.iter_mut().zip(grad_k) {
                *gi += d * v;
            }
        }
        Ok((loss, g))
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Loss and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn check_class(class: usize, count: usize) -> Result<()> {
    if class < count {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "class {class} out of range for {count} classes"
        )))
    }
}

fn check_len(x: &[f64], expected: usize) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{expected} inputs"),
            actual: format!("{} inputs", x.len()),
        })
    }
}

/// `logits = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineClassifier {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Classifier for AffineClassifier {
    fn input_len(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn class_count(&self) -> usize {
        self.weights.len()
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.input_len())?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect())
    }

    fn logit_gradients(&self, x: &[f64], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let logits = self.logits(x)?;
        let grads = classes
            .iter()
            .map(|&k| {
                check_class(k, self.class_count())?;
                Ok(self.weights[k].clone())
            })
            .collect::<Result<_>>()?;
        Ok((logits, grads))
    }
}

pub const CONV_FILTERS: usize = 8;
const KERNEL: usize = 3;
const IN_CHANNELS: usize = 3;
const CONV_WEIGHTS: usize = CONV_FILTERS * IN_CHANNELS * KERNEL * KERNEL;

const MAGIC: &[u8; 4] = b"TNYC";
const FORMAT_VERSION: u32 = 1;

/// conv(3→8, 3×3, valid) → ReLU → 2×2 mean pool → fully connected.
///
/// Inputs are interleaved RGB rows in [0,1], the layout of
/// [`crate::image::RasterImage::to_unit`]. Parameters live in one flat
/// vector: conv weights `[out][in][ky][kx]`, conv bias, FC weights
/// `[class][feature]` with features ordered `(y, x, channel)`, FC bias.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyClassifier {
    input_size: usize,
    class_count: usize,
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
struct Activations {
    pre_relu: Vec<f64>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

impl TinyClassifier {
    pub fn zeros(input_size: usize, class_count: usize) -> Result<Self> {
        if input_size < 4 {
            return Err(Error::InvalidArgument(format!(
                "input size {input_size} too small"
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        let mut m = Self {
            input_size,
            class_count,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.param_count()];
        Ok(m)
    }

    /// Uniform fan-in scaled initialization, deterministic in `seed`.
    pub fn random(input_size: usize, class_count: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(input_size, class_count)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_bound = (6.0 / (IN_CHANNELS * KERNEL * KERNEL) as f64).sqrt();
        let fc_bound = (6.0 / m.feature_len() as f64).sqrt() * 0.5;
        let (fc_w, fc_end) = (m.fc_w_offset(), m.fc_b_offset());
        for (i, p) in m.params.iter_mut().enumerate() {
            *p = if i < CONV_WEIGHTS {
                rng.gen_range(-conv_bound..conv_bound)
            } else if (fc_w..fc_end).contains(&i) {
                rng.gen_range(-fc_bound..fc_bound)
            } else {
                0.0
            };
        }
        Ok(m)
    }

    pub fn from_params(input_size: usize, class_count: usize, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(input_size, class_count)?;
        if params.len() != m.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                m.param_count(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn conv_side(&self) -> usize {
        self.input_size - KERNEL + 1
    }

    pub fn pool_side(&self) -> usize {
        self.conv_side() / 2
    }

    pub fn feature_len(&self) -> usize {
        self.pool_side() * self.pool_side() * CONV_FILTERS
    }

    pub fn param_count(&self) -> usize {
        CONV_WEIGHTS + CONV_FILTERS + self.class_count * self.feature_len() + self.class_count
    }

    fn fc_w_offset(&self) -> usize {
        CONV_WEIGHTS + CONV_FILTERS
    }

    fn fc_b_offset(&self) -> usize {
        self.fc_w_offset() + self.class_count * self.feature_len()
    }

    fn conv_w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.params[((o * IN_CHANNELS + i) * KERNEL + ky) * KERNEL + kx]
    }

    fn forward_full(&self, x: &[f64]) -> Result<Activations> {
        check_len(x, self.input_len())?;
        let s = self.input_size;
        let cs = self.conv_side();
        let ps = self.pool_side();
        let mut pre_relu = vec![0.0; cs * cs * CONV_FILTERS];
        for y in 0..cs {
            for xx in 0..cs {
                for o in 0..CONV_FILTERS {
                    let mut acc = self.params[CONV_WEIGHTS + o];
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let base = ((y + ky) * s + xx + kx) * IN_CHANNELS;
                            for i in 0..IN_CHANNELS {
                                acc += self.conv_w(o, i, ky, kx) * x[base + i];
                            }
                        }
                    }
                    pre_relu[(y * cs + xx) * CONV_FILTERS + o] = acc;
                }
            }
        }
        let mut features = vec![0.0; self.feature_len()];
        for py in 0..ps {
            for px in 0..ps {
                for o in 0..CONV_FILTERS {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += pre_relu[((2 * py + dy) * cs + 2 * px + dx) * CONV_FILTERS + o]
                                .max(0.0);
                        }
                    }
                    features[(py * ps + px) * CONV_FILTERS + o] = acc * 0.25;
                }
            }
        }
        let f = self.feature_len();
        let fc_w = &self.params[self.fc_w_offset()..self.fc_b_offset()];
        let fc_b = &self.params[self.fc_b_offset()..];
        let logits = (0..self.class_count)
            .map(|k| {
                fc_w[k * f..(k + 1) * f]
                    .iter()
                    .zip(&features)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + fc_b[k]
            })
            .collect();
        Ok(Activations {
            pre_relu,
            features,
            logits,
        })
    }

    /// Backpropagates `dlogits`; returns the input gradient and, when
    /// `param_grad` is given, accumulates parameter gradients into it.
    fn backward(
        &self,
        x: &[f64],
        acts: &Activations,
        dlogits: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let s = self.input_size;
        let cs = self.conv_side();
        let ps = self.pool_side();
        let f = self.feature_len();
        let fc_w = &self.params[self.fc_w_offset()..self.fc_b_offset()];

        let mut dfeat = vec![0.0; f];
        for (k, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, w) in dfeat.iter_mut().zip(&fc_w[k * f..(k + 1) * f]) {
                *d += g * w;
            }
        }
        if let Some(pg) = param_grad.as_deref_mut() {
            let (w_off, b_off) = (self.fc_w_offset(), self.fc_b_offset());
            for (k, &g) in dlogits.iter().enumerate() {
                for (d, v) in pg[w_off + k * f..w_off + (k + 1) * f]
                    .iter_mut()
                    .zip(&acts.features)
                {
                    *d += g * v;
                }
                pg[b_off + k] += g;
            }
        }

        // pool + ReLU backward
        let mut dpre = vec![0.0; cs * cs * CONV_FILTERS];
        for py in 0..ps {
            for px in 0..ps {
                for o in 0..CONV_FILTERS {
                    let g = dfeat[(py * ps + px) * CONV_FILTERS + o] * 0.25;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = ((2 * py + dy) * cs + 2 * px + dx) * CONV_FILTERS + o;
                            if acts.pre_relu[idx] > 0.0 {
                                dpre[idx] = g;
                            }
                        }
                    }
                }
            }
        }

        let mut dx_in = vec![0.0; s * s * IN_CHANNELS];
        for y in 0..cs {
            for xx in 0..cs {
                for o in 0..CONV_FILTERS {
                    let g = dpre[(y * cs + xx) * CONV_FILTERS + o];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let base = ((y + ky) * s + xx + kx) * IN_CHANNELS;
                            for i in 0..IN_CHANNELS {
                                let widx = ((o * IN_CHANNELS + i) * KERNEL + ky) * KERNEL + kx;
                                dx_in[base + i] += g * self.params[widx];
                                if let Some(pg) = param_grad.as_deref_mut() {
                                    pg[widx] += g * x[base + i];
                                }
                            }
                        }
                    }
                    if let Some(pg) = param_grad.as_deref_mut() {
                        pg[CONV_WEIGHTS + o] += g;
                    }
                }
            }
        }
        dx_in
    }

    /// Loss, logits and parameter gradient for one labeled sample.
    pub fn param_gradient(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        check_class(label, self.class_count)?;
        let acts = self.forward_full(x)?;
        let (loss, dlogits) = cross_entropy(&acts.logits, label);
        let mut grad = vec![0.0; self.params.len()];
        self.backward(x, &acts, &dlogits, Some(&mut grad));
        Ok((loss, acts.logits, grad))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(16 + self.params.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_size as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::ModelFormat("missing header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        if word(4) != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", word(4))));
        }
        let (class_count, input_size) = (word(8) as usize, word(12) as usize);
        let body = &bytes[16..];
        if !body.len().is_multiple_of(8) {
            return Err(Error::ModelFormat("truncated parameters".into()));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_params(input_size, class_count, params)
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

impl Classifier for TinyClassifier {
    fn input_len(&self) -> usize {
        self.input_size * self.input_size * IN_CHANNELS
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_full(x)?.logits)
    }

    fn logit_gradients(&self, x: &[f64], classes: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let acts = self.forward_full(x)?;
        let mut grads = Vec::with_capacity(classes.len());
        for &k in classes {
            check_class(k, self.class_count)?;
            let mut onehot = vec![0.0; self.class_count];
            onehot[k] = 1.0;
            grads.push(self.backward(x, &acts, &onehot, None));
        }
        Ok((acts.logits, grads))
    }

    fn loss_and_gradient(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        check_class(label, self.class_count)?;
        let acts = self.forward_full(x)?;
        let (loss, dlogits) = cross_entropy(&acts.logits, label);
        Ok((loss, self.backward(x, &acts, &dlogits, None)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_zero_logits() {
        let m = TinyClassifier::zeros(8, 3).unwrap();
        let x = input(m.input_len(), 1);
        assert_eq!(m.logits(&x).unwrap(), vec![0.0; 3]);
        let (_, g) = m.loss_and_gradient(&x, 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = TinyClassifier::random(8, 3, 0).unwrap();
        assert!(matches!(
            m.logits(&[0.0; 5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.loss_and_gradient(&input(m.input_len(), 0), 3).is_err());
        assert!(TinyClassifier::zeros(8, 1).is_err());
    }

    #[test]
    fn deterministic_init() {
        assert_eq!(
            TinyClassifier::random(10, 3, 5).unwrap(),
            TinyClassifier::random(10, 3, 5).unwrap()
        );
        assert_ne!(
            TinyClassifier::random(10, 3, 5).unwrap(),
            TinyClassifier::random(10, 3, 6).unwrap()
        );
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let m = TinyClassifier::random(8, 3, 2).unwrap();
        let x = input(m.input_len(), 3);
        let (_, _, g) = m.param_gradient(&x, 1).unwrap();
        let h = 1e-5;
        for idx in (0..m.param_count()).step_by(7) {
            let mut plus = m.clone();
            plus.params[idx] += h;
            let mut minus = m.clone();
            minus.params[idx] -= h;
            let lp = plus.loss_and_gradient(&x, 1).unwrap().0;
            let lm = minus.loss_and_gradient(&x, 1).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (numeric - g[idx]).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "param {idx}: {numeric} vs {}",
                g[idx]
            );
        }
    }

    #[test]
    fn loss_gradient_agrees_with_trait_default() {
        let m = TinyClassifier::random(8, 4, 9).unwrap();
        let x = input(m.input_len(), 4);
        let (l1, g1) = m.loss_and_gradient(&x, 2).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let (logits, grads) = m.logit_gradients(&x, &all).unwrap();
        let (l2, d) = cross_entropy(&logits, 2);
        assert!((l1 - l2).abs() < 1e-12);
        for i in 0..x.len() {
            let v: f64 = (0..4).map(|k| d[k] * grads[k][i]).sum();
            assert!((v - g1[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn file_roundtrip_and_header() {
        let m = TinyClassifier::random(12, 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        m.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"TNYC");
        assert_eq!(bytes.len(), 16 + 8 * m.param_count());
        assert_eq!(TinyClassifier::load(&path).unwrap(), m);
        assert!(TinyClassifier::from_bytes(&bytes[..20]).is_err());
        assert!(TinyClassifier::from_bytes(b"nope").is_err());
    }
}
