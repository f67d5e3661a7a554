//! Saliency map sources: precomputed map files and a spectral-residual
//! estimator.

use std::path::PathBuf;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{RasterImage, SaliencyMap};

const BOX_RADIUS: usize = 1;
const BLUR_SIGMA: f64 = 2.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SaliencySource {
    /// Map files resolved from a template containing `{id}`.
    File { path_template: String },
    SpectralResidual,
}

/// Substitutes `{id}` (and any extra `(key, value)` pairs) into a template.
pub fn resolve_template(template: &str, id: &str, extra: &[(&str, &str)]) -> PathBuf {
    let mut out = template.replace("{id}", id);
    for (key, value) in extra {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    PathBuf::from(out)
}

pub fn get_saliency(img: &RasterImage, source: &SaliencySource, image_id: &str) -> Result<SaliencyMap> {
    match source {
        SaliencySource::File { path_template } => {
            let map = SaliencyMap::load(resolve_template(path_template, image_id, &[]))?;
            if map.dims() != img.dims() {
                return Err(Error::dims(img.dims(), map.dims()));
            }
            Ok(map)
        }
        SaliencySource::SpectralResidual => Ok(spectral_residual(img)),
    }
}

/// Row-major complex plane with in-place 2-D transforms.
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Plane {
    pub fn fft(&mut self, planner: &mut FftPlanner<f64>) {
        self.transform(planner, false);
    }

    /// Normalized inverse, so `ifft(fft(x)) == x`.
    pub fn ifft(&mut self, planner: &mut FftPlanner<f64>) {
        self.transform(planner, true);
        let scale = 1.0 / (self.width * self.height) as f64;
        for v in &mut self.data {
            *v *= scale;
        }
    }

    fn transform(&mut self, planner: &mut FftPlanner<f64>, inverse: bool) {
        let (w, h) = (self.width, self.height);
        let row_fft = if inverse {
            planner.plan_fft_inverse(w)
        } else {
            planner.plan_fft_forward(w)
        };
        row_fft.process(&mut self.data);

        let col_fft = if inverse {
            planner.plan_fft_inverse(h)
        } else {
            planner.plan_fft_forward(h)
        };
        let mut column = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = self.data[y * w + x];
            }
            col_fft.process(&mut column);
            for y in 0..h {
                self.data[y * w + x] = column[y];
            }
        }
    }
}

fn luma(img: &RasterImage) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

/// Circular box mean of radius [`BOX_RADIUS`].
fn box_filter_wrapped(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let r = BOX_RADIUS as isize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -r..=r {
                let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
                for dx in -r..=r {
                    let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                    s += values[yy * w + xx];
                }
            }
            out[y * w + x] = s / n;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamped borders.
fn gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| {
                    let xx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                    kv * values[y * w + xx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| {
                    let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                    kv * tmp[yy * w + x]
                })
                .sum();
        }
    }
    out
}

/// Linear stretch to [0, 255]; an all-equal input maps to zero.
pub fn normalize_to_u8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Spectral-residual saliency: the log-amplitude spectrum minus its local
/// 3×3 mean, recombined with the original phase and transformed back.
pub fn spectral_residual(img: &RasterImage) -> SaliencyMap {
    let (w, h) = img.dims();
    let gray = luma(img);
    let flat = gray.iter().all(|&v| v == gray[0]);
    if flat {
        return SaliencyMap::new(w, h, vec![0; w * h]).expect("dims come from a valid image");
    }

    let (pw, ph) = (w.next_power_of_two(), h.next_power_of_two());
    let mut plane = Plane {
        width: pw,
        height: ph,
        data: vec![Complex64::default(); pw * ph],
    };
    for y in 0..h {
        for x in 0..w {
            plane.data[y * pw + x] = Complex64::new(gray[y * w + x], 0.0);
        }
    }
    let mut planner = FftPlanner::new();
    plane.fft(&mut planner);

    let log_amp: Vec<f64> = plane
        .data
        .iter()
        .map(|c| (c.norm() + f64::EPSILON).ln())
        .collect();
    let smoothed = box_filter_wrapped(&log_amp, pw, ph);
    for ((c, &l), &s) in plane.data.iter_mut().zip(&log_amp).zip(&smoothed) {
        let phase = c.arg();
        *c = Complex64::from_polar((l - s).exp(), phase);
    }
    plane.ifft(&mut planner);

    let energy: Vec<f64> = plane.data.iter().map(|c| c.norm_sqr()).collect();
    let blurred = gaussian_blur(&energy, pw, ph, BLUR_SIGMA);
    let cropped: Vec<f64> = (0..h)
        .flat_map(|y| blurred[y * pw..y * pw + w].iter().copied())
        .collect();
    SaliencyMap::new(w, h, normalize_to_u8(&cropped)).expect("dims come from a valid image")
}

/// Pixels strictly above `threshold` become 255, the rest 0.
pub fn binarize_map(map: &SaliencyMap, threshold: u8) -> SaliencyMap {
    let data = map
        .data()
        .iter()
        .map(|&v| if v > threshold { 255 } else { 0 })
        .collect();
    SaliencyMap::new(map.width(), map.height(), data).expect("same dims as input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fft_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut planner = FftPlanner::new();
        for (w, h) in [(64, 64), (256, 256), (32, 8)] {
            let orig: Vec<Complex64> = (0..w * h)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut p = Plane {
                width: w,
                height: h,
                data: orig.clone(),
            };
            p.fft(&mut planner);
            p.ifft(&mut planner);
            for (a, b) in orig.iter().zip(&p.data) {
                assert!((a - b).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn fft_matches_direct_dft() {
        let (w, h) = (4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut p = Plane {
            width: w,
            height: h,
            data: x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        };
        p.fft(&mut FftPlanner::new());
        for v in 0..h {
            for u in 0..w {
                let mut s = Complex64::default();
                for y in 0..h {
                    for xx in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * xx) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        s += Complex64::from_polar(x[y * w + xx], ang);
                    }
                }
                assert!((s - p.data[v * w + u]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_image_gives_zero_map() {
        let img = RasterImage::filled(40, 30, [90, 90, 90]).unwrap();
        let map = spectral_residual(&img);
        assert!(map.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn bright_pixel_is_most_salient() {
        let mut img = RasterImage::filled(64, 64, [0, 0, 0]).unwrap();
        img.set_pixel(20, 37, [255, 255, 255]);
        let map = spectral_residual(&img);
        let (idx, _) = map
            .data()
            .iter()
            .enumerate()
            .max_by_key(|&(i, &v)| (v, std::cmp::Reverse(i)))
            .unwrap();
        let (x, y) = (idx % 64, idx / 64);
        assert!(x.abs_diff(20) <= 3 && y.abs_diff(37) <= 3, "argmax at ({x},{y})");
    }

    #[test]
    fn binarize() {
        let m = SaliencyMap::new(2, 2, vec![0, 1, 200, 255]).unwrap();
        assert!(binarize_map(&m, 255).data().iter().all(|&v| v == 0));
        assert_eq!(binarize_map(&m, 0).data(), &[0, 255, 255, 255]);
        let once = binarize_map(&m, 100);
        assert_eq!(binarize_map(&once, 100), once);
    }

    #[test]
    fn file_source_checks_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        SaliencyMap::constant(320, 240, 128)
            .unwrap()
            .save(dir.path().join("a.png"))
            .unwrap();
        let src = SaliencySource::File {
            path_template: dir.path().join("{id}.png").to_string_lossy().into_owned(),
        };
        let img = RasterImage::filled(300, 200, [0, 0, 0]).unwrap();
        assert!(matches!(
            get_saliency(&img, &src, "a"),
            Err(Error::DimensionMismatch { .. })
        ));
        let img = RasterImage::filled(320, 240, [0, 0, 0]).unwrap();
        let map = get_saliency(&img, &src, "a").unwrap();
        assert!(map.data().iter().all(|&v| v == 128));
        assert!(get_saliency(&img, &src, "missing").is_err());
    }
}
