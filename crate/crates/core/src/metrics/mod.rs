//! Saliency evaluation measures: EMD, CC, NSS, KLD and SIM.
//!
//! Conventions follow the MIT saliency benchmark: KLD is taken from the
//! ground truth toward the prediction with an epsilon guard on both the
//! denominator and the ratio, NSS standardizes with the sample (N-1)
//! deviation, SIM and KLD work on sum-normalized maps.

mod transport;

pub use transport::{solve_transport, TransportPlan};

use crate::error::{Error, Result};
use crate::image::{FixationMap, SaliencyMap};

/// Guard used by KLD, equal to double-precision machine epsilon.
pub const KLD_EPS: f64 = 2.220446049250313e-16;

/// Default longest side of the grid EMD is solved on.
pub const DEFAULT_EMD_DOWNSAMPLE: usize = 32;

/// Nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl ProbMap {
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "probability map values must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(Self {
            width,
            height,
            weights: values.iter().map(|v| v / sum).collect(),
        })
    }

    pub fn from_saliency(map: &SaliencyMap) -> Result<Self> {
        Self::from_values(map.width(), map.height(), &map.to_f64())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Block-mean downsampling so the longer side is at most `max_side`,
    /// followed by renormalization. Partial edge blocks average the pixels
    /// they actually cover.
    pub fn downsample(&self, max_side: usize) -> ProbMap {
        let max_side = max_side.max(1);
        let block = self.width.max(self.height).div_ceil(max_side);
        if block <= 1 {
            return self.clone();
        }
        let (ow, oh) = (self.width.div_ceil(block), self.height.div_ceil(block));
        let mut cells = vec![0.0; ow * oh];
        let mut counts = vec![0usize; ow * oh];
        for y in 0..self.height {
            for x in 0..self.width {
                let c = (y / block) * ow + x / block;
                cells[c] += self.weights[y * self.width + x];
                counts[c] += 1;
            }
        }
        for (v, n) in cells.iter_mut().zip(&counts) {
            *v /= *n as f64;
        }
        ProbMap::from_values(ow, oh, &cells).expect("downsampled mass stays positive")
    }
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::dims(a, b))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation of two equally long real vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("CC"));
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

pub fn cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    pearson(&pred.to_f64(), &gt.to_f64())
}

/// Histogram intersection.
pub fn sim(pred: &ProbMap, gt: &ProbMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(pred
        .weights
        .iter()
        .zip(&gt.weights)
        .map(|(&p, &g)| p.min(g))
        .sum())
}

pub fn kld(pred: &ProbMap, gt: &ProbMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(pred
        .weights
        .iter()
        .zip(&gt.weights)
        .map(|(&p, &g)| g * (g / (p + KLD_EPS) + KLD_EPS).ln())
        .sum())
}

/// NSS on a real-valued row-major map of width `width`.
pub fn nss_values(values: &[f64], width: usize, fixations: &[(usize, usize)]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::EmptyFixations);
    }
    if values.len() < 2 {
        return Err(Error::ZeroVariance("NSS"));
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    if var == 0.0 {
        return Err(Error::ZeroVariance("NSS"));
    }
    let sd = var.sqrt();
    let total: f64 = fixations
        .iter()
        .map(|&(r, c)| (values[r * width + c] - m) / sd)
        .sum();
    Ok(total / fixations.len() as f64)
}

pub fn nss(pred: &SaliencyMap, fix: &FixationMap) -> Result<f64> {
    check_dims(pred.dims(), fix.dims())?;
    nss_values(&pred.to_f64(), pred.width(), fix.fixations())
}

/// Optimal transport distance between two maps on the same grid, in cell
/// units, with Euclidean ground distance between cell centers. Mass common
/// to both maps stays in place, which is exact for a metric ground distance.
pub fn emd_same_grid(pred: &ProbMap, gt: &ProbMap) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    let w = pred.width;
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (i, (&p, &g)) in pred.weights.iter().zip(&gt.weights).enumerate() {
        if p > g {
            sources.push((i, p - g));
        } else if g > p {
            sinks.push((i, g - p));
        }
    }
    let coord = |i: usize| ((i % w) as f64, (i / w) as f64);
    let mut costs = Vec::with_capacity(sources.len() * sinks.len());
    for &(i, _) in &sources {
        let (xi, yi) = coord(i);
        for &(j, _) in &sinks {
            let (xj, yj) = coord(j);
            costs.push((xi - xj).hypot(yi - yj));
        }
    }
    let supply: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let demand: Vec<f64> = sinks.iter().map(|s| s.1).collect();
    Ok(solve_transport(&supply, &demand, &costs).cost)
}

/// EMD after downsampling both maps so the longer side is at most
/// `downsample_to` cells.
pub fn emd(pred: &ProbMap, gt: &ProbMap, downsample_to: usize) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    emd_same_grid(&pred.downsample(downsample_to), &gt.downsample(downsample_to))
}

/// One row of an evaluation table, columns in EMD, CC, NSS, KLD, SIM order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub emd: f64,
    pub cc: f64,
    /// Absent when no fixations were supplied.
    pub nss: Option<f64>,
    pub kld: f64,
    pub sim: f64,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 5] = ["EMD", "CC", "NSS", "KLD", "SIM"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [Some(self.emd), Some(self.cc), self.nss, Some(self.kld), Some(self.sim)]
    }
}

pub fn evaluate(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    fix: Option<&FixationMap>,
) -> Result<MetricReport> {
    evaluate_with(pred, gt, fix, DEFAULT_EMD_DOWNSAMPLE)
}

pub fn evaluate_with(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    fix: Option<&FixationMap>,
    emd_downsample: usize,
) -> Result<MetricReport> {
    check_dims(pred.dims(), gt.dims())?;
    let p = ProbMap::from_saliency(pred)?;
    let g = ProbMap::from_saliency(gt)?;
    let nss = fix.map(|f| nss(pred, f)).transpose()?;
    Ok(MetricReport {
        emd: emd(&p, &g, emd_downsample)?,
        cc: cc(pred, gt)?,
        nss,
        kld: kld(&p, &g)?,
        sim: sim(&p, &g)?,
    })
}
