//! Input-cleaning defenses: bit-depth reduction, global JPEG, randomized
//! per-window compression (SHIELD) and saliency-indexed compression (SAD).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{compress_image_map, compress_image_uniform, QualityGrid, QualityList};
use crate::error::{Error, Result};
use crate::image::{window_average_saliency, window_dims, RasterImage, SaliencyMap};

/// SHIELD's quality set.
pub const SHIELD_DEFAULT_QUALITIES: [u8; 4] = [20, 40, 60, 80];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseMethod {
    Bitdepth,
    Jpeg,
    Shield,
    Sad,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DefenseConfig {
    BitDepth { bits: u8 },
    Jpeg { quality: u8 },
    Shield { qualities: QualityList, seed: u64 },
    Sad { qualities: QualityList },
}

impl DefenseConfig {
    pub fn method(&self) -> DefenseMethod {
        match self {
            DefenseConfig::BitDepth { .. } => DefenseMethod::Bitdepth,
            DefenseConfig::Jpeg { .. } => DefenseMethod::Jpeg,
            DefenseConfig::Shield { .. } => DefenseMethod::Shield,
            DefenseConfig::Sad { .. } => DefenseMethod::Sad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DefenseConfig::BitDepth { bits } if !(1..=8).contains(bits) => Err(
                Error::InvalidArgument(format!("bit depth {bits} outside 1..=8")),
            ),
            DefenseConfig::Jpeg { quality } if !(1..=100).contains(quality) => Err(
                Error::InvalidArgument(format!("quality {quality} outside 1..=100")),
            ),
            _ => Ok(()),
        }
    }

    /// Row label in result tables, e.g. `SAD (50 70 90)`.
    pub fn label(&self) -> String {
        match self {
            DefenseConfig::BitDepth { bits: 3 } => "Bit-depth Reduction".to_string(),
            DefenseConfig::BitDepth { bits } => format!("Bit-depth Reduction ({bits}-bit)"),
            DefenseConfig::Jpeg { quality } => format!("JPEG{quality} Compression"),
            DefenseConfig::Shield { .. } => "SHIELD".to_string(),
            DefenseConfig::Sad { qualities } => format!("SAD ({qualities})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CleanResult {
    pub image: RasterImage,
    /// Qualities actually applied per window; `None` for bit-depth and JPEG.
    pub quality_grid: Option<QualityGrid>,
    pub saliency_used: Option<SaliencyMap>,
}

/// Uniform requantization to `2^bits` levels per channel, keeping 0 and 255.
pub fn bit_depth_reduce(img: &RasterImage, bits: u8) -> Result<RasterImage> {
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "bit depth {bits} outside 1..=8"
        )));
    }
    let levels = f64::from((1u16 << bits) - 1);
    let lut: Vec<u8> = (0..=255u8)
        .map(|v| {
            let level = (f64::from(v) / 255.0 * levels).round();
            (level / levels * 255.0).round() as u8
        })
        .collect();
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RasterImage::new(img.width(), img.height(), data)
}

/// Quality for window (`row`, `col`): a uniform pick from `qualities`, drawn
/// from a ChaCha stream keyed by the seed and the window position.
pub fn shield_window_quality(qualities: &QualityList, seed: u64, row: usize, col: usize) -> u8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((row as u64) << 32) | (col as u64 & 0xffff_ffff));
    qualities.get(rng.gen_range(0..qualities.len()))
}

pub fn shield_clean(img: &RasterImage, qualities: &QualityList, seed: u64) -> Result<CleanResult> {
    let (rows, cols) = window_dims(img.width(), img.height());
    let cells = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| shield_window_quality(qualities, seed, r, c))
        .collect();
    let grid = QualityGrid::new(rows, cols, cells)?;
    Ok(CleanResult {
        image: compress_image_map(img, &grid)?,
        quality_grid: Some(grid),
        saliency_used: None,
    })
}

/// Index into the quality list for window saliency `sal`:
/// `floor(sal * q_len / 255)`, with the `sal = 255` case pulled back into range.
pub fn sad_quality_index(sal: u8, q_len: usize) -> usize {
    debug_assert!(q_len >= 1);
    let raw = usize::from(sal) * q_len / 255;
    raw.min(q_len.saturating_sub(1))
}

/// Quality grid chosen from the window-average saliency of `sal_map`.
pub fn sad_quality_grid(sal_map: &SaliencyMap, qualities: &QualityList) -> Result<QualityGrid> {
    let windows = window_average_saliency(sal_map);
    let cells = windows
        .values()
        .iter()
        .map(|&s| qualities.get(sad_quality_index(s, qualities.len())))
        .collect();
    QualityGrid::new(windows.rows(), windows.cols(), cells)
}

pub fn sad_clean(
    img: &RasterImage,
    sal_map: &SaliencyMap,
    qualities: &QualityList,
) -> Result<CleanResult> {
    if img.dims() != sal_map.dims() {
        return Err(Error::dims(img.dims(), sal_map.dims()));
    }
    let grid = sad_quality_grid(sal_map, qualities)?;
    Ok(CleanResult {
        image: compress_image_map(img, &grid)?,
        quality_grid: Some(grid),
        saliency_used: Some(sal_map.clone()),
    })
}

/// Runs the configured defense. A saliency map must be given for SAD and only
/// for SAD.
pub fn clean(
    img: &RasterImage,
    cfg: &DefenseConfig,
    sal_map: Option<&SaliencyMap>,
) -> Result<CleanResult> {
    cfg.validate()?;
    match (cfg, sal_map) {
        (DefenseConfig::Sad { qualities }, Some(map)) => sad_clean(img, map, qualities),
        (DefenseConfig::Sad { .. }, None) => Err(Error::InvalidArgument(
            "SAD requires a saliency map".into(),
        )),
        (_, Some(_)) => Err(Error::InvalidArgument(format!(
            "{} does not take a saliency map",
            cfg.label()
        ))),
        (DefenseConfig::BitDepth { bits }, None) => Ok(CleanResult {
            image: bit_depth_reduce(img, *bits)?,
            quality_grid: None,
            saliency_used: None,
        }),
        (DefenseConfig::Jpeg { quality }, None) => Ok(CleanResult {
            image: compress_image_uniform(img, *quality)?,
            quality_grid: None,
            saliency_used: None,
        }),
        (DefenseConfig::Shield { qualities, seed }, None) => shield_clean(img, qualities, *seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn noise(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0u8; w * h * 3];
        rng.fill(&mut data[..]);
        RasterImage::new(w, h, data).unwrap()
    }

    fn qlist(q: &[u8]) -> QualityList {
        QualityList::new(q.to_vec()).unwrap()
    }

    #[test]
    fn bit_depth_examples() {
        let img = RasterImage::new(3, 1, vec![0, 100, 255, 1, 2, 3, 4, 5, 6]).unwrap();
        let out = bit_depth_reduce(&img, 3).unwrap();
        assert_eq!(&out.data()[..3], &[0, 109, 255]);
        assert_eq!(bit_depth_reduce(&img, 8).unwrap(), img);
        assert!(bit_depth_reduce(&img, 0).is_err());
        assert!(bit_depth_reduce(&img, 9).is_err());
    }

    #[test]
    fn bit_depth_levels_and_idempotence() {
        let all: Vec<u8> = (0..=255u8).flat_map(|v| [v, v, v]).collect();
        let img = RasterImage::new(256, 1, all).unwrap();
        for bits in 1..=8u8 {
            let once = bit_depth_reduce(&img, bits).unwrap();
            let distinct: BTreeSet<u8> = once.data().iter().copied().collect();
            assert!(distinct.len() <= 1 << bits);
            assert_eq!(bit_depth_reduce(&once, bits).unwrap(), once);
        }
    }

    #[test]
    fn quality_index_examples() {
        assert_eq!(sad_quality_index(0, 6), 0);
        assert_eq!(sad_quality_index(255, 3), 2);
        assert_eq!(sad_quality_index(127, 6), 2);
        assert_eq!(sad_quality_index(255, 1), 0);
    }

    #[test]
    fn sad_constant_maps_degenerate_to_uniform() {
        let img = noise(24, 16, 1);
        let q = qlist(&[50, 70, 90]);
        let zero = SaliencyMap::constant(24, 16, 0).unwrap();
        let full = SaliencyMap::constant(24, 16, 255).unwrap();
        assert_eq!(
            sad_clean(&img, &zero, &q).unwrap().image,
            compress_image_uniform(&img, 50).unwrap()
        );
        assert_eq!(
            sad_clean(&img, &full, &q).unwrap().image,
            compress_image_uniform(&img, 90).unwrap()
        );
    }

    #[test]
    fn sad_bimodal_map() {
        // 16x16 map with the top-left window salient
        let data = (0..256)
            .map(|i| if i % 16 < 8 && i / 16 < 8 { 255 } else { 0 })
            .collect();
        let map = SaliencyMap::new(16, 16, data).unwrap();
        let res = sad_clean(&noise(16, 16, 2), &map, &qlist(&[20, 90])).unwrap();
        assert_eq!(res.quality_grid.unwrap().cells(), &[90, 20, 20, 20]);
    }

    #[test]
    fn sad_rejects_mismatched_map() {
        let map = SaliencyMap::constant(8, 8, 0).unwrap();
        assert!(matches!(
            sad_clean(&noise(16, 8, 3), &map, &qlist(&[50])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shield_singleton_and_determinism() {
        let img = noise(40, 24, 4);
        let uniform = compress_image_uniform(&img, 80).unwrap();
        for seed in [0, 1, u64::MAX] {
            assert_eq!(shield_clean(&img, &qlist(&[80]), seed).unwrap().image, uniform);
        }
        let q = qlist(&SHIELD_DEFAULT_QUALITIES);
        assert_eq!(shield_clean(&img, &q, 9).unwrap(), shield_clean(&img, &q, 9).unwrap());
    }

    #[test]
    fn shield_draw_is_uniform() {
        let q = qlist(&SHIELD_DEFAULT_QUALITIES);
        let mut counts = [0usize; 4];
        for r in 0..100 {
            for c in 0..100 {
                let quality = shield_window_quality(&q, 42, r, c);
                counts[SHIELD_DEFAULT_QUALITIES.iter().position(|&x| x == quality).unwrap()] += 1;
            }
        }
        for n in counts {
            let f = n as f64 / 1e4;
            assert!((0.225..=0.275).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn dispatch() {
        let img = noise(16, 16, 5);
        let map = SaliencyMap::constant(16, 16, 10).unwrap();
        let jpeg = clean(&img, &DefenseConfig::Jpeg { quality: 80 }, None).unwrap();
        assert_eq!(jpeg.image, compress_image_uniform(&img, 80).unwrap());
        assert!(jpeg.quality_grid.is_none());
        let bd = clean(&img, &DefenseConfig::BitDepth { bits: 3 }, None).unwrap();
        assert_eq!(bd.image, bit_depth_reduce(&img, 3).unwrap());

        let sad = DefenseConfig::Sad {
            qualities: qlist(&[20, 50, 70, 70, 80, 90]),
        };
        assert!(clean(&img, &sad, None).is_err());
        // 10 * 6 / 255 = 0
        let out = clean(&img, &sad, Some(&map)).unwrap();
        assert_eq!(out.image, compress_image_uniform(&img, 20).unwrap());
        assert!(clean(&img, &DefenseConfig::Jpeg { quality: 80 }, Some(&map)).is_err());
        assert!(clean(&img, &DefenseConfig::Jpeg { quality: 0 }, None).is_err());
    }

    #[test]
    fn labels_match_table_rows() {
        assert_eq!(DefenseConfig::BitDepth { bits: 3 }.label(), "Bit-depth Reduction");
        assert_eq!(DefenseConfig::Jpeg { quality: 80 }.label(), "JPEG80 Compression");
        assert_eq!(
            DefenseConfig::Shield { qualities: qlist(&[20]), seed: 0 }.label(),
            "SHIELD"
        );
        assert_eq!(
            DefenseConfig::Sad { qualities: qlist(&[20, 50, 70, 70, 80, 90]) }.label(),
            "SAD (20 50 70 70 80 90)"
        );
    }
}
