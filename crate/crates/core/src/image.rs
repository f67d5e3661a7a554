//! Raster and map types, 8×8 windowing and lossless file I/O.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Side length of a compression window.
pub const WINDOW: usize = 8;

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples for {width}x{height}x3, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the 8×8 window at window coordinates (`row`, `col`). The image
    /// must already be window-aligned.
    pub fn window(&self, row: usize, col: usize) -> [u8; WINDOW * WINDOW * 3] {
        let mut block = [0u8; WINDOW * WINDOW * 3];
        for dy in 0..WINDOW {
            let y = row * WINDOW + dy;
            let start = (y * self.width + col * WINDOW) * 3;
            block[dy * WINDOW * 3..(dy + 1) * WINDOW * 3]
                .copy_from_slice(&self.data[start..start + WINDOW * 3]);
        }
        block
    }

    pub fn put_window(&mut self, row: usize, col: usize, block: &[u8; WINDOW * WINDOW * 3]) {
        for dy in 0..WINDOW {
            let y = row * WINDOW + dy;
            let start = (y * self.width + col * WINDOW) * 3;
            self.data[start..start + WINDOW * 3]
                .copy_from_slice(&block[dy * WINDOW * 3..(dy + 1) * WINDOW * 3]);
        }
    }

    /// Samples scaled to [0,1].
    pub fn to_unit(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v) / 255.0).collect()
    }

    /// Inverse of [`RasterImage::to_unit`]: clamps to [0,1], scales by 255 and
    /// rounds half-up.
    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let data = values.iter().map(|&v| unit_to_u8(v)).collect();
        Self::new(width, height, data)
    }
}

pub(crate) fn unit_to_u8(v: f64) -> u8 {
    let scaled = (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor();
    scaled.clamp(0.0, 255.0) as u8
}

/// 8-bit grayscale saliency map, 0 = non-salient, 255 = fully salient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples for {width}x{height} map, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = decode(path)?;
        let gray = match img {
            DynamicImage::ImageLuma8(g) => g,
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
                img.to_luma8()
            }
            other => return Err(unsupported_depth(&other)),
        };
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw())
    }

    /// Writes an 8-bit PNG or binary PGM, chosen by extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raw(
            path.as_ref(),
            &self.data,
            self.width,
            self.height,
            ExtendedColorType::L8,
        )
    }
}

/// Human fixation locations as (row, col) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixationMap {
    width: usize,
    height: usize,
    fixations: Vec<(usize, usize)>,
}

impl FixationMap {
    pub fn new(width: usize, height: usize, fixations: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(r, c)) = fixations.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::InvalidArgument(format!(
                "fixation ({r}, {c}) outside {width}x{height} map"
            )));
        }
        Ok(Self {
            width,
            height,
            fixations,
        })
    }

    /// Every nonzero pixel is a fixation.
    pub fn from_map(map: &SaliencyMap) -> Self {
        let mut fixations = Vec::new();
        for r in 0..map.height() {
            for c in 0..map.width() {
                if map.get(c, r) != 0 {
                    fixations.push((r, c));
                }
            }
        }
        Self {
            width: map.width(),
            height: map.height(),
            fixations,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SaliencyMap::load(path).map(|m| Self::from_map(&m))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn fixations(&self) -> &[(usize, usize)] {
        &self.fixations
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }
}

/// Per-window scalar saliency `Sal_ij` over the padded 8×8 grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    rows: usize,
    cols: usize,
    window_saliency: Vec<u8>,
}

impl WindowGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.window_saliency[row * self.cols + col]
    }

    pub fn values(&self) -> &[u8] {
        &self.window_saliency
    }
}

/// Number of window rows and columns covering a `width`×`height` image.
pub fn window_dims(width: usize, height: usize) -> (usize, usize) {
    (height.div_ceil(WINDOW), width.div_ceil(WINDOW))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized file {}",
                path.display()
            )))
        }
    }
    let img = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::ZeroDimension {
            width: img.width() as usize,
            height: img.height() as usize,
        });
    }
    Ok(img)
}

fn unsupported_depth(img: &DynamicImage) -> Error {
    Error::UnsupportedFormat(format!("sample layout {:?}", img.color()))
}

/// Decodes a PNG or binary PPM/PGM. Grayscale inputs are replicated to RGB and
/// alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_rgb8()
        }
        other => return Err(unsupported_depth(&other)),
    };
    let (w, h) = rgb.dimensions();
    RasterImage::new(w as usize, h as usize, rgb.into_raw())
}

/// Writes a lossless PNG or binary PPM, chosen by extension.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    write_raw(
        path.as_ref(),
        img.data(),
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
    )
}

fn write_raw(
    path: &Path,
    data: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let pnm_subtype = match (ext.as_str(), color) {
        ("png", _) => None,
        ("ppm", ExtendedColorType::Rgb8) => Some(PnmSubtype::Pixmap(SampleEncoding::Binary)),
        ("pgm", ExtendedColorType::L8) => Some(PnmSubtype::Graymap(SampleEncoding::Binary)),
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot write {:?} as .{ext}",
                color
            )))
        }
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let (w, h) = (width as u32, height as u32);
    let written = match pnm_subtype {
        None => image::codecs::png::PngEncoder::new(&mut out).write_image(data, w, h, color),
        Some(subtype) => PnmEncoder::new(&mut out)
            .with_subtype(subtype)
            .write_image(data, w, h, color),
    };
    written.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })?;
    std::io::Write::flush(&mut out).map_err(|e| Error::io(path, e))
}

fn pad_plane(data: &[u8], width: usize, height: usize, channels: usize) -> (Vec<u8>, usize, usize) {
    let pw = width.div_ceil(WINDOW) * WINDOW;
    let ph = height.div_ceil(WINDOW) * WINDOW;
    let mut out = Vec::with_capacity(pw * ph * channels);
    for y in 0..ph {
        let sy = y.min(height - 1);
        for x in 0..pw {
            let sx = x.min(width - 1);
            let i = (sy * width + sx) * channels;
            out.extend_from_slice(&data[i..i + channels]);
        }
    }
    (out, pw, ph)
}

/// Rounds both dimensions up to the next multiple of 8 by replicating the last
/// row and column.
pub fn pad_to_windows(img: &RasterImage) -> RasterImage {
    if img.width.is_multiple_of(WINDOW) && img.height.is_multiple_of(WINDOW) {
        return img.clone();
    }
    let (data, w, h) = pad_plane(&img.data, img.width, img.height, 3);
    RasterImage {
        width: w,
        height: h,
        data,
    }
}

/// Edge-replication padding for saliency maps, same rule as images.
pub fn pad_map_to_windows(map: &SaliencyMap) -> SaliencyMap {
    let (data, w, h) = pad_plane(&map.data, map.width, map.height, 1);
    SaliencyMap {
        width: w,
        height: h,
        data,
    }
}

/// Top-left `orig_w`×`orig_h` sub-image.
pub fn crop_from_windows(img: &RasterImage, orig_w: usize, orig_h: usize) -> Result<RasterImage> {
    if orig_w > img.width || orig_h > img.height {
        return Err(Error::InvalidArgument(format!(
            "crop {orig_w}x{orig_h} exceeds {}x{}",
            img.width, img.height
        )));
    }
    if orig_w == img.width && orig_h == img.height {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(orig_w * orig_h * 3);
    for y in 0..orig_h {
        let start = y * img.width * 3;
        data.extend_from_slice(&img.data[start..start + orig_w * 3]);
    }
    RasterImage::new(orig_w, orig_h, data)
}

/// Mean saliency of each padded 8×8 window, rounded half-up.
pub fn window_average_saliency(map: &SaliencyMap) -> WindowGrid {
    let padded = pad_map_to_windows(map);
    let (rows, cols) = window_dims(map.width, map.height);
    let mut window_saliency = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut sum = 0u32;
            for dy in 0..WINDOW {
                let start = (r * WINDOW + dy) * padded.width + c * WINDOW;
                sum += padded.data[start..start + WINDOW]
                    .iter()
                    .map(|&v| u32::from(v))
                    .sum::<u32>();
            }
            // (sum + 32) / 64 is round-half-up of sum / 64
            window_saliency.push(((sum + 32) / 64).min(255) as u8);
        }
    }
    WindowGrid {
        rows,
        cols,
        window_saliency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> RasterImage {
        let data = (0..w * h * 3).map(|i| (i * 7 % 256) as u8).collect();
        RasterImage::new(w, h, data).unwrap()
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            RasterImage::new(0, 3, vec![]),
            Err(Error::ZeroDimension { .. })
        ));
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
        assert!(SaliencyMap::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn aligned_pad_is_identity() {
        let img = gradient(16, 8);
        assert_eq!(pad_to_windows(&img), img);
    }

    #[test]
    fn pad_replicates_edges() {
        let img = gradient(9, 9);
        let padded = pad_to_windows(&img);
        assert_eq!(padded.dims(), (16, 16));
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(padded.pixel(x, y), img.pixel(x.min(8), y.min(8)));
            }
        }
    }

    #[test]
    fn crop_takes_top_left() {
        let img = gradient(16, 16);
        let cropped = crop_from_windows(&img, 9, 9).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(cropped.pixel(x, y), img.pixel(x, y));
            }
        }
        assert_eq!(crop_from_windows(&img, 16, 16).unwrap(), img);
        assert!(crop_from_windows(&img, 17, 4).is_err());
    }

    #[test]
    fn pad_crop_roundtrip_exhaustive_small_sizes() {
        for w in 1..=64 {
            for h in [1, 7, 8, 9, 33, 64] {
                let img = gradient(w, h);
                let padded = pad_to_windows(&img);
                assert_eq!(padded.width(), w.div_ceil(8) * 8);
                assert_eq!(padded.height(), h.div_ceil(8) * 8);
                assert_eq!(crop_from_windows(&padded, w, h).unwrap(), img);
            }
        }
    }

    #[test]
    fn window_means() {
        let m = SaliencyMap::constant(8, 8, 200).unwrap();
        assert_eq!(window_average_saliency(&m).values(), &[200]);

        let half: Vec<u8> = (0..64).map(|i| if i < 32 { 0 } else { 255 }).collect();
        let m = SaliencyMap::new(8, 8, half).unwrap();
        assert_eq!(window_average_saliency(&m).values(), &[128]);

        let split: Vec<u8> = (0..128).map(|i| if i % 16 < 8 { 0 } else { 255 }).collect();
        let m = SaliencyMap::new(16, 8, split).unwrap();
        let grid = window_average_saliency(&m);
        assert_eq!((grid.rows(), grid.cols()), (1, 2));
        assert_eq!(grid.values(), &[0, 255]);
    }

    #[test]
    fn unit_conversion_rounds_half_up() {
        assert_eq!(unit_to_u8(0.5 / 255.0), 1);
        assert_eq!(unit_to_u8(-0.2), 0);
        assert_eq!(unit_to_u8(1.7), 255);
        let img = gradient(5, 3);
        let back = RasterImage::from_unit(5, 3, &img.to_unit()).unwrap();
        assert_eq!(back, img);
    }
}
