//! JPEG-style transform coding of independent 8×8 windows.
//!
//! Each window goes through full-range YCbCr, a level shift, an orthonormal
//! 2-D DCT, quantization against quality-scaled standard tables, and the
//! inverse path. There is no entropy coding and no chroma subsampling, so the
//! result of a window depends only on its own pixels and quality.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{crop_from_windows, pad_to_windows, window_dims, RasterImage, WINDOW};

pub type Block = [u8; WINDOW * WINDOW * 3];

/// Luminance table from Annex K of the JPEG standard, row-major.
#[rustfmt::skip]
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Chrominance table from Annex K of the JPEG standard, row-major.
#[rustfmt::skip]
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
    pub quality: u8,
}

/// Ordered list of qualities, each in 1..=100. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QualityList(Vec<u8>);

impl QualityList {
    pub fn new(qualities: Vec<u8>) -> Result<Self> {
        if qualities.is_empty() {
            return Err(Error::InvalidArgument("quality list is empty".into()));
        }
        for &q in &qualities {
            check_quality(q)?;
        }
        Ok(Self(qualities))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }
}

impl std::str::FromStr for QualityList {
    type Err = Error;

    /// Parses `50,70,90` or `50 70 90`.
    fn from_str(s: &str) -> Result<Self> {
        let qualities = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u8>()
                    .map_err(|_| Error::InvalidArgument(format!("bad quality `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(qualities)
    }
}

impl std::fmt::Display for QualityList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

fn check_quality(quality: u8) -> Result<()> {
    if (1..=100).contains(&quality) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "quality {quality} outside 1..=100"
        )))
    }
}

fn scale_table(base: &[u16; 64], scale: u32) -> [u16; 64] {
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((scale * u32::from(b) + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

/// Scales the standard tables with the libjpeg quality rule.
pub fn build_quant_tables(quality: u8) -> Result<QuantTables> {
    check_quality(quality)?;
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    Ok(QuantTables {
        luma: scale_table(&BASE_LUMA, scale),
        chroma: scale_table(&BASE_CHROMA, scale),
        quality,
    })
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis() -> &'static [[f64; WINDOW]; WINDOW] {
    static BASIS: OnceLock<[[f64; WINDOW]; WINDOW]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; WINDOW]; WINDOW];
        let n = WINDOW as f64;
        for (k, row) in m.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos();
            }
        }
        m
    })
}

/// Forward 2-D DCT of a row-major 8×8 block.
pub fn dct2(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..WINDOW {
        for k in 0..WINDOW {
            tmp[y * WINDOW + k] = (0..WINDOW).map(|x| b[k][x] * block[y * WINDOW + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..WINDOW {
        for u in 0..WINDOW {
            out[k * WINDOW + u] = (0..WINDOW).map(|y| b[k][y] * tmp[y * WINDOW + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for k in 0..WINDOW {
        for x in 0..WINDOW {
            tmp[k * WINDOW + x] = (0..WINDOW).map(|u| b[u][x] * coeffs[k * WINDOW + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..WINDOW {
        for x in 0..WINDOW {
            out[y * WINDOW + x] = (0..WINDOW).map(|k| b[k][y] * tmp[k * WINDOW + x]).sum();
        }
    }
    out
}

fn quantize_plane(plane: &mut [f64; 64], table: &[u16; 64]) {
    let mut coeffs = dct2(plane);
    for (c, &q) in coeffs.iter_mut().zip(table) {
        let q = f64::from(q);
        // f64::round is half-away-from-zero
        *c = (*c / q).round() * q;
    }
    *plane = idct2(&coeffs);
}

/// Compresses one window with prebuilt tables.
pub fn compress_window_with(block: &Block, tables: &QuantTables) -> Block {
    let mut y = [0.0; 64];
    let mut cb = [0.0; 64];
    let mut cr = [0.0; 64];
    for i in 0..64 {
        let r = f64::from(block[i * 3]);
        let g = f64::from(block[i * 3 + 1]);
        let b = f64::from(block[i * 3 + 2]);
        // level-shifted BT.601 full range
        y[i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
        cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
        cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
    quantize_plane(&mut y, &tables.luma);
    quantize_plane(&mut cb, &tables.chroma);
    quantize_plane(&mut cr, &tables.chroma);

    let mut out = [0u8; WINDOW * WINDOW * 3];
    for i in 0..64 {
        let yy = y[i] + 128.0;
        let rgb = [
            yy + 1.402 * cr[i],
            yy - 0.344136 * cb[i] - 0.714136 * cr[i],
            yy + 1.772 * cb[i],
        ];
        for (c, v) in rgb.into_iter().enumerate() {
            out[i * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn compress_window(block: &[u8], quality: u8) -> Result<Block> {
    let block: &Block = block.try_into().map_err(|_| {
        Error::InvalidArgument(format!(
            "window must hold {} samples, got {}",
            WINDOW * WINDOW * 3,
            block.len()
        ))
    })?;
    Ok(compress_window_with(block, &build_quant_tables(quality)?))
}

/// Per-window quality assignment over the padded window grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QualityGrid {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl QualityGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "quality grid {rows}x{cols} needs {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        for &q in &cells {
            check_quality(q)?;
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn uniform(rows: usize, cols: usize, quality: u8) -> Result<Self> {
        Self::new(rows, cols, vec![quality; rows * cols])
    }

    /// Grid shaped for an image of the given size.
    pub fn for_image(img: &RasterImage, quality: u8) -> Result<Self> {
        let (rows, cols) = window_dims(img.width(), img.height());
        Self::uniform(rows, cols, quality)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, quality: u8) -> Result<()> {
        check_quality(quality)?;
        self.cells[row * self.cols + col] = quality;
        Ok(())
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }
}

/// Compresses window (i, j) at `grid[i][j]`; pads and crops transparently.
pub fn compress_image_map(img: &RasterImage, grid: &QualityGrid) -> Result<RasterImage> {
    let (rows, cols) = window_dims(img.width(), img.height());
    if (grid.rows, grid.cols) != (rows, cols) {
        return Err(Error::DimensionMismatch {
            expected: format!("{rows}x{cols} window grid"),
            actual: format!("{}x{} quality grid", grid.rows, grid.cols),
        });
    }
    let mut tables: [Option<QuantTables>; 101] = std::array::from_fn(|_| None);
    let mut padded = pad_to_windows(img);
    for r in 0..rows {
        for c in 0..cols {
            let q = grid.get(r, c);
            let t = match &tables[q as usize] {
                Some(t) => t,
                None => tables[q as usize].insert(build_quant_tables(q)?),
            };
            let block = compress_window_with(&padded.window(r, c), t);
            padded.put_window(r, c, &block);
        }
    }
    crop_from_windows(&padded, img.width(), img.height())
}

pub fn compress_image_uniform(img: &RasterImage, quality: u8) -> Result<RasterImage> {
    compress_image_map(img, &QualityGrid::for_image(img, quality)?)
}
