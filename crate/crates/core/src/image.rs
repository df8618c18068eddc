//! Grayscale rasters with PGM/PNG ingestion and CSV/PGM export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use ::image::{GrayImage, ImageEncoder, ImageFormat, Luma};

use crate::{Error, Result};

/// Row-major grid of intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} intensities, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::invalid("intensity", format!("{bad} outside [0, 255]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Build from `f(u, v)`; values are clamped into `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                let x = f(u, v);
                if !x.is_finite() {
                    return Err(Error::NonFinite("image"));
                }
                data.push(x.clamp(0.0, 255.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub(crate) fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    /// Sub-window starting at `(u0, v0)`.
    pub fn crop(&self, u0: usize, v0: usize, width: usize, height: usize) -> Result<Image> {
        if u0 + width > self.width || v0 + height > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {}x{}+{}+{} exceeds {}x{}",
                width, height, u0, v0, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for v in v0..v0 + height {
            data.extend_from_slice(&self.data[v * self.width + u0..v * self.width + u0 + width]);
        }
        Image::new(width, height, data)
    }

    pub fn mirrored_horizontally(&self) -> Image {
        let mut out = self.clone();
        for v in 0..self.height {
            out.data[v * self.width..(v + 1) * self.width].reverse();
        }
        out
    }

    /// Pixelwise `|self - other|`.
    pub fn abs_diff(&self, other: &Image) -> Result<Image> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch("abs_diff of differently sized images".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).collect();
        Image::new(self.width, self.height, data)
    }

    pub fn is_constant(&self) -> bool {
        self.data.iter().all(|&v| v == self.data[0])
    }

    pub fn from_gray(gray: &GrayImage) -> Result<Image> {
        let data = gray.as_raw().iter().map(|&b| f64::from(b)).collect();
        Image::new(gray.width() as usize, gray.height() as usize, data)
    }

    /// Quantize to 8 bits, rounding to nearest.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |u, v| {
            Luma([self.get(u as usize, v as usize).round() as u8])
        })
    }

    /// Decode a PGM or PNG file; color inputs are converted to luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Image> {
        let img = ::image::load_from_memory(bytes)?;
        Self::from_gray(&img.to_luma8())
    }

    /// Write as binary PGM (P5).
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let gray = self.to_gray();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        PnmEncoder::new(&mut w)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(gray.as_raw(), gray.width(), gray.height(), ::image::ExtendedColorType::L8)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.to_gray().write_to(&mut w, ImageFormat::Png)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Pick the encoder from the extension (`.png`, anything else PGM).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => self.save_png(path),
            _ => self.save_pgm(path),
        }
    }
}

/// Write a row-major grid as CSV, one image row per line.
pub fn write_csv_grid(path: impl AsRef<Path>, width: usize, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    for row in values.chunks(width.max(1)) {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stretch an arbitrary real grid onto `[0, 255]` for viewing. A constant
/// grid maps to mid-gray.
pub fn normalized_image(width: usize, height: usize, values: &[f64]) -> Result<Image> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite("grid"));
    }
    let span = hi - lo;
    let data = values
        .iter()
        .map(|&v| if span > 0.0 { 255.0 * (v - lo) / span } else { 127.5 })
        .collect();
    Image::new(width, height, data)
}
