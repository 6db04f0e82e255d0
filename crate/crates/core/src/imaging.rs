//! Raster images, color conversion, binary masks and erosion.
//!
//! Images are 8-bit, row-major, origin at the top-left corner, with either one
//! (gray) or three (interleaved RGB) channels per pixel.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image with every pixel set to `pixel` (1 or 3 samples).
    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn from_fn_gray(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn from_fn_rgb(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// First channel of a pixel; the intensity for gray images.
    pub fn luma(&self, x: usize, y: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels]
    }

    /// Iterates pixels in row-major order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, u8> {
        self.data.chunks_exact(self.channels)
    }

    pub(crate) fn require_channels(&self, channels: usize, op: &str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::InvalidInput(format!(
                "{op} expects a {channels}-channel image, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }
}

/// Foreground map with one flag per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {} flags does not describe a {width}x{height} grid",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Foreground wherever the image has a non-zero sample.
    pub fn from_nonzero(img: &ImageBuffer) -> Self {
        let bits = img.pixels().map(|p| p.iter().any(|&v| v != 0)).collect();
        Self {
            width: img.width(),
            height: img.height(),
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-grid coordinates read as background.
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// White-on-black gray rendering.
    pub fn to_image(&self) -> ImageBuffer {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn matches(&self, img: &ImageBuffer) -> bool {
        self.width == img.width() && self.height == img.height()
    }
}

/// ITU-R BT.601 luma.
pub fn gray_of(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

pub fn rgb_to_gray(img: &ImageBuffer) -> Result<ImageBuffer> {
    img.require_channels(3, "rgb_to_gray")?;
    let data = img.pixels().map(|p| gray_of(p[0], p[1], p[2])).collect();
    ImageBuffer::new(img.width(), img.height(), 1, data)
}

/// Gray images pass through; RGB images are converted.
pub fn to_gray(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.channels() {
        1 => Ok(img.clone()),
        _ => rgb_to_gray(img),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    /// Degrees in `[0, 360)`, zero for achromatic pixels.
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone conversion. Hue and saturation are computed from integer channel
/// differences, so any exact rescaling of the three channels yields the same
/// `h` and `s` bit-for-bit.
pub fn hsv_of(r: u8, g: u8, b: u8) -> Hsv {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = (max - min) as f64;
    let v = max as f64 / 255.0;
    if max == 0 || max == min {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = delta / max as f64;
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let h = if max as f64 == r {
        let h = 60.0 * (g - b) / delta;
        if h < 0.0 {
            h + 360.0
        } else {
            h
        }
    } else if max as f64 == g {
        120.0 + 60.0 * (b - r) / delta
    } else {
        240.0 + 60.0 * (r - g) / delta
    };
    Hsv { h, s, v }
}

pub fn rgb_to_hsv(img: &ImageBuffer) -> Result<Vec<Hsv>> {
    img.require_channels(3, "rgb_to_hsv")?;
    Ok(img.pixels().map(|p| hsv_of(p[0], p[1], p[2])).collect())
}

/// Binary erosion with a `(2r+1)x(2r+1)` square, applied `iterations` times.
/// Pixels outside the grid count as background.
pub fn erode(mask: &BinaryMask, se_radius: usize, iterations: usize) -> BinaryMask {
    let mut current = mask.clone();
    for _ in 0..iterations {
        if current.is_empty() {
            break;
        }
        current = erode_once(&current, se_radius);
    }
    current
}

fn erode_once(mask: &BinaryMask, r: usize) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    // The square element is separable: erode rows, then columns.
    let mut horizontal = vec![false; w * h];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        // run[x] = length of the foreground run ending at x
        let mut run = vec![0usize; w];
        let mut len = 0;
        for x in 0..w {
            len = if row[x] { len + 1 } else { 0 };
            run[x] = len;
        }
        for x in r..w.saturating_sub(r) {
            horizontal[y * w + x] = run[x + r] > 2 * r;
        }
    }
    let mut bits = vec![false; w * h];
    for x in 0..w {
        let mut len = 0;
        let mut run = vec![0usize; h];
        for y in 0..h {
            len = if horizontal[y * w + x] { len + 1 } else { 0 };
            run[y] = len;
        }
        for y in r..h.saturating_sub(r) {
            bits[y * w + x] = run[y + r] > 2 * r;
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Detects PNG or binary PPM/PGM from the leading bytes.
pub fn sniff_format(bytes: &[u8]) -> Option<ImageFormat> {
    if bytes.starts_with(PNG_MAGIC) {
        Some(ImageFormat::Png)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        Some(ImageFormat::Pnm)
    } else {
        None
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = sniff_format(bytes).ok_or_else(|| {
        Error::UnsupportedFormat("only PNG and binary PPM (P6) / PGM (P5) are accepted".into())
    })?;
    let decoded = image::load(Cursor::new(bytes), format)?;
    from_dynamic(decoded)
}

fn from_dynamic(decoded: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if decoded.color().has_color() {
        ImageBuffer::new(w, h, 3, decoded.into_rgb8().into_raw())
    } else {
        ImageBuffer::new(w, h, 1, decoded.into_luma8().into_raw())
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::UnsupportedFormat(msg) => {
            Error::UnsupportedFormat(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

/// Encodes by extension: `.png`, `.ppm` (RGB) or `.pgm` (gray).
pub fn save_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let color = match img.channels() {
        1 => ExtendedColorType::L8,
        _ => ExtendedColorType::Rgb8,
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = Vec::new();
    match ext.as_str() {
        "png" => {
            image::codecs::png::PngEncoder::new(&mut out).write_image(img.data(), w, h, color)?
        }
        "ppm" | "pgm" => {
            let subtype = match (ext.as_str(), img.channels()) {
                ("ppm", 3) => PnmSubtype::Pixmap(SampleEncoding::Binary),
                ("pgm", 1) => PnmSubtype::Graymap(SampleEncoding::Binary),
                _ => {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: .{ext} cannot hold a {}-channel image",
                        path.display(),
                        img.channels()
                    )))
                }
            };
            PnmEncoder::new(&mut out)
                .with_subtype(subtype)
                .write_image(img.data(), w, h, color)?
        }
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: cannot encode .{ext}",
                path.display()
            )))
        }
    }
    fs::write(path, out).map_err(|e| Error::file(path, e))
}
