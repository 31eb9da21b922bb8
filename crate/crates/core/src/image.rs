//! Image ingestion, grayscale conversion, resizing and the 2-D real grid type
//! shared by every later stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::Fingerprinter;
use crate::error::{ensure, Error, Result};

/// A dense row-major grid of real values. Used for filter responses,
/// saliency maps and anything else that is not constrained to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            width >= 1 && height >= 1,
            Argument,
            "plane dimensions must be positive, got {width}x{height}"
        );
        ensure!(
            data.len() == width * height,
            Argument,
            "plane data has {} values, expected {}x{}",
            data.len(),
            width,
            height
        );
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "plane dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width >= 1 && height >= 1, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Rescales values linearly onto `[0, 1]`. A constant plane maps to zeros.
    pub fn min_max_normalized(&self) -> Plane {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        if !(span > 0.0) {
            return Plane::zeros(self.width, self.height);
        }
        self.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
    }

    /// Rotates the grid by 90 degrees counter-clockwise (as displayed with
    /// row 0 on top): output `(x, y)` = input `(w - 1 - y, x)`.
    pub fn rotate90(&self) -> Plane {
        let (w, h) = (self.width, self.height);
        Plane::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }

    /// Bilinear resampling with sample-center alignment and edge clamping.
    pub fn resize_bilinear(&self, w: usize, h: usize) -> Result<Plane> {
        ensure!(
            w >= 1 && h >= 1,
            Argument,
            "resize target must be at least 1x1, got {w}x{h}"
        );
        if w == self.width && h == self.height {
            return Ok(self.clone());
        }
        let xs = sample_positions(self.width, w);
        let ys = sample_positions(self.height, h);
        let mut out = Vec::with_capacity(w * h);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
                let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
        Ok(Plane {
            width: w,
            height: h,
            data: out,
        })
    }
}

/// For each output coordinate, the two source indices and the blend weight
/// of the second one.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// A grayscale intensity image with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    plane: Plane,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let plane = Plane::new(width, height, data)?;
        Self::from_plane(plane)
    }

    pub fn from_plane(plane: Plane) -> Result<Self> {
        if let Some(bad) = plane.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!(
                "intensity {bad} lies outside [0, 1]"
            )));
        }
        Ok(Self { plane })
    }

    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn from_plane_clamped(plane: Plane) -> Self {
        Self {
            plane: plane.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }),
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_plane(Plane::filled(width, height, value))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.plane.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.plane.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.plane.get(x, y)
    }

    pub fn data(&self) -> &[f64] {
        &self.plane.data
    }

    pub fn as_plane(&self) -> &Plane {
        &self.plane
    }

    /// Content fingerprint: identical pixels give identical fingerprints.
    pub fn fingerprint(&self) -> String {
        Fingerprinter::new()
            .u64(self.width() as u64)
            .u64(self.height() as u64)
            .f64s(&self.plane.data)
            .finish()
    }

    pub fn resize_bilinear(&self, w: usize, h: usize) -> Result<GrayImage> {
        let plane = self.plane.resize_bilinear(w, h)?;
        Ok(GrayImage::from_plane_clamped(plane))
    }

    /// Resizes so that the larger side equals `side`, preserving aspect ratio.
    pub fn resize_max_side(&self, side: usize) -> Result<GrayImage> {
        let (w, h) = (self.width(), self.height());
        let larger = w.max(h) as f64;
        let nw = ((w as f64 * side as f64 / larger).round() as usize).max(1);
        let nh = ((h as f64 * side as f64 / larger).round() as usize).max(1);
        self.resize_bilinear(nw, nh)
    }

    pub fn rotate90(&self) -> GrayImage {
        GrayImage {
            plane: self.plane.rotate90(),
        }
    }

    /// Quantizes to 8 bits for export.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.plane
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// BT.601 luminance of one 8-bit RGB pixel, scaled to `[0, 1]`.
///
/// Integer arithmetic keeps gray pixels exact: `(v, v, v)` gives `v / 255`.
pub fn luminance_rgb8(r: u8, g: u8, b: u8) -> f64 {
    let weighted = 299 * r as u64 + 587 * g as u64 + 114 * b as u64;
    weighted as f64 / 255_000.0
}

fn luminance_rgb16(r: u16, g: u16, b: u16) -> f64 {
    let weighted = 299 * r as u64 + 587 * g as u64 + 114 * b as u64;
    weighted as f64 / 65_535_000.0
}

/// Loads a PNG or PGM/PPM file as a [`GrayImage`].
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    use image::DynamicImage;

    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(Error::Format(format!(
            "{}: unsupported raster format {format:?}",
            path.display()
        )));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.pixels().map(|p| p.0[0] as f64 / 65_535.0).collect()
        }
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| luminance_rgb16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| luminance_rgb16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageLumaA16(buf) => {
            buf.pixels().map(|p| p.0[0] as f64 / 65_535.0).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luminance_rgb8(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::new(w, h, data)
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    ensure!(
        pixels.len() == width * height,
        Argument,
        "pgm payload has {} bytes, expected {}",
        pixels.len(),
        width * height
    );
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a binary PBM (1 = set bit = black in PBM convention).
pub fn write_pbm(path: impl AsRef<Path>, width: usize, height: usize, bits: &[bool]) -> Result<()> {
    let path = path.as_ref();
    ensure!(
        bits.len() == width * height,
        Argument,
        "pbm payload has {} bits, expected {}",
        bits.len(),
        width * height
    );
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    for row in bits.chunks(width) {
        for byte in row.chunks(8) {
            let mut packed = 0u8;
            for (i, &b) in byte.iter().enumerate() {
                if b {
                    packed |= 0x80 >> i;
                }
            }
            out.push(packed);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Saves a [`GrayImage`] as PNG or PGM depending on the extension.
pub fn save_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let pixels = img.to_luma8();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return write_pgm(path, img.width(), img.height(), &pixels);
    }
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, pixels)
        .ok_or_else(|| Error::Argument("image buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
