//! Spectral-residual saliency and threshold segmentation of the salient region.

use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filterbank::fft2d;
use crate::image::{write_pbm, write_pgm, GrayImage, Plane};

/// Larger side of the analysis image.
pub const ANALYSIS_SIDE: usize = 64;
/// Gaussian smoothing of the reconstructed map, in analysis pixels.
pub const SMOOTHING_SIGMA: f64 = 2.5;
/// Spectral amplitudes below this fraction of the peak carry no usable phase.
const AMPLITUDE_FLOOR: f64 = 1e-14;
/// Added to every amplitude, relative to the peak, before taking the log.
/// Exact spectral zeros (box shapes on the analysis grid) would otherwise
/// dominate the residual of their neighbors.
const LOG_OFFSET: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub analysis_side: usize,
    pub smoothing_sigma: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            analysis_side: ANALYSIS_SIDE,
            smoothing_sigma: SMOOTHING_SIGMA,
        }
    }
}

/// Intermediate spectra at the analysis resolution, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    pub width: usize,
    pub height: usize,
    pub amplitude: Vec<f64>,
    pub log_amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    map: Plane,
    analysis: (usize, usize),
    source: String,
}

impl SaliencyMap {
    pub fn new(map: Plane, analysis: (usize, usize), source: String) -> Self {
        Self {
            map,
            analysis,
            source,
        }
    }

    pub fn map(&self) -> &Plane {
        &self.map
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    pub fn analysis_dims(&self) -> (usize, usize) {
        self.analysis
    }

    /// Fingerprint of the source image.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Min-max scaled 8-bit rendering.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.map
            .min_max_normalized()
            .data()
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pgm(path, self.width(), self.height(), &self.to_luma8())
    }
}

/// Binary salient region with the statistics that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SalientMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    threshold: f64,
    mean: f64,
    source: String,
}

impl SalientMask {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>, source: String) -> Result<Self> {
        ensure!(
            bits.len() == width * height && width >= 1 && height >= 1,
            Argument,
            "mask has {} bits, expected {width}x{height}",
            bits.len()
        );
        Ok(Self {
            width,
            height,
            bits,
            threshold: f64::NAN,
            mean: f64::NAN,
            source,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool, source: String) -> Self {
        Self::from_bits(width, height, vec![value; width * height], source)
            .expect("dimensions are consistent")
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Bitwise AND with another mask of the same size.
    pub fn intersect(&self, other: &SalientMask) -> Result<SalientMask> {
        ensure!(
            self.width == other.width && self.height == other.height,
            Argument,
            "mask sizes differ"
        );
        let mut out = self.clone();
        out.bits
            .iter_mut()
            .zip(&other.bits)
            .for_each(|(a, b)| *a = *a && *b);
        Ok(out)
    }

    /// Nearest-neighbor resampling; identity when the size already matches.
    pub fn resized(&self, width: usize, height: usize) -> SalientMask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                bits.push(self.get(sx.min(self.width - 1), sy.min(self.height - 1)));
            }
        }
        SalientMask {
            width,
            height,
            bits,
            threshold: self.threshold,
            mean: self.mean,
            source: self.source.clone(),
        }
    }

    pub fn write_pbm(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pbm(path, self.width, self.height, &self.bits)
    }
}

/// Circular 3x3 mean over the (periodic) spectrum.
fn box3_wrapped(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    s += values[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let i = i.rem_euclid(period);
    if i >= n as isize {
        (period - i) as usize
    } else {
        i as usize
    }
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return p.clone();
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = (p.width(), p.height());
    let horiz = Plane::from_fn(w, h, |x, y| {
        let row = p.row(y);
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * row[mirror(x as isize + i as isize - r, w)])
            .sum()
    });
    Plane::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * horiz.get(x, mirror(y as isize + i as isize - r, h)))
            .sum()
    })
}

/// Computes the spectral-residual saliency map at `(out_w, out_h)` together
/// with its analysis-resolution spectra.
pub fn spectral_residual_with(
    img: &GrayImage,
    out_w: usize,
    out_h: usize,
    cfg: &SaliencyConfig,
) -> Result<(SaliencyMap, SpectralDecomposition)> {
    ensure!(
        out_w >= 1 && out_h >= 1,
        Argument,
        "saliency output must be at least 1x1"
    );
    ensure!(
        cfg.analysis_side >= 8,
        Config,
        "analysis side must be >= 8, got {}",
        cfg.analysis_side
    );
    let small = img.resize_max_side(cfg.analysis_side)?;
    let (w, h) = (small.width(), small.height());
    ensure!(
        w >= 8 && h >= 8,
        Argument,
        "image {}x{} is degenerate for saliency analysis ({w}x{h} after resize)",
        img.width(),
        img.height()
    );

    let mut spectrum: Vec<Complex64> = small.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2d(&mut spectrum, w, h, false);

    let amplitude: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
    let peak = amplitude.iter().copied().fold(0.0, f64::max);
    let floor = peak * AMPLITUDE_FLOOR;
    let offset = (peak * LOG_OFFSET).max(f64::MIN_POSITIVE);
    let log_amplitude: Vec<f64> = amplitude.iter().map(|&a| (a + offset).ln()).collect();
    let phase: Vec<f64> = spectrum.iter().map(|c| c.arg()).collect();
    let smoothed = box3_wrapped(&log_amplitude, w, h);
    let residual: Vec<f64> = log_amplitude
        .iter()
        .zip(&smoothed)
        .map(|(l, s)| l - s)
        .collect();

    // The zero-frequency bin only adds a uniform offset, and bins without
    // measurable amplitude carry no phase: both contribute nothing.
    let mut recon: Vec<Complex64> = (0..w * h)
        .map(|i| {
            if i == 0 || !(amplitude[i] > floor) {
                Complex64::default()
            } else {
                Complex64::from_polar(residual[i].exp(), phase[i])
            }
        })
        .collect();
    fft2d(&mut recon, w, h, true);
    let raw = Plane::new(w, h, recon.iter().map(|c| c.norm_sqr()).collect())?;
    let smooth = gaussian_blur(&raw, cfg.smoothing_sigma).map(|v| v.max(0.0));
    let map = smooth.resize_bilinear(out_w, out_h)?.map(|v| v.max(0.0));

    Ok((
        SaliencyMap {
            map,
            analysis: (w, h),
            source: img.fingerprint(),
        },
        SpectralDecomposition {
            width: w,
            height: h,
            amplitude,
            log_amplitude,
            phase,
            residual,
        },
    ))
}

/// Spectral-residual saliency map resampled to `(out_w, out_h)`.
pub fn spectral_residual(img: &GrayImage, out_w: usize, out_h: usize) -> Result<SaliencyMap> {
    spectral_residual_with(img, out_w, out_h, &SaliencyConfig::default()).map(|(m, _)| m)
}

/// Marks pixels whose saliency strictly exceeds `multiplier` times the mean.
pub fn salient_region(sal: &SaliencyMap, multiplier: f64) -> SalientMask {
    let mean = sal.map.mean();
    let threshold = multiplier * mean;
    SalientMask {
        width: sal.width(),
        height: sal.height(),
        bits: sal.map.data().iter().map(|&v| v > threshold).collect(),
        threshold,
        mean,
        source: sal.source.clone(),
    }
}
