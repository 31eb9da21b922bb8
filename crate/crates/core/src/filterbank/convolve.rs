//! Same-size 2-D correlation with reflected borders, by direct summation or
//! through the discrete Fourier transform.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::error::{ensure, Result};
use crate::image::Plane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Direct,
    Spectral,
}

/// How a filter bank picks its backend per kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendPolicy {
    Direct,
    Spectral,
    /// Spectral when `kernel area * image area` exceeds the crossover.
    Auto { crossover: f64 },
}

impl Default for BackendPolicy {
    fn default() -> Self {
        BackendPolicy::Auto {
            crossover: DEFAULT_CROSSOVER,
        }
    }
}

pub const DEFAULT_CROSSOVER: f64 = 250_000.0;

impl BackendPolicy {
    pub fn select(&self, image_area: usize, kernel_area: usize) -> Backend {
        match *self {
            BackendPolicy::Direct => Backend::Direct,
            BackendPolicy::Spectral => Backend::Spectral,
            BackendPolicy::Auto { crossover } => {
                if (image_area as f64) * (kernel_area as f64) > crossover {
                    Backend::Spectral
                } else {
                    Backend::Direct
                }
            }
        }
    }
}

/// Mirror index into `[0, n)` without repeating the edge sample.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
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

/// Reflect-pads `img` by `px` columns and `py` rows on each side.
pub(crate) fn pad_reflect(img: &Plane, px: usize, py: usize) -> Plane {
    let (w, h) = (img.width(), img.height());
    Plane::from_fn(w + 2 * px, h + 2 * py, |x, y| {
        let sx = reflect_index(x as isize - px as isize, w);
        let sy = reflect_index(y as isize - py as isize, h);
        img.get(sx, sy)
    })
}

fn check_fits(img: &Plane, k: &Kernel) -> Result<()> {
    ensure!(
        k.width() < img.width() && k.height() < img.height(),
        Argument,
        "kernel {}x{} does not fit inside image {}x{}",
        k.width(),
        k.height(),
        img.width(),
        img.height()
    );
    Ok(())
}

/// Correlates `img` with `k`: `out(x, y) = sum k(u, v) * img(x + u - rx, y + v - ry)`.
/// The result is signed; callers take magnitudes where needed.
pub fn convolve(img: &Plane, k: &Kernel, backend: Backend) -> Result<Plane> {
    check_fits(img, k)?;
    Ok(match backend {
        Backend::Direct => correlate_direct(img, k),
        Backend::Spectral => {
            let ctx = SpectralContext::new(img.width(), img.height(), k.radius_x(), k.radius_y());
            let image_spectrum = ctx.image_spectrum(img);
            let kernel_spectrum = ctx.kernel_spectrum(k);
            ctx.correlate(&image_spectrum, &kernel_spectrum)
        }
    })
}

fn correlate_direct(img: &Plane, k: &Kernel) -> Plane {
    let (rx, ry) = (k.radius_x(), k.radius_y());
    let padded = pad_reflect(img, rx, ry);
    let pw = padded.width();
    let src = padded.data();
    let weights = k.weights();
    let (kw, kh) = (k.width(), k.height());
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for v in 0..kh {
            let src_row = &src[(y + v) * pw..(y + v + 1) * pw];
            let k_row = &weights[v * kw..(v + 1) * kw];
            for (u, &kv) in k_row.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                for (o, s) in dst.iter_mut().zip(&src_row[u..u + w]) {
                    *o += kv * s;
                }
            }
        }
    }
    Plane::new(w, h, out).expect("shape preserved")
}

/// FFT workspace for correlating images of one size against kernels whose
/// radii do not exceed the pad radii.
pub struct SpectralContext {
    width: usize,
    height: usize,
    pad_x: usize,
    pad_y: usize,
    fft_w: usize,
    fft_h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Smallest size >= n whose only prime factors are 2, 3 and 5.
fn next_smooth(n: usize) -> usize {
    (n..)
        .find(|&k| {
            let mut k = k;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .expect("smooth numbers are unbounded")
}

impl SpectralContext {
    pub fn new(width: usize, height: usize, pad_x: usize, pad_y: usize) -> Self {
        let fft_w = next_smooth(width + 2 * pad_x);
        let fft_h = next_smooth(height + 2 * pad_y);
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            pad_x,
            pad_y,
            fft_w,
            fft_h,
            row_fwd: planner.plan_fft_forward(fft_w),
            row_inv: planner.plan_fft_inverse(fft_w),
            col_fwd: planner.plan_fft_forward(fft_h),
            col_inv: planner.plan_fft_inverse(fft_h),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn supports(&self, k: &Kernel) -> bool {
        k.radius_x() <= self.pad_x && k.radius_y() <= self.pad_y
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.fft_w, self.fft_h);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut t = vec![Complex64::default(); w * h];
        transpose(buf, &mut t, w, h);
        col.process(&mut t);
        transpose(&t, buf, h, w);
    }

    pub fn image_spectrum(&self, img: &Plane) -> Vec<Complex64> {
        assert_eq!(
            (img.width(), img.height()),
            (self.width, self.height),
            "image does not match the spectral context"
        );
        let padded = pad_reflect(img, self.pad_x, self.pad_y);
        let mut buf = vec![Complex64::default(); self.fft_w * self.fft_h];
        for y in 0..padded.height() {
            for (x, &v) in padded.row(y).iter().enumerate() {
                buf[y * self.fft_w + x] = Complex64::new(v, 0.0);
            }
        }
        self.transform(&mut buf, false);
        buf
    }

    /// Conjugated kernel spectrum, ready to multiply against an image spectrum.
    pub fn kernel_spectrum(&self, k: &Kernel) -> Vec<Complex64> {
        assert!(self.supports(k), "kernel radius exceeds the spectral padding");
        let ox = self.pad_x - k.radius_x();
        let oy = self.pad_y - k.radius_y();
        let mut buf = vec![Complex64::default(); self.fft_w * self.fft_h];
        for v in 0..k.height() {
            for u in 0..k.width() {
                buf[(oy + v) * self.fft_w + ox + u] = Complex64::new(k.get(u, v), 0.0);
            }
        }
        self.transform(&mut buf, false);
        buf.iter_mut().for_each(|c| *c = c.conj());
        buf
    }

    pub fn correlate(&self, image: &[Complex64], kernel: &[Complex64]) -> Plane {
        let mut prod: Vec<Complex64> = image.iter().zip(kernel).map(|(a, b)| a * b).collect();
        self.transform(&mut prod, true);
        let scale = 1.0 / (self.fft_w * self.fft_h) as f64;
        Plane::from_fn(self.width, self.height, |x, y| {
            prod[y * self.fft_w + x].re * scale
        })
    }
}

/// In-place 2-D DFT of a row-major `w x h` buffer. The inverse is scaled by
/// `1 / (w h)`.
pub fn fft2d(buf: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    assert_eq!(buf.len(), w * h, "buffer does not match dimensions");
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut t = vec![Complex64::default(); w * h];
    transpose(buf, &mut t, w, h);
    col.process(&mut t);
    transpose(&t, buf, h, w);
    if inverse {
        let scale = 1.0 / (w * h) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], w: usize, h: usize) {
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
}
