use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::image::Plane;

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence.
pub fn hermite(n: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Parameters of one Gabor receptive field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    pub theta: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub size: usize,
}

impl GaborParams {
    /// Validates and canonicalizes `theta` into `[0, pi)`.
    pub fn new(theta: f64, lambda: f64, sigma: f64, gamma: f64, size: usize) -> Result<Self> {
        ensure!(
            size >= 3 && size % 2 == 1,
            Argument,
            "gabor size must be odd and >= 3, got {size}"
        );
        ensure!(
            sigma > 0.0 && sigma.is_finite(),
            Argument,
            "gabor sigma must be positive, got {sigma}"
        );
        ensure!(
            lambda > 0.0 && lambda.is_finite(),
            Argument,
            "gabor lambda must be positive, got {lambda}"
        );
        ensure!(
            gamma > 0.0 && gamma.is_finite(),
            Argument,
            "gabor gamma must be positive, got {gamma}"
        );
        ensure!(theta.is_finite(), Argument, "gabor theta must be finite");
        let mut theta = theta.rem_euclid(PI);
        if theta >= PI {
            theta = 0.0;
        }
        Ok(Self {
            theta,
            lambda,
            sigma,
            gamma,
            size,
        })
    }
}

/// Parameters of one oriented Gaussian-Hermite moment mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OghmKernelSpec {
    pub p: u32,
    pub q: u32,
    pub theta: f64,
    pub sigma: f64,
    /// Mask width.
    pub m: usize,
    /// Mask height.
    pub n: usize,
}

impl OghmKernelSpec {
    pub fn new(p: u32, q: u32, theta: f64, sigma: f64, m: usize, n: usize) -> Result<Self> {
        for (name, side) in [("m", m), ("n", n)] {
            ensure!(
                side >= 3 && side % 2 == 1,
                Argument,
                "oghm mask {name} must be odd and >= 3, got {side}"
            );
        }
        ensure!(
            sigma > 0.0 && sigma.is_finite(),
            Argument,
            "oghm sigma must be positive, got {sigma}"
        );
        ensure!(theta.is_finite(), Argument, "oghm theta must be finite");
        Ok(Self {
            p,
            q,
            theta,
            sigma,
            m,
            n,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelOrigin {
    Gabor(GaborParams),
    Oghm(OghmKernelSpec),
    Custom,
}

/// A filter mask with odd side lengths, applied centered on each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
    origin: KernelOrigin,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        ensure!(
            width % 2 == 1 && height % 2 == 1,
            Argument,
            "kernel sides must be odd, got {width}x{height}"
        );
        ensure!(
            weights.len() == width * height,
            Argument,
            "kernel has {} weights, expected {}",
            weights.len(),
            width * height
        );
        Ok(Self {
            width,
            height,
            weights,
            origin: KernelOrigin::Custom,
        })
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
    pub fn radius_x(&self) -> usize {
        self.width / 2
    }

    #[inline]
    pub fn radius_y(&self) -> usize {
        self.height / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[v * self.width + u]
    }

    pub fn origin(&self) -> &KernelOrigin {
        &self.origin
    }

    pub fn to_plane(&self) -> Plane {
        Plane::new(self.width, self.height, self.weights.clone()).expect("kernel shape is valid")
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Evaluates the Gabor function on the centered integer grid, unnormalized.
pub fn gabor_weights_raw(theta: f64, lambda: f64, sigma: f64, gamma: f64, size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    let (sin_t, cos_t) = theta.sin_cos();
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        let y = row as f64 - c;
        for col in 0..size {
            let x = col as f64 - c;
            let xo = x * cos_t + y * sin_t;
            let yo = -x * sin_t + y * cos_t;
            let envelope = (-(xo * xo + gamma * gamma * yo * yo) / (2.0 * sigma * sigma)).exp();
            out.push(envelope * (2.0 * PI * xo / lambda).cos());
        }
    }
    out
}

/// Builds a Gabor kernel normalized to zero mean and unit L2 norm.
pub fn make_gabor_kernel(p: &GaborParams) -> Result<Kernel> {
    let p = GaborParams::new(p.theta, p.lambda, p.sigma, p.gamma, p.size)?;
    let mut w = gabor_weights_raw(p.theta, p.lambda, p.sigma, p.gamma, p.size);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::Argument(format!(
            "degenerate gabor kernel (sigma {}, lambda {}): zero energy after mean removal",
            p.sigma, p.lambda
        )));
    }
    w.iter_mut().for_each(|v| *v /= norm);
    Ok(Kernel {
        width: p.size,
        height: p.size,
        weights: w,
        origin: KernelOrigin::Gabor(p),
    })
}

/// One-dimensional oriented Gaussian-Hermite factor, including the grid
/// scaling `2 / (side - 1)`.
fn gauss_hermite_factor(order: u32, coord: f64, sigma: f64, side: usize) -> f64 {
    let grid = 2.0 / (side as f64 - 1.0);
    let norm = 1.0 / ((2f64.powi(order as i32) * factorial(order)).sqrt() * PI.sqrt() * sigma);
    let t = coord / sigma;
    grid * norm * (-(t * t) / 2.0).exp() * hermite(order, t)
}

/// Builds an oriented Gaussian-Hermite moment mask. The `4 / ((m-1)(n-1))`
/// prefactor of the moment sum is folded into the weights.
pub fn make_oghm_kernel(s: &OghmKernelSpec) -> Result<Kernel> {
    let s = OghmKernelSpec::new(s.p, s.q, s.theta, s.sigma, s.m, s.n)?;
    let prefactor = 4.0 / ((s.m as f64 - 1.0) * (s.n as f64 - 1.0));
    let (cx, cy) = ((s.m / 2) as f64, (s.n / 2) as f64);
    let (sin_t, cos_t) = s.theta.sin_cos();
    let mut w = Vec::with_capacity(s.m * s.n);
    for row in 0..s.n {
        let y = row as f64 - cy;
        for col in 0..s.m {
            let x = col as f64 - cx;
            let big_x = x * cos_t + y * sin_t;
            let big_y = -x * sin_t + y * cos_t;
            w.push(
                prefactor
                    * gauss_hermite_factor(s.p, big_x, s.sigma, s.m)
                    * gauss_hermite_factor(s.q, big_y, s.sigma, s.n),
            );
        }
    }
    Ok(Kernel {
        width: s.m,
        height: s.n,
        weights: w,
        origin: KernelOrigin::Oghm(s),
    })
}
