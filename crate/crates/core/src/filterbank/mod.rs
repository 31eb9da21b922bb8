//! Gabor and oriented Gaussian-Hermite moment filter banks, and the layer
//! stacks they produce.

mod convolve;
mod kernel;

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use convolve::{convolve, fft2d, Backend, BackendPolicy, SpectralContext, DEFAULT_CROSSOVER};
pub use kernel::{
    gabor_weights_raw, hermite, make_gabor_kernel, make_oghm_kernel, GaborParams, Kernel,
    KernelOrigin, OghmKernelSpec,
};

use crate::error::{ensure, Result};
use crate::image::{GrayImage, Plane};

/// Which family of receptive fields builds the first layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum S1Mode {
    Gabor,
    #[default]
    Oghm,
}

impl std::fmt::Display for S1Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            S1Mode::Gabor => "gabor",
            S1Mode::Oghm => "oghm",
        })
    }
}

impl std::str::FromStr for S1Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gabor" => Ok(S1Mode::Gabor),
            "oghm" => Ok(S1Mode::Oghm),
            other => Err(format!("unknown s1 mode `{other}` (expected gabor or oghm)")),
        }
    }
}

/// Kernel side lengths 7, 9, ..., 37.
pub fn default_sizes() -> Vec<usize> {
    (0..16).map(|i| 7 + 2 * i).collect()
}

/// 0, 45, 90 and 135 degrees.
pub fn default_orientations() -> Vec<f64> {
    vec![0.0, 45.0, 90.0, 135.0]
}

fn degrees_to_radians(deg: f64) -> f64 {
    (deg / 180.0 * PI).rem_euclid(PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborBankSpec {
    pub sizes: Vec<usize>,
    /// Orientations in degrees.
    pub orientations: Vec<f64>,
    pub gamma: f64,
    /// `sigma(s) = a s^2 + b s + c` for kernel side `s`.
    pub sigma_poly: [f64; 3],
    /// `lambda = sigma / lambda_ratio`.
    pub lambda_ratio: f64,
}

impl Default for GaborBankSpec {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
            orientations: default_orientations(),
            gamma: 0.3,
            sigma_poly: [0.0036, 0.35, 0.18],
            lambda_ratio: 0.8,
        }
    }
}

impl GaborBankSpec {
    pub fn sigma_for(&self, size: usize) -> f64 {
        let s = size as f64;
        let [a, b, c] = self.sigma_poly;
        a * s * s + b * s + c
    }

    pub fn params(&self) -> Result<Vec<GaborParams>> {
        let mut out = Vec::new();
        for &size in &self.sizes {
            let sigma = self.sigma_for(size);
            for &deg in &self.orientations {
                out.push(GaborParams::new(
                    degrees_to_radians(deg),
                    sigma / self.lambda_ratio,
                    sigma,
                    self.gamma,
                    size,
                )?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OghmBankSpec {
    pub sizes: Vec<usize>,
    /// Orientations in degrees.
    pub orientations: Vec<f64>,
    pub p: u32,
    pub q: u32,
    /// `sigma = size * sigma_ratio`.
    pub sigma_ratio: f64,
}

impl Default for OghmBankSpec {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
            orientations: default_orientations(),
            p: 1,
            q: 0,
            sigma_ratio: 0.25,
        }
    }
}

impl OghmBankSpec {
    pub fn specs(&self) -> Result<Vec<OghmKernelSpec>> {
        let mut out = Vec::new();
        for &size in &self.sizes {
            for &deg in &self.orientations {
                out.push(OghmKernelSpec::new(
                    self.p,
                    self.q,
                    degrees_to_radians(deg),
                    size as f64 * self.sigma_ratio,
                    size,
                    size,
                )?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleInfo {
    pub index: usize,
    pub size: usize,
    pub sigma: f64,
}

/// Scale-major stack of non-negative response maps, one per
/// (scale, orientation), each the size of the source image.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    mode: S1Mode,
    scales: Vec<ScaleInfo>,
    /// Orientations in radians.
    orientations: Vec<f64>,
    maps: Vec<Plane>,
    source: String,
}

impl LayerStack {
    pub fn new(
        mode: S1Mode,
        scales: Vec<ScaleInfo>,
        orientations: Vec<f64>,
        maps: Vec<Plane>,
        source: String,
    ) -> Result<Self> {
        ensure!(
            !scales.is_empty() && !orientations.is_empty(),
            Argument,
            "layer stack needs at least one scale and orientation"
        );
        ensure!(
            maps.len() == scales.len() * orientations.len(),
            Argument,
            "layer stack has {} maps, expected {}",
            maps.len(),
            scales.len() * orientations.len()
        );
        let (w, h) = (maps[0].width(), maps[0].height());
        ensure!(
            maps.iter().all(|m| m.width() == w && m.height() == h),
            Argument,
            "layer maps differ in size"
        );
        Ok(Self {
            mode,
            scales,
            orientations,
            maps,
            source,
        })
    }

    pub fn mode(&self) -> S1Mode {
        self.mode
    }

    pub fn scales(&self) -> &[ScaleInfo] {
        &self.scales
    }

    pub fn orientations(&self) -> &[f64] {
        &self.orientations
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn num_orientations(&self) -> usize {
        self.orientations.len()
    }

    pub fn width(&self) -> usize {
        self.maps[0].width()
    }

    pub fn height(&self) -> usize {
        self.maps[0].height()
    }

    /// Fingerprint of the image the stack was computed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn map(&self, scale: usize, orientation: usize) -> &Plane {
        &self.maps[scale * self.orientations.len() + orientation]
    }

    pub fn map_mut(&mut self, scale: usize, orientation: usize) -> &mut Plane {
        let n = self.orientations.len();
        &mut self.maps[scale * n + orientation]
    }

    pub fn maps(&self) -> &[Plane] {
        &self.maps
    }
}

struct Prepared {
    ctx: SpectralContext,
    spectra: Vec<Option<Vec<Complex64>>>,
}

/// An immutable set of kernels with per-image-size cached spectra.
pub struct FilterBank {
    mode: S1Mode,
    kernels: Vec<Kernel>,
    scales: Vec<ScaleInfo>,
    orientations: Vec<f64>,
    policy: BackendPolicy,
    prepared: Mutex<Vec<Arc<Prepared>>>,
}

impl FilterBank {
    pub fn gabor(spec: &GaborBankSpec, policy: BackendPolicy) -> Result<Self> {
        ensure!(!spec.sizes.is_empty(), Argument, "gabor bank has no sizes");
        ensure!(
            !spec.orientations.is_empty(),
            Argument,
            "gabor bank has no orientations"
        );
        let kernels = spec
            .params()?
            .iter()
            .map(make_gabor_kernel)
            .collect::<Result<Vec<_>>>()?;
        let scales = spec
            .sizes
            .iter()
            .enumerate()
            .map(|(index, &size)| ScaleInfo {
                index,
                size,
                sigma: spec.sigma_for(size),
            })
            .collect();
        let orientations = spec.orientations.iter().map(|&d| degrees_to_radians(d)).collect();
        Ok(Self::assemble(S1Mode::Gabor, kernels, scales, orientations, policy))
    }

    pub fn oghm(spec: &OghmBankSpec, policy: BackendPolicy) -> Result<Self> {
        ensure!(!spec.sizes.is_empty(), Argument, "oghm bank has no sizes");
        ensure!(
            !spec.orientations.is_empty(),
            Argument,
            "oghm bank has no orientations"
        );
        let kernels = spec
            .specs()?
            .iter()
            .map(make_oghm_kernel)
            .collect::<Result<Vec<_>>>()?;
        let scales = spec
            .sizes
            .iter()
            .enumerate()
            .map(|(index, &size)| ScaleInfo {
                index,
                size,
                sigma: size as f64 * spec.sigma_ratio,
            })
            .collect();
        let orientations = spec.orientations.iter().map(|&d| degrees_to_radians(d)).collect();
        Ok(Self::assemble(S1Mode::Oghm, kernels, scales, orientations, policy))
    }

    fn assemble(
        mode: S1Mode,
        kernels: Vec<Kernel>,
        scales: Vec<ScaleInfo>,
        orientations: Vec<f64>,
        policy: BackendPolicy,
    ) -> Self {
        Self {
            mode,
            kernels,
            scales,
            orientations,
            policy,
            prepared: Mutex::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> S1Mode {
        self.mode
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn kernel(&self, scale: usize, orientation: usize) -> &Kernel {
        &self.kernels[scale * self.orientations.len() + orientation]
    }

    pub fn with_policy(mut self, policy: BackendPolicy) -> Self {
        self.policy = policy;
        self.prepared = Mutex::new(Vec::new());
        self
    }

    fn prepared_for(&self, w: usize, h: usize) -> Arc<Prepared> {
        let mut cache = self.prepared.lock().expect("filter bank cache poisoned");
        if let Some(p) = cache.iter().find(|p| p.ctx.dims() == (w, h)) {
            return Arc::clone(p);
        }
        let pad_x = self.kernels.iter().map(Kernel::radius_x).max().unwrap_or(0);
        let pad_y = self.kernels.iter().map(Kernel::radius_y).max().unwrap_or(0);
        let ctx = SpectralContext::new(w, h, pad_x, pad_y);
        let spectra = self
            .kernels
            .iter()
            .map(|k| {
                (self.policy.select(w * h, k.width() * k.height()) == Backend::Spectral)
                    .then(|| ctx.kernel_spectrum(k))
            })
            .collect();
        let p = Arc::new(Prepared { ctx, spectra });
        if cache.len() >= 8 {
            cache.remove(0);
        }
        cache.push(Arc::clone(&p));
        p
    }

    /// Magnitude responses of every kernel, stacked scale-major.
    pub fn apply(&self, img: &GrayImage) -> Result<LayerStack> {
        let plane = img.as_plane();
        for k in &self.kernels {
            ensure!(
                k.width() < plane.width() && k.height() < plane.height(),
                Argument,
                "kernel {}x{} does not fit inside image {}x{}",
                k.width(),
                k.height(),
                plane.width(),
                plane.height()
            );
        }
        let prepared = self.prepared_for(plane.width(), plane.height());
        let image_spectrum = prepared
            .spectra
            .iter()
            .any(Option::is_some)
            .then(|| prepared.ctx.image_spectrum(plane));
        let maps: Vec<Plane> = self
            .kernels
            .par_iter()
            .zip(prepared.spectra.par_iter())
            .map(|(k, spectrum)| {
                let signed = match (spectrum, &image_spectrum) {
                    (Some(ks), Some(is)) => prepared.ctx.correlate(is, ks),
                    _ => convolve(plane, k, Backend::Direct)?,
                };
                Ok(signed.map(f64::abs))
            })
            .collect::<Result<_>>()?;
        LayerStack::new(
            self.mode,
            self.scales.clone(),
            self.orientations.clone(),
            maps,
            img.fingerprint(),
        )
    }
}

/// Gabor magnitude layers `|G * I|` for every (scale, orientation).
pub fn s1_layers(img: &GrayImage, bank: &GaborBankSpec) -> Result<LayerStack> {
    FilterBank::gabor(bank, BackendPolicy::default())?.apply(img)
}

/// Oriented Gaussian-Hermite moment magnitude layers.
pub fn processing_layers(img: &GrayImage, spec: &OghmBankSpec) -> Result<LayerStack> {
    FilterBank::oghm(spec, BackendPolicy::default())?.apply(img)
}
