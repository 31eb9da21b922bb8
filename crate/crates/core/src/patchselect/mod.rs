//! Dictionary construction: uniform random sampling over C1 positions, and
//! keypoint-driven selection inside the salient region.

mod store;

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::error::{ensure, Error, Result};
use crate::filterbank::S1Mode;
use crate::hmax::{C1Stack, OriginKind, Patch, PatchDictionary, SelectorKind};
use crate::image::GrayImage;
use crate::keypoints::{multiscale_keypoints, Keypoint, DEFAULT_THRESHOLD};
use crate::pipeline::FeatureExtractor;
use crate::saliency::{salient_region, spectral_residual, SalientMask};

pub use store::{
    load_dictionary, load_dictionary_file, save_dictionary, save_dictionary_file, DictionaryFile,
    FORMAT_VERSION,
};

/// Patch sides the C1 grid supports.
pub const ALLOWED_SIZES: [usize; 4] = [4, 8, 12, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub selector: SelectorKind,
    /// Total number of patches.
    pub budget: usize,
    pub sizes: Vec<usize>,
    /// Most keypoint patches taken from one image.
    pub per_image_cap: usize,
    pub seed: u64,
    pub fast_threshold: f64,
    pub saliency_multiplier: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            selector: SelectorKind::Psghm,
            budget: 1500,
            sizes: ALLOWED_SIZES.to_vec(),
            per_image_cap: 128,
            seed: 0,
            fast_threshold: DEFAULT_THRESHOLD,
            saliency_multiplier: 2.0,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.budget >= 1, Config, "budget must be >= 1");
        ensure!(self.per_image_cap >= 1, Config, "per_image_cap must be >= 1");
        ensure!(!self.sizes.is_empty(), Config, "patch size list is empty");
        for (i, s) in self.sizes.iter().enumerate() {
            ensure!(
                ALLOWED_SIZES.contains(s),
                Config,
                "patch size {s} is not one of {ALLOWED_SIZES:?}"
            );
            ensure!(
                !self.sizes[..i].contains(s),
                Config,
                "patch size {s} listed twice"
            );
        }
        ensure!(
            self.fast_threshold > 0.0 && self.fast_threshold.is_finite(),
            Config,
            "fast_threshold must be positive, got {}",
            self.fast_threshold
        );
        ensure!(
            self.saliency_multiplier >= 0.0 && self.saliency_multiplier.is_finite(),
            Config,
            "saliency_multiplier must be non-negative, got {}",
            self.saliency_multiplier
        );
        Ok(())
    }
}

/// A training image and the identifier recorded in patch provenance.
#[derive(Clone, Debug)]
pub struct SourceImage {
    pub name: String,
    pub image: GrayImage,
}

impl SourceImage {
    pub fn new(name: impl Into<String>, image: GrayImage) -> Self {
        Self {
            name: name.into(),
            image,
        }
    }
}

/// Everything selection needs from one image. Reusable across trials.
#[derive(Clone, Debug)]
pub struct ImageAnalysis {
    pub name: String,
    pub c1: C1Stack,
    /// Present when the analysis was prepared for keypoint selection.
    pub mask: Option<SalientMask>,
    /// Score-descending.
    pub keypoints: Vec<Keypoint>,
}

/// Computes C1 and, for the keypoint selector, the salient mask and keypoints.
pub fn analyze(
    img: &SourceImage,
    fx: &FeatureExtractor,
    cfg: &SelectorConfig,
    with_keypoints: bool,
) -> Result<ImageAnalysis> {
    let mode = fx.config().s1_mode;
    if !with_keypoints {
        return Ok(ImageAnalysis {
            name: img.name.clone(),
            c1: fx.c1(&img.image)?,
            mask: None,
            keypoints: Vec::new(),
        });
    }
    let processing = fx.layers(&img.image, S1Mode::Oghm)?;
    let c1 = if mode == S1Mode::Oghm {
        fx.c1_from_layers(&processing)?
    } else {
        fx.c1(&img.image)?
    };
    let sal = spectral_residual(&img.image, img.image.width(), img.image.height())?;
    let mask = salient_region(&sal, cfg.saliency_multiplier);
    let mut keypoints = multiscale_keypoints(&processing, &mask, cfg.fast_threshold)?;
    // stable: equal scores keep (scale, orientation, position) order
    keypoints.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ImageAnalysis {
        name: img.name.clone(),
        c1,
        mask: Some(mask),
        keypoints,
    })
}

/// Analyzes every image in parallel; output order follows input order.
pub fn analyze_all(
    images: &[SourceImage],
    fx: &FeatureExtractor,
    cfg: &SelectorConfig,
    with_keypoints: bool,
) -> Result<Vec<ImageAnalysis>> {
    images
        .par_iter()
        .map(|img| analyze(img, fx, cfg, with_keypoints))
        .collect()
}

pub fn select_random(
    images: &[SourceImage],
    fx: &FeatureExtractor,
    cfg: &SelectorConfig,
) -> Result<PatchDictionary> {
    cfg.validate()?;
    ensure!(!images.is_empty(), Argument, "no training images");
    let analyses = analyze_all(images, fx, cfg, false)?;
    select_random_from(&analyses.iter().collect::<Vec<_>>(), cfg, &fx.config().fingerprint())
}

pub fn select_psghm(
    images: &[SourceImage],
    fx: &FeatureExtractor,
    cfg: &SelectorConfig,
) -> Result<PatchDictionary> {
    cfg.validate()?;
    ensure!(!images.is_empty(), Argument, "no training images");
    let analyses = analyze_all(images, fx, cfg, true)?;
    select_psghm_from(&analyses.iter().collect::<Vec<_>>(), cfg, &fx.config().fingerprint())
}

/// Dispatches on `cfg.selector`.
pub fn build_dictionary(
    images: &[SourceImage],
    fx: &FeatureExtractor,
    cfg: &SelectorConfig,
) -> Result<PatchDictionary> {
    match cfg.selector {
        SelectorKind::Random => select_random(images, fx, cfg),
        SelectorKind::Psghm => select_psghm(images, fx, cfg),
    }
}

/// Same as [`build_dictionary`] over precomputed analyses.
pub fn build_dictionary_from(
    analyses: &[&ImageAnalysis],
    cfg: &SelectorConfig,
    config_fingerprint: &str,
) -> Result<PatchDictionary> {
    match cfg.selector {
        SelectorKind::Random => select_random_from(analyses, cfg, config_fingerprint),
        SelectorKind::Psghm => select_psghm_from(analyses, cfg, config_fingerprint),
    }
}

/// Every configured size must fit some band of some image.
fn check_sizes(analyses: &[&ImageAnalysis], cfg: &SelectorConfig) -> Result<()> {
    ensure!(!analyses.is_empty(), Argument, "no training images");
    for &s in &cfg.sizes {
        let hosted = analyses
            .iter()
            .any(|a| a.c1.bands().iter().any(|b| b.hosts(s)));
        if !hosted {
            let (w, h) = analyses[0].c1.image_dims();
            return Err(Error::Config(format!(
                "patch size {s} has no valid position in any C1 band of the training images (first image {w}x{h})"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Slot {
    side: usize,
    band: usize,
    row: usize,
    col: usize,
}

/// Enumerates valid slots of one image, size-major then band, row, col.
fn all_slots(c1: &C1Stack, sizes: &[usize]) -> Vec<Slot> {
    let mut out = Vec::new();
    for &side in sizes {
        for (band, b) in c1.bands().iter().enumerate() {
            if !b.hosts(side) {
                continue;
            }
            for row in 0..=b.rows() - side {
                for col in 0..=b.cols() - side {
                    out.push(Slot { side, band, row, col });
                }
            }
        }
    }
    out
}

/// Image pixel at the center of a slot's window.
fn slot_center(c1: &C1Stack, s: &Slot) -> (usize, usize) {
    let stride = c1.band(s.band).band.stride;
    let (w, h) = c1.image_dims();
    let x = ((s.col * 2 + s.side) * stride / 2).min(w - 1);
    let y = ((s.row * 2 + s.side) * stride / 2).min(h - 1);
    (x, y)
}

fn extract(a: &ImageAnalysis, s: &Slot, kind: OriginKind) -> Result<Patch> {
    Patch::extract(&a.c1, s.band, s.row, s.col, s.side, a.name.clone(), kind)
}

/// Uniform over (size, band, row, col) of image `j mod I`, for each draw `j`.
pub fn select_random_from(
    analyses: &[&ImageAnalysis],
    cfg: &SelectorConfig,
    config_fingerprint: &str,
) -> Result<PatchDictionary> {
    cfg.validate()?;
    check_sizes(analyses, cfg)?;
    // Per image: cumulative position counts over (size, band).
    let tables: Vec<Vec<(usize, usize, usize)>> = analyses
        .iter()
        .map(|a| {
            let mut acc = 0;
            let mut t = Vec::new();
            for &side in &cfg.sizes {
                for (band, b) in a.c1.bands().iter().enumerate() {
                    let n = b.positions(side);
                    if n > 0 {
                        acc += n;
                        t.push((acc, side, band));
                    }
                }
            }
            t
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut patches = Vec::with_capacity(cfg.budget);
    for j in 0..cfg.budget {
        let i = j % analyses.len();
        let a = analyses[i];
        let t = &tables[i];
        let Some(&(total, _, _)) = t.last() else {
            return Err(Error::Config(format!(
                "training image {} ({}x{}) hosts none of the patch sizes {:?}",
                a.name,
                a.c1.image_dims().0,
                a.c1.image_dims().1,
                cfg.sizes
            )));
        };
        let mut k = rng.random_range(0..total);
        let pos = t.partition_point(|&(acc, _, _)| acc <= k);
        let (_, side, band) = t[pos];
        if pos > 0 {
            k -= t[pos - 1].0;
        }
        let b = a.c1.band(band);
        let span = b.cols() - side + 1;
        let slot = Slot {
            side,
            band,
            row: k / span,
            col: k % span,
        };
        patches.push(extract(a, &slot, OriginKind::Random)?);
    }
    PatchDictionary::new(patches, SelectorKind::Random, cfg.seed, config_fingerprint.to_string())
}

/// Keypoint candidates of one image in score order, then the fallbacks, so
/// that exactly `share` patches come out.
fn psghm_image(
    a: &ImageAnalysis,
    index: usize,
    share: usize,
    cfg: &SelectorConfig,
) -> Result<Vec<Patch>> {
    let mask = a
        .mask
        .as_ref()
        .ok_or_else(|| Error::Argument(format!("image {} was analyzed without keypoints", a.name)))?;
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(share);
    let limit = share.min(cfg.per_image_cap);
    let bands = a.c1.bands();

    'kp: for kp in &a.keypoints {
        let Some(band) = bands
            .iter()
            .position(|b| b.band.scales.0 == kp.scale_index || b.band.scales.1 == kp.scale_index)
        else {
            continue;
        };
        let b = &bands[band];
        let stride = b.band.stride as f64;
        let center_row = (kp.y as f64 / stride).round() as usize;
        let center_col = (kp.x as f64 / stride).round() as usize;
        for &side in &cfg.sizes {
            if out.len() >= limit {
                break 'kp;
            }
            if !b.hosts(side) {
                continue;
            }
            let slot = Slot {
                side,
                band,
                row: center_row.saturating_sub(side / 2).min(b.rows() - side),
                col: center_col.saturating_sub(side / 2).min(b.cols() - side),
            };
            let (cx, cy) = slot_center(&a.c1, &slot);
            if !mask.get(cx, cy) || !used.insert(slot) {
                continue;
            }
            out.push(extract(
                a,
                &slot,
                OriginKind::Keypoint {
                    x: kp.x,
                    y: kp.y,
                    scale_index: kp.scale_index,
                    theta: kp.theta,
                    score: kp.score,
                },
            )?);
        }
    }

    if out.len() < share {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "psghm-fallback", index as u64));
        let free: Vec<Slot> = all_slots(&a.c1, &cfg.sizes)
            .into_iter()
            .filter(|s| !used.contains(s))
            .collect();
        let (salient, rest): (Vec<Slot>, Vec<Slot>) = free.into_iter().partition(|s| {
            let (cx, cy) = slot_center(&a.c1, s);
            mask.get(cx, cy)
        });
        let need = share - out.len();
        ensure!(
            salient.len() + rest.len() >= need,
            Config,
            "training image {} offers only {} distinct patch positions, {} more needed",
            a.name,
            salient.len() + rest.len() + out.len(),
            need
        );
        let from_salient = need.min(salient.len());
        for i in sample(&mut rng, salient.len(), from_salient).into_iter() {
            let s = &salient[i];
            let (x, y) = slot_center(&a.c1, s);
            out.push(extract(a, s, OriginKind::SalientFallback { x, y })?);
        }
        let from_rest = need - from_salient;
        for i in sample(&mut rng, rest.len(), from_rest).into_iter() {
            out.push(extract(a, &rest[i], OriginKind::ImageFallback)?);
        }
        if from_salient + from_rest > 0 {
            log::debug!(
                "image {}: {} salient and {} whole-image fallback patches",
                a.name,
                from_salient,
                from_rest
            );
        }
    }
    Ok(out)
}

/// Keypoint-driven selection. The dictionary interleaves images by rank, so
/// its first `k` entries are the best `k` under the same allocation.
pub fn select_psghm_from(
    analyses: &[&ImageAnalysis],
    cfg: &SelectorConfig,
    config_fingerprint: &str,
) -> Result<PatchDictionary> {
    cfg.validate()?;
    check_sizes(analyses, cfg)?;
    let n = analyses.len();
    let per_image: Vec<Vec<Patch>> = analyses
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let share = cfg.budget / n + usize::from(i < cfg.budget % n);
            psghm_image(a, i, share, cfg)
        })
        .collect::<Result<_>>()?;
    let rounds = per_image.iter().map(Vec::len).max().unwrap_or(0);
    let mut iters: Vec<_> = per_image.into_iter().map(Vec::into_iter).collect();
    let mut patches = Vec::with_capacity(cfg.budget);
    for _ in 0..rounds {
        for it in iters.iter_mut() {
            if let Some(p) = it.next() {
                patches.push(p);
            }
        }
    }
    debug_assert_eq!(patches.len(), cfg.budget);
    PatchDictionary::new(patches, SelectorKind::Psghm, cfg.seed, config_fingerprint.to_string())
}

/// Keypoint versus fallback counts of a dictionary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceSummary {
    pub random: usize,
    pub keypoint: usize,
    pub salient_fallback: usize,
    pub image_fallback: usize,
}

impl ProvenanceSummary {
    pub fn of(dict: &PatchDictionary) -> Self {
        let mut s = Self::default();
        for p in dict.patches() {
            match p.origin.kind {
                OriginKind::Random => s.random += 1,
                OriginKind::Keypoint { .. } => s.keypoint += 1,
                OriginKind::SalientFallback { .. } => s.salient_fallback += 1,
                OriginKind::ImageFallback => s.image_fallback += 1,
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::FeatureConfig;

    fn textured(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        GrayImage::new(w, h, data).unwrap()
    }

    fn fx() -> FeatureExtractor {
        FeatureExtractor::new(FeatureConfig::default()).unwrap()
    }

    #[test]
    fn random_count_and_determinism() {
        let fx = fx();
        let imgs = vec![SourceImage::new("a", textured(64, 64, 1))];
        let cfg = SelectorConfig {
            selector: SelectorKind::Random,
            budget: 10,
            ..SelectorConfig::default()
        };
        let a = select_random(&imgs, &fx, &cfg).unwrap();
        let b = select_random(&imgs, &fx, &cfg).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        assert!(a.patches().iter().all(|p| p.origin.source == "a"));
    }

    #[test]
    fn oversized_patch_size_is_named() {
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let imgs = vec![SourceImage::new("tiny", textured(40, 40, 2))];
        let cfg = SelectorConfig {
            selector: SelectorKind::Random,
            budget: 3,
            sizes: vec![4, 16],
            ..SelectorConfig::default()
        };
        let err = select_random(&imgs, &fx, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("16"), "{err}");
    }

    #[test]
    fn config_validation() {
        let bad = [
            SelectorConfig { budget: 0, ..Default::default() },
            SelectorConfig { sizes: vec![5], ..Default::default() },
            SelectorConfig { sizes: vec![4, 4], ..Default::default() },
            SelectorConfig { per_image_cap: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn blank_image_uses_whole_image_fallback() {
        let fx = fx();
        let imgs = vec![SourceImage::new("blank", GrayImage::constant(64, 64, 0.5).unwrap())];
        let cfg = SelectorConfig { budget: 12, ..Default::default() };
        let d = select_psghm(&imgs, &fx, &cfg).unwrap();
        assert_eq!(d.len(), 12);
        assert!(d
            .patches()
            .iter()
            .all(|p| p.origin.kind == OriginKind::ImageFallback));
    }

    #[test]
    fn psghm_budget_and_uniqueness() {
        let fx = fx();
        let imgs: Vec<_> = (0..3)
            .map(|i| SourceImage::new(format!("img{i}"), textured(64, 64, 10 + i)))
            .collect();
        let cfg = SelectorConfig { budget: 31, ..Default::default() };
        let d = select_psghm(&imgs, &fx, &cfg).unwrap();
        assert_eq!(d.len(), 31);
        let mut seen = HashSet::new();
        for p in d.patches() {
            let o = &p.origin;
            assert!(seen.insert((o.source.clone(), p.side, o.band, o.row, o.col)));
        }
        let d2 = select_psghm(&imgs, &fx, &cfg).unwrap();
        assert_eq!(d, d2);
    }
}
