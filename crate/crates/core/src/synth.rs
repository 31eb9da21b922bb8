//! Generated two-class scenes: cluttered backgrounds with or without a
//! high-contrast textured glyph.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::error::{ensure, Error, Result};
use crate::image::{save_image, GrayImage, Plane};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub size: usize,
    /// Glyph radius range in pixels.
    pub glyph_radius: (f64, f64),
    /// Peak-to-peak contrast of the glyph texture.
    pub glyph_contrast: (f64, f64),
    pub stripe_period: (f64, f64),
    /// Number of clutter strokes and smudges.
    pub clutter: usize,
    pub clutter_contrast: (f64, f64),
    pub noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            size: 64,
            glyph_radius: (9.0, 13.0),
            glyph_contrast: (0.35, 0.5),
            stripe_period: (3.5, 5.0),
            clutter: 8,
            clutter_contrast: (0.05, 0.15),
            noise: 0.02,
        }
    }
}

/// A generated image and, for glyph scenes, the glyph bounding box
/// `(x0, y0, x1, y1)` with exclusive upper bounds.
#[derive(Clone, Debug)]
pub struct Scene {
    pub image: GrayImage,
    pub bbox: Option<(usize, usize, usize, usize)>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn background(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Plane {
    let n = cfg.size;
    let nf = n as f64;
    let base = rng.random_range(0.35..0.65);
    let mut p = Plane::filled(n, n, base);
    // broad shading
    for _ in 0..3 {
        let (cx, cy) = (rng.random_range(0.0..nf), rng.random_range(0.0..nf));
        let s = rng.random_range(0.25 * nf..0.6 * nf);
        let a = rng.random_range(-0.08..0.08);
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = p.get(x, y) + a * (-d2 / (2.0 * s * s)).exp();
                p.set(x, y, v);
            }
        }
    }
    // low-contrast strokes and smudges
    for i in 0..cfg.clutter {
        let c = rng.random_range(cfg.clutter_contrast.0..=cfg.clutter_contrast.1)
            * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (cx, cy) = (rng.random_range(0.0..nf), rng.random_range(0.0..nf));
        if i % 2 == 0 {
            let th = rng.random_range(0.0..std::f64::consts::PI);
            let half = rng.random_range(4.0..12.0);
            let width = rng.random_range(0.7..1.5);
            let (dx, dy) = (th.cos(), th.sin());
            for y in 0..n {
                for x in 0..n {
                    let (rx, ry) = (x as f64 - cx, y as f64 - cy);
                    let along = rx * dx + ry * dy;
                    let across = -rx * dy + ry * dx;
                    if along.abs() <= half && across.abs() <= width {
                        p.set(x, y, p.get(x, y) + c);
                    }
                }
            }
        } else {
            let s = rng.random_range(2.0..5.0);
            for y in 0..n {
                for x in 0..n {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    p.set(x, y, p.get(x, y) + c * (-d2 / (2.0 * s * s)).exp());
                }
            }
        }
    }
    p
}

fn finish(mut p: Plane, rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> GrayImage {
    for v in p.data_mut() {
        *v += cfg.noise * gaussian(rng);
    }
    GrayImage::from_plane_clamped(p)
}

fn check(cfg: &SceneConfig) -> Result<()> {
    ensure!(cfg.size >= 32, Config, "scene size must be >= 32, got {}", cfg.size);
    let (r0, r1) = cfg.glyph_radius;
    ensure!(
        r0 >= 2.0 && r0 <= r1 && 2.0 * r1 + 4.0 < cfg.size as f64,
        Config,
        "glyph radius range {r0}..{r1} does not fit a {} px scene",
        cfg.size
    );
    for (name, (a, b)) in [
        ("glyph_contrast", cfg.glyph_contrast),
        ("stripe_period", cfg.stripe_period),
        ("clutter_contrast", cfg.clutter_contrast),
    ] {
        ensure!(a >= 0.0 && a <= b, Config, "{name} range {a}..{b} is invalid");
    }
    ensure!(cfg.stripe_period.0 >= 2.0, Config, "stripe period must be >= 2 px");
    Ok(())
}

pub fn background_scene(seed: u64, cfg: &SceneConfig) -> Result<Scene> {
    check(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = background(&mut rng, cfg);
    Ok(Scene {
        image: finish(p, &mut rng, cfg),
        bbox: None,
    })
}

/// Background plus a striped disc or checkered square.
pub fn glyph_scene(seed: u64, cfg: &SceneConfig) -> Result<Scene> {
    check(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = background(&mut rng, cfg);
    let n = cfg.size as f64;
    let r = rng.random_range(cfg.glyph_radius.0..=cfg.glyph_radius.1);
    let margin = r + 2.0;
    let cx = rng.random_range(margin..n - margin);
    let cy = rng.random_range(margin..n - margin);
    let contrast = rng.random_range(cfg.glyph_contrast.0..=cfg.glyph_contrast.1);
    let period = rng.random_range(cfg.stripe_period.0..=cfg.stripe_period.1);
    let th = rng.random_range(0.0..std::f64::consts::PI);
    let disc = rng.random_bool(0.5);
    let mid = p.mean();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let (rx, ry) = (x as f64 - cx, y as f64 - cy);
            let inside = if disc {
                rx * rx + ry * ry <= r * r
            } else {
                rx.abs() <= r * 0.85 && ry.abs() <= r * 0.85
            };
            if !inside {
                continue;
            }
            let u = rx * th.cos() + ry * th.sin();
            let wave = if disc {
                (std::f64::consts::TAU * u / period).sin().signum()
            } else {
                let v = -rx * th.sin() + ry * th.cos();
                ((std::f64::consts::TAU * u / (2.0 * period)).sin()
                    * (std::f64::consts::TAU * v / (2.0 * period)).sin())
                .signum()
            };
            p.set(x, y, mid + 0.5 * contrast * wave);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    Ok(Scene {
        image: finish(p, &mut rng, cfg),
        bbox: Some((x0, y0, x1, y1)),
    })
}

/// Writes `root/<class>/glyph_NNN.png` and `root/background/background_NNN.png`.
pub fn write_dataset(
    root: &Path,
    class: &str,
    positives: usize,
    negatives: usize,
    seed: u64,
    cfg: &SceneConfig,
) -> Result<()> {
    let pos_dir = root.join(class);
    let neg_dir = root.join("background");
    for d in [&pos_dir, &neg_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for i in 0..positives {
        let s = glyph_scene(derive_seed(seed, "glyph", i as u64), cfg)?;
        save_image(pos_dir.join(format!("glyph_{i:03}.png")), &s.image)?;
    }
    for i in 0..negatives {
        let s = background_scene(derive_seed(seed, "background", i as u64), cfg)?;
        save_image(neg_dir.join(format!("background_{i:03}.png")), &s.image)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let cfg = SceneConfig::default();
        let a = glyph_scene(5, &cfg).unwrap();
        let b = glyph_scene(5, &cfg).unwrap();
        assert_eq!(a.image, b.image);
        let (x0, y0, x1, y1) = a.bbox.unwrap();
        assert!(x0 < x1 && y0 < y1 && x1 <= 64 && y1 <= 64);
        assert!(background_scene(5, &cfg).unwrap().bbox.is_none());
    }

    #[test]
    fn glyph_raises_local_contrast() {
        let cfg = SceneConfig::default();
        let s = glyph_scene(11, &cfg).unwrap();
        let (x0, y0, x1, y1) = s.bbox.unwrap();
        let vals: Vec<f64> = (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (x, y)))
            .map(|(x, y)| s.image.get(x, y))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!(sd > 0.1, "glyph std {sd}");
    }
}
