//! FAST-9 segment-test corners on oriented multi-scale layers, restricted to
//! the salient region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::filterbank::LayerStack;
use crate::image::Plane;
use crate::saliency::SalientMask;

/// Bresenham circle of radius 3, clockwise from twelve o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum contiguous arc length.
pub const ARC_LENGTH: usize = 9;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub scale_index: usize,
    pub theta: f64,
    pub score: f64,
}

/// Segment-test score at `(x, y)`, or `None` when the pixel is not a corner.
///
/// The score sums `|circle - center|` over the qualifying arc.
fn segment_score(map: &Plane, x: usize, y: usize, t: f64) -> Option<f64> {
    let c = map.get(x, y);
    let mut ring = [0.0f64; 16];
    let mut class = [0i8; 16];
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = map.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        ring[i] = v;
        class[i] = if v > c + t {
            1
        } else if v < c - t {
            -1
        } else {
            0
        };
    }
    for sign in [1i8, -1] {
        if class.iter().all(|&k| k == sign) {
            return Some(ring.iter().map(|v| (v - c).abs()).sum());
        }
        // Longest circular run: start scanning right after a non-member.
        let Some(start) = (0..16).find(|&i| class[i] != sign) else {
            continue;
        };
        let mut i = 0;
        while i < 16 {
            let idx = (start + 1 + i) % 16;
            if class[idx] != sign {
                i += 1;
                continue;
            }
            let mut len = 0;
            let mut member = [false; 16];
            while i + len < 16 && class[(start + 1 + i + len) % 16] == sign {
                member[(start + 1 + i + len) % 16] = true;
                len += 1;
            }
            if len >= ARC_LENGTH {
                // summed in circle order so the score does not depend on where the arc starts
                let sum = (0..16)
                    .filter(|&k| member[k])
                    .map(|k| (ring[k] - c).abs())
                    .sum();
                return Some(sum);
            }
            i += len;
        }
    }
    None
}

/// FAST-9 with 3x3 non-maximum suppression. A corner survives unless one of
/// its eight neighbors scores strictly higher.
pub fn fast_detect(map: &Plane, t: f64) -> Result<Vec<Corner>> {
    ensure!(
        map.width() >= 7 && map.height() >= 7,
        Argument,
        "FAST needs at least a 7x7 map, got {}x{}",
        map.width(),
        map.height()
    );
    ensure!(t > 0.0 && t.is_finite(), Argument, "FAST threshold must be positive, got {t}");
    let (w, h) = (map.width(), map.height());
    let mut scores = vec![0.0f64; w * h];
    let mut found = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(s) = segment_score(map, x, y, t) {
                scores[y * w + x] = s;
                found.push((x, y));
            }
        }
    }
    let corners = found
        .into_iter()
        .filter_map(|(x, y)| {
            let s = scores[y * w + x];
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if (nx, ny) != (x, y) && scores[ny * w + nx] > s {
                        return None;
                    }
                }
            }
            Some(Corner { x, y, score: s })
        })
        .collect();
    Ok(corners)
}

/// Runs FAST on every min-max normalized layer, keeps corners inside the
/// mask and tags them with the layer's scale and orientation.
///
/// Output order: scale, then orientation, then score descending.
pub fn multiscale_keypoints(layers: &LayerStack, mask: &SalientMask, t: f64) -> Result<Vec<Keypoint>> {
    ensure!(
        layers.source() == mask.source(),
        Argument,
        "salient mask (source {}) was not computed from the layer stack's image (source {})",
        mask.source(),
        layers.source()
    );
    let mask = mask.resized(layers.width(), layers.height());
    let jobs: Vec<(usize, usize)> = (0..layers.num_scales())
        .flat_map(|s| (0..layers.num_orientations()).map(move |o| (s, o)))
        .collect();
    let per_layer = jobs
        .par_iter()
        .map(|&(s, o)| {
            let theta = layers.orientations()[o];
            let normalized = layers.map(s, o).min_max_normalized();
            let mut kps: Vec<Keypoint> = fast_detect(&normalized, t)?
                .into_iter()
                .filter(|c| mask.get(c.x, c.y))
                .map(|c| Keypoint {
                    x: c.x,
                    y: c.y,
                    scale_index: layers.scales()[s].index,
                    theta,
                    score: c.score,
                })
                .collect();
            kps.sort_by(|a, b| b.score.total_cmp(&a.score));
            Ok(kps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_layer.into_iter().flatten().collect())
}
