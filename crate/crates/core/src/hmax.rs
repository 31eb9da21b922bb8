//! C1 band pooling, S2 Gaussian patch matching and C2 global maxima.

use serde::{Deserialize, Serialize};

use crate::digest::Fingerprinter;
use crate::error::{ensure, Error, Result};
use crate::filterbank::{LayerStack, S1Mode};
use crate::image::Plane;

/// One C1 band: the pair of S1 scales it pools and its window geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    /// Zero-based S1 scale indices pooled together.
    pub scales: (usize, usize),
    pub grid: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandSpec {
    pub bands: Vec<Band>,
}

impl Default for BandSpec {
    /// Eight bands over sixteen scales; grids 8, 10, ..., 22 with half-grid strides.
    fn default() -> Self {
        let bands = (0..8)
            .map(|b| {
                let grid = 8 + 2 * b;
                Band {
                    scales: (2 * b, 2 * b + 1),
                    grid,
                    stride: grid / 2,
                }
            })
            .collect();
        Self { bands }
    }
}

impl BandSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.bands.is_empty(), Config, "band table is empty");
        for (i, b) in self.bands.iter().enumerate() {
            ensure!(b.stride >= 1, Config, "band {i}: stride must be >= 1");
            ensure!(
                b.grid >= b.stride,
                Config,
                "band {i}: grid {} smaller than stride {}",
                b.grid,
                b.stride
            );
        }
        Ok(())
    }
}

/// Pooled maps of one band, one per orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct C1Band {
    pub band: Band,
    maps: Vec<Plane>,
}

impl C1Band {
    pub fn rows(&self) -> usize {
        self.maps[0].height()
    }

    pub fn cols(&self) -> usize {
        self.maps[0].width()
    }

    pub fn map(&self, orientation: usize) -> &Plane {
        &self.maps[orientation]
    }

    pub fn maps(&self) -> &[Plane] {
        &self.maps
    }

    pub fn hosts(&self, side: usize) -> bool {
        side <= self.rows() && side <= self.cols()
    }

    /// Number of valid top-left anchors for a patch of `side` cells.
    pub fn positions(&self, side: usize) -> usize {
        if !self.hosts(side) {
            return 0;
        }
        (self.rows() - side + 1) * (self.cols() - side + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct C1Stack {
    bands: Vec<C1Band>,
    orientations: usize,
    mode: S1Mode,
    image_width: usize,
    image_height: usize,
    source: String,
}

impl C1Stack {
    pub fn bands(&self) -> &[C1Band] {
        &self.bands
    }

    pub fn band(&self, i: usize) -> &C1Band {
        &self.bands[i]
    }

    pub fn num_orientations(&self) -> usize {
        self.orientations
    }

    pub fn mode(&self) -> S1Mode {
        self.mode
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_width, self.image_height)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Copies the `side x side x orientations` window with top-left `(row, col)`
    /// in orientation-major order.
    pub fn window(&self, band: usize, row: usize, col: usize, side: usize) -> Result<Vec<f64>> {
        let b = self
            .bands
            .get(band)
            .ok_or_else(|| Error::Argument(format!("band {band} out of range")))?;
        ensure!(
            row + side <= b.rows() && col + side <= b.cols(),
            Argument,
            "window {side}x{side} at ({row}, {col}) exceeds band {band} ({}x{})",
            b.rows(),
            b.cols()
        );
        let mut out = Vec::with_capacity(side * side * self.orientations);
        for map in &b.maps {
            for r in row..row + side {
                out.extend_from_slice(&map.row(r)[col..col + side]);
            }
        }
        Ok(out)
    }

    /// Overwrites a window; lets tests plant known content.
    pub fn write_window(
        &mut self,
        band: usize,
        row: usize,
        col: usize,
        side: usize,
        values: &[f64],
    ) -> Result<()> {
        ensure!(
            values.len() == side * side * self.orientations,
            Argument,
            "window payload has {} values, expected {}",
            values.len(),
            side * side * self.orientations
        );
        // bounds check through window()
        self.window(band, row, col, side)?;
        let b = &mut self.bands[band];
        let mut it = values.iter();
        for map in &mut b.maps {
            for r in row..row + side {
                for c in col..col + side {
                    map.set(c, r, *it.next().expect("length checked"));
                }
            }
        }
        Ok(())
    }
}

/// Start and end (exclusive) of each pooling window along one axis.
fn windows(len: usize, grid: usize, stride: usize) -> Vec<(usize, usize)> {
    (0..len.div_ceil(stride))
        .map(|i| {
            let start = i * stride;
            (start, (start + grid).min(len))
        })
        .collect()
}

/// Max over the grid x grid windows at stride offsets, and over both scales
/// of the band. Windows are truncated at image borders.
pub fn c1_layers(s1: &LayerStack, spec: &BandSpec) -> Result<C1Stack> {
    spec.validate()?;
    let (w, h) = (s1.width(), s1.height());
    let n_or = s1.num_orientations();
    let mut bands = Vec::with_capacity(spec.bands.len());
    for (bi, band) in spec.bands.iter().enumerate() {
        let (a, b) = band.scales;
        ensure!(
            a < s1.num_scales() && b < s1.num_scales(),
            Argument,
            "band {bi} pools scales ({a}, {b}) but the stack has {} scales",
            s1.num_scales()
        );
        let xw = windows(w, band.grid, band.stride);
        let yw = windows(h, band.grid, band.stride);
        let mut maps = Vec::with_capacity(n_or);
        for o in 0..n_or {
            let ma = s1.map(a, o);
            let mb = s1.map(b, o);
            // horizontal pass over the element-wise max of both scales
            let mut horiz = vec![0.0f64; xw.len() * h];
            for y in 0..h {
                let (ra, rb) = (ma.row(y), mb.row(y));
                for (ci, &(x0, x1)) in xw.iter().enumerate() {
                    let mut m = f64::NEG_INFINITY;
                    for x in x0..x1 {
                        m = m.max(ra[x]).max(rb[x]);
                    }
                    horiz[y * xw.len() + ci] = m;
                }
            }
            let pooled = Plane::from_fn(xw.len(), yw.len(), |ci, ri| {
                let (y0, y1) = yw[ri];
                (y0..y1)
                    .map(|y| horiz[y * xw.len() + ci])
                    .fold(f64::NEG_INFINITY, f64::max)
            });
            maps.push(pooled);
        }
        bands.push(C1Band { band: *band, maps });
    }
    Ok(C1Stack {
        bands,
        orientations: n_or,
        mode: s1.mode(),
        image_width: w,
        image_height: h,
        source: s1.source().to_string(),
    })
}

/// How a dictionary entry was chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OriginKind {
    /// Uniform random draw over valid positions.
    Random,
    /// Centered on a detected keypoint (layer pixel coordinates).
    Keypoint {
        x: usize,
        y: usize,
        scale_index: usize,
        theta: f64,
        score: f64,
    },
    /// Random position whose center maps inside the salient region.
    SalientFallback { x: usize, y: usize },
    /// Random position anywhere in the image.
    ImageFallback,
}

impl OriginKind {
    pub fn is_fallback(&self) -> bool {
        matches!(
            self,
            OriginKind::SalientFallback { .. } | OriginKind::ImageFallback
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub band: usize,
    pub row: usize,
    pub col: usize,
    /// Training image identifier (index or path).
    pub source: String,
    #[serde(flatten)]
    pub kind: OriginKind,
}

/// A stored C1 prototype of `side x side` cells across all orientations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub side: usize,
    pub orientations: usize,
    /// Orientation-major: `values[(o * side + r) * side + c]`.
    pub values: Vec<f64>,
    pub origin: PatchOrigin,
}

impl Patch {
    pub fn new(side: usize, orientations: usize, values: Vec<f64>, origin: PatchOrigin) -> Result<Self> {
        ensure!(side >= 1 && orientations >= 1, Argument, "patch must be non-empty");
        ensure!(
            values.len() == side * side * orientations,
            Argument,
            "patch has {} values, expected {}",
            values.len(),
            side * side * orientations
        );
        ensure!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            Argument,
            "patch values must be finite and non-negative"
        );
        Ok(Self {
            side,
            orientations,
            values,
            origin,
        })
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Cuts a patch out of a C1 stack.
    pub fn extract(c1: &C1Stack, band: usize, row: usize, col: usize, side: usize, source: String, kind: OriginKind) -> Result<Self> {
        let values = c1.window(band, row, col, side)?;
        Patch::new(
            side,
            c1.num_orientations(),
            values,
            PatchOrigin {
                band,
                row,
                col,
                source,
                kind,
            },
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    #[default]
    Random,
    Psghm,
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectorKind::Random => "random",
            SelectorKind::Psghm => "psghm",
        })
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(SelectorKind::Random),
            "psghm" => Ok(SelectorKind::Psghm),
            other => Err(format!("unknown selector `{other}` (expected random or psghm)")),
        }
    }
}

/// Ordered patch vocabulary; the order fixes the C2 feature order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDictionary {
    patches: Vec<Patch>,
    selector: SelectorKind,
    seed: u64,
    config_fingerprint: String,
    fingerprint: String,
}

impl PatchDictionary {
    pub fn new(
        patches: Vec<Patch>,
        selector: SelectorKind,
        seed: u64,
        config_fingerprint: String,
    ) -> Result<Self> {
        ensure!(!patches.is_empty(), Argument, "patch dictionary is empty");
        let mut fp = Fingerprinter::new();
        fp.bytes(selector.to_string().as_bytes())
            .u64(seed)
            .bytes(config_fingerprint.as_bytes());
        for p in &patches {
            fp.u64(p.side as u64).u64(p.orientations as u64).f64s(&p.values);
        }
        let fingerprint = fp.finish();
        Ok(Self {
            patches,
            selector,
            seed,
            config_fingerprint,
            fingerprint,
        })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn selector(&self) -> SelectorKind {
        self.selector
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    /// Identifies the feature space this dictionary defines.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// The first `k` patches as a dictionary of their own.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        ensure!(
            k >= 1 && k <= self.patches.len(),
            Argument,
            "cannot truncate a {}-patch dictionary to {k}",
            self.patches.len()
        );
        Self::new(
            self.patches[..k].to_vec(),
            self.selector,
            self.seed,
            self.config_fingerprint.clone(),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Fixed sharpness for every patch size; `None` uses `1 / (2 n^2 o)`.
    pub beta: Option<f64>,
}

impl MatchConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta: Some(beta) }
    }

    pub fn beta_for(&self, side: usize, orientations: usize) -> f64 {
        self.beta
            .unwrap_or_else(|| 1.0 / (2.0 * (side * side * orientations) as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.beta {
            ensure!(b > 0.0 && b.is_finite(), Config, "beta must be positive, got {b}");
        }
        Ok(())
    }
}

/// Gaussian similarity `exp(-beta * ||window - patch||^2)`.
pub fn s2_response(window: &[f64], patch: &Patch, cfg: &MatchConfig) -> Result<f64> {
    ensure!(
        window.len() == patch.values.len(),
        Argument,
        "window has {} values but patch has {}",
        window.len(),
        patch.values.len()
    );
    let d2: f64 = window
        .iter()
        .zip(&patch.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(similarity(cfg.beta_for(patch.side, patch.orientations), d2))
}

/// `exp(-beta d2)`, floored at the smallest positive normal so that the
/// response never underflows to zero.
fn similarity(beta: f64, d2: f64) -> f64 {
    (-beta * d2).exp().max(f64::MIN_POSITIVE)
}

/// Length-N C2 vector tied to the dictionary that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub fingerprint: String,
    /// Patches that no band could host; their value is the distance to an empty window.
    pub unhosted: Vec<usize>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, fingerprint: impl Into<String>) -> Self {
        Self {
            values,
            fingerprint: fingerprint.into(),
            unhosted: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `k` features.
    pub fn truncated(&self, k: usize, fingerprint: impl Into<String>) -> FeatureVector {
        FeatureVector {
            values: self.values[..k].to_vec(),
            fingerprint: fingerprint.into(),
            unhosted: self.unhosted.iter().copied().filter(|&i| i < k).collect(),
        }
    }
}

/// Smallest squared distance between `patch` and any window of `band`.
fn min_distance_in_band(band: &C1Band, patch: &Patch, mut best: f64) -> f64 {
    let n = patch.side;
    if !band.hosts(n) || band.maps.len() != patch.orientations {
        return best;
    }
    for r in 0..=band.rows() - n {
        for c in 0..=band.cols() - n {
            let mut d2 = 0.0;
            'sum: for (o, map) in band.maps.iter().enumerate() {
                let pv = &patch.values[o * n * n..(o + 1) * n * n];
                for i in 0..n {
                    let row = &map.row(r + i)[c..c + n];
                    for (a, b) in row.iter().zip(&pv[i * n..(i + 1) * n]) {
                        d2 += (a - b) * (a - b);
                    }
                    if d2 >= best {
                        break 'sum;
                    }
                }
            }
            if d2 < best {
                best = d2;
            }
        }
    }
    best
}

/// Global maximum of S2 responses over every position of every band, per patch.
pub fn c2_features(c1: &C1Stack, dict: &PatchDictionary, cfg: &MatchConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    ensure!(!dict.is_empty(), Argument, "patch dictionary is empty");
    let mut values = Vec::with_capacity(dict.len());
    let mut unhosted = Vec::new();
    for (i, patch) in dict.patches().iter().enumerate() {
        ensure!(
            patch.orientations == c1.num_orientations(),
            Argument,
            "patch {i} has {} orientations, C1 stack has {}",
            patch.orientations,
            c1.num_orientations()
        );
        let hosted = c1.bands().iter().any(|b| b.hosts(patch.side));
        let d2 = if hosted {
            c1.bands()
                .iter()
                .fold(f64::INFINITY, |best, b| min_distance_in_band(b, patch, best))
        } else {
            log::warn!(
                "patch {i} (side {}) fits no C1 band of a {}x{} image",
                patch.side,
                c1.image_width,
                c1.image_height
            );
            unhosted.push(i);
            patch.squared_norm()
        };
        values.push(similarity(cfg.beta_for(patch.side, patch.orientations), d2));
    }
    Ok(FeatureVector {
        values,
        fingerprint: dict.fingerprint().to_string(),
        unhosted,
    })
}
