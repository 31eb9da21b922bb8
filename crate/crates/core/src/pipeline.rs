//! Feature-space configuration and the image -> C1 -> C2 path that every
//! selector and the experiment harness share.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::digest::Fingerprinter;
use crate::error::Result;
use crate::filterbank::{BackendPolicy, FilterBank, GaborBankSpec, LayerStack, OghmBankSpec, S1Mode};
use crate::hmax::{c1_layers, c2_features, BandSpec, C1Stack, FeatureVector, MatchConfig, PatchDictionary};
use crate::image::GrayImage;
use crate::learneval::SvmConfig;
use crate::patchselect::SelectorConfig;

/// Everything that determines the C1 space patches live in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub s1_mode: S1Mode,
    pub gabor: GaborBankSpec,
    pub oghm: OghmBankSpec,
    pub bands: BandSpec,
    pub matching: MatchConfig,
    pub backend: BackendPolicy,
}

impl FeatureConfig {
    pub fn with_mode(s1_mode: S1Mode) -> Self {
        Self {
            s1_mode,
            ..Self::default()
        }
    }

    /// Stable digest of the settings that affect feature values. The
    /// convolution backend is excluded: both backends agree numerically.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.backend = BackendPolicy::Direct;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Fingerprinter::new().bytes(json.as_bytes()).finish()
    }

    pub fn validate(&self) -> Result<()> {
        self.bands.validate()?;
        self.matching.validate()
    }
}

/// Every tunable of the pipeline. Missing keys take their defaults; unknown
/// keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub selector: SelectorConfig,
    pub svm: SvmConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.selector.validate()?;
        self.svm.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| crate::error::Error::Config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Holds lazily built filter banks for one [`FeatureConfig`].
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    gabor: OnceLock<FilterBank>,
    oghm: OnceLock<FilterBank>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        // Build eagerly once so parameter errors surface here.
        let this = Self {
            cfg,
            gabor: OnceLock::new(),
            oghm: OnceLock::new(),
        };
        this.bank(this.cfg.s1_mode)?;
        Ok(this)
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn bank(&self, mode: S1Mode) -> Result<&FilterBank> {
        let cell = match mode {
            S1Mode::Gabor => &self.gabor,
            S1Mode::Oghm => &self.oghm,
        };
        if let Some(b) = cell.get() {
            return Ok(b);
        }
        let bank = match mode {
            S1Mode::Gabor => FilterBank::gabor(&self.cfg.gabor, self.cfg.backend)?,
            S1Mode::Oghm => FilterBank::oghm(&self.cfg.oghm, self.cfg.backend)?,
        };
        Ok(cell.get_or_init(|| bank))
    }

    pub fn layers(&self, img: &GrayImage, mode: S1Mode) -> Result<LayerStack> {
        self.bank(mode)?.apply(img)
    }

    pub fn c1_from_layers(&self, layers: &LayerStack) -> Result<C1Stack> {
        c1_layers(layers, &self.cfg.bands)
    }

    pub fn c1(&self, img: &GrayImage) -> Result<C1Stack> {
        let layers = self.layers(img, self.cfg.s1_mode)?;
        self.c1_from_layers(&layers)
    }

    pub fn features(&self, img: &GrayImage, dict: &PatchDictionary) -> Result<FeatureVector> {
        c2_features(&self.c1(img)?, dict, &self.cfg.matching)
    }

    pub fn features_from_c1(&self, c1: &C1Stack, dict: &PatchDictionary) -> Result<FeatureVector> {
        c2_features(c1, dict, &self.cfg.matching)
    }
}
