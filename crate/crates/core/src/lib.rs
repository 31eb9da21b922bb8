//! Biologically inspired image features with saliency- and keypoint-driven
//! patch selection.
//!
//! The pipeline runs an S1 filter bank (Gabor or oriented Gaussian-Hermite
//! moments), C1 band max-pooling, S2 Gaussian patch matching and C2 global
//! maxima, followed by a linear SVM. Patch dictionaries are built either by
//! uniform random sampling or by keypoints detected inside the salient region.

pub mod digest;
pub mod error;
pub mod filterbank;
pub mod hmax;
pub mod image;
pub mod keypoints;
pub mod learneval;
pub mod patchselect;
pub mod pipeline;
pub mod saliency;
pub mod synth;

pub use error::{Error, Result};
pub use filterbank::{
    convolve, processing_layers, s1_layers, Backend, BackendPolicy, FilterBank, GaborBankSpec,
    Kernel, LayerStack, OghmBankSpec, S1Mode,
};
pub use image::{load_image, GrayImage, Plane};
pub use hmax::{
    c1_layers, c2_features, BandSpec, C1Stack, FeatureVector, MatchConfig, OriginKind, Patch,
    PatchDictionary, PatchOrigin, SelectorKind,
};
pub use learneval::{
    metrics, roc, run_experiment, train_svm, ConfusionCounts, ExperimentConfig, LinearModel,
    Metrics, Report, RocSummary, SvmConfig,
};
pub use patchselect::{
    build_dictionary, load_dictionary, save_dictionary, select_psghm, select_random,
    SelectorConfig, SourceImage,
};
pub use pipeline::{FeatureConfig, FeatureExtractor, PipelineConfig};
pub use saliency::{salient_region, spectral_residual, SaliencyMap, SalientMask};
