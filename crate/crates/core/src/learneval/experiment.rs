//! Multi-trial present/absent experiments over a class-per-directory dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_with, roc, ConfusionCounts, Metrics, PrecisionDenominator, RocSummary};
use super::svm::{train_svm, SvmConfig};
use crate::digest::derive_seed;
use crate::error::{ensure, Error, Result};
use crate::hmax::{c2_features, FeatureVector, SelectorKind};
use crate::image::{load_image, GrayImage};
use crate::patchselect::{analyze, build_dictionary_from, ImageAnalysis, ProvenanceSummary, SourceImage};
use crate::pipeline::{FeatureExtractor, PipelineConfig};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

fn default_background() -> String {
    "background".into()
}
fn default_15() -> usize {
    15
}
fn default_50() -> usize {
    50
}
fn default_trials() -> usize {
    10
}
fn default_sweep() -> Vec<usize> {
    vec![5, 10, 25]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    /// Each class is evaluated separately against the background images.
    pub positive_classes: Vec<String>,
    #[serde(default = "default_background")]
    pub background_class: String,
    #[serde(default = "default_15")]
    pub train_positives: usize,
    #[serde(default = "default_15")]
    pub train_negatives: usize,
    #[serde(default = "default_50")]
    pub test_positives: usize,
    #[serde(default = "default_50")]
    pub test_negatives: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Feature counts evaluated by truncating the dictionary.
    #[serde(default = "default_sweep")]
    pub sweep: Vec<usize>,
    #[serde(default)]
    pub master_seed: u64,
    /// Downscale images whose larger side exceeds this.
    #[serde(default)]
    pub max_side: Option<usize>,
    #[serde(default)]
    pub precision_denominator: PrecisionDenominator,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn new(dataset_root: impl Into<PathBuf>, positive_classes: Vec<String>) -> Self {
        Self {
            dataset_root: dataset_root.into(),
            positive_classes,
            background_class: default_background(),
            train_positives: 15,
            train_negatives: 15,
            test_positives: 50,
            test_negatives: 50,
            trials: 10,
            sweep: default_sweep(),
            master_seed: 0,
            max_side: None,
            precision_denominator: PrecisionDenominator::default(),
            pipeline: PipelineConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        ensure!(!self.positive_classes.is_empty(), Config, "no positive classes");
        for c in &self.positive_classes {
            ensure!(
                *c != self.background_class,
                Config,
                "class `{c}` is also the background class"
            );
        }
        for (name, v) in [
            ("train_positives", self.train_positives),
            ("train_negatives", self.train_negatives),
            ("test_positives", self.test_positives),
            ("test_negatives", self.test_negatives),
            ("trials", self.trials),
        ] {
            ensure!(v >= 1, Config, "{name} must be >= 1");
        }
        ensure!(!self.sweep.is_empty(), Config, "feature-count sweep is empty");
        let budget = self.pipeline.selector.budget;
        for &k in &self.sweep {
            ensure!(
                k >= 1 && k <= budget,
                Config,
                "sweep value {k} is outside 1..={budget} (the dictionary budget)"
            );
        }
        if let Some(s) = self.max_side {
            ensure!(s >= 16, Config, "max_side must be >= 16, got {s}");
        }
        Ok(())
    }
}

/// Lists image files of a directory in name order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ok = path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)));
        if ok {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_class(root: &Path, class: &str, max_side: Option<usize>) -> Result<Vec<SourceImage>> {
    let dir = root.join(class);
    let paths = list_images(&dir)?;
    paths
        .par_iter()
        .map(|p| {
            let mut img: GrayImage = load_image(p)?;
            if let Some(s) = max_side {
                if img.width().max(img.height()) > s {
                    img = img.resize_max_side(s)?;
                }
            }
            let file = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(SourceImage::new(format!("{class}/{file}"), img))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two values.
    pub std: Option<f64>,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k: usize,
    pub confusion: ConfusionCounts,
    pub metrics: Metrics,
    pub roc: RocSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub class: String,
    pub trial: usize,
    pub seed: u64,
    pub dictionary_fingerprint: String,
    pub provenance: ProvenanceSummary,
    pub train_images: Vec<String>,
    pub test_images: Vec<String>,
    pub results: Vec<SweepResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub class: String,
    pub k: usize,
    pub classification_rate: Option<Stat>,
    pub recall: Option<Stat>,
    pub one_minus_precision: Option<Stat>,
    pub auc: Option<Stat>,
    pub eer_detection_rate: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledRoc {
    pub class: String,
    pub k: usize,
    pub roc: RocSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
    pub pooled_roc: Vec<PooledRoc>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `class,k,mean,std` rows of the classification rate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,k,mean,std\n");
        for a in &self.aggregates {
            let (mean, std) = match a.classification_rate {
                Some(s) => (format!("{}", s.mean), s.std.map(|v| v.to_string()).unwrap_or_default()),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{},{},{mean},{std}", a.class, a.k).expect("string write");
        }
        out
    }

    pub fn aggregate(&self, class: &str, k: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.class == class && a.k == k)
    }
}

/// Lazily analyzed images of one pool.
struct Pool<'a> {
    images: Vec<SourceImage>,
    analyses: Vec<Option<ImageAnalysis>>,
    keypoints: bool,
    fx: &'a FeatureExtractor,
    cfg: &'a PipelineConfig,
}

impl<'a> Pool<'a> {
    fn new(images: Vec<SourceImage>, keypoints: bool, fx: &'a FeatureExtractor, cfg: &'a PipelineConfig) -> Self {
        let analyses = vec![None; images.len()];
        Self {
            images,
            analyses,
            keypoints,
            fx,
            cfg,
        }
    }

    fn ensure(&mut self, indices: &[usize]) -> Result<()> {
        let missing: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| self.analyses[i].is_none())
            .collect();
        let (fx, cfg, kp, imgs) = (self.fx, self.cfg, self.keypoints, &self.images);
        let done: Vec<ImageAnalysis> = missing
            .par_iter()
            .map(|&i| analyze(&imgs[i], fx, &cfg.selector, kp))
            .collect::<Result<_>>()?;
        for (i, a) in missing.into_iter().zip(done) {
            self.analyses[i] = Some(a);
        }
        Ok(())
    }

    fn get(&self, i: usize) -> &ImageAnalysis {
        self.analyses[i].as_ref().expect("analysis prepared")
    }
}

fn check_shortfall(class: &str, have: usize, train: usize, test: usize) -> Result<()> {
    ensure!(
        have >= train + test,
        Config,
        "class `{class}` has {have} images but {train} training + {test} test are requested (short by {})",
        train + test - have
    );
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let fx = FeatureExtractor::new(cfg.pipeline.features.clone())?;
    let background = load_class(&cfg.dataset_root, &cfg.background_class, cfg.max_side)?;
    check_shortfall(
        &cfg.background_class,
        background.len(),
        cfg.train_negatives,
        cfg.test_negatives,
    )?;
    let mut negatives = Pool::new(background, false, &fx, &cfg.pipeline);
    let keypoints = cfg.pipeline.selector.selector == SelectorKind::Psghm;

    let mut trials = Vec::new();
    let mut aggregates = Vec::new();
    let mut pooled_roc = Vec::new();
    for (ci, class) in cfg.positive_classes.iter().enumerate() {
        let images = load_class(&cfg.dataset_root, class, cfg.max_side)?;
        check_shortfall(class, images.len(), cfg.train_positives, cfg.test_positives)?;
        let mut positives = Pool::new(images, keypoints, &fx, &cfg.pipeline);
        let mut class_trials = Vec::with_capacity(cfg.trials);
        for t in 0..cfg.trials {
            let seed = derive_seed(cfg.master_seed, "trial", t as u64);
            let r = run_trial(cfg, &fx, class, ci, t, seed, &mut positives, &mut negatives)?;
            log::info!("class {class} trial {t} done");
            class_trials.push(r);
        }
        for (si, &k) in cfg.sweep.iter().enumerate() {
            let rows: Vec<&SweepResult> = class_trials.iter().map(|tr| &tr.result.results[si]).collect();
            let collect = |f: &dyn Fn(&SweepResult) -> Option<f64>| -> Option<Stat> {
                Stat::of(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            aggregates.push(Aggregate {
                class: class.clone(),
                k,
                classification_rate: collect(&|r| r.metrics.classification_rate),
                recall: collect(&|r| r.metrics.recall),
                one_minus_precision: collect(&|r| r.metrics.one_minus_precision),
                auc: collect(&|r| Some(r.roc.auc)),
                eer_detection_rate: collect(&|r| Some(r.roc.eer_detection_rate)),
            });
        }
        for (si, &k) in cfg.sweep.iter().enumerate() {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for tr in &class_trials {
                let (s, l) = &tr.scores[si];
                scores.extend_from_slice(s);
                labels.extend_from_slice(l);
            }
            pooled_roc.push(PooledRoc {
                class: class.clone(),
                k,
                roc: roc(&scores, &labels)?,
            });
        }
        trials.extend(class_trials.into_iter().map(|t| t.result));
    }
    Ok(Report {
        config: cfg.clone(),
        trials,
        aggregates,
        pooled_roc,
    })
}

struct TrialOutput {
    result: TrialResult,
    /// Test scores and labels per sweep entry.
    scores: Vec<(Vec<f64>, Vec<i8>)>,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &ExperimentConfig,
    fx: &FeatureExtractor,
    class: &str,
    class_index: usize,
    trial: usize,
    seed: u64,
    positives: &mut Pool,
    negatives: &mut Pool,
) -> Result<TrialOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class, class_index as u64));
    let mut pos: Vec<usize> = (0..positives.images.len()).collect();
    let mut neg: Vec<usize> = (0..negatives.images.len()).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let train_pos = &pos[..cfg.train_positives];
    let test_pos = &pos[cfg.train_positives..cfg.train_positives + cfg.test_positives];
    let train_neg = &neg[..cfg.train_negatives];
    let test_neg = &neg[cfg.train_negatives..cfg.train_negatives + cfg.test_negatives];
    positives.ensure(&pos[..cfg.train_positives + cfg.test_positives])?;
    negatives.ensure(&neg[..cfg.train_negatives + cfg.test_negatives])?;

    let mut selector = cfg.pipeline.selector.clone();
    selector.seed = derive_seed(seed, "dictionary", class_index as u64);
    let sources: Vec<&ImageAnalysis> = train_pos.iter().map(|&i| positives.get(i)).collect();
    let dict = build_dictionary_from(&sources, &selector, &fx.config().fingerprint())?;

    let matching = &fx.config().matching;
    let featurize = |pool: &Pool, idx: &[usize]| -> Result<Vec<FeatureVector>> {
        idx.par_iter()
            .map(|&i| c2_features(&pool.get(i).c1, &dict, matching))
            .collect()
    };
    let train: Vec<FeatureVector> = featurize(positives, train_pos)?
        .into_iter()
        .chain(featurize(negatives, train_neg)?)
        .collect();
    let test: Vec<FeatureVector> = featurize(positives, test_pos)?
        .into_iter()
        .chain(featurize(negatives, test_neg)?)
        .collect();
    let train_labels: Vec<i8> = std::iter::repeat_n(1, train_pos.len())
        .chain(std::iter::repeat_n(-1, train_neg.len()))
        .collect();
    let test_labels: Vec<i8> = std::iter::repeat_n(1, test_pos.len())
        .chain(std::iter::repeat_n(-1, test_neg.len()))
        .collect();

    let svm = SvmConfig {
        seed: derive_seed(seed, "svm", class_index as u64),
        ..cfg.pipeline.svm
    };
    let mut results = Vec::with_capacity(cfg.sweep.len());
    let mut scores_out = Vec::with_capacity(cfg.sweep.len());
    for &k in &cfg.sweep {
        let fp = dict.truncated(k)?.fingerprint().to_string();
        let tr: Vec<FeatureVector> = train.iter().map(|f| f.truncated(k, fp.clone())).collect();
        let model = train_svm(&tr, &train_labels, &svm)?;
        let mut scores = Vec::with_capacity(test.len());
        for f in &test {
            scores.push(model.decision(&f.truncated(k, fp.clone()))?);
        }
        let predicted: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
        let confusion = ConfusionCounts::from_predictions(&predicted, &test_labels)?;
        results.push(SweepResult {
            k,
            confusion,
            metrics: metrics_with(&confusion, cfg.precision_denominator),
            roc: roc(&scores, &test_labels)?,
        });
        scores_out.push((scores, test_labels.clone()));
    }
    let names = |pool: &Pool, idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| pool.images[i].name.clone()).collect()
    };
    let mut train_images = names(positives, train_pos);
    train_images.extend(names(negatives, train_neg));
    let mut test_images = names(positives, test_pos);
    test_images.extend(names(negatives, test_neg));
    Ok(TrialOutput {
        result: TrialResult {
            class: class.to_string(),
            trial,
            seed,
            dictionary_fingerprint: dict.fingerprint().to_string(),
            provenance: ProvenanceSummary::of(&dict),
            train_images,
            test_images,
            results,
        },
        scores: scores_out,
    })
}

/// Summary of a report keyed by `(class, k)`: mean classification rate.
pub fn mean_rates(report: &Report) -> BTreeMap<(String, usize), f64> {
    report
        .aggregates
        .iter()
        .filter_map(|a| a.classification_rate.map(|s| ((a.class.clone(), a.k), s.mean)))
        .collect()
}
