use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pbim_core::learneval::{list_images, metrics_with, ConfusionCounts, Metrics, RocSummary};
use pbim_core::patchselect::{
    load_dictionary_file, save_dictionary_file, DictionaryFile, ProvenanceSummary,
};
use pbim_core::synth::{write_dataset, SceneConfig};
use pbim_core::{
    build_dictionary as select_patches, load_image, roc, run_experiment, salient_region, spectral_residual,
    train_svm, Error, ExperimentConfig, FeatureExtractor, GrayImage, LinearModel, PipelineConfig,
    SourceImage, SvmConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::table::{read_features, write_rows};
use crate::{BuildArgs, EvaluateArgs, ExperimentArgs, Explicit, ExtractArgs, SaliencyArgs, SynthArgs, TrainArgs};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn load_scaled(path: &Path, max_side: Option<usize>) -> pbim_core::Result<GrayImage> {
    let img = load_image(path)?;
    match max_side {
        Some(s) if img.width().max(img.height()) > s => img.resize_max_side(s),
        _ => Ok(img),
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

pub fn build_dictionary(a: &BuildArgs, explicit: &Explicit) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_json(&read_text(p)?)?,
        None => PipelineConfig::default(),
    };
    // Flags apply when typed, or when no config file supplies the value.
    let take = |id: &str| a.config.is_none() || explicit.has(id);
    let sel = &mut cfg.selector;
    if take("selector") {
        sel.selector = a.selector;
    }
    if take("budget") {
        sel.budget = a.budget;
    }
    if take("sizes") {
        sel.sizes = a.sizes.clone();
    }
    if take("per_image_cap") {
        sel.per_image_cap = a.per_image_cap;
    }
    if take("seed") {
        sel.seed = a.seed;
    }
    if take("fast_threshold") {
        sel.fast_threshold = a.fast_threshold;
    }
    if take("saliency_multiplier") {
        sel.saliency_multiplier = a.saliency_multiplier;
    }
    if take("s1_mode") {
        cfg.features.s1_mode = a.s1_mode;
    }
    cfg.validate()?;

    let paths = list_images(&a.train_dir)?;
    if paths.is_empty() {
        bail!(Error::Argument(format!(
            "no inputs: {} contains no images",
            a.train_dir.display()
        )));
    }
    let images = paths
        .par_iter()
        .map(|p| Ok(SourceImage::new(file_name(p), load_scaled(p, a.max_side)?)))
        .collect::<pbim_core::Result<Vec<_>>>()?;
    let fx = FeatureExtractor::new(cfg.features.clone())?;
    let dict = select_patches(&images, &fx, &cfg.selector)?;
    save_dictionary_file(
        &DictionaryFile {
            dictionary: dict.clone(),
            feature_config: Some(cfg.features.clone()),
        },
        &a.out,
    )?;
    let s = ProvenanceSummary::of(&dict);
    println!(
        "{} patches: keypoint {}, salient_fallback {}, image_fallback {}, random {}",
        dict.len(),
        s.keypoint,
        s.salient_fallback,
        s.image_fallback,
        s.random
    );
    Ok(())
}

fn open_dictionary(path: &Path) -> Result<(DictionaryFile, FeatureExtractor)> {
    let file = load_dictionary_file(path)?;
    let features = file.feature_config.clone().unwrap_or_default();
    let fp = features.fingerprint();
    if fp != file.dictionary.config_fingerprint() {
        bail!(Error::Config(format!(
            "{}: built under feature config {} but the file carries {}",
            path.display(),
            file.dictionary.config_fingerprint(),
            fp
        )));
    }
    let fx = FeatureExtractor::new(features)?;
    Ok((file, fx))
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let (file, fx) = open_dictionary(&a.dictionary)?;
    let dict = &file.dictionary;
    let paths = list_images(&a.image_dir)?;
    if paths.is_empty() {
        bail!(Error::Argument(format!(
            "no inputs: {} contains no images",
            a.image_dir.display()
        )));
    }
    let results: Vec<(PathBuf, pbim_core::Result<Vec<f64>>)> = paths
        .par_iter()
        .map(|p| {
            let r = load_scaled(p, a.max_side)
                .and_then(|img| fx.features(&img, dict))
                .map(|f| f.values);
            (p.clone(), r)
        })
        .collect();
    let mut rows = Vec::new();
    for (p, r) in results {
        match r {
            Ok(v) => rows.push((p.display().to_string(), v)),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if rows.is_empty() {
        bail!(Error::Format(format!(
            "none of the {} images in {} could be processed",
            paths.len(),
            a.image_dir.display()
        )));
    }
    write_file(&a.out, write_rows(&rows))
}

fn labeled(
    dict: &pbim_core::PatchDictionary,
    positive: &Path,
    negative: &Path,
) -> Result<(Vec<pbim_core::FeatureVector>, Vec<i8>)> {
    let pos = read_features(positive, dict.len(), dict.fingerprint())?;
    let neg = read_features(negative, dict.len(), dict.fingerprint())?;
    let labels = std::iter::repeat_n(1i8, pos.len())
        .chain(std::iter::repeat_n(-1i8, neg.len()))
        .collect();
    let features = pos.into_iter().chain(neg).map(|(_, f)| f).collect();
    Ok((features, labels))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let file = load_dictionary_file(&a.dictionary)?;
    let (features, labels) = labeled(&file.dictionary, &a.positive, &a.negative)?;
    let cfg = SvmConfig {
        c: a.c,
        epochs: a.epochs,
        seed: a.seed,
    };
    let model = train_svm(&features, &labels, &cfg)?;
    let json = serde_json::to_string_pretty(&model).context("serializing model")?;
    write_file(&a.out, json + "\n")
}

#[derive(Serialize)]
struct Evaluation {
    samples: usize,
    confusion: ConfusionCounts,
    metrics: Metrics,
    roc: RocSummary,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model: LinearModel = serde_json::from_str(&read_text(&a.model)?)
        .map_err(|e| Error::Format(format!("{}: {e}", a.model.display())))?;
    model.validate()?;
    let file = load_dictionary_file(&a.dictionary)?;
    let (features, labels) = labeled(&file.dictionary, &a.positive, &a.negative)?;
    let scores = features
        .iter()
        .map(|f| model.decision(f))
        .collect::<pbim_core::Result<Vec<f64>>>()?;
    let predicted: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
    let confusion = ConfusionCounts::from_predictions(&predicted, &labels)?;
    let report = Evaluation {
        samples: labels.len(),
        confusion,
        metrics: metrics_with(&confusion, a.precision_denominator.into()),
        roc: roc(&scores, &labels)?,
    };
    let json = serde_json::to_string_pretty(&report).context("serializing evaluation")? + "\n";
    match &a.out {
        Some(p) => write_file(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json(&read_text(&a.config)?)?;
    if cfg.dataset_root.is_relative() {
        if let Some(dir) = a.config.parent() {
            cfg.dataset_root = dir.join(&cfg.dataset_root);
        }
    }
    let report = run_experiment(&cfg)?;
    write_file(&a.out, report.to_json() + "\n")?;
    if let Some(csv) = &a.csv {
        write_file(csv, report.to_csv())?;
    }
    Ok(())
}

pub fn saliency(a: &SaliencyArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let map = spectral_residual(&img, img.width(), img.height())?;
    map.write_pgm(&a.out)?;
    if let Some(mask_path) = &a.mask_out {
        if !(a.multiplier >= 0.0 && a.multiplier.is_finite()) {
            bail!(Error::Argument(format!(
                "multiplier must be non-negative, got {}",
                a.multiplier
            )));
        }
        salient_region(&map, a.multiplier).write_pbm(mask_path)?;
    }
    Ok(())
}

pub fn generate_synthetic(a: &SynthArgs) -> Result<()> {
    write_dataset(
        &a.out,
        &a.class,
        a.positives,
        a.negatives,
        a.seed,
        &SceneConfig::default(),
    )?;
    Ok(())
}
