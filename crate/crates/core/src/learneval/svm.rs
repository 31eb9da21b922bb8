//! L2-regularized hinge-loss linear classifier trained by stochastic
//! subgradient descent with a `1 / (lambda t)` step.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::hmax::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// Regularization trade-off.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 40,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.c > 0.0 && self.c.is_finite(),
            Config,
            "SVM C must be positive, got {}",
            self.c
        );
        ensure!(self.epochs >= 1, Config, "SVM epochs must be >= 1");
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features that were constant in training; their std is recorded as 1.
    pub constant_features: Vec<usize>,
    pub fingerprint: String,
    pub seed: u64,
    pub c: f64,
    pub epochs: usize,
}

/// Per-feature mean and population standard deviation.
fn standardization(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    let mut constant = Vec::new();
    for j in 0..d {
        let first = rows[0][j];
        if rows.iter().all(|r| r[j] == first) {
            mean[j] = first;
            std[j] = 1.0;
            constant.push(j);
            continue;
        }
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
        mean[j] = m;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        if var <= 0.0 {
            constant.push(j);
        }
    }
    (mean, std, constant)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn train_svm(features: &[FeatureVector], labels: &[i8], cfg: &SvmConfig) -> Result<LinearModel> {
    cfg.validate()?;
    ensure!(
        features.len() == labels.len(),
        Argument,
        "{} feature vectors but {} labels",
        features.len(),
        labels.len()
    );
    ensure!(!features.is_empty(), Training, "no training examples");
    ensure!(
        labels.iter().all(|&l| l == 1 || l == -1),
        Argument,
        "labels must be +1 or -1"
    );
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    ensure!(
        n_pos > 0 && n_pos < labels.len(),
        Training,
        "training set needs both classes ({} positive, {} negative)",
        n_pos,
        labels.len() - n_pos
    );
    let d = features[0].len();
    ensure!(d >= 1, Argument, "feature vectors are empty");
    let fingerprint = features[0].fingerprint.clone();
    for (i, f) in features.iter().enumerate() {
        ensure!(f.len() == d, Argument, "feature vector {i} has length {}, expected {d}", f.len());
        ensure!(
            f.fingerprint == fingerprint,
            Argument,
            "feature vector {i} comes from dictionary {}, expected {fingerprint}",
            f.fingerprint
        );
        ensure!(
            f.values.iter().all(|v| v.is_finite()),
            Argument,
            "feature vector {i} has non-finite values"
        );
    }

    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let (mean, std, constant_features) = standardization(&rows);

    // Identical examples collapse into one weighted entry, so repeating the
    // training set changes neither the objective nor the sample stream.
    let mut index: HashMap<(Vec<u64>, i8), usize> = HashMap::new();
    let mut distinct: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (row, &y) in rows.iter().zip(labels) {
        let mut z: Vec<f64> = row
            .iter()
            .zip(mean.iter().zip(&std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        z.push(1.0);
        let key = (z.iter().map(|v| v.to_bits()).collect(), y);
        match index.get(&key) {
            Some(&k) => counts[k] += 1,
            None => {
                index.insert(key, distinct.len());
                distinct.push((z, f64::from(y)));
                counts.push(1);
            }
        }
    }
    let total: usize = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&m| m as f64 / total as f64).collect();
    let sampler = WeightedIndex::new(&weights)
        .map_err(|e| Error::Training(format!("example weights: {e}")))?;

    let n = distinct.len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let steps = cfg.epochs * n;
    let average_from = steps / 2 + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut averaged = 0usize;
    for t in 1..=steps {
        let (x, y) = &distinct[sampler.sample(&mut rng)];
        let eta = 1.0 / (lambda * t as f64);
        let margin = y * dot(&w, x);
        let shrink = 1.0 - eta * lambda;
        w.iter_mut().for_each(|v| *v *= shrink);
        if margin < 1.0 {
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += eta * y * xi;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if t >= average_from {
            averaged += 1;
            let a = 1.0 / averaged as f64;
            for (m, v) in avg.iter_mut().zip(&w) {
                *m += (v - *m) * a;
            }
        }
    }
    let bias = avg.pop().expect("bias slot");
    Ok(LinearModel {
        weights: avg,
        bias,
        mean,
        std,
        constant_features,
        fingerprint,
        seed: cfg.seed,
        c: cfg.c,
        epochs: cfg.epochs,
    })
}

impl LinearModel {
    pub fn standardize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn decision(&self, f: &FeatureVector) -> Result<f64> {
        ensure!(
            f.fingerprint == self.fingerprint,
            Argument,
            "feature vector from dictionary {} does not match model dictionary {}",
            f.fingerprint,
            self.fingerprint
        );
        ensure!(
            f.len() == self.weights.len(),
            Argument,
            "feature vector has length {}, model expects {}",
            f.len(),
            self.weights.len()
        );
        Ok(dot(&self.weights, &self.standardize(&f.values)) + self.bias)
    }

    /// `+1` when the score is non-negative.
    pub fn predict(&self, f: &FeatureVector) -> Result<i8> {
        Ok(if self.decision(f)? >= 0.0 { 1 } else { -1 })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        ensure!(
            self.mean.len() == d && self.std.len() == d,
            Format,
            "model statistics do not match its {d} weights"
        );
        ensure!(
            self.std.iter().all(|s| *s > 0.0 && s.is_finite()),
            Format,
            "model standard deviations must be positive"
        );
        Ok(())
    }
}
