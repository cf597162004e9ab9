//! Synthetic embedding stores with known ground truth.
//!
//! CLIP space: `N` orthonormal class anchors, scaled so any two anchors sit
//! `separation` apart. Text embeddings are the anchors, except for a
//! `label_bias` fraction of classes whose text is pulled toward another
//! class's anchor. Image embeddings are the class anchor plus isotropic
//! Gaussian noise of expected norm `noise_sigma`.
//!
//! Feature space: an independent set of orthonormal anchors in `feature_dim`
//! dimensions with the same geometry, multiplied by `feature_scale` to mimic
//! the magnitude of raw extractor outputs. Feature noise is drawn
//! independently of the CLIP noise.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub images_per_class: usize,
    pub clip_dim: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    /// Fraction of classes whose text embedding leans toward a wrong class.
    pub label_bias: f64,
    /// Weight of the wrong anchor in a biased text embedding.
    pub confusion_strength: f64,
    pub feature_scale: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            images_per_class: 100,
            clip_dim: 64,
            feature_dim: 32,
            separation: 1.0,
            noise_sigma: 0.35,
            label_bias: 0.0,
            confusion_strength: 0.49,
            feature_scale: 30.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if self.images_per_class < 1 {
            return Err(Error::InvalidConfig("images_per_class must be >= 1".into()));
        }
        if self.clip_dim < 2 || self.feature_dim < 2 {
            return Err(Error::DimensionTooSmall("dimensions must be >= 2".into()));
        }
        if self.clip_dim < self.num_classes || self.feature_dim < self.num_classes {
            return Err(Error::DimensionTooSmall(format!(
                "{} orthogonal anchors need clip_dim and feature_dim >= {}, got {} and {}",
                self.num_classes, self.num_classes, self.clip_dim, self.feature_dim
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig(
                "separation must be non-negative".into(),
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.label_bias)
            || !(0.0..=1.0).contains(&self.confusion_strength)
        {
            return Err(Error::InvalidConfig(
                "label_bias and confusion_strength must lie in [0, 1]".into(),
            ));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(Error::InvalidConfig(
                "feature_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn num_images(&self) -> usize {
        self.num_classes * self.images_per_class
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `count` orthonormal rows in `dim` dimensions by Gram-Schmidt on Gaussian
/// draws.
fn orthonormal_rows(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Array2<f64> {
    let mut rows = Array2::<f64>::zeros((count, dim));
    let mut i = 0;
    while i < count {
        let mut v: Array1<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        for j in 0..i {
            let prev = rows.row(j);
            let proj = v.dot(&prev);
            v.scaled_add(-proj, &prev);
        }
        let norm = v.dot(&v).sqrt();
        // a near-degenerate draw is simply redrawn
        if norm < 1e-6 {
            continue;
        }
        rows.row_mut(i).assign(&(v / norm));
        i += 1;
    }
    rows
}

fn normalized(v: Array1<f64>) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    v / norm
}

/// Class of image `i`; classes are interleaved so index order carries no
/// class information.
pub fn class_of(i: usize, num_classes: usize) -> usize {
    i % num_classes
}

pub fn generate(config: &SynthConfig) -> Result<EmbeddingStore> {
    config.validate()?;
    let n = config.num_classes;
    let m = config.num_images();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let clip_anchors = orthonormal_rows(&mut rng, n, config.clip_dim);
    let feature_anchors = orthonormal_rows(&mut rng, n, config.feature_dim);

    let mut classes: Vec<usize> = (0..n).collect();
    classes.shuffle(&mut rng);
    let biased = (config.label_bias * n as f64).round() as usize;
    let mut text = clip_anchors.clone();
    for &c in &classes[..biased] {
        let other = (c + rng.random_range(1..n)) % n;
        let lam = config.confusion_strength;
        let mixed = &clip_anchors.row(c) * (1.0 - lam) + &clip_anchors.row(other) * lam;
        text.row_mut(c).assign(&normalized(mixed));
    }

    let radius = config.separation / std::f64::consts::SQRT_2;
    let clip_noise = config.noise_sigma / (config.clip_dim as f64).sqrt();
    let feat_noise = config.noise_sigma / (config.feature_dim as f64).sqrt();
    let mut image_clip = Array2::<f32>::zeros((m, config.clip_dim));
    let mut features = Array2::<f32>::zeros((m, config.feature_dim));
    let mut ground_truth = Vec::with_capacity(m);
    for i in 0..m {
        let y = class_of(i, n);
        ground_truth.push(y);
        for (d, v) in image_clip.row_mut(i).iter_mut().enumerate() {
            *v = (radius * clip_anchors[[y, d]] + clip_noise * gaussian(&mut rng)) as f32;
        }
        for (d, v) in features.row_mut(i).iter_mut().enumerate() {
            *v = (config.feature_scale
                * (radius * feature_anchors[[y, d]] + feat_noise * gaussian(&mut rng)))
                as f32;
        }
    }

    let store = EmbeddingStore::new(
        image_clip,
        text.mapv(|v| v as f32),
        features,
        (0..n).map(|c| format!("class_{c}")).collect(),
        (0..m).map(|i| format!("img{i:05}")).collect(),
        Some(ground_truth),
    )?;
    Ok(store.with_meta(serde_json::json!({
        "dataset": "synthetic",
        "synth_config": config,
    })))
}
