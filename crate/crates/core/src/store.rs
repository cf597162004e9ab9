//! Embedding stores: the precomputed CLIP and feature-extractor outputs the
//! whole pipeline runs on.
//!
//! A store directory holds a `manifest.json` plus one `EMBSTOR1` matrix file
//! per matrix (see [`crate::matfile`]). CLIP rows are L2-normalized on load so
//! cosine similarity reduces to a dot product; feature rows are kept raw.
//!
//! Ground truth is kept out of reach of selection and training: those code
//! paths take an [`Embeddings`] reference, which has no label field at all.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{write_io, Error, Result};
use crate::matfile;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Rows whose norm is already this close to 1 are left untouched, which makes
/// normalization idempotent on its own output.
const UNIT_NORM_SLACK: f64 = 1e-6;
const ZERO_NORM: f64 = 1e-12;

/// The label-free part of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    image_clip: Array2<f32>,
    text_clip: Array2<f32>,
    features: Array2<f32>,
    class_names: Vec<String>,
}

impl Embeddings {
    /// Number of images (M).
    pub fn num_images(&self) -> usize {
        self.image_clip.nrows()
    }

    /// Number of classes (N).
    pub fn num_classes(&self) -> usize {
        self.text_clip.nrows()
    }

    pub fn clip_dim(&self) -> usize {
        self.image_clip.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn image_clip(&self) -> &Array2<f32> {
        &self.image_clip
    }

    pub fn text_clip(&self) -> &Array2<f32> {
        &self.text_clip
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn image_embedding(&self, image: usize) -> ArrayView1<'_, f32> {
        self.image_clip.row(image)
    }

    pub fn text_embedding(&self, label: usize) -> ArrayView1<'_, f32> {
        self.text_clip.row(label)
    }

    pub fn feature(&self, image: usize) -> ArrayView1<'_, f32> {
        self.features.row(image)
    }

    pub(crate) fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes() {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: label,
                bound: self.num_classes(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_image(&self, image: usize) -> Result<()> {
        if image >= self.num_images() {
            return Err(Error::IndexOutOfRange {
                what: "image",
                index: image,
                bound: self.num_images(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    embeddings: Embeddings,
    image_ids: Vec<String>,
    ground_truth: Option<Vec<usize>>,
    meta: Option<serde_json::Value>,
}

impl EmbeddingStore {
    /// Validates the pieces and normalizes the CLIP rows.
    pub fn new(
        mut image_clip: Array2<f32>,
        mut text_clip: Array2<f32>,
        features: Array2<f32>,
        class_names: Vec<String>,
        image_ids: Vec<String>,
        ground_truth: Option<Vec<usize>>,
    ) -> Result<Self> {
        let m = image_clip.nrows();
        let n = text_clip.nrows();
        if m < 1 {
            return Err(Error::DimensionMismatch(
                "store needs at least one image".into(),
            ));
        }
        if n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "store needs at least two classes, got {n}"
            )));
        }
        if image_clip.ncols() < 1 || features.ncols() < 1 {
            return Err(Error::DimensionMismatch(
                "embedding dimensions must be >= 1".into(),
            ));
        }
        if text_clip.ncols() != image_clip.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "text_clip has {} columns, image_clip has {}",
                text_clip.ncols(),
                image_clip.ncols()
            )));
        }
        if features.nrows() != m {
            return Err(Error::DimensionMismatch(format!(
                "features has {} rows, image_clip has {m}",
                features.nrows()
            )));
        }
        if class_names.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {n} text embeddings",
                class_names.len()
            )));
        }
        if let Some(i) = class_names.iter().position(|c| c.is_empty()) {
            return Err(Error::InvalidConfig(format!("class name {i} is empty")));
        }
        if image_ids.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} image ids for {m} images",
                image_ids.len()
            )));
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "{} ground-truth labels for {m} images",
                    gt.len()
                )));
            }
            if let Some(&bad) = gt.iter().find(|&&y| y >= n) {
                return Err(Error::IndexOutOfRange {
                    what: "ground_truth label",
                    index: bad,
                    bound: n,
                });
            }
        }
        check_finite(&image_clip, "image_clip")?;
        check_finite(&text_clip, "text_clip")?;
        check_finite(&features, "features")?;
        normalize_rows(&mut image_clip, "image_clip")?;
        normalize_rows(&mut text_clip, "text_clip")?;

        Ok(Self {
            embeddings: Embeddings {
                image_clip,
                text_clip,
                features,
                class_names,
            },
            image_ids,
            ground_truth,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = Some(meta);
        self
    }

    /// Label-free view handed to selection and training.
    pub fn embeddings(&self) -> &Embeddings {
        &self.embeddings
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }

    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn num_images(&self) -> usize {
        self.embeddings.num_images()
    }

    pub fn num_classes(&self) -> usize {
        self.embeddings.num_classes()
    }

    /// Standardizes every feature dimension to zero mean and unit variance.
    /// Constant dimensions are only centered.
    pub fn with_standardized_features(mut self) -> Self {
        let features = &mut self.embeddings.features;
        let m = features.nrows() as f64;
        for mut col in features.columns_mut() {
            let mean = col.iter().map(|&v| v as f64).sum::<f64>() / m;
            let var = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / m;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.mapv_inplace(|v| ((v as f64 - mean) / scale) as f32);
        }
        self
    }
}

fn check_finite(matrix: &Array2<f32>, what: &str) -> Result<()> {
    if let Some((idx, v)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!(
            "{what}[{}, {}] = {v}",
            idx.0, idx.1
        )));
    }
    Ok(())
}

fn normalize_rows(matrix: &mut Array2<f32>, what: &'static str) -> Result<()> {
    for (r, mut row) in matrix.rows_mut().into_iter().enumerate() {
        let norm = row
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm < ZERO_NORM {
            return Err(Error::ZeroNormRow { what, row: r });
        }
        if (norm - 1.0).abs() > UNIT_NORM_SLACK {
            row.mapv_inplace(|v| (v as f64 / norm) as f32);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFiles {
    pub image_clip: String,
    pub text_clip: String,
    pub features: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub num_images: usize,
    pub num_classes: usize,
    pub clip_dim: usize,
    pub feature_dim: usize,
    pub class_names: Vec<String>,
    pub image_ids: Vec<String>,
    pub files: MatrixFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Resolves either a store directory or a manifest file path.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let manifest_path = manifest_path(path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::read_io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::InvalidFormat {
        path: manifest_path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::InvalidFormat {
            path: manifest_path,
            reason: format!("unsupported manifest version {}", manifest.version),
        });
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let image_clip = matfile::read_matrix(&dir.join(&manifest.files.image_clip))?;
    let text_clip = matfile::read_matrix(&dir.join(&manifest.files.text_clip))?;
    let features = matfile::read_matrix(&dir.join(&manifest.files.features))?;

    let expect = |what: &str, got: (usize, usize), want: (usize, usize)| {
        if got != want {
            Err(Error::DimensionMismatch(format!(
                "{what} is {}x{}, manifest declares {}x{}",
                got.0, got.1, want.0, want.1
            )))
        } else {
            Ok(())
        }
    };
    expect(
        "image_clip",
        image_clip.dim(),
        (manifest.num_images, manifest.clip_dim),
    )?;
    expect(
        "text_clip",
        text_clip.dim(),
        (manifest.num_classes, manifest.clip_dim),
    )?;
    expect(
        "features",
        features.dim(),
        (manifest.num_images, manifest.feature_dim),
    )?;

    let store = EmbeddingStore::new(
        image_clip,
        text_clip,
        features,
        manifest.class_names,
        manifest.image_ids,
        manifest.ground_truth,
    )?;
    Ok(match manifest.meta {
        Some(meta) => store.with_meta(meta),
        None => store,
    })
}

/// Writes `store` into `dir` (created if needed) and returns the manifest path.
pub fn write_store(store: &EmbeddingStore, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| write_io(dir, e))?;
    let files = MatrixFiles {
        image_clip: "image_clip.emb".into(),
        text_clip: "text_clip.emb".into(),
        features: "features.emb".into(),
    };
    let e = store.embeddings();
    matfile::write_matrix(&dir.join(&files.image_clip), e.image_clip())?;
    matfile::write_matrix(&dir.join(&files.text_clip), e.text_clip())?;
    matfile::write_matrix(&dir.join(&files.features), e.features())?;

    let manifest = Manifest {
        version: FORMAT_VERSION,
        num_images: e.num_images(),
        num_classes: e.num_classes(),
        clip_dim: e.clip_dim(),
        feature_dim: e.feature_dim(),
        class_names: e.class_names().to_vec(),
        image_ids: store.image_ids.clone(),
        files,
        ground_truth: store.ground_truth.clone(),
        meta: store.meta.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| write_io(&path, e))?;
    Ok(path)
}
