//! Steps A, B and C end to end on one store.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearClassifier;
use crate::error::Result;
use crate::eval::{classification_accuracy, AccuracyReport, Variant};
use crate::selftrain::{run_selftraining, CycleConfig, SelfTrainOutcome};
use crate::similarity::{rank_all, zero_shot_predict, Ranking, SelectionMethod};
use crate::store::{EmbeddingStore, Embeddings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cycle: CycleConfig,
    /// Neighbors used by the consensus score; defaults to `cycle.k`.
    pub k_neighbors: Option<usize>,
    pub method: SelectionMethod,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cycle: CycleConfig::default(),
            k_neighbors: None,
            method: SelectionMethod::Improved,
        }
    }
}

impl PipelineConfig {
    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors.unwrap_or(self.cycle.k)
    }
}

/// All store features widened to `f64`.
pub fn features_f64(emb: &Embeddings) -> Array2<f64> {
    emb.features().mapv(f64::from)
}

/// Step C: classify every image in the store.
pub fn classify(clf: &LinearClassifier, emb: &Embeddings) -> Result<Vec<usize>> {
    clf.predict(features_f64(emb).view())
}

pub fn build_rankings(emb: &Embeddings, config: &PipelineConfig) -> Result<Vec<Ranking>> {
    rank_all(
        emb,
        config.cycle.b_size,
        config.k_neighbors(),
        config.method,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub rankings: Vec<Ranking>,
    pub outcome: SelfTrainOutcome,
    pub predictions: Vec<usize>,
    pub seed_predictions: Vec<usize>,
    pub zero_shot_predictions: Vec<usize>,
    /// Zero-shot, seed-only and complete accuracy, when ground truth exists.
    pub accuracy: Option<[AccuracyReport; 3]>,
}

pub fn run_pipeline(store: &EmbeddingStore, config: &PipelineConfig) -> Result<PipelineOutput> {
    let emb = store.embeddings();
    let rankings = build_rankings(emb, config)?;
    let outcome = run_selftraining(emb, &rankings, &config.cycle)?;
    let predictions = classify(&outcome.classifier, emb)?;
    let seed_predictions = classify(&outcome.seed_classifier, emb)?;
    let zero_shot_predictions = zero_shot_predict(emb);
    let accuracy = match store.ground_truth() {
        Some(gt) => {
            let n = emb.num_classes();
            Some([
                classification_accuracy(&zero_shot_predictions, gt, n, Variant::ZeroShot)?,
                classification_accuracy(&seed_predictions, gt, n, Variant::SeedOnly)?,
                classification_accuracy(&predictions, gt, n, Variant::Complete)?,
            ])
        }
        None => None,
    };
    Ok(PipelineOutput {
        rankings,
        outcome,
        predictions,
        seed_predictions,
        zero_shot_predictions,
        accuracy,
    })
}
