//! Zero-shot image classification from precomputed embeddings.
//!
//! CLIP image/text embeddings pick a confident seed per class (optionally
//! re-ranked by neighborhood consensus), a linear softmax classifier is
//! trained on independent feature-extractor vectors of those seeds, and a
//! self-training cycle grows it with images the classifier already agrees on.

pub mod classifier;
pub mod error;
pub mod eval;
pub mod matfile;
pub mod pipeline;
pub mod selftrain;
pub mod similarity;
pub mod store;
pub mod synthetic;

pub use classifier::{LabeledBatch, LinearClassifier, TrainConfig};
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use selftrain::{CycleConfig, CycleHistory, PseudoLabeledSet, StopReason};
pub use similarity::{CandidateSet, Ranking, SelectionMethod};
pub use store::{load_store, write_store, EmbeddingStore, Embeddings};
pub use synthetic::SynthConfig;
