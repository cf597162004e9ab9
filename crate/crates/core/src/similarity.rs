//! Seed-selection geometry: text-image cosine, candidate sets, nearest
//! neighbors in CLIP image space and the neighborhood-consensus score.
//!
//! Every similarity is a dot product accumulated sequentially in `f64` over
//! `f32` inputs, so results are bit-identical regardless of how the per-image
//! or per-label work is scheduled. All orderings are descending by score with
//! ties broken by ascending image index.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Embeddings;

pub const DEFAULT_B_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// Rank candidates by their own text-image cosine.
    Default,
    /// Rank candidates by neighborhood consensus.
    Improved,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Default => "default",
            SelectionMethod::Improved => "improved",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(SelectionMethod::Default),
            "improved" => Ok(SelectionMethod::Improved),
            other => Err(Error::InvalidConfig(format!(
                "unknown selection method {other:?}"
            ))),
        }
    }
}

/// Top text-image matches for one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub label: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image: usize,
    pub score: f64,
}

/// Candidate images of one label in consumption order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub label: usize,
    pub entries: Vec<RankedImage>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn images(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.image)
    }
}

pub(crate) fn dot(a: ArrayView1<'_, f32>, b: ArrayView1<'_, f32>) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (*x as f64) * (*y as f64);
    }
    acc
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Descending by score, ascending by index on ties.
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    }
}

/// Indices of the `k` largest scores, skipping `exclude`.
fn top_k(scores: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| Some(i) != exclude).collect();
    let cmp = by_score_desc(scores);
    if k < idx.len() {
        if k > 0 {
            idx.select_nth_unstable_by(k - 1, &cmp);
        }
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

/// Cosine similarity `u.v / (|u||v|)`, clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut uv, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroNormInput);
    }
    Ok(clamp_unit(uv / (uu.sqrt() * vv.sqrt())))
}

/// `cos(I_j, E_label)` for every image `j`.
pub fn text_image_similarities(emb: &Embeddings, label: usize) -> Result<Vec<f64>> {
    emb.check_label(label)?;
    let text = emb.text_embedding(label);
    Ok(emb
        .image_clip()
        .rows()
        .into_iter()
        .map(|img| clamp_unit(dot(img, text)))
        .collect())
}

/// The `b_size` images most similar to the label text (default selection).
pub fn default_candidates(emb: &Embeddings, label: usize, b_size: usize) -> Result<CandidateSet> {
    if b_size == 0 {
        return Err(Error::InvalidConfig("B_size must be >= 1".into()));
    }
    let sims = text_image_similarities(emb, label)?;
    Ok(CandidateSet {
        label,
        members: top_k(&sims, b_size, None),
    })
}

fn check_k(emb: &Embeddings, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("neighbor count k must be >= 1".into()));
    }
    let available = emb.num_images() - 1;
    if k > available {
        return Err(Error::KTooLarge { k, available });
    }
    Ok(())
}

/// The `k` images nearest to `image` in CLIP image space, excluding itself.
/// Scans the whole store.
pub fn neighbors(emb: &Embeddings, image: usize, k: usize) -> Result<Vec<usize>> {
    emb.check_image(image)?;
    check_k(emb, k)?;
    let query = emb.image_embedding(image);
    let sims: Vec<f64> = emb
        .image_clip()
        .rows()
        .into_iter()
        .map(|row| dot(row, query))
        .collect();
    Ok(top_k(&sims, k, Some(image)))
}

fn mean_text_similarity(emb: &Embeddings, images: &[usize], label: usize) -> f64 {
    let text = emb.text_embedding(label);
    let mut acc = 0.0f64;
    for &r in images {
        acc += dot(emb.image_embedding(r), text);
    }
    clamp_unit(acc / images.len() as f64)
}

/// Neighborhood consensus: mean cosine between the label text and the `k`
/// nearest neighbors of `image`.
pub fn consensus_score(emb: &Embeddings, image: usize, label: usize, k: usize) -> Result<f64> {
    emb.check_label(label)?;
    let nn = neighbors(emb, image, k)?;
    Ok(mean_text_similarity(emb, &nn, label))
}

fn check_candidates(emb: &Embeddings, candidates: &CandidateSet) -> Result<()> {
    emb.check_label(candidates.label)?;
    for &m in &candidates.members {
        emb.check_image(m)?;
    }
    Ok(())
}

fn sort_entries(mut entries: Vec<RankedImage>) -> Vec<RankedImage> {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.image.cmp(&b.image))
    });
    entries
}

/// Re-ranks a candidate set by consensus score (improved selection).
pub fn build_ranking(emb: &Embeddings, candidates: &CandidateSet, k: usize) -> Result<Ranking> {
    check_candidates(emb, candidates)?;
    check_k(emb, k)?;
    let entries = candidates
        .members
        .par_iter()
        .map(|&image| {
            consensus_score(emb, image, candidates.label, k)
                .map(|score| RankedImage { image, score })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ranking {
        label: candidates.label,
        entries: sort_entries(entries),
    })
}

/// Wraps a candidate set as a ranking scored by its own text-image cosine.
pub fn default_ranking(emb: &Embeddings, candidates: &CandidateSet) -> Result<Ranking> {
    check_candidates(emb, candidates)?;
    let text = emb.text_embedding(candidates.label);
    let entries = candidates
        .members
        .iter()
        .map(|&image| RankedImage {
            image,
            score: clamp_unit(dot(emb.image_embedding(image), text)),
        })
        .collect();
    Ok(Ranking {
        label: candidates.label,
        entries: sort_entries(entries),
    })
}

pub fn all_candidates(emb: &Embeddings, b_size: usize) -> Result<Vec<CandidateSet>> {
    (0..emb.num_classes())
        .into_par_iter()
        .map(|label| default_candidates(emb, label, b_size))
        .collect()
}

/// Rankings for every label. Neighbor lists are computed once per distinct
/// candidate image and shared across labels.
pub fn rank_all(
    emb: &Embeddings,
    b_size: usize,
    k_neighbors: usize,
    method: SelectionMethod,
) -> Result<Vec<Ranking>> {
    let candidates = all_candidates(emb, b_size)?;
    match method {
        SelectionMethod::Default => candidates.iter().map(|c| default_ranking(emb, c)).collect(),
        SelectionMethod::Improved => {
            check_k(emb, k_neighbors)?;
            let mut distinct: Vec<usize> = candidates
                .iter()
                .flat_map(|c| c.members.iter().copied())
                .collect();
            distinct.sort_unstable();
            distinct.dedup();
            let lists: HashMap<usize, Vec<usize>> = distinct
                .par_iter()
                .map(|&image| neighbors(emb, image, k_neighbors).map(|nn| (image, nn)))
                .collect::<Result<_>>()?;
            candidates
                .par_iter()
                .map(|c| {
                    let entries = c
                        .members
                        .iter()
                        .map(|&image| RankedImage {
                            image,
                            score: mean_text_similarity(emb, &lists[&image], c.label),
                        })
                        .collect();
                    Ok(Ranking {
                        label: c.label,
                        entries: sort_entries(entries),
                    })
                })
                .collect()
        }
    }
}

/// CLIP zero-shot baseline: the label whose text is most similar to each
/// image, ties to the lower label.
pub fn zero_shot_predict(emb: &Embeddings) -> Vec<usize> {
    emb.image_clip()
        .rows()
        .into_iter()
        .map(|img| {
            let mut best = (0, f64::NEG_INFINITY);
            for (label, text) in emb.text_clip().rows().into_iter().enumerate() {
                let s = dot(img, text);
                if s > best.1 {
                    best = (label, s);
                }
            }
            best.0
        })
        .collect()
}
