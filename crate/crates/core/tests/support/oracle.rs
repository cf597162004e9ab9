//! Brute-force seed-selection oracles: every pairwise similarity is
//! enumerated and fully sorted, with no partial selection, caching or
//! parallelism.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfseed_core::similarity::{self, CandidateSet, Ranking};
use selfseed_core::{EmbeddingStore, Embeddings, SelectionMethod};

pub const SCORE_TOL: f64 = 1e-6;

pub struct RandomStore {
    pub store: EmbeddingStore,
    /// CLIP rows as drawn, before the store normalized them.
    pub raw_image: Array2<f32>,
    pub raw_text: Array2<f32>,
}

fn draw_row(rng: &mut ChaCha8Rng, dim: usize, quantized: bool) -> Vec<f32> {
    loop {
        let row: Vec<f32> = (0..dim)
            .map(|_| {
                if quantized {
                    rng.random_range(-1i32..=1) as f32
                } else {
                    rng.random_range(-1.0f32..1.0) * rng.random_range(0.1f32..10.0)
                }
            })
            .collect();
        if row.iter().any(|&v| v != 0.0) {
            return row;
        }
    }
}

/// Random store with `M <= 32`, `N <= 5`. A third of the stores use
/// entries in {-1, 0, 1} and some rows are duplicated, so exact ties are
/// common.
pub fn random_store(seed: u64) -> RandomStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=32usize);
    let n = rng.random_range(2..=5usize);
    let dc = rng.random_range(2..=6usize);
    let quantized = rng.random_bool(1.0 / 3.0);

    let mut image = Array2::<f32>::zeros((m, dc));
    for i in 0..m {
        let row = if i > 0 && rng.random_bool(0.15) {
            let src = rng.random_range(0..i);
            image.row(src).to_vec()
        } else {
            draw_row(&mut rng, dc, quantized)
        };
        image.row_mut(i).assign(&ArrayView1::from(&row));
    }
    let mut text = Array2::<f32>::zeros((n, dc));
    for c in 0..n {
        text.row_mut(c)
            .assign(&ArrayView1::from(&draw_row(&mut rng, dc, quantized)));
    }
    let features = Array2::from_shape_fn((m, 2), |(i, j)| (i * 2 + j) as f32);
    let store = EmbeddingStore::new(
        image.clone(),
        text.clone(),
        features,
        (0..n).map(|c| format!("c{c}")).collect(),
        (0..m).map(|i| format!("i{i}")).collect(),
        None,
    )
    .expect("random store is valid");
    RandomStore {
        store,
        raw_image: image,
        raw_text: text,
    }
}

/// Plain dot product of two stored (already unit) rows.
fn sim(a: ArrayView1<'_, f32>, b: ArrayView1<'_, f32>) -> f64 {
    let mut acc = 0.0f64;
    for d in 0..a.len() {
        acc += a[d] as f64 * b[d] as f64;
    }
    acc
}

/// Textbook cosine with explicit norms.
pub fn raw_cosine(a: ArrayView1<'_, f32>, b: ArrayView1<'_, f32>) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for d in 0..a.len() {
        let (x, y) = (a[d] as f64, b[d] as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn sorted(mut scored: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

pub fn text_sims(emb: &Embeddings, label: usize) -> Vec<f64> {
    let text = emb.text_clip().row(label);
    (0..emb.num_images())
        .map(|j| sim(emb.image_clip().row(j), text).clamp(-1.0, 1.0))
        .collect()
}

pub fn candidates(emb: &Embeddings, label: usize, b_size: usize) -> Vec<usize> {
    let all = sorted(text_sims(emb, label).into_iter().enumerate().collect());
    all.into_iter().take(b_size).map(|(i, _)| i).collect()
}

pub fn neighbors(emb: &Embeddings, image: usize, k: usize) -> Vec<usize> {
    let query = emb.image_clip().row(image);
    let all: Vec<(usize, f64)> = (0..emb.num_images())
        .filter(|&j| j != image)
        .map(|j| (j, sim(emb.image_clip().row(j), query)))
        .collect();
    sorted(all).into_iter().take(k).map(|(j, _)| j).collect()
}

pub fn consensus(emb: &Embeddings, image: usize, label: usize, k: usize) -> f64 {
    let text = emb.text_clip().row(label);
    let total: f64 = neighbors(emb, image, k)
        .iter()
        .map(|&r| sim(emb.image_clip().row(r), text))
        .sum();
    (total / k as f64).clamp(-1.0, 1.0)
}

pub fn ranking(
    emb: &Embeddings,
    label: usize,
    b_size: usize,
    k: usize,
    method: SelectionMethod,
) -> Vec<(usize, f64)> {
    let sims = text_sims(emb, label);
    let scored = candidates(emb, label, b_size)
        .into_iter()
        .map(|i| match method {
            SelectionMethod::Default => (i, sims[i]),
            SelectionMethod::Improved => (i, consensus(emb, i, label, k)),
        })
        .collect();
    sorted(scored)
}

fn compare_ranking(what: &str, got: &Ranking, want: &[(usize, f64)], failures: &mut Vec<String>) {
    let got_order: Vec<usize> = got.images().collect();
    let want_order: Vec<usize> = want.iter().map(|e| e.0).collect();
    if got_order != want_order {
        failures.push(format!(
            "{what}: order {got_order:?} != oracle {want_order:?}"
        ));
        return;
    }
    for (g, w) in got.entries.iter().zip(want) {
        if (g.score - w.1).abs() > SCORE_TOL {
            failures.push(format!(
                "{what}: image {} score {} != oracle {}",
                g.image, g.score, w.1
            ));
        }
    }
}

/// Compares every selection kernel against the oracles on one random store
/// and returns a description of each disagreement.
pub fn check_store(seed: u64) -> Vec<String> {
    let rs = random_store(seed);
    let emb = rs.store.embeddings();
    let (m, n) = (emb.num_images(), emb.num_classes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut failures = Vec::new();

    for c in 0..n {
        for i in 0..m {
            let got = similarity::text_image_similarities(emb, c).unwrap()[i];
            let want = raw_cosine(rs.raw_image.row(i), rs.raw_text.row(c));
            if (got - want).abs() > SCORE_TOL {
                failures.push(format!("store {seed}: cos(I_{i}, E_{c}) {got} != {want}"));
            }
        }
    }

    let b_size = rng.random_range(1..=m + 2);
    let k = rng.random_range(1..m);
    for c in 0..n {
        let got = similarity::default_candidates(emb, c, b_size).unwrap();
        let want = candidates(emb, c, b_size);
        if got.members != want {
            failures.push(format!(
                "store {seed}: candidates({c}, {b_size}) {:?} != {want:?}",
                got.members
            ));
        }
    }
    for i in 0..m {
        let got = similarity::neighbors(emb, i, k).unwrap();
        let want = neighbors(emb, i, k);
        if got != want {
            failures.push(format!(
                "store {seed}: neighbors({i}, {k}) {got:?} != {want:?}"
            ));
        }
        for c in 0..n {
            let got = similarity::consensus_score(emb, i, c, k).unwrap();
            let want = consensus(emb, i, c, k);
            if (got - want).abs() > SCORE_TOL {
                failures.push(format!("store {seed}: S({i}, {c}, {k}) {got} != {want}"));
            }
        }
    }
    for c in 0..n {
        let set = CandidateSet {
            label: c,
            members: candidates(emb, c, b_size),
        };
        let got = similarity::build_ranking(emb, &set, k).unwrap();
        let want = ranking(emb, c, b_size, k, SelectionMethod::Improved);
        compare_ranking(
            &format!("store {seed}: build_ranking({c})"),
            &got,
            &want,
            &mut failures,
        );
    }
    for method in [SelectionMethod::Default, SelectionMethod::Improved] {
        let all = similarity::rank_all(emb, b_size, k, method).unwrap();
        for (c, got) in all.iter().enumerate() {
            let want = ranking(emb, c, b_size, k, method);
            compare_ranking(
                &format!("store {seed}: rank_all {method} ({c})"),
                got,
                &want,
                &mut failures,
            );
        }
    }
    if similarity::neighbors(emb, 0, m).is_ok() {
        failures.push(format!("store {seed}: k = M accepted"));
    }
    failures
}
