//! Hand-built two-class problems, each ending the self-training loop for one
//! specific reason.
//!
//! Label 0 images sit at `(+mag, j/10)` and label 1 images at `(-mag, j/10)`
//! in feature space. The rankings are written directly: chunk `c` of each
//! ranking is what the seed (`c = 0`) or cycle `c` consumes. Small magnitudes
//! give high loss, large ones low loss, and a swapped chunk puts images where
//! the classifier will disagree with the ranking label.

use ndarray::Array2;
use selfseed_core::selftrain::{run_selftraining, SelfTrainOutcome};
use selfseed_core::similarity::RankedImage;
use selfseed_core::{CycleConfig, EmbeddingStore, Ranking, StopReason};

pub const K: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct Chunk {
    pub magnitude: f32,
    pub swapped: bool,
}

const fn plain(magnitude: f32) -> Chunk {
    Chunk {
        magnitude,
        swapped: false,
    }
}

pub struct StopFixture {
    pub name: &'static str,
    pub store: EmbeddingStore,
    pub rankings: Vec<Ranking>,
    pub config: CycleConfig,
    pub expected: StopReason,
    pub expected_cycles: usize,
}

fn build(chunks: &[Chunk]) -> (EmbeddingStore, Vec<Ranking>) {
    let m = chunks.len() * 2 * K;
    let mut features = Array2::<f32>::zeros((m, 2));
    let mut rankings = vec![
        Ranking {
            label: 0,
            entries: Vec::new(),
        },
        Ranking {
            label: 1,
            entries: Vec::new(),
        },
    ];
    let mut image = 0;
    for chunk in chunks {
        for (label, ranking) in rankings.iter_mut().enumerate() {
            let side = if (label == 0) != chunk.swapped {
                1.0
            } else {
                -1.0
            };
            for j in 0..K {
                features[[image, 0]] = side * chunk.magnitude;
                features[[image, 1]] = j as f32 / 10.0;
                ranking.entries.push(RankedImage {
                    image,
                    score: 1.0 - image as f64 / m as f64,
                });
                image += 1;
            }
        }
    }
    let image_clip = Array2::from_shape_fn((m, 2), |(i, d)| if d == i % 2 { 1.0 } else { 0.0 });
    let store = EmbeddingStore::new(
        image_clip,
        ndarray::array![[1.0, 0.0], [0.0, 1.0]],
        features,
        vec!["pos".into(), "neg".into()],
        (0..m).map(|i| format!("f{i}")).collect(),
        None,
    )
    .expect("fixture store is valid");
    (store, rankings)
}

fn config(loss_limit: f64, max_cycles: usize) -> CycleConfig {
    CycleConfig {
        k: K,
        i_epochs: 100,
        r_epochs: 20,
        learning_rate: 0.01,
        loss_limit,
        max_cycles,
        ..CycleConfig::default()
    }
}

fn fixture(
    name: &'static str,
    chunks: &[Chunk],
    config: CycleConfig,
    expected: StopReason,
    expected_cycles: usize,
) -> StopFixture {
    let (store, rankings) = build(chunks);
    StopFixture {
        name,
        store,
        rankings,
        config,
        expected,
        expected_cycles,
    }
}

pub fn all() -> Vec<StopFixture> {
    vec![
        // easy seed, hard cycle: the first tuning loss is above the seed's last
        fixture(
            "loss_rebound",
            &[plain(5.0), plain(0.2), plain(0.2)],
            config(10.0, 20),
            StopReason::LossRebound,
            1,
        ),
        // hard seed, easier cycle that still ends above a strict limit
        fixture(
            "loss_above_limit",
            &[plain(0.2), plain(1.0), plain(1.0)],
            config(0.01, 20),
            StopReason::LossAboveLimit,
            1,
        ),
        fixture(
            "max_cycles",
            &[plain(1.0), plain(1.0), plain(1.0)],
            config(10.0, 1),
            StopReason::MaxCycles,
            1,
        ),
        // 2k entries per ranking: the single cycle consumes the rest
        fixture(
            "ranking_exhausted_after_cycle",
            &[plain(1.0), plain(1.0)],
            config(10.0, 20),
            StopReason::RankingExhausted,
            1,
        ),
        // exactly k entries per ranking: nothing left after the seed
        fixture(
            "ranking_exhausted_before_cycle",
            &[plain(1.0)],
            config(10.0, 20),
            StopReason::RankingExhausted,
            0,
        ),
        fixture(
            "no_confident_samples",
            &[
                plain(1.0),
                Chunk {
                    magnitude: 1.0,
                    swapped: true,
                },
                plain(1.0),
            ],
            config(10.0, 20),
            StopReason::NoConfidentSamples,
            1,
        ),
        // steadily easier chunks keep the loop going until the rankings run out
        fixture(
            "progress_until_exhausted",
            &[plain(0.2), plain(0.5), plain(1.0), plain(2.0)],
            config(10.0, 20),
            StopReason::RankingExhausted,
            3,
        ),
    ]
}

pub fn run(f: &StopFixture) -> SelfTrainOutcome {
    run_selftraining(f.store.embeddings(), &f.rankings, &f.config).expect("fixture runs")
}

/// Checks the stop reason, the cycle count and the rollback rule.
pub fn check(f: &StopFixture) -> Result<SelfTrainOutcome, String> {
    let out = run(f);
    let h = &out.history;
    if h.stop_reason != f.expected {
        return Err(format!(
            "{}: stopped with {}, expected {}",
            f.name, h.stop_reason, f.expected
        ));
    }
    if h.cycles.len() != f.expected_cycles {
        return Err(format!(
            "{}: {} cycles, expected {}",
            f.name,
            h.cycles.len(),
            f.expected_cycles
        ));
    }
    let rebound = f.expected == StopReason::LossRebound;
    if let Some(last) = h.cycles.last() {
        if last.rolled_back != rebound {
            return Err(format!("{}: rolled_back = {}", f.name, last.rolled_back));
        }
    }
    if rebound && out.classifier != out.seed_classifier {
        return Err(format!(
            "{}: rebound did not restore the pre-cycle classifier",
            f.name
        ));
    }
    Ok(out)
}
