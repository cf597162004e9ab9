//! Seed assembly and the self-training cycle.
//!
//! Each label's ranking is consumed top-down through a per-label cursor: the
//! seed takes the first `k` entries, every later cycle the next `k`. A cycle
//! keeps only the candidates the current classifier already assigns to the
//! ranking's label, fine-tunes on that tuning set alone, then checks the stop
//! criteria in a fixed order (cycle limit, exhaustion, loss rebound, loss
//! limit). A loss rebound restores the parameters from before the cycle.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::{LabeledBatch, LinearClassifier, TrainConfig};
use crate::error::{Error, Result};
use crate::similarity::{Ranking, DEFAULT_B_SIZE};
use crate::store::Embeddings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub image: usize,
    pub label: usize,
}

/// Images with the label they were given without ground truth.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabeledSet {
    pub assignments: Vec<Assignment>,
}

impl PseudoLabeledSet {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn extend(&mut self, other: &PseudoLabeledSet) {
        self.assignments.extend_from_slice(&other.assignments);
    }

    pub fn to_batch(&self, emb: &Embeddings) -> Result<LabeledBatch> {
        let d = emb.feature_dim();
        let mut x = Array2::zeros((self.len(), d));
        for (mut row, a) in x.rows_mut().into_iter().zip(&self.assignments) {
            emb.check_image(a.image)?;
            row.assign(&emb.feature(a.image).mapv(f64::from));
        }
        LabeledBatch::new(
            x,
            self.assignments.iter().map(|a| a.label).collect(),
            emb.num_classes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub k: usize,
    pub b_size: usize,
    pub i_epochs: usize,
    pub r_epochs: usize,
    pub learning_rate: f64,
    pub loss_limit: f64,
    pub max_cycles: usize,
    pub rng_seed: u64,
    /// Append the seed set to every cycle's tuning set.
    pub retain_seed: bool,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            k: 5,
            b_size: DEFAULT_B_SIZE,
            i_epochs: 100,
            r_epochs: 20,
            learning_rate: 0.001,
            loss_limit: 0.1,
            max_cycles: 20,
            rng_seed: 0,
            retain_seed: false,
        }
    }
}

impl CycleConfig {
    /// Settings for label spaces in the hundreds or thousands of classes.
    pub fn large_labelspace() -> Self {
        Self {
            k: 16,
            learning_rate: 0.0001,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("b_size", self.b_size),
            ("i_epochs", self.i_epochs),
            ("r_epochs", self.r_epochs),
            ("max_cycles", self.max_cycles),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.loss_limit.is_nan() || self.loss_limit <= 0.0 {
            return Err(Error::InvalidConfig("loss limit must be positive".into()));
        }
        Ok(())
    }

    fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs,
            rng_seed: self.rng_seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    LossRebound,
    LossAboveLimit,
    MaxCycles,
    RankingExhausted,
    NoConfidentSamples,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub assignments: usize,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Ranking entries consumed per label this cycle.
    pub consumed: Vec<usize>,
    pub confident_count: usize,
    pub first_epoch_loss: Option<f64>,
    pub last_epoch_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
    /// Parameters were restored to their pre-cycle values.
    pub rolled_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleHistory {
    pub seed: SeedRecord,
    pub cycles: Vec<CycleRecord>,
    pub stop_reason: StopReason,
}

#[derive(Serialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
enum HistoryLine<'a> {
    Seed(&'a SeedRecord),
    Cycle(&'a CycleRecord),
    Stop {
        stop_reason: StopReason,
        cycles: usize,
    },
}

impl CycleHistory {
    /// One JSON object per line: the seed phase, each cycle, then the stop.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: HistoryLine<'_>| {
            out.push_str(&serde_json::to_string(&line).expect("history serializes"));
            out.push('\n');
        };
        push(HistoryLine::Seed(&self.seed));
        for c in &self.cycles {
            push(HistoryLine::Cycle(c));
        }
        push(HistoryLine::Stop {
            stop_reason: self.stop_reason,
            cycles: self.cycles.len(),
        });
        out
    }
}

struct Claim {
    image: usize,
    label: usize,
    score: f64,
}

/// One label per image: the claim with the highest score wins, ties to the
/// lower label. Survivors keep their input order.
fn resolve_claims(claims: Vec<Claim>) -> PseudoLabeledSet {
    let mut winner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, c) in claims.iter().enumerate() {
        winner
            .entry(c.image)
            .and_modify(|w| {
                let cur = &claims[*w];
                if c.score > cur.score || (c.score == cur.score && c.label < cur.label) {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let assignments = claims
        .iter()
        .enumerate()
        .filter(|(i, c)| winner[&c.image] == *i)
        .map(|(_, c)| Assignment {
            image: c.image,
            label: c.label,
        })
        .collect();
    PseudoLabeledSet { assignments }
}

fn check_rankings(rankings: &[Ranking], num_classes: usize) -> Result<()> {
    if rankings.len() != num_classes {
        return Err(Error::DimensionMismatch(format!(
            "{} rankings for {num_classes} labels",
            rankings.len()
        )));
    }
    if let Some((i, r)) = rankings.iter().enumerate().find(|(i, r)| r.label != *i) {
        return Err(Error::InvalidConfig(format!(
            "ranking at position {i} is for label {}",
            r.label
        )));
    }
    Ok(())
}

/// The seed set and the ranking positions it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSelection {
    pub seed: PseudoLabeledSet,
    pub cursors: Vec<usize>,
}

/// Top `k` of every ranking, one label per image.
pub fn assemble_seed(rankings: &[Ranking], k: usize) -> Result<SeedSelection> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    for r in rankings {
        if r.len() < k {
            return Err(Error::RankingTooShort {
                label: r.label,
                len: r.len(),
                k,
            });
        }
    }
    let claims = rankings
        .iter()
        .flat_map(|r| {
            r.entries[..k].iter().map(move |e| Claim {
                image: e.image,
                label: r.label,
                score: e.score,
            })
        })
        .collect();
    Ok(SeedSelection {
        seed: resolve_claims(claims),
        cursors: vec![k; rankings.len()],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleSelection {
    pub tuning: PseudoLabeledSet,
    pub cursors: Vec<usize>,
    pub consumed: Vec<usize>,
}

/// Takes the next `k` entries of every ranking and keeps those the classifier
/// already predicts as that ranking's label. Cursors advance over everything
/// taken, accepted or not.
pub fn cycle_select(
    rankings: &[Ranking],
    cursors: &[usize],
    k: usize,
    clf: &LinearClassifier,
    emb: &Embeddings,
) -> Result<CycleSelection> {
    if cursors.len() != rankings.len() {
        return Err(Error::LengthMismatch {
            left: cursors.len(),
            right: rankings.len(),
        });
    }
    let mut chunks = Vec::new();
    let mut consumed = Vec::with_capacity(rankings.len());
    for (r, &cur) in rankings.iter().zip(cursors) {
        let start = cur.min(r.len());
        let end = (start + k).min(r.len());
        consumed.push(end - start);
        chunks.extend(r.entries[start..end].iter().map(|e| (r.label, *e)));
    }
    let new_cursors: Vec<usize> = cursors.iter().zip(&consumed).map(|(c, n)| c + n).collect();
    if chunks.is_empty() {
        return Ok(CycleSelection {
            tuning: PseudoLabeledSet::default(),
            cursors: new_cursors,
            consumed,
        });
    }

    let mut x = Array2::zeros((chunks.len(), emb.feature_dim()));
    for (mut row, (_, e)) in x.rows_mut().into_iter().zip(&chunks) {
        emb.check_image(e.image)?;
        row.assign(&emb.feature(e.image).mapv(f64::from));
    }
    let predicted = clf.predict(x.view())?;
    let claims = chunks
        .iter()
        .zip(predicted)
        .filter(|((label, _), pred)| pred == label)
        .map(|((label, e), _)| Claim {
            image: e.image,
            label: *label,
            score: e.score,
        })
        .collect();
    Ok(CycleSelection {
        tuning: resolve_claims(claims),
        cursors: new_cursors,
        consumed,
    })
}

fn exhausted(rankings: &[Ranking], cursors: &[usize]) -> bool {
    rankings.iter().zip(cursors).all(|(r, &c)| c >= r.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainOutcome {
    pub classifier: LinearClassifier,
    /// Classifier right after the seed phase, before any cycle.
    pub seed_classifier: LinearClassifier,
    pub seed: PseudoLabeledSet,
    pub history: CycleHistory,
}

/// Seed phase followed by self-training cycles until a stop criterion fires.
pub fn run_selftraining(
    emb: &Embeddings,
    rankings: &[Ranking],
    config: &CycleConfig,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    check_rankings(rankings, emb.num_classes())?;
    if rankings.iter().all(|r| r.is_empty()) {
        return Err(Error::SeedEmpty);
    }
    let SeedSelection { seed, mut cursors } = assemble_seed(rankings, config.k)?;

    let mut clf = LinearClassifier::new(emb.feature_dim(), emb.num_classes(), config.rng_seed)?;
    let seed_batch = seed.to_batch(emb)?;
    let seed_trace = clf.train(&seed_batch, &config.train_config(config.i_epochs))?;
    let seed_classifier = clf.clone();
    let mut prev_last_loss = *seed_trace.last().expect("i_epochs >= 1");

    let tune_config = config.train_config(config.r_epochs);
    let mut cycles = Vec::new();
    let stop_reason = loop {
        if exhausted(rankings, &cursors) {
            break StopReason::RankingExhausted;
        }
        let cycle = cycles.len() + 1;
        let selection = cycle_select(rankings, &cursors, config.k, &clf, emb)?;
        cursors = selection.cursors;
        let mut record = CycleRecord {
            cycle,
            consumed: selection.consumed,
            confident_count: selection.tuning.len(),
            first_epoch_loss: None,
            last_epoch_loss: None,
            loss_trace: Vec::new(),
            rolled_back: false,
        };
        if selection.tuning.is_empty() {
            cycles.push(record);
            break StopReason::NoConfidentSamples;
        }

        let mut tuning = selection.tuning;
        if config.retain_seed {
            tuning.extend(&seed);
        }
        let before = clf.clone();
        let trace = clf.train(&tuning.to_batch(emb)?, &tune_config)?;
        let first = trace[0];
        let last = *trace.last().expect("r_epochs >= 1");
        record.first_epoch_loss = Some(first);
        record.last_epoch_loss = Some(last);
        record.loss_trace = trace;

        let stop = if cycle >= config.max_cycles {
            Some(StopReason::MaxCycles)
        } else if exhausted(rankings, &cursors) {
            Some(StopReason::RankingExhausted)
        } else if first >= prev_last_loss {
            clf = before;
            record.rolled_back = true;
            Some(StopReason::LossRebound)
        } else if last >= config.loss_limit {
            Some(StopReason::LossAboveLimit)
        } else {
            None
        };
        cycles.push(record);
        if let Some(reason) = stop {
            break reason;
        }
        prev_last_loss = last;
    };

    Ok(SelfTrainOutcome {
        classifier: clf,
        seed_classifier,
        seed,
        history: CycleHistory {
            seed: SeedRecord {
                assignments: seed_batch.len(),
                loss_trace: seed_trace,
            },
            cycles,
            stop_reason,
        },
    })
}
