//! Seed-selection accuracy over a grid of `k` and classification accuracy,
//! with JSON/CSV emitters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{write_io, Error, Result};
use crate::similarity::{rank_all, Ranking, SelectionMethod};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCell {
    pub method: SelectionMethod,
    pub k: usize,
    /// Macro average over classes.
    pub accuracy: f64,
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub b_size: usize,
    /// `None` when the neighbor count follows each `k`.
    pub k_neighbors: Option<usize>,
    pub k_grid: Vec<usize>,
    pub cells: Vec<SelectionCell>,
}

impl SelectionReport {
    pub fn cell(&self, method: SelectionMethod, k: usize) -> Option<&SelectionCell> {
        self.cells.iter().find(|c| c.method == method && c.k == k)
    }
}

/// Fraction of each ranking's top `k` whose true class is the ranking label.
/// Short rankings are scored over what they have.
pub fn top_k_purity(rankings: &[Ranking], ground_truth: &[usize], k: usize) -> Vec<f64> {
    rankings
        .iter()
        .map(|r| {
            let take = k.min(r.len());
            if take == 0 {
                return 0.0;
            }
            let hits = r
                .images()
                .take(take)
                .filter(|&i| ground_truth[i] == r.label)
                .count();
            hits as f64 / take as f64
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Selection accuracy for every `(method, k)` pair. With `k_neighbors = None`
/// the improved ranking for each `k` uses `k` neighbors.
pub fn selection_accuracy(
    store: &EmbeddingStore,
    k_grid: &[usize],
    methods: &[SelectionMethod],
    b_size: usize,
    k_neighbors: Option<usize>,
) -> Result<SelectionReport> {
    let gt = store.ground_truth().ok_or(Error::MissingGroundTruth)?;
    if k_grid.is_empty() {
        return Err(Error::InvalidConfig("k grid is empty".into()));
    }
    if k_grid[0] == 0 || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "k grid must be positive and strictly increasing".into(),
        ));
    }
    if *k_grid.last().unwrap() > b_size {
        return Err(Error::InvalidConfig(format!(
            "largest k ({}) exceeds B_size ({b_size})",
            k_grid.last().unwrap()
        )));
    }
    let emb = store.embeddings();
    let mut cells = Vec::new();
    for &method in methods {
        let fixed = match (method, k_neighbors) {
            (SelectionMethod::Default, _) => Some(rank_all(emb, b_size, 1, method)?),
            (SelectionMethod::Improved, Some(kn)) => Some(rank_all(emb, b_size, kn, method)?),
            (SelectionMethod::Improved, None) => None,
        };
        for &k in k_grid {
            let per_class = match &fixed {
                Some(r) => top_k_purity(r, gt, k),
                None => top_k_purity(&rank_all(emb, b_size, k, method)?, gt, k),
            };
            cells.push(SelectionCell {
                method,
                k,
                accuracy: mean(&per_class),
                per_class,
            });
        }
    }
    Ok(SelectionReport {
        b_size,
        k_neighbors,
        k_grid: k_grid.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Argmax of CLIP text-image similarity.
    ZeroShot,
    SeedOnly,
    Complete,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::ZeroShot => "zero_shot",
            Variant::SeedOnly => "seed_only",
            Variant::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub variant: Variant,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `None` for classes with no support.
    pub per_class: Vec<Option<f64>>,
    pub support: Vec<usize>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classification_accuracy(
    predictions: &[usize],
    ground_truth: &[usize],
    num_classes: usize,
    variant: Variant,
) -> Result<AccuracyReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: ground_truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidConfig("no predictions to score".into()));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(ground_truth) {
        for (what, v) in [("prediction", p), ("ground_truth label", y)] {
            if v >= num_classes {
                return Err(Error::IndexOutOfRange {
                    what,
                    index: v,
                    bound: num_classes,
                });
            }
        }
        confusion[y][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let per_class = (0..num_classes)
        .map(|c| (support[c] > 0).then(|| confusion[c][c] as f64 / support[c] as f64))
        .collect();
    Ok(AccuracyReport {
        variant,
        accuracy: correct as f64 / predictions.len() as f64,
        correct,
        total: predictions.len(),
        per_class,
        support,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

pub trait Report: Serialize {
    fn to_csv(&self) -> String;
}

impl Report for SelectionReport {
    /// `method,k,accuracy`, one row per cell.
    fn to_csv(&self) -> String {
        let mut out = String::from("method,k,accuracy\n");
        for c in &self.cells {
            writeln!(out, "{},{},{}", c.method, c.k, c.accuracy).unwrap();
        }
        out
    }
}

impl Report for AccuracyReport {
    /// Per-class rows followed by an `overall` row.
    fn to_csv(&self) -> String {
        let mut out = String::from("variant,class,support,correct,accuracy\n");
        let v = self.variant.as_str();
        for (c, row) in self.confusion.iter().enumerate() {
            let acc = self.per_class[c].map(|a| a.to_string()).unwrap_or_default();
            writeln!(out, "{v},{c},{},{},{acc}", self.support[c], row[c]).unwrap();
        }
        writeln!(
            out,
            "{v},overall,{},{},{}",
            self.total, self.correct, self.accuracy
        )
        .unwrap();
        out
    }
}

/// Renders a report. JSON output gains a top-level `config` key when an echo
/// is supplied.
pub fn render_report<R: Report>(
    report: &R,
    format: ReportFormat,
    echo: Option<&serde_json::Value>,
) -> String {
    match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => {
            let mut value = serde_json::to_value(report).expect("report serializes");
            if let (Some(echo), Some(obj)) = (echo, value.as_object_mut()) {
                obj.insert("config".into(), echo.clone());
            }
            serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
        }
    }
}

pub fn emit_report<R: Report>(
    report: &R,
    path: &Path,
    format: ReportFormat,
    echo: Option<&serde_json::Value>,
) -> Result<()> {
    fs::write(path, render_report(report, format, echo)).map_err(|e| write_io(path, e))
}
