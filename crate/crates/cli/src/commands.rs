use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use selfseed_core::classifier::{load_checkpoint, save_checkpoint};
use selfseed_core::error::write_io;
use selfseed_core::eval::{
    classification_accuracy, emit_report, selection_accuracy, AccuracyReport, ReportFormat, Variant,
};
use selfseed_core::pipeline::{build_rankings, classify};
use selfseed_core::selftrain::{assemble_seed, run_selftraining, CycleHistory, PseudoLabeledSet};
use selfseed_core::similarity::zero_shot_predict;
use selfseed_core::synthetic::{self, SynthConfig};
use selfseed_core::{
    load_store, run_pipeline, write_store, EmbeddingStore, Error, LinearClassifier, Ranking,
    Result, SelectionMethod,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{EvalArgs, PredictArgs, RunArgs, SynthArgs, TrainArgs};
use crate::config::RunConfig;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| write_io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("json serializes") + "\n"),
    )
}

fn prepare(command: &'static str, args: &RunArgs) -> Result<(RunConfig, EmbeddingStore)> {
    let config = RunConfig::resolve(command, args)?;
    let mut store = load_store(&config.store)?;
    if config.standardize_features {
        store = store.with_standardized_features();
    }
    fs::create_dir_all(&config.out).map_err(|e| write_io(&config.out, e))?;
    Ok((config, store))
}

#[derive(Serialize, Deserialize)]
struct RankingsFile {
    method: SelectionMethod,
    b_size: usize,
    k_neighbors: usize,
    rankings: Vec<Ranking>,
}

fn rankings_json(config: &RunConfig, store: &EmbeddingStore, rankings: &[Ranking]) -> Value {
    let names = store.embeddings().class_names();
    let ids = store.image_ids();
    let rankings: Vec<Value> = rankings
        .iter()
        .map(|r| {
            let entries: Vec<Value> = r
                .entries
                .iter()
                .map(|e| json!({"image": e.image, "image_id": ids[e.image], "score": e.score}))
                .collect();
            json!({"label": r.label, "class_name": names[r.label], "entries": entries})
        })
        .collect();
    json!({
        "config": config.echo(),
        "method": config.method,
        "b_size": config.cycle.b_size,
        "k_neighbors": config.pipeline().k_neighbors(),
        "rankings": rankings,
    })
}

fn load_rankings(path: &Path) -> Result<Vec<Ranking>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read_io(path, e))?;
    let file: RankingsFile = serde_json::from_str(&text).map_err(|e| Error::InvalidFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(file.rankings)
}

fn seed_json(config: &RunConfig, store: &EmbeddingStore, seed: &PseudoLabeledSet) -> Value {
    let assignments: Vec<Value> = seed
        .assignments
        .iter()
        .map(|a| labeled(store, a.image, a.label))
        .collect();
    json!({"config": config.echo(), "k": config.cycle.k, "assignments": assignments})
}

fn labeled(store: &EmbeddingStore, image: usize, label: usize) -> Value {
    json!({
        "image": image,
        "image_id": store.image_ids()[image],
        "label": label,
        "class_name": store.embeddings().class_names()[label],
    })
}

fn history_jsonl(config: &RunConfig, history: &CycleHistory) -> String {
    let header = json!({"phase": "config", "config": config.echo()});
    format!("{header}\n{}", history.to_jsonl())
}

fn write_predictions(
    config: &RunConfig,
    store: &EmbeddingStore,
    predictions: &[usize],
    stem: &str,
) -> Result<()> {
    let path = config
        .out
        .join(format!("{stem}.{}", config.format.extension()));
    match config.format {
        ReportFormat::Json => {
            let rows: Vec<Value> = predictions
                .iter()
                .enumerate()
                .map(|(i, &p)| labeled(store, i, p))
                .collect();
            write_json(
                &path,
                &json!({"config": config.echo(), "predictions": rows}),
            )
        }
        ReportFormat::Csv => {
            let names = store.embeddings().class_names();
            let mut out = String::from("image,image_id,label,class_name\n");
            for (i, &p) in predictions.iter().enumerate() {
                writeln!(out, "{i},{},{p},{}", store.image_ids()[i], names[p]).unwrap();
            }
            write_text(&path, &out)
        }
    }
}

fn write_selection_report(config: &RunConfig, store: &EmbeddingStore) -> Result<()> {
    let report = selection_accuracy(
        store,
        &config.k_grid,
        &[SelectionMethod::Default, SelectionMethod::Improved],
        config.cycle.b_size,
        config.k_neighbors,
    )?;
    let path = config
        .out
        .join(format!("selection_report.{}", config.format.extension()));
    emit_report(&report, &path, config.format, Some(&config.echo()))
}

fn write_accuracy(config: &RunConfig, report: &AccuracyReport) -> Result<()> {
    let path = config.out.join(format!(
        "accuracy_{}.{}",
        report.variant.as_str(),
        config.format.extension()
    ));
    emit_report(report, &path, config.format, Some(&config.echo()))
}

pub fn select_seed(args: &RunArgs) -> Result<()> {
    let (config, store) = prepare("select-seed", args)?;
    let emb = store.embeddings();
    let rankings = build_rankings(emb, &config.pipeline())?;
    let seed = assemble_seed(&rankings, config.cycle.k)?.seed;
    write_json(
        &config.out.join("rankings.json"),
        &rankings_json(&config, &store, &rankings),
    )?;
    write_json(
        &config.out.join("seed.json"),
        &seed_json(&config, &store, &seed),
    )?;
    if store.ground_truth().is_some() {
        write_selection_report(&config, &store)?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let (mut config, store) = prepare("train", &args.run)?;
    config.rankings = args.rankings.clone();
    let emb = store.embeddings();
    let rankings = match &args.rankings {
        Some(path) => load_rankings(path)?,
        None => build_rankings(emb, &config.pipeline())?,
    };
    let outcome = run_selftraining(emb, &rankings, &config.cycle)?;
    save_checkpoint(
        &outcome.classifier,
        &config.out.join("checkpoint"),
        config.echo(),
    )?;
    save_checkpoint(
        &outcome.seed_classifier,
        &config.out.join("seed_checkpoint"),
        config.echo(),
    )?;
    write_text(
        &config.out.join("history.jsonl"),
        &history_jsonl(&config, &outcome.history),
    )
}

fn checkpoint_predictions(store: &EmbeddingStore, dir: &Path) -> Result<Vec<usize>> {
    let (clf, _): (LinearClassifier, _) = load_checkpoint(dir)?;
    classify(&clf, store.embeddings())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let (mut config, store) = prepare("predict", &args.run)?;
    config.checkpoint = Some(args.checkpoint.clone());
    let predictions = checkpoint_predictions(&store, &args.checkpoint)?;
    write_predictions(&config, &store, &predictions, "predictions")
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let (mut config, store) = prepare("eval", &args.run)?;
    config.checkpoint = args.checkpoint.clone();
    let gt = store.ground_truth().ok_or(Error::MissingGroundTruth)?;
    let n = store.num_classes();
    write_selection_report(&config, &store)?;
    let zero_shot = zero_shot_predict(store.embeddings());
    write_accuracy(
        &config,
        &classification_accuracy(&zero_shot, gt, n, Variant::ZeroShot)?,
    )?;
    if let Some(dir) = &args.checkpoint {
        let predictions = checkpoint_predictions(&store, dir)?;
        write_accuracy(
            &config,
            &classification_accuracy(&predictions, gt, n, Variant::Complete)?,
        )?;
    }
    Ok(())
}

pub fn full_run(args: &RunArgs) -> Result<()> {
    let (config, store) = prepare("full-run", args)?;
    let out = run_pipeline(&store, &config.pipeline())?;
    let outcome = &out.outcome;
    write_json(
        &config.out.join("rankings.json"),
        &rankings_json(&config, &store, &out.rankings),
    )?;
    write_json(
        &config.out.join("seed.json"),
        &seed_json(&config, &store, &outcome.seed),
    )?;
    save_checkpoint(
        &outcome.classifier,
        &config.out.join("checkpoint"),
        config.echo(),
    )?;
    save_checkpoint(
        &outcome.seed_classifier,
        &config.out.join("seed_checkpoint"),
        config.echo(),
    )?;
    write_text(
        &config.out.join("history.jsonl"),
        &history_jsonl(&config, &outcome.history),
    )?;
    write_predictions(&config, &store, &out.predictions, "predictions")?;

    let mut accuracy = json!(null);
    if let Some(reports) = &out.accuracy {
        write_selection_report(&config, &store)?;
        for report in reports {
            write_accuracy(&config, report)?;
        }
        accuracy = reports
            .iter()
            .map(|r| (r.variant.as_str().to_string(), json!(r.accuracy)))
            .collect::<serde_json::Map<_, _>>()
            .into();
    }
    let summary = json!({
        "config": config.echo(),
        "stop_reason": outcome.history.stop_reason,
        "cycles": outcome.history.cycles.len(),
        "seed_size": outcome.seed.len(),
        "accuracy": accuracy,
    });
    write_json(&config.out.join("summary.json"), &summary)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        num_classes: args.num_classes.unwrap_or(d.num_classes),
        images_per_class: args.images_per_class.unwrap_or(d.images_per_class),
        clip_dim: args.clip_dim.unwrap_or(d.clip_dim),
        feature_dim: args.feature_dim.unwrap_or(d.feature_dim),
        separation: args.separation.unwrap_or(d.separation),
        noise_sigma: args.noise.unwrap_or(d.noise_sigma),
        label_bias: args.label_bias.unwrap_or(d.label_bias),
        confusion_strength: args.confusion.unwrap_or(d.confusion_strength),
        feature_scale: args.feature_scale.unwrap_or(d.feature_scale),
        rng_seed: args.seed.unwrap_or(d.rng_seed),
    };
    let mut store = synthetic::generate(&config)?;
    if args.no_ground_truth {
        let meta = store.meta().cloned();
        let e = store.embeddings();
        store = EmbeddingStore::new(
            e.image_clip().clone(),
            e.text_clip().clone(),
            e.features().clone(),
            e.class_names().to_vec(),
            store.image_ids().to_vec(),
            None,
        )?;
        if let Some(meta) = meta {
            store = store.with_meta(meta);
        }
    }
    write_store(&store, &args.out).map(|_| ())
}
