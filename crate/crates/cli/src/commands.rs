use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use azclip::data::{
    augment_training_images, load_embeddings, load_manifest, save_embeddings, save_manifest,
    synth_dataset, synth_manifest, PairedDataset, Split,
};
use azclip::metrics::{
    evaluate_run, judgments_for_split, load_judgments, render_table, save_judgments, TableRow,
};
use azclip::rng::derive_seed;
use azclip::trainer::train_logged;
use azclip::{build_index, init_model, load_checkpoint, load_index, save_checkpoint, save_index};
use serde_json::{json, Value};

use crate::args::{
    EvalArgs, IndexArgs, IngestArgs, PrintConfigArgs, QueryArgs, SynthArgs, TrainArgs,
};
use crate::config::RunConfig;
use crate::error::CliError;

const AUGMENT_STREAM: u64 = 0xA0_6E;

type CmdResult = Result<(), CliError>;

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::file(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &Value) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::file(format!("cannot write {}: {e}", path.display())))
}

fn print_json(value: &Value) {
    println!("{value}");
}

fn split_counts(ds: &PairedDataset) -> Value {
    let mut m = serde_json::Map::new();
    for s in Split::ALL {
        m.insert(s.as_str().into(), ds.split_len(s).into());
    }
    Value::Object(m)
}

fn write_judgments(ds: &PairedDataset, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for split in Split::ALL {
        let path = dir.join(format!("judgments-{split}.jsonl"));
        save_judgments(&judgments_for_split(ds, split), &path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    args.data.apply(&mut cfg);
    let ds = synth_dataset(&cfg.synth())?;
    create_dir(&args.out)?;
    save_embeddings(ds.image_store(), args.out.join("images.azeb"))?;
    save_embeddings(ds.text_store(), args.out.join("texts.azeb"))?;
    save_manifest(&synth_manifest(&ds), args.out.join("manifest.jsonl"))?;
    write_judgments(&ds, &args.out)?;
    write_json(&args.out.join("config.json"), &cfg.to_value())?;
    print_json(&json!({
        "out": args.out,
        "images": ds.image_store().len(),
        "captions": ds.pairs().len(),
        "splits": split_counts(&ds),
    }));
    Ok(())
}

pub fn ingest(args: &IngestArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    if let Some(c) = args.captions_per_image {
        cfg.data.captions_per_image = c;
    }
    let records = load_manifest(&args.manifest)?;
    let images = load_embeddings(&args.images)?;
    let texts = load_embeddings(&args.texts)?;
    let required = (!args.allow_ragged).then_some(cfg.data.captions_per_image);
    let ds = PairedDataset::from_manifest(&records, images, texts, required)?;
    create_dir(&args.out)?;
    write_judgments(&ds, &args.out)?;
    let summary = json!({
        "config": cfg.to_value(),
        "manifest": args.manifest,
        "images": ds.image_store().len(),
        "captions": ds.pairs().len(),
        "img_dim": ds.image_store().dim(),
        "txt_dim": ds.text_store().dim(),
        "allow_ragged": args.allow_ragged,
        "splits": split_counts(&ds),
    });
    write_json(&args.out.join("dataset.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

pub fn train(args: &TrainArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    args.augment.apply(&mut cfg);
    args.model.apply(&mut cfg);
    args.loss.apply(&mut cfg);
    args.train.apply(&mut cfg);
    let mut tcfg = cfg.trainer();
    tcfg.validate()?;

    let records = load_manifest(args.data.join("manifest.jsonl"))?;
    let images = load_embeddings(args.data.join("images.azeb"))?;
    let texts = load_embeddings(args.data.join("texts.azeb"))?;
    let mut ds = PairedDataset::from_manifest(&records, images, texts, None)?;
    if cfg.data.augment_copies > 0 {
        ds = augment_training_images(
            &ds,
            cfg.data.augment_sigma,
            cfg.data.augment_copies,
            derive_seed(cfg.seed, AUGMENT_STREAM),
        )?;
    }

    let mut model = init_model(
        ds.image_store().dim(),
        ds.text_store().dim(),
        cfg.model.shared_dim,
        cfg.seed,
    )?;
    model.meta = json!({
        "config": cfg.to_value(),
        "image_encoder": cfg.model.image_encoder,
        "text_encoder": cfg.model.text_encoder,
    });

    create_dir(&args.out)?;
    let checkpoint = args.out.join("model.azck");
    tcfg.checkpoint_path = Some(checkpoint.clone());
    let log_path = args.out.join("train_log.jsonl");
    let log_file = fs::File::create(&log_path)
        .map_err(|e| CliError::file(format!("cannot create {}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(log_file);
    let (model, report) = train_logged(model, &ds, &tcfg, &mut log)?;
    log.flush()?;
    save_checkpoint(&model, &checkpoint)?;

    let mut doc = report.to_json();
    doc.as_object_mut()
        .expect("object")
        .insert("config".into(), cfg.to_value());
    write_json(&args.out.join("train_report.json"), &doc)?;
    print_json(&json!({
        "checkpoint": checkpoint,
        "best_epoch": report.best_epoch,
        "best_loss": report.best_loss,
        "selection_split": report.selection_split,
        "steps": report.steps,
    }));
    Ok(())
}

pub fn index(args: &IndexArgs) -> CmdResult {
    let model = load_checkpoint(&args.checkpoint)?;
    let images = load_embeddings(&args.images)?;
    let index = build_index(&model, &images)?;
    save_index(&index, &args.out)?;
    print_json(&json!({
        "index": args.out,
        "images": index.len(),
        "dim": index.dim(),
        "model_fingerprint": index.fingerprint(),
    }));
    Ok(())
}

pub fn query(args: &QueryArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    let k = args.k.unwrap_or(cfg.eval.k);
    if k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let (query_id, vector) = match (&args.vector, &args.texts) {
        (Some(raw), None) => {
            let v: Vec<f64> = serde_json::from_str(raw).map_err(|e| {
                CliError::usage(format!("--vector is not a JSON array of numbers: {e}"))
            })?;
            ("vector".to_string(), v)
        }
        (None, Some(path)) => {
            let texts = load_embeddings(path)?;
            let row = match (args.row, &args.text_id) {
                (Some(r), _) if r < texts.len() => r,
                (Some(r), _) => {
                    return Err(CliError::usage(format!(
                        "--row {r} out of range for {} rows",
                        texts.len()
                    )));
                }
                (None, Some(id)) => texts.position(id).ok_or_else(|| {
                    CliError::usage(format!("text id {id:?} not found in {}", path.display()))
                })?,
                (None, None) => return Err(CliError::usage("--texts needs --row or --text-id")),
            };
            (texts.ids()[row].clone(), texts.vectors().row(row).to_vec())
        }
        _ => return Err(CliError::usage("give exactly one of --vector or --texts")),
    };
    let model = load_checkpoint(&args.checkpoint)?;
    let index = load_index(&args.index)?;
    let result = index.query(&model, query_id, &vector, k)?;
    print_json(&json!({
        "query": result.query_id,
        "k": result.k,
        "hits": result.hits,
    }));
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    args.eval.apply(&mut cfg);
    let model = load_checkpoint(&args.checkpoint)?;
    let index = load_index(&args.index)?;
    let texts = load_embeddings(&args.texts)?;
    let judgments = load_judgments(&args.judgments)?;
    let rows = judgments
        .iter()
        .map(|j| {
            texts.position(&j.query_id).ok_or_else(|| {
                CliError::file(format!(
                    "judged query {:?} missing from {}",
                    j.query_id,
                    args.texts.display()
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let queries = texts.subset(&rows)?;
    let results = index.batch_query(&model, &queries, index.len().max(1))?;
    let report = evaluate_run(&results, &judgments)?;

    let dataset = cfg.eval.dataset_name.clone().unwrap_or_else(|| {
        args.texts
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let doc = json!({
        "config": cfg.to_value(),
        "model": cfg.eval.model_name,
        "dataset": dataset,
        "index_fingerprint": index.fingerprint(),
        "metrics": report,
    });
    write_json(&args.out, &doc)?;
    print!(
        "{}",
        render_table(&[TableRow {
            model: &cfg.eval.model_name,
            dataset: &dataset,
            report: &report,
        }])
    );
    Ok(())
}

pub fn print_config(args: &PrintConfigArgs) -> CmdResult {
    let mut cfg = RunConfig::load(args.config.config.as_deref())?;
    args.config.apply(&mut cfg);
    args.data.apply(&mut cfg);
    args.augment.apply(&mut cfg);
    args.model.apply(&mut cfg);
    args.loss.apply(&mut cfg);
    args.train.apply(&mut cfg);
    args.eval.apply(&mut cfg);
    println!("{}", serde_json::to_string_pretty(&cfg.to_value())?);
    Ok(())
}
