use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::{json, Value};

use sinet_core::checkpoint::{load_checkpoint_with_id, save_checkpoint};
use sinet_core::data::{dataset_stats, load_csv, load_inputs_csv, ColumnMap, Dataset, DatasetProvenance};
use sinet_core::encoding::{EncoderSpec, OverflowPolicy, UnknownPolicy};
use sinet_core::gradcheck::{check_model, check_primitives, small_dual_config, GradCheck};
use sinet_core::model::{SinetModel, Variant};
use sinet_core::scharber::{self, ScharberInputs};
use sinet_core::synthetic::{generate, SynthSpec};
use sinet_core::training::{self, EncodedSet, InputEncoder, Metrics, Split, SplitSpec};
use sinet_core::transfer;
use sinet_core::{Result, SinetError, Vocabulary};

use crate::manifest::{io_err, ManifestBuilder};
use crate::{
    EncodeArgs, EvalArgs, FinetuneArgs, GradcheckArgs, InspectArgs, Notation, OptimArgs, PredictArgs,
    ScharberArgs, SynthArgs, SynthKind, TrainArgs,
};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Metrics, with MAPE reported as null when a target is too close to zero.
fn metrics_json(model: &SinetModel, set: &EncodedSet, threads: usize) -> Result<Value> {
    match training::evaluate(model, set, threads) {
        Ok(m) => Ok(serde_json::to_value(m)?),
        Err(SinetError::MapeUndefined { mse, mae }) => Ok(json!({ "mse": mse, "mae": mae, "mape": null })),
        Err(e) => Err(e),
    }
}

fn split_spec(optim: &OptimArgs, seed: u64) -> SplitSpec {
    SplitSpec {
        strat_bins: optim.strat_bins,
        ..SplitSpec::with_seed(seed)
    }
}

struct Parts {
    train: EncodedSet,
    validation: EncodedSet,
    test: EncodedSet,
}

fn split_set(set: &EncodedSet, split: &Split) -> Parts {
    Parts {
        train: set.subset(&split.train),
        validation: set.subset(&split.validation),
        test: set.subset(&split.test),
    }
}

fn warn_lengths(ds: &Dataset, smiles_len: usize, inchi_len: usize) -> Result<()> {
    for w in dataset_stats(ds)?.length_warnings(smiles_len, inchi_len) {
        warn!("{w}");
    }
    Ok(())
}

pub fn train(a: &TrainArgs, threads: usize) -> Result<()> {
    let mut mb = ManifestBuilder::start("train");
    mb.input(&a.data)?;
    let ds = load_csv(&a.data, a.provenance.into(), &ColumnMap::default())?;
    warn_lengths(&ds, a.arch.smiles_len, a.arch.inchi_len)?;

    let smiles: Vec<&str> = ds.records.iter().map(|r| r.smiles.as_str()).collect();
    let inchi: Vec<&str> = ds.records.iter().map(|r| r.inchi.as_str()).collect();
    let config = a.arch.config(
        a.variant.into(),
        Vocabulary::build(&smiles, true)?,
        Vocabulary::build(&inchi, true)?,
    );
    config.validate()?;
    let set = InputEncoder::for_config(&config, a.overflow(), UnknownPolicy::Reject)?.encode(&ds)?;
    let split = training::stratified_split(&set.targets(), &split_spec(&a.optim, a.seed))?;
    let parts = split_set(&set, &split);
    info!(
        "{} molecules: {} train / {} validation / {} test",
        set.len(),
        parts.train.len(),
        parts.validation.len(),
        parts.test.len()
    );

    let mut model = SinetModel::build(config, a.seed)?;
    info!("{} variant, {} parameters", model.variant().short_name(), model.count_parameters());
    let tc = a.optim.train_config(a.seed, threads);
    let history = training::train(&mut model, &parts.train, &parts.validation, &tc)?;

    create_dir(&a.out)?;
    let ckpt = a.out.join("model.sinc");
    let id = save_checkpoint(&model, &ckpt)?;
    mb.artifact(&ckpt);
    let hist = a.out.join("history.csv");
    history.write_csv(create_file(&hist)?)?;
    mb.artifact(&hist);
    let split_path = a.out.join("split.json");
    write_json(&split_path, &split)?;
    mb.artifact(&split_path);

    let metrics = json!({
        "checkpoint_id": id,
        "epochs": history.epochs.len(),
        "best_epoch": history.best_epoch,
        "stopped_early": history.stopped_early,
        "optimizer_steps": history.optimizer_steps,
        "train": metrics_json(&model, &parts.train, threads)?,
        "validation": metrics_json(&model, &parts.validation, threads)?,
        "test": metrics_json(&model, &parts.test, threads)?,
    });
    let config = json!({
        "model": model.config(),
        "metadata": model.metadata(),
        "training": tc,
        "split": split_spec(&a.optim, a.seed),
        "overflow": a.overflow(),
        "threads": threads,
    });
    mb.finish(&a.out.join("manifest.json"), config, Some(a.seed), metrics.clone())?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

pub fn finetune(a: &FinetuneArgs, threads: usize) -> Result<()> {
    let mut mb = ManifestBuilder::start("finetune");
    mb.input(&a.checkpoint)?;
    mb.input(&a.data)?;
    let (source, source_id) = load_checkpoint_with_id(&a.checkpoint)?;
    let ds = load_csv(&a.data, a.provenance.into(), &ColumnMap::default())?;
    let c = source.config();
    warn_lengths(&ds, c.smiles_len, c.inchi_len)?;
    let tc = a.optim.train_config(a.seed, threads);
    create_dir(&a.out)?;

    let metrics = if a.compare_scratch {
        if a.seeds == 0 {
            return Err(SinetError::Usage("--seeds must be at least 1".into()));
        }
        let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
        let report = transfer::compare_transfer(&source, &source_id, &ds, &tc, &seeds)?;
        let csv_path = a.out.join("transfer_report.csv");
        report.write_csv(create_file(&csv_path)?)?;
        mb.artifact(&csv_path);
        let json_path = a.out.join("transfer_report.json");
        write_json(&json_path, &report)?;
        mb.artifact(&json_path);
        let wins = report.paired_mape().iter().filter(|(_, s, f)| f < s).count();
        report.write_csv(std::io::stdout().lock())?;
        json!({
            "source_checkpoint_id": source_id,
            "seeds": seeds,
            "scratch": report.scratch_metrics,
            "finetuned": report.finetuned_metrics,
            "finetuned_wins": wins,
            "runs": report.rows.len(),
        })
    } else {
        let set = transfer::target_encoder(&source)?.encode(&ds)?;
        let split = training::stratified_split(&set.targets(), &split_spec(&a.optim, a.seed))?;
        let parts = split_set(&set, &split);
        let (model, history) = transfer::finetune(&source, &source_id, &parts.train, &parts.validation, &tc)?;
        let ckpt = a.out.join("model.sinc");
        let id = save_checkpoint(&model, &ckpt)?;
        mb.artifact(&ckpt);
        let hist = a.out.join("history.csv");
        history.write_csv(create_file(&hist)?)?;
        mb.artifact(&hist);
        let split_path = a.out.join("split.json");
        write_json(&split_path, &split)?;
        mb.artifact(&split_path);
        let m = json!({
            "checkpoint_id": id,
            "source_checkpoint_id": source_id,
            "epochs": history.epochs.len(),
            "best_epoch": history.best_epoch,
            "test": metrics_json(&model, &parts.test, threads)?,
        });
        println!("{}", serde_json::to_string_pretty(&m)?);
        m
    };
    let config = json!({
        "training": tc,
        "split": split_spec(&a.optim, a.seed),
        "compare_scratch": a.compare_scratch,
        "seeds": a.seeds,
        "threads": threads,
    });
    mb.finish(&a.out.join("manifest.json"), config, Some(a.seed), metrics)?;
    Ok(())
}

pub fn eval(a: &EvalArgs, threads: usize) -> Result<()> {
    let mut mb = ManifestBuilder::start("eval");
    mb.input(&a.checkpoint)?;
    mb.input(&a.data)?;
    let (model, id) = load_checkpoint_with_id(&a.checkpoint)?;
    let ds = load_csv(&a.data, DatasetProvenance::Source, &ColumnMap::default())?;
    let set = InputEncoder::for_config(model.config(), OverflowPolicy::Reject, UnknownPolicy::MapToUnk)?.encode(&ds)?;
    let m: Metrics = training::evaluate(&model, &set, threads)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    create_dir(&a.out)?;
    let metrics = json!({ "checkpoint_id": id, "count": set.len(), "metrics": m });
    mb.finish(&a.out.join("eval-manifest.json"), json!({ "threads": threads }), None, metrics)?;
    Ok(())
}

pub fn predict(a: &PredictArgs, threads: usize) -> Result<()> {
    let mut mb = ManifestBuilder::start("predict");
    mb.input(&a.checkpoint)?;
    mb.input(&a.data)?;
    let (model, id) = load_checkpoint_with_id(&a.checkpoint)?;
    let molecules = load_inputs_csv(&a.data, &ColumnMap::default())?;
    let set = InputEncoder::for_config(model.config(), OverflowPolicy::Reject, UnknownPolicy::MapToUnk)?
        .encode_unlabelled(&molecules)?;
    let predictions = training::predict(&model, &set, threads)?;

    let write = |w: &mut dyn Write| -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let err = |e: csv::Error| SinetError::Data(format!("csv write failed: {e}"));
        w.write_record(["id", "homo_ev_pred"]).map_err(err)?;
        for (m, p) in molecules.iter().zip(&predictions) {
            w.write_record([m.id.as_str(), p.to_string().as_str()]).map_err(err)?;
        }
        w.flush().map_err(|e| SinetError::Data(format!("csv flush failed: {e}")))
    };
    match &a.output {
        Some(path) => {
            write(&mut create_file(path)?)?;
            mb.artifact(path);
        }
        None => write(&mut std::io::stdout().lock())?,
    }
    create_dir(&a.out)?;
    let metrics = json!({ "checkpoint_id": id, "count": predictions.len() });
    mb.finish(&a.out.join("predict-manifest.json"), json!({ "threads": threads }), None, metrics)?;
    Ok(())
}

pub fn scharber(a: &ScharberArgs) -> Result<()> {
    let mb = ManifestBuilder::start("scharber");
    let inputs = ScharberInputs {
        e_homo_donor: a.homo,
        e_lumo_acceptor: a.lumo,
        fill_factor: a.ff,
        j_sc: a.jsc,
        p_in: a.pin,
    };
    let r = scharber::evaluate(&inputs)?;
    println!("Voc={:.3} V, PCE={:.3}%", r.voc, r.pce);
    let mut metrics = json!({ "voc": r.voc, "pce": r.pce });
    if a.magnitude_convention {
        let m = scharber::evaluate_magnitude(&inputs)?;
        println!("magnitude convention (not the literal formula): Voc={:.3} V, PCE={:.3}%", m.voc, m.pce);
        metrics["magnitude_convention"] = serde_json::to_value(m)?;
    }
    create_dir(&a.out)?;
    let config = json!({ "inputs": inputs, "magnitude_convention": a.magnitude_convention });
    mb.finish(&a.out.join("scharber-manifest.json"), config, None, metrics)?;
    Ok(())
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let mut mb = ManifestBuilder::start("encode");
    let (vocab, default_len) = match (&a.checkpoint, &a.vocab) {
        (Some(path), _) => {
            mb.input(path)?;
            let (model, _) = load_checkpoint_with_id(path)?;
            let c = model.config();
            match a.notation {
                Notation::Smiles => (c.smiles_vocab.clone(), c.smiles_len),
                Notation::Inchi => (c.inchi_vocab.clone(), c.inchi_len),
            }
        }
        (None, Some(path)) => {
            mb.input(path)?;
            (Vocabulary::load(path)?, a.text.chars().count())
        }
        (None, None) => (Vocabulary::build(&[a.text.as_str()], false)?, a.text.chars().count()),
    };
    let overflow = if a.truncate { OverflowPolicy::Truncate } else { OverflowPolicy::Reject };
    let unknown = if a.map_unknown { UnknownPolicy::MapToUnk } else { UnknownPolicy::Reject };
    let spec = EncoderSpec::with_policies(vocab, a.max_len.unwrap_or(default_len), overflow, unknown)?;
    let m = spec.encode_onehot(&a.text)?;

    let mut out = std::io::stdout().lock();
    let mut header: Vec<String> = spec.vocabulary.chars().iter().map(char::to_string).collect();
    if spec.vocabulary.unk_index().is_some() {
        header.push("<UNK>".into());
    }
    let io = |e| io_err(Path::new("<stdout>"), e);
    writeln!(out, "# {} × {}: {}", spec.max_len, spec.width(), header.join(" ")).map_err(io)?;
    let chars: Vec<char> = a.text.chars().collect();
    for t in 0..spec.max_len {
        let row: Vec<String> = m.data()[t * spec.width()..(t + 1) * spec.width()]
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        let label = chars.get(t).map_or_else(|| "·".to_string(), char::to_string);
        writeln!(out, "{t:>4} {label} {}", row.join(" ")).map_err(io)?;
    }
    create_dir(&a.out)?;
    let config = json!({ "text": a.text, "max_len": spec.max_len, "overflow": overflow, "unknown": unknown });
    mb.finish(&a.out.join("encode-manifest.json"), config, None, json!({ "shape": m.shape() }))?;
    Ok(())
}

/// Runs the audit and reports whether every check passed.
pub fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    if a.seeds == 0 {
        return Err(SinetError::Usage("--seeds must be at least 1".into()));
    }
    let mb = ManifestBuilder::start("gradcheck");
    let mut results: Vec<(u64, String, GradCheck)> = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        for r in check_primitives(seed)? {
            results.push((seed, "primitive".into(), r));
        }
        for variant in Variant::ALL {
            let mut config = small_dual_config();
            config.variant = variant;
            for r in check_model(&config, seed)? {
                results.push((seed, variant.short_name().into(), r));
            }
        }
    }
    println!(
        "{:>5}  {:<9} {:<24} {:>7} {:>5} {:>12} {:>12} {:>8}",
        "seed", "scope", "check", "entries", "kinks", "max rel", "max abs", "result"
    );
    for (seed, scope, r) in &results {
        println!(
            "{seed:>5}  {scope:<9} {:<24} {:>7} {:>5} {:>12.3e} {:>12.3e} {:>8}",
            r.name,
            r.checked,
            r.kinks,
            r.max_relative_error,
            r.max_absolute_error,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|(_, _, r)| !r.passed()).count();
    println!("{} checks, {} failed", results.len(), failed);

    create_dir(&a.out)?;
    let report: Vec<Value> = results
        .iter()
        .map(|(seed, scope, r)| json!({ "seed": seed, "scope": scope, "check": r }))
        .collect();
    let report_path = a.out.join("gradcheck.json");
    write_json(&report_path, &report)?;
    let mut mb = mb;
    mb.artifact(&report_path);
    let metrics = json!({ "checks": results.len(), "failed": failed });
    mb.finish(
        &a.out.join("gradcheck-manifest.json"),
        json!({ "seeds": a.seeds }),
        Some(a.seed),
        metrics,
    )?;
    Ok(failed == 0)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut mb = ManifestBuilder::start("synth");
    let spec = match a.kind {
        SynthKind::Source => SynthSpec::source(a.count, a.seed),
        SynthKind::Target => SynthSpec::shifted_target(a.count, a.seed),
        SynthKind::Chain => SynthSpec::linear_chain(a.count, a.seed),
    };
    let ds = generate(&spec)?;
    sinet_core::data::save_csv(&ds, &a.output)?;
    mb.artifact(&a.output);
    create_dir(&a.out)?;
    let stats = dataset_stats(&ds)?;
    mb.finish(
        &a.out.join("synth-manifest.json"),
        serde_json::to_value(&spec)?,
        Some(a.seed),
        serde_json::to_value(&stats)?,
    )?;
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let mut mb = ManifestBuilder::start("inspect");
    mb.input(&a.checkpoint)?;
    let (model, id) = load_checkpoint_with_id(&a.checkpoint)?;
    let out = json!({
        "checkpoint_id": id,
        "config": model.config(),
        "metadata": model.metadata(),
        "summary": model.summary(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    create_dir(&a.out)?;
    let path: PathBuf = a.out.join("inspect-manifest.json");
    mb.finish(&path, json!({}), None, json!({ "checkpoint_id": id }))?;
    Ok(())
}
