//! Fine-tuning a pretrained model on a small target dataset, and the
//! paired scratch-versus-fine-tuned comparison.

use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoding::{OverflowPolicy, UnknownPolicy};
use crate::error::{Result, SinetError};
use crate::model::{Provenance, SinetModel};
use crate::training::{self, EncodedSet, History, InputEncoder, Metrics, SplitSpec, TrainConfig};

/// Encoder for target data: the source model's vocabularies and lengths, with
/// unseen characters mapped to UNK where the vocabulary reserves a slot.
pub fn target_encoder(source: &SinetModel) -> Result<InputEncoder> {
    InputEncoder::for_config(source.config(), OverflowPolicy::Reject, UnknownPolicy::MapToUnk)
}

fn check_compatible(model: &SinetModel, set: &EncodedSet) -> Result<()> {
    let c = model.config();
    let want_s = (c.smiles_len, c.smiles_vocab.width());
    let want_i = (c.inchi_len, c.inchi_vocab.width());
    if set.smiles_shape != want_s || set.inchi_shape != want_i {
        return Err(SinetError::Compatibility(format!(
            "target encoded as smiles {:?} / inchi {:?}, checkpoint expects {want_s:?} / {want_i:?}",
            set.smiles_shape, set.inchi_shape
        )));
    }
    Ok(())
}

/// Continues training every layer of `source` on the target data with a fresh
/// optimizer state. The returned model records `finetuned-from:<source_id>`.
pub fn finetune(
    source: &SinetModel,
    source_id: &str,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    config: &TrainConfig,
) -> Result<(SinetModel, History)> {
    check_compatible(source, train_set)?;
    check_compatible(source, val_set)?;
    let mut model = source.clone();
    let meta = model.metadata_mut();
    meta.provenance = Provenance::FinetunedFrom(source_id.to_string());
    meta.lineage.push(source_id.to_string());
    let history = training::train(&mut model, train_set, val_set, config)?;
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Scratch,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub seed: u64,
    pub kind: RunKind,
    pub metrics: Metrics,
    pub epochs: usize,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub mean: Metrics,
    /// Sample standard deviation (zero for a single seed).
    pub stdev: Metrics,
}

impl MetricSpread {
    fn of(rows: &[&Metrics]) -> Self {
        let n = rows.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / n;
        let sd = |f: fn(&Metrics) -> f64, mu: f64| {
            if rows.len() < 2 {
                0.0
            } else {
                (rows.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
        };
        let m = Metrics {
            mse: mean(|m| m.mse),
            mae: mean(|m| m.mae),
            mape: mean(|m| m.mape),
        };
        Self {
            stdev: Metrics {
                mse: sd(|m| m.mse, m.mse),
                mae: sd(|m| m.mae, m.mae),
                mape: sd(|m| m.mape, m.mape),
            },
            mean: m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_checkpoint_id: String,
    pub seeds: Vec<u64>,
    pub scratch_metrics: MetricSpread,
    pub finetuned_metrics: MetricSpread,
    pub rows: Vec<TransferRow>,
}

impl TransferReport {
    /// Paired per-seed test MAPE: `(seed, scratch, finetuned)`.
    pub fn paired_mape(&self) -> Vec<(u64, f64, f64)> {
        self.seeds
            .iter()
            .map(|&seed| {
                let get = |kind| {
                    self.rows
                        .iter()
                        .find(|r| r.seed == seed && r.kind == kind)
                        .map_or(f64::NAN, |r| r.metrics.mape)
                };
                (seed, get(RunKind::Scratch), get(RunKind::Finetuned))
            })
            .collect()
    }

    /// CSV with header `seed,kind,mse,mae,mape,epochs,test_size`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| SinetError::Data(format!("csv write failed: {e}"));
        w.write_record(["seed", "kind", "mse", "mae", "mape", "epochs", "test_size"])
            .map_err(err)?;
        for r in &self.rows {
            let kind = match r.kind {
                RunKind::Scratch => "scratch",
                RunKind::Finetuned => "finetuned",
            };
            w.write_record(&[
                r.seed.to_string(),
                kind.to_string(),
                r.metrics.mse.to_string(),
                r.metrics.mae.to_string(),
                r.metrics.mape.to_string(),
                r.epochs.to_string(),
                r.test_indices.len().to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| SinetError::Data(format!("csv flush failed: {e}")))
    }
}

/// For every seed: one stratified split of the target data, then a scratch
/// model (same architecture, vocabularies and lengths as the source) and a
/// fine-tuned copy of the source, both trained with `config` reseeded and
/// evaluated on the same test indices.
pub fn compare_transfer(
    source: &SinetModel,
    source_id: &str,
    target: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<TransferReport> {
    if seeds.is_empty() {
        return Err(SinetError::Usage("compare_transfer needs at least one seed".into()));
    }
    let encoded = target_encoder(source)?.encode(target)?;
    let targets = encoded.targets();
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        let split = training::stratified_split(&targets, &SplitSpec::with_seed(seed))?;
        let (train_set, val_set, test_set) = (
            encoded.subset(&split.train),
            encoded.subset(&split.validation),
            encoded.subset(&split.test),
        );
        let run_config = TrainConfig {
            seed,
            ..config.clone()
        };

        let mut scratch = SinetModel::build(source.config().clone(), seed)?;
        let h_scratch = training::train(&mut scratch, &train_set, &val_set, &run_config)?;
        let m_scratch = training::evaluate(&scratch, &test_set, config.threads)?;

        let (tuned, h_tuned) = finetune(source, source_id, &train_set, &val_set, &run_config)?;
        let m_tuned = training::evaluate(&tuned, &test_set, config.threads)?;
        info!(
            "seed {seed}: scratch mape {:.4}% ({} epochs), finetuned mape {:.4}% ({} epochs)",
            m_scratch.mape,
            h_scratch.epochs.len(),
            m_tuned.mape,
            h_tuned.epochs.len()
        );
        rows.push(TransferRow {
            seed,
            kind: RunKind::Scratch,
            metrics: m_scratch,
            epochs: h_scratch.epochs.len(),
            test_indices: split.test.clone(),
        });
        rows.push(TransferRow {
            seed,
            kind: RunKind::Finetuned,
            metrics: m_tuned,
            epochs: h_tuned.epochs.len(),
            test_indices: split.test,
        });
    }
    let pick = |kind| rows.iter().filter(|r| r.kind == kind).map(|r| &r.metrics).collect::<Vec<_>>();
    Ok(TransferReport {
        source_checkpoint_id: source_id.to_string(),
        seeds: seeds.to_vec(),
        scratch_metrics: MetricSpread::of(&pick(RunKind::Scratch)),
        finetuned_metrics: MetricSpread::of(&pick(RunKind::Finetuned)),
        rows,
    })
}
