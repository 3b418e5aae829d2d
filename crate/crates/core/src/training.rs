//! Stratified splitting, the mini-batch Adam loop with early stopping, and metrics.

use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::autodiff::Tape;
use crate::data::{Dataset, MoleculeInput};
use crate::encoding::{onehot_from_indices, EncoderSpec, OverflowPolicy, UnknownPolicy};
use crate::error::{Result, SinetError};
use crate::model::{SampleInput, SinetConfig, SinetModel};
use crate::tensor::Tensor;

/// Smallest target magnitude for which a percentage error is defined.
pub const MAPE_MIN_ABS_TARGET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict improvement in validation MSE before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub restore_best: bool,
    /// Worker threads for per-sample forward/backward. Results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 20,
            seed: 0,
            restore_best: true,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SinetError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SinetError::Config("batch_size must be at least 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(SinetError::Config("early_stop_patience must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(SinetError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// eV²
    pub mse: f64,
    /// eV
    pub mae: f64,
    /// percent
    pub mape: f64,
}

/// MSE, MAE and MAPE (`100·mean(|y−ŷ|/|y|)`).
pub fn compute_metrics(targets: &[f64], predictions: &[f64]) -> Result<Metrics> {
    if targets.is_empty() {
        return Err(SinetError::Empty("metrics over an empty dataset".into()));
    }
    if targets.len() != predictions.len() {
        return Err(SinetError::Dimension(format!(
            "{} targets but {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    let n = targets.len() as f64;
    let (mut se, mut ae, mut ape) = (0.0, 0.0, 0.0);
    let mut mape_defined = true;
    for (&y, &p) in targets.iter().zip(predictions) {
        let e = (y - p).abs();
        se += e * e;
        ae += e;
        if y.abs() < MAPE_MIN_ABS_TARGET {
            mape_defined = false;
        } else {
            ape += e / y.abs();
        }
    }
    let (mse, mae) = (se / n, ae / n);
    if !mape_defined {
        return Err(SinetError::MapeUndefined { mse, mae });
    }
    Ok(Metrics {
        mse,
        mae,
        mape: 100.0 * ape / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// (train, test, validation)
    pub ratios: (f64, f64, f64),
    pub strat_bins: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: (0.70, 0.20, 0.10),
            strat_bins: 10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Index sets of a three-way split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Splits by target quantile bins: sort by target, cut into `strat_bins`
/// near-equal bins, shuffle each bin and hand its members out in the
/// requested ratios. Quotas are tracked cumulatively so the totals match the
/// ratios as closely as rounding allows.
pub fn stratified_split(targets: &[f64], spec: &SplitSpec) -> Result<Split> {
    let (r_train, r_test, r_val) = spec.ratios;
    if [r_train, r_test, r_val].iter().any(|r| !(*r > 0.0)) || (r_train + r_test + r_val - 1.0).abs() > 1e-9 {
        return Err(SinetError::Config(format!(
            "split ratios must be positive and sum to 1, got {:?}",
            spec.ratios
        )));
    }
    if spec.strat_bins == 0 {
        return Err(SinetError::Config("strat_bins must be at least 1".into()));
    }
    let n = targets.len();
    if n < spec.strat_bins {
        return Err(SinetError::Data(format!(
            "cannot split {n} samples into {} strata",
            spec.strat_bins
        )));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(SinetError::NonFinite("split targets must be finite".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]).then(a.cmp(&b)));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
        validation: Vec::new(),
    };
    let mut seen = 0usize;
    for b in 0..spec.strat_bins {
        let (lo, hi) = (b * n / spec.strat_bins, (b + 1) * n / spec.strat_bins);
        let mut bin = order[lo..hi].to_vec();
        bin.shuffle(&mut rng);
        seen += bin.len();
        let want_train = ((r_train * seen as f64).round() as usize).saturating_sub(split.train.len());
        let n_train = want_train.min(bin.len());
        let want_test = ((r_test * seen as f64).round() as usize).saturating_sub(split.test.len());
        let n_test = want_test.min(bin.len() - n_train);
        split.train.extend_from_slice(&bin[..n_train]);
        split.test.extend_from_slice(&bin[n_train..n_train + n_test]);
        split.validation.extend_from_slice(&bin[n_train + n_test..]);
    }
    if split.train.is_empty() || split.test.is_empty() || split.validation.is_empty() {
        return Err(SinetError::Data(format!(
            "split of {n} samples left a partition empty ({} / {} / {})",
            split.train.len(),
            split.test.len(),
            split.validation.len()
        )));
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    split.validation.sort_unstable();
    Ok(split)
}

/// Encoders for both notations of a model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEncoder {
    pub smiles: EncoderSpec,
    pub inchi: EncoderSpec,
    use_smiles: bool,
    use_inchi: bool,
}

impl InputEncoder {
    /// Uses the configuration's vocabularies and lengths. Unknown characters
    /// map to UNK only where the vocabulary reserves a slot and `unknown` asks for it.
    pub fn for_config(config: &SinetConfig, overflow: OverflowPolicy, unknown: UnknownPolicy) -> Result<Self> {
        let spec = |vocab: &crate::encoding::Vocabulary, len| {
            let policy = if vocab.unk_index().is_some() { unknown } else { UnknownPolicy::Reject };
            EncoderSpec::with_policies(vocab.clone(), len, overflow, policy)
        };
        Ok(Self {
            smiles: spec(&config.smiles_vocab, config.smiles_len)?,
            inchi: spec(&config.inchi_vocab, config.inchi_len)?,
            use_smiles: config.variant.uses_smiles(),
            use_inchi: config.variant.uses_inchi(),
        })
    }

    pub fn encode(&self, dataset: &Dataset) -> Result<EncodedSet> {
        let samples = dataset
            .records
            .iter()
            .map(|r| self.encode_one(&r.id, &r.smiles, &r.inchi, r.homo_ev))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.wrap(samples))
    }

    /// Encodes molecules without labels; targets are NaN.
    pub fn encode_unlabelled(&self, molecules: &[MoleculeInput]) -> Result<EncodedSet> {
        let samples = molecules
            .iter()
            .map(|m| self.encode_one(&m.id, &m.smiles, &m.inchi, f64::NAN))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.wrap(samples))
    }

    fn encode_one(&self, id: &str, smiles: &str, inchi: &str, target: f64) -> Result<EncodedSample> {
        let ctx = |e: SinetError| SinetError::Data(format!("record {id}: {e}"));
        Ok(EncodedSample {
            smiles: self
                .use_smiles
                .then(|| self.smiles.encode_indices(smiles))
                .transpose()
                .map_err(ctx)?,
            inchi: self
                .use_inchi
                .then(|| self.inchi.encode_indices(inchi))
                .transpose()
                .map_err(ctx)?,
            target,
        })
    }

    fn wrap(&self, samples: Vec<EncodedSample>) -> EncodedSet {
        EncodedSet {
            samples,
            smiles_shape: (self.smiles.max_len, self.smiles.width()),
            inchi_shape: (self.inchi.max_len, self.inchi.width()),
        }
    }
}

/// Column indices of each character; one-hot matrices are built on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub smiles: Option<Vec<usize>>,
    pub inchi: Option<Vec<usize>>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub samples: Vec<EncodedSample>,
    pub smiles_shape: (usize, usize),
    pub inchi_shape: (usize, usize),
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            smiles_shape: self.smiles_shape,
            inchi_shape: self.inchi_shape,
        }
    }

    fn tensors(&self, i: usize) -> (Option<Tensor>, Option<Tensor>) {
        let s = &self.samples[i];
        (
            s.smiles
                .as_ref()
                .map(|idx| onehot_from_indices(idx, self.smiles_shape.0, self.smiles_shape.1)),
            s.inchi
                .as_ref()
                .map(|idx| onehot_from_indices(idx, self.inchi_shape.0, self.inchi_shape.1)),
        )
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SinetError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn predict_sample(model: &SinetModel, set: &EncodedSet, i: usize) -> Result<f64> {
    let (s, c) = set.tensors(i);
    model.predict_one(SampleInput {
        smiles: s.as_ref(),
        inchi: c.as_ref(),
    })
}

/// Predictions in dataset order.
pub fn predict(model: &SinetModel, set: &EncodedSet, threads: usize) -> Result<Vec<f64>> {
    if threads <= 1 {
        return (0..set.len()).map(|i| predict_sample(model, set, i)).collect();
    }
    with_pool(threads, || {
        (0..set.len())
            .into_par_iter()
            .map(|i| predict_sample(model, set, i))
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn evaluate(model: &SinetModel, set: &EncodedSet, threads: usize) -> Result<Metrics> {
    let predictions = predict(model, set, threads)?;
    compute_metrics(&set.targets(), &predictions)
}

/// Prediction and parameter gradient of `(pred − y)²·scale` for one sample.
fn sample_gradient(model: &SinetModel, set: &EncodedSet, i: usize, scale: f64) -> Result<(f64, crate::autodiff::Gradients)> {
    let (s, c) = set.tensors(i);
    let mut tape = Tape::new(model.parameters());
    let out = model.record_forward(
        &mut tape,
        SampleInput {
            smiles: s.as_ref(),
            inchi: c.as_ref(),
        },
    )?;
    let pred = tape.value(out).item()?;
    let seed = 2.0 * (pred - set.samples[i].target) * scale;
    Ok((pred, tape.backward_seeded(out, &[seed])?))
}

/// Mean-squared-error loss and its gradient over a mini-batch. Per-sample
/// gradients are summed in batch order whatever the thread count.
pub fn batch_loss_and_gradient(
    model: &SinetModel,
    set: &EncodedSet,
    batch: &[usize],
    threads: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let scale = 1.0 / batch.len() as f64;
    let mut acc: Vec<Vec<f64>> = model.parameters().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut loss = 0.0;
    if threads <= 1 {
        for &i in batch {
            let (pred, g) = sample_gradient(model, set, i, scale)?;
            let e = pred - set.samples[i].target;
            loss += e * e;
            g.add_params_to(&mut acc);
        }
    } else {
        let per_sample = with_pool(threads, || {
            batch
                .par_iter()
                .map(|&i| sample_gradient(model, set, i, scale))
                .collect::<Result<Vec<_>>>()
        })??;
        for (&i, (pred, g)) in batch.iter().zip(per_sample) {
            let e = pred - set.samples[i].target;
            loss += e * e;
            g.add_params_to(&mut acc);
        }
    }
    Ok((loss * scale, acc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mape: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub optimizer_steps: u64,
}

impl History {
    /// CSV with header `epoch,train_mse,val_mse,val_mape`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| SinetError::Data(format!("csv write failed: {e}"));
        w.write_record(["epoch", "train_mse", "val_mse", "val_mape"]).map_err(err)?;
        for e in &self.epochs {
            w.write_record(&[
                e.epoch.to_string(),
                e.train_mse.to_string(),
                e.val_mse.to_string(),
                e.val_mape.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| SinetError::Data(format!("csv flush failed: {e}")))
    }
}

/// Patience-based stopping rule on a monitored value (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    wait: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            wait: 0,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn update(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Trains in place; returns the per-epoch history.
///
/// Each epoch visits a fresh seeded shuffle of the training set in batches of
/// `batch_size` (the final partial batch included), with one Adam step per
/// batch. Validation MSE drives early stopping; with `restore_best` the
/// parameters from the best validation epoch are put back at the end.
pub fn train(
    model: &mut SinetModel,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(SinetError::Empty("training set has no samples".into()));
    }
    if val_set.is_empty() {
        return Err(SinetError::Empty("validation set has no samples".into()));
    }
    let mut history = History::default();
    if config.max_epochs == 0 {
        return Ok(history);
    }

    let names = model.parameter_names().to_vec();
    let mut adam = AdamState::new(model.parameters(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut best_params: Option<Vec<Tensor>> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, grads) = batch_loss_and_gradient(model, train_set, batch, config.threads)?;
            if !loss.is_finite() {
                return Err(SinetError::NonFinite(format!(
                    "training loss is {loss} at epoch {epoch}, batch {b}"
                )));
            }
            adam.step(model.parameters_mut(), &grads, &names)
                .map_err(|e| SinetError::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let val = evaluate(model, val_set, config.threads).or_else(|e| match e {
            SinetError::MapeUndefined { mse, mae } => Ok(Metrics { mse, mae, mape: f64::NAN }),
            other => Err(other),
        })?;
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse: val.mse,
            val_mape: val.mape,
        });
        debug!("epoch {epoch}: train mse {train_mse:.6e}, val mse {:.6e}, val mape {:.4}%", val.mse, val.mape);
        match stopper.update(epoch, val.mse) {
            StopDecision::Improved => {
                if config.restore_best {
                    best_params = Some(model.parameters().to_vec());
                }
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                info!("early stop at epoch {epoch}; best epoch {:?}", stopper.best_epoch());
                history.stopped_early = true;
                break;
            }
        }
    }
    if let Some(best) = best_params {
        for (p, b) in model.parameters_mut().iter_mut().zip(best) {
            p.data_mut().copy_from_slice(b.data());
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.optimizer_steps = adam.step;
    Ok(history)
}
