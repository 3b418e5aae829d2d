//! `sinet`: train, fine-tune, evaluate and inspect SINet models.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sinet_core::data::DatasetProvenance;
use sinet_core::encoding::OverflowPolicy;
use sinet_core::model::{SinetConfig, Variant};
use sinet_core::training::TrainConfig;
use sinet_core::{SinetError, Vocabulary};

#[derive(Debug, Parser)]
#[command(name = "sinet", version, about = "Dual SMILES + InChI HOMO regressor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from scratch on a labelled CSV.
    Train(TrainArgs),
    /// Fine-tune a checkpoint on target data, optionally against scratch baselines.
    Finetune(FinetuneArgs),
    /// Print test-style metrics of a checkpoint on a labelled CSV as JSON.
    Eval(EvalArgs),
    /// Write per-molecule HOMO predictions as CSV.
    Predict(PredictArgs),
    /// Open-circuit voltage and power conversion efficiency.
    Scharber(ScharberArgs),
    /// Dump the one-hot matrix of a string.
    Encode(EncodeArgs),
    /// Finite-difference audit of every layer's gradient.
    Gradcheck(GradcheckArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Print a checkpoint's id, configuration and layer summary.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Smiles,
    Inchi,
    Concat,
    Dual,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Smiles => Variant::SmilesOnly,
            VariantArg::Inchi => Variant::InchiOnly,
            VariantArg::Concat => Variant::ConcatSingleBranch,
            VariantArg::Dual => Variant::DualBranch,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProvenanceArg {
    Source,
    TargetExperimental,
    TargetDft,
    Synthetic,
}

impl From<ProvenanceArg> for DatasetProvenance {
    fn from(p: ProvenanceArg) -> Self {
        match p {
            ProvenanceArg::Source => DatasetProvenance::Source,
            ProvenanceArg::TargetExperimental => DatasetProvenance::TargetExperimental,
            ProvenanceArg::TargetDft => DatasetProvenance::TargetDft,
            ProvenanceArg::Synthetic => DatasetProvenance::Synthetic,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Keep the final-epoch parameters instead of the best validation epoch.
    #[arg(long)]
    no_restore_best: bool,
    /// Stratification bins for the 70/20/10 split.
    #[arg(long, default_value_t = 10)]
    strat_bins: usize,
}

impl OptimArgs {
    fn train_config(&self, seed: u64, threads: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.patience,
            seed,
            restore_best: !self.no_restore_best,
            threads,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ArchArgs {
    #[arg(long, default_value_t = 82)]
    smiles_len: usize,
    #[arg(long, default_value_t = 162)]
    inchi_len: usize,
    #[arg(long, default_value_t = 2)]
    conv_layers: usize,
    #[arg(long, default_value_t = 32)]
    conv_filters: usize,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, default_value_t = 2)]
    pool_size: usize,
    #[arg(long, default_value_t = 2)]
    lstm_layers: usize,
    #[arg(long, default_value_t = 64)]
    lstm_units: usize,
    #[arg(long, default_value_t = 64)]
    dense_units: usize,
}

impl ArchArgs {
    fn config(&self, variant: Variant, smiles_vocab: Vocabulary, inchi_vocab: Vocabulary) -> SinetConfig {
        SinetConfig {
            smiles_len: self.smiles_len,
            inchi_len: self.inchi_len,
            conv_layers: self.conv_layers,
            conv_filters: self.conv_filters,
            kernel_size: self.kernel_size,
            pool_size: self.pool_size,
            lstm_layers: self.lstm_layers,
            lstm_units: self.lstm_units,
            dense_units: self.dense_units,
            ..SinetConfig::new(variant, smiles_vocab, inchi_vocab)
        }
    }
}

#[derive(Debug, Clone, Args)]
struct TrainArgs {
    /// Labelled CSV with id, smiles, inchi and homo_ev columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Dual)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for model.sinc, history.csv, split.json and manifest.json.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProvenanceArg::Source)]
    provenance: ProvenanceArg,
    /// Truncate strings longer than the input length instead of rejecting them.
    #[arg(long)]
    truncate: bool,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

impl TrainArgs {
    fn overflow(&self) -> OverflowPolicy {
        if self.truncate {
            OverflowPolicy::Truncate
        } else {
            OverflowPolicy::Reject
        }
    }
}

#[derive(Debug, Clone, Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "finetune")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProvenanceArg::TargetExperimental)]
    provenance: ProvenanceArg,
    /// Also train scratch models and write a paired transfer report.
    #[arg(long)]
    compare_scratch: bool,
    /// Number of consecutive seeds, starting at --seed, for --compare-scratch.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory for eval-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV with id, smiles and inchi columns; other columns are ignored.
    #[arg(long)]
    data: PathBuf,
    /// Prediction CSV path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for predict-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct ScharberArgs {
    /// Donor HOMO, eV.
    #[arg(long, allow_negative_numbers = true)]
    homo: f64,
    /// Acceptor LUMO, eV.
    #[arg(long, allow_negative_numbers = true)]
    lumo: f64,
    /// Fill factor in (0, 1].
    #[arg(long)]
    ff: f64,
    /// Short-circuit current density, mA/cm².
    #[arg(long)]
    jsc: f64,
    /// Incident light intensity, mW/cm².
    #[arg(long, default_value_t = 100.0)]
    pin: f64,
    /// Use |HOMO| − |LUMO| − 0.3 for the voltage.
    #[arg(long)]
    magnitude_convention: bool,
    /// Directory for scharber-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Notation {
    Smiles,
    Inchi,
}

#[derive(Debug, Clone, Args)]
struct EncodeArgs {
    /// String to encode.
    #[arg(long, allow_hyphen_values = true)]
    text: String,
    #[arg(long, value_enum, default_value_t = Notation::Smiles)]
    notation: Notation,
    /// Take the vocabulary and length of this notation from a checkpoint.
    #[arg(long, conflicts_with = "vocab")]
    checkpoint: Option<PathBuf>,
    /// Vocabulary file, one character per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Matrix rows; defaults to the checkpoint's length or the string length.
    #[arg(long)]
    max_len: Option<usize>,
    /// Map unknown characters to UNK when the vocabulary has a slot for it.
    #[arg(long)]
    map_unknown: bool,
    #[arg(long)]
    truncate: bool,
    /// Directory for encode-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Directory for gradcheck.json and gradcheck-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Source,
    Target,
    Chain,
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Source)]
    kind: SynthKind,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Directory for synth-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for inspect-manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Worker threads from `SINET_THREADS`, 1 when unset.
fn threads() -> Result<usize, SinetError> {
    match std::env::var("SINET_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(SinetError::Usage(format!("SINET_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Exit status on success: 0, or 4 when a gradient audit fails.
fn run(cli: Cli) -> Result<u8, SinetError> {
    let threads = threads()?;
    match cli.command {
        Command::Train(a) => commands::train(&a, threads)?,
        Command::Finetune(a) => commands::finetune(&a, threads)?,
        Command::Eval(a) => commands::eval(&a, threads)?,
        Command::Predict(a) => commands::predict(&a, threads)?,
        Command::Scharber(a) => commands::scharber(&a)?,
        Command::Encode(a) => commands::encode(&a)?,
        Command::Gradcheck(a) => return Ok(if commands::gradcheck(&a)? { 0 } else { 4 }),
        Command::Synth(a) => commands::synth(&a)?,
        Command::Inspect(a) => commands::inspect(&a)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
