//! The dual-notation CNN→LSTM regressor and its single-input ablations.
//!
//! Each branch is `conv(K, F, same) + ReLU` repeated `conv_layers` times,
//! one max pool, then `lstm_layers` stacked LSTMs (all but the last return
//! the full sequence). Branch outputs are concatenated and passed through a
//! ReLU dense layer and a linear scalar output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::encoding::{Vocabulary, INCHI_MAX_LEN, SMILES_MAX_LEN};
use crate::error::{Result, SinetError};
use crate::ops::Activation;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    SmilesOnly,
    InchiOnly,
    ConcatSingleBranch,
    DualBranch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::SmilesOnly,
        Variant::InchiOnly,
        Variant::ConcatSingleBranch,
        Variant::DualBranch,
    ];

    pub fn uses_smiles(self) -> bool {
        self != Variant::InchiOnly
    }

    pub fn uses_inchi(self) -> bool {
        self != Variant::SmilesOnly
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::SmilesOnly => "smiles",
            Variant::InchiOnly => "inchi",
            Variant::ConcatSingleBranch => "concat",
            Variant::DualBranch => "dual",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = SinetError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.short_name() == s)
            .ok_or_else(|| {
                SinetError::Usage(format!("unknown variant {s:?} (expected smiles, inchi, concat or dual)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinetConfig {
    pub variant: Variant,
    pub smiles_len: usize,
    pub inchi_len: usize,
    pub smiles_vocab: Vocabulary,
    pub inchi_vocab: Vocabulary,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
}

impl SinetConfig {
    /// Reference architecture: sequence lengths 82/162, two 32-filter width-3
    /// convolutions, pool 2, two 64-unit LSTMs, 64-unit dense layer.
    pub fn new(variant: Variant, smiles_vocab: Vocabulary, inchi_vocab: Vocabulary) -> Self {
        Self {
            variant,
            smiles_len: SMILES_MAX_LEN,
            inchi_len: INCHI_MAX_LEN,
            smiles_vocab,
            inchi_vocab,
            conv_layers: 2,
            conv_filters: 32,
            kernel_size: 3,
            pool_size: 2,
            lstm_layers: 2,
            lstm_units: 64,
            dense_units: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("smiles_len", self.smiles_len),
            ("inchi_len", self.inchi_len),
            ("conv_layers", self.conv_layers),
            ("conv_filters", self.conv_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("lstm_layers", self.lstm_layers),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SinetError::Config(format!("{name} must be positive")));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(SinetError::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        for (branch, len, width) in self.branch_shapes() {
            if width == 0 {
                return Err(SinetError::Config(format!("{branch} vocabulary is empty")));
            }
            if len < self.pool_size {
                return Err(SinetError::Config(format!(
                    "{branch} sequence length {len} is shorter than pool_size {}",
                    self.pool_size
                )));
            }
        }
        Ok(())
    }

    pub fn union_vocab(&self) -> Vocabulary {
        Vocabulary::union(&self.smiles_vocab, &self.inchi_vocab)
    }

    /// `(branch name, input length, input width)` for every branch of the variant.
    pub fn branch_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let smiles = ("smiles", self.smiles_len, self.smiles_vocab.width());
        let inchi = ("inchi", self.inchi_len, self.inchi_vocab.width());
        match self.variant {
            Variant::SmilesOnly => vec![smiles],
            Variant::InchiOnly => vec![inchi],
            Variant::DualBranch => vec![smiles, inchi],
            Variant::ConcatSingleBranch => vec![(
                "concat",
                self.smiles_len + self.inchi_len,
                self.union_vocab().width(),
            )],
        }
    }

    /// Sequence length entering the LSTM stack for a branch of length `len`.
    pub fn pooled_len(&self, len: usize) -> usize {
        len / self.pool_size
    }

    pub fn merge_width(&self) -> usize {
        self.branch_shapes().len() * self.lstm_units
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "checkpoint", rename_all = "kebab-case")]
pub enum Provenance {
    Scratch,
    FinetunedFrom(String),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Scratch => f.write_str("scratch"),
            Provenance::FinetunedFrom(id) => write!(f, "finetuned-from:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub conv_activation: String,
    pub initialization: String,
    pub concat_input: String,
    pub provenance: Provenance,
    /// Checkpoint ids this model descends from, oldest first.
    pub lineage: Vec<String>,
}

impl ModelMetadata {
    fn scratch(seed: u64) -> Self {
        Self {
            seed,
            conv_activation: "relu".into(),
            initialization: "glorot-uniform conv/dense/lstm-input; uniform(+-1/sqrt(h)) lstm-recurrent; \
                             forget-gate bias 1, other biases 0; chacha8 stream per parameter"
                .into(),
            concat_input: "smiles and inchi one-hot re-indexed to the union vocabulary, stacked in time"
                .into(),
            provenance: Provenance::Scratch,
            lineage: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct BranchLayout {
    name: &'static str,
    input_len: usize,
    input_width: usize,
    /// `(kernel, bias)` parameter indices
    convs: Vec<(usize, usize)>,
    /// `(w, u, b)` parameter indices
    lstms: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
struct Layout {
    branches: Vec<BranchLayout>,
    hidden: (usize, usize),
    output: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    ConvKernel { fan_in: usize, fan_out: usize },
    LstmInput { fan_in: usize, fan_out: usize },
    LstmRecurrent { hidden: usize },
    LstmBias { hidden: usize },
    DenseWeight { fan_in: usize, fan_out: usize },
    Bias,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    role: Role,
}

fn plan(config: &SinetConfig) -> (Layout, Vec<ParamSpec>) {
    let mut specs = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, role: Role| {
        specs.push(ParamSpec { name, shape, role });
        specs.len() - 1
    };
    let (k, f, h) = (config.kernel_size, config.conv_filters, config.lstm_units);
    let mut branches = Vec::new();
    for (name, input_len, input_width) in config.branch_shapes() {
        let mut convs = Vec::new();
        let mut cin = input_width;
        for i in 0..config.conv_layers {
            let kernel = add(
                format!("{name}.conv{i}.kernel"),
                vec![k, cin, f],
                Role::ConvKernel {
                    fan_in: k * cin,
                    fan_out: k * f,
                },
            );
            let bias = add(format!("{name}.conv{i}.bias"), vec![f], Role::Bias);
            convs.push((kernel, bias));
            cin = f;
        }
        let mut lstms = Vec::new();
        let mut d = f;
        for i in 0..config.lstm_layers {
            let w = add(
                format!("{name}.lstm{i}.w"),
                vec![d, 4 * h],
                Role::LstmInput {
                    fan_in: d,
                    fan_out: 4 * h,
                },
            );
            let u = add(format!("{name}.lstm{i}.u"), vec![h, 4 * h], Role::LstmRecurrent { hidden: h });
            let b = add(format!("{name}.lstm{i}.b"), vec![4 * h], Role::LstmBias { hidden: h });
            lstms.push((w, u, b));
            d = h;
        }
        branches.push(BranchLayout {
            name,
            input_len,
            input_width,
            convs,
            lstms,
        });
    }
    let merge = config.merge_width();
    let dense = config.dense_units;
    let hidden = (
        add(
            "head.dense.weight".into(),
            vec![merge, dense],
            Role::DenseWeight {
                fan_in: merge,
                fan_out: dense,
            },
        ),
        add("head.dense.bias".into(), vec![dense], Role::Bias),
    );
    let output = (
        add(
            "head.output.weight".into(),
            vec![dense, 1],
            Role::DenseWeight {
                fan_in: dense,
                fan_out: 1,
            },
        ),
        add("head.output.bias".into(), vec![1], Role::Bias),
    );
    (
        Layout {
            branches,
            hidden,
            output,
        },
        specs,
    )
}

fn init_values(role: Role, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let uniform = |rng: &mut ChaCha8Rng, limit: f64| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-limit..limit)).collect()
    };
    match role {
        Role::ConvKernel { fan_in, fan_out }
        | Role::LstmInput { fan_in, fan_out }
        | Role::DenseWeight { fan_in, fan_out } => {
            uniform(rng, (6.0 / (fan_in + fan_out) as f64).sqrt())
        }
        Role::LstmRecurrent { hidden } => uniform(rng, 1.0 / (hidden as f64).sqrt()),
        Role::LstmBias { hidden } => (0..len)
            .map(|i| if (hidden..2 * hidden).contains(&i) { 1.0 } else { 0.0 })
            .collect(),
        Role::Bias => vec![0.0; len],
    }
}

/// Per-sample model input: one-hot `[len × width]` matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleInput<'a> {
    pub smiles: Option<&'a Tensor>,
    pub inchi: Option<&'a Tensor>,
}

#[derive(Debug, Clone)]
pub struct SinetModel {
    config: SinetConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    metadata: ModelMetadata,
    layout: Layout,
    /// union-vocabulary column for every smiles / inchi column (concat variant only)
    concat_maps: Option<(Vec<usize>, Vec<usize>)>,
}

impl SinetModel {
    /// Builds a freshly initialized model. Identical `(config, seed)` give
    /// bitwise identical parameters.
    pub fn build(config: SinetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (_, specs) = plan(&config);
        let params = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let len = s.shape.iter().product();
                Tensor::new(s.shape.clone(), init_values(s.role, len, &mut rng))
                    .map(|t| t.with_requires_grad(true))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(config, params, ModelMetadata::scratch(seed))
    }

    /// Assembles a model from explicit parameter tensors in manifest order.
    pub fn from_parts(config: SinetConfig, params: Vec<Tensor>, metadata: ModelMetadata) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = plan(&config);
        if specs.len() != params.len() {
            return Err(SinetError::Corruption(format!(
                "configuration needs {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.shape != p.shape() {
                return Err(SinetError::Corruption(format!(
                    "parameter {} should have shape {:?}, got {:?}",
                    s.name,
                    s.shape,
                    p.shape()
                )));
            }
        }
        let concat_maps = (config.variant == Variant::ConcatSingleBranch).then(|| {
            let union = config.union_vocab();
            let map = |v: &Vocabulary| -> Vec<usize> {
                (0..v.width())
                    .map(|c| match v.char_at(c) {
                        Some(ch) => union.index_of(ch).expect("union holds every character"),
                        None => union.unk_index().expect("union keeps UNK"),
                    })
                    .collect()
            };
            (map(&config.smiles_vocab), map(&config.inchi_vocab))
        });
        let params = params.into_iter().map(|p| p.with_requires_grad(true)).collect();
        Ok(Self {
            config,
            names: specs.into_iter().map(|s| s.name).collect(),
            params,
            metadata,
            layout,
            concat_maps,
        })
    }

    pub fn config(&self) -> &SinetConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut ModelMetadata {
        &mut self.metadata
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Total scalar parameter count, summed over the stored tensors.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Same parameter values bit for bit, in the same order.
    pub fn parameters_bitwise_eq(&self, other: &SinetModel) -> bool {
        self.names == other.names
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.bitwise_eq(b))
    }

    fn check_input(&self, t: &Tensor, len: usize, width: usize, what: &str) -> Result<()> {
        if t.shape() != [len, width] {
            return Err(SinetError::Dimension(format!(
                "{what} input must be [{len} × {width}], got {:?}",
                t.shape()
            )));
        }
        Ok(())
    }

    /// Input matrix for each branch, in layout order.
    fn branch_inputs(&self, input: SampleInput<'_>) -> Result<Vec<Tensor>> {
        let c = &self.config;
        fn need<'t>(t: Option<&'t Tensor>, what: &str, c: &SinetConfig) -> Result<&'t Tensor> {
            t.ok_or_else(|| {
                SinetError::Usage(format!(
                    "variant {} needs a {what} input",
                    c.variant.short_name()
                ))
            })
        }
        let smiles = if c.variant.uses_smiles() {
            let t = need(input.smiles, "smiles", c)?;
            self.check_input(t, c.smiles_len, c.smiles_vocab.width(), "smiles")?;
            Some(t)
        } else {
            None
        };
        let inchi = if c.variant.uses_inchi() {
            let t = need(input.inchi, "inchi", c)?;
            self.check_input(t, c.inchi_len, c.inchi_vocab.width(), "inchi")?;
            Some(t)
        } else {
            None
        };
        Ok(match c.variant {
            Variant::SmilesOnly => vec![smiles.expect("checked").clone()],
            Variant::InchiOnly => vec![inchi.expect("checked").clone()],
            Variant::DualBranch => vec![smiles.expect("checked").clone(), inchi.expect("checked").clone()],
            Variant::ConcatSingleBranch => {
                let (smap, imap) = self.concat_maps.as_ref().expect("concat maps");
                let width = self.layout.branches[0].input_width;
                let rows = c.smiles_len + c.inchi_len;
                let mut out = Tensor::zeros(&[rows, width]);
                let data = out.data_mut();
                let parts = [
                    (smiles.expect("checked"), smap, 0),
                    (inchi.expect("checked"), imap, c.smiles_len),
                ];
                for (src, map, offset) in parts {
                    let w = map.len();
                    for (r, row) in src.data().chunks(w).enumerate() {
                        for (col, &v) in row.iter().enumerate() {
                            data[(offset + r) * width + map[col]] += v;
                        }
                    }
                }
                vec![out]
            }
        })
    }

    /// Records the forward pass of one sample on `tape` (which must borrow
    /// this model's parameters) and returns the `[1]` prediction node.
    pub fn record_forward(&self, tape: &mut Tape<'_>, input: SampleInput<'_>) -> Result<NodeId> {
        self.record_traced(tape, input, &mut None)
    }

    /// Output shape of every layer in a real forward pass of one sample.
    pub fn trace_shapes(&self, input: SampleInput<'_>) -> Result<Vec<(String, Vec<usize>)>> {
        let mut tape = Tape::new(&self.params);
        let mut trace = Some(Vec::new());
        self.record_traced(&mut tape, input, &mut trace)?;
        Ok(trace.expect("trace requested"))
    }

    fn record_traced(
        &self,
        tape: &mut Tape<'_>,
        input: SampleInput<'_>,
        trace: &mut Option<Vec<(String, Vec<usize>)>>,
    ) -> Result<NodeId> {
        let mut note = |tape: &Tape<'_>, name: String, id: NodeId| {
            if let Some(t) = trace.as_mut() {
                t.push((name, tape.value(id).shape().to_vec()));
            }
        };
        let inputs = self.branch_inputs(input)?;
        let mut features = Vec::with_capacity(inputs.len());
        for (branch, x) in self.layout.branches.iter().zip(inputs) {
            let mut h = tape.input(x);
            note(tape, format!("{}.input", branch.name), h);
            for (i, &(k, b)) in branch.convs.iter().enumerate() {
                let (k, b) = (tape.param(k)?, tape.param(b)?);
                let z = tape.conv1d_same(h, k, b)?;
                h = tape.relu(z);
                note(tape, format!("{}.conv{i}", branch.name), h);
            }
            h = tape.maxpool1d(h, self.config.pool_size)?;
            note(tape, format!("{}.pool", branch.name), h);
            let last = branch.lstms.len() - 1;
            for (i, &(w, u, b)) in branch.lstms.iter().enumerate() {
                let (w, u, b) = (tape.param(w)?, tape.param(u)?, tape.param(b)?);
                h = tape.lstm(h, w, u, b, i != last)?;
                note(tape, format!("{}.lstm{i}", branch.name), h);
            }
            features.push(h);
        }
        let mut merged = features[0];
        for &f in &features[1..] {
            merged = tape.concat(merged, f)?;
        }
        note(tape, "merge".into(), merged);
        let (w, b) = (tape.param(self.layout.hidden.0)?, tape.param(self.layout.hidden.1)?);
        let hidden = tape.dense(merged, w, b, Activation::Relu)?;
        note(tape, "head.dense".into(), hidden);
        let (w, b) = (tape.param(self.layout.output.0)?, tape.param(self.layout.output.1)?);
        let out = tape.dense(hidden, w, b, Activation::Linear)?;
        note(tape, "head.output".into(), out);
        Ok(out)
    }

    /// Prediction for a single sample.
    pub fn predict_one(&self, input: SampleInput<'_>) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let out = self.record_forward(&mut tape, input)?;
        tape.value(out).item()
    }

    /// Batched forward: `[B×Ls×Vs]` and/or `[B×Li×Vi]` → `[B]`.
    pub fn forward(&self, smiles_batch: Option<&Tensor>, inchi_batch: Option<&Tensor>) -> Result<Tensor> {
        let batch = match (smiles_batch, inchi_batch) {
            (Some(s), Some(i)) => {
                let (bs, bi) = (s.shape().first(), i.shape().first());
                if bs != bi {
                    return Err(SinetError::Dimension(format!(
                        "batch size mismatch: smiles {:?} vs inchi {:?}",
                        s.shape(),
                        i.shape()
                    )));
                }
                bs.copied()
            }
            (Some(s), None) => s.shape().first().copied(),
            (None, Some(i)) => i.shape().first().copied(),
            (None, None) => return Err(SinetError::Usage("forward needs at least one input batch".into())),
        }
        .ok_or_else(|| SinetError::Rank("input batches must be rank 3".into()))?;

        let mut out = Vec::with_capacity(batch);
        for b in 0..batch {
            let s = smiles_batch.map(|t| t.index_axis0(b)).transpose()?;
            let i = inchi_batch.map(|t| t.index_axis0(b)).transpose()?;
            out.push(self.predict_one(SampleInput {
                smiles: s.as_ref(),
                inchi: i.as_ref(),
            })?);
        }
        Ok(Tensor::vector(out))
    }

    /// Layer-by-layer description for export.
    pub fn summary(&self) -> ModelSummary {
        let c = &self.config;
        let mut layers = Vec::new();
        let count = |idx: &[usize]| idx.iter().map(|&i| self.params[i].len()).sum::<usize>();
        for b in &self.layout.branches {
            let mut shape = vec![b.input_len, b.input_width];
            for (i, &(k, bias)) in b.convs.iter().enumerate() {
                let out = vec![b.input_len, c.conv_filters];
                layers.push(LayerSummary {
                    name: format!("{}.conv{i}", b.name),
                    kind: "conv1d_same+relu".into(),
                    input_shape: shape.clone(),
                    output_shape: out.clone(),
                    parameters: count(&[k, bias]),
                });
                shape = out;
            }
            let pooled = vec![c.pooled_len(b.input_len), c.conv_filters];
            layers.push(LayerSummary {
                name: format!("{}.pool", b.name),
                kind: "maxpool1d".into(),
                input_shape: shape.clone(),
                output_shape: pooled.clone(),
                parameters: 0,
            });
            shape = pooled;
            let last = b.lstms.len() - 1;
            for (i, &(w, u, bias)) in b.lstms.iter().enumerate() {
                let out = if i == last {
                    vec![c.lstm_units]
                } else {
                    vec![shape[0], c.lstm_units]
                };
                layers.push(LayerSummary {
                    name: format!("{}.lstm{i}", b.name),
                    kind: if i == last { "lstm(final)" } else { "lstm(sequence)" }.into(),
                    input_shape: shape.clone(),
                    output_shape: out.clone(),
                    parameters: count(&[w, u, bias]),
                });
                shape = out;
            }
        }
        if self.layout.branches.len() > 1 {
            layers.push(LayerSummary {
                name: "merge".into(),
                kind: "concat".into(),
                input_shape: vec![c.lstm_units; self.layout.branches.len()],
                output_shape: vec![c.merge_width()],
                parameters: 0,
            });
        }
        layers.push(LayerSummary {
            name: "head.dense".into(),
            kind: "dense+relu".into(),
            input_shape: vec![c.merge_width()],
            output_shape: vec![c.dense_units],
            parameters: count(&[self.layout.hidden.0, self.layout.hidden.1]),
        });
        layers.push(LayerSummary {
            name: "head.output".into(),
            kind: "dense+linear".into(),
            input_shape: vec![c.dense_units],
            output_shape: vec![1],
            parameters: count(&[self.layout.output.0, self.layout.output.1]),
        });
        ModelSummary {
            variant: c.variant,
            total_parameters: self.count_parameters(),
            layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub kind: String,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub variant: Variant,
    pub total_parameters: usize,
    pub layers: Vec<LayerSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocabs() -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::build(&["CC(=O)Oc1ccccc1C(=O)O"], false).unwrap(),
            Vocabulary::build(&["InChI=1S/C9H8O4/c1-6(10)13-8-5-3-2-4-7(8)9(11)12/h2-5H,1H3,(H,11,12)"], true)
                .unwrap(),
        )
    }

    fn tiny(variant: Variant) -> SinetConfig {
        let (s, i) = vocabs();
        SinetConfig {
            smiles_len: 6,
            inchi_len: 9,
            conv_filters: 3,
            lstm_units: 4,
            dense_units: 5,
            ..SinetConfig::new(variant, s, i)
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(Variant::DualBranch);
        c.kernel_size = 2;
        assert!(matches!(SinetModel::build(c, 0), Err(SinetError::Config(_))));
        let mut c = tiny(Variant::DualBranch);
        c.lstm_units = 0;
        assert!(SinetModel::build(c, 0).is_err());
    }

    #[test]
    fn seeded_build_is_reproducible() {
        let a = SinetModel::build(tiny(Variant::DualBranch), 42).unwrap();
        let b = SinetModel::build(tiny(Variant::DualBranch), 42).unwrap();
        let c = SinetModel::build(tiny(Variant::DualBranch), 43).unwrap();
        assert!(a.parameters_bitwise_eq(&b));
        assert!(!a.parameters_bitwise_eq(&c));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let m = SinetModel::build(tiny(Variant::SmilesOnly), 1).unwrap();
        let b = m.parameter("smiles.lstm0.b").unwrap().data();
        assert_eq!(&b[..4], &[0.0; 4]);
        assert_eq!(&b[4..8], &[1.0; 4]);
        assert_eq!(&b[8..], &[0.0; 8]);
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let m = SinetModel::build(tiny(Variant::DualBranch), 3).unwrap();
        let zeros = m.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let m = SinetModel::from_parts(m.config().clone(), zeros, m.metadata().clone()).unwrap();
        let s = Tensor::full(&[1, 6, m.config().smiles_vocab.width()], 1.0);
        let i = Tensor::full(&[1, 9, m.config().inchi_vocab.width()], 1.0);
        assert_eq!(m.forward(Some(&s), Some(&i)).unwrap().data(), &[0.0]);
    }

    #[test]
    fn wrong_inputs_are_rejected() {
        let m = SinetModel::build(tiny(Variant::DualBranch), 3).unwrap();
        let s = Tensor::zeros(&[2, 6, m.config().smiles_vocab.width()]);
        let i = Tensor::zeros(&[3, 9, m.config().inchi_vocab.width()]);
        assert!(matches!(m.forward(Some(&s), Some(&i)), Err(SinetError::Dimension(_))));
        assert!(matches!(m.forward(Some(&s), None), Err(SinetError::Usage(_))));
    }

    #[test]
    fn concat_variant_uses_union_width() {
        let c = tiny(Variant::ConcatSingleBranch);
        let union = c.union_vocab().width();
        let m = SinetModel::build(c, 0).unwrap();
        assert_eq!(m.parameter("concat.conv0.kernel").unwrap().shape(), &[3, union, 3]);
        let summary = m.summary();
        assert_eq!(summary.layers[0].input_shape, vec![15, union]);
    }
}
