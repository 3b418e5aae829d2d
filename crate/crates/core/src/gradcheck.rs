//! Finite-difference audit of the backward pass.
//!
//! Numerical gradients come from central differences of forward evaluations
//! only, so they are independent of every backward kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::encoding::{onehot_from_indices, Vocabulary};
use crate::error::Result;
use crate::model::{SampleInput, SinetConfig, SinetModel, Variant};
use crate::ops::Activation;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const COMPOSITE_TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error, so gradients that are
/// (analytically) zero are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub tolerance: f64,
    /// Entries skipped because the two difference points straddle a ReLU or
    /// pooling switch, where the function has no derivative to compare.
    pub kinks: usize,
}

impl GradCheck {
    /// Every differentiable entry is within tolerance.
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }

    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
            tolerance,
            kinks: 0,
        }
    }

    fn record_kink(&mut self) {
        self.kinks += 1;
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        let rel = relative_error(analytic, numeric);
        // NaN must fail the check
        if rel.is_nan() || rel > self.max_relative_error {
            self.max_relative_error = if rel.is_nan() { f64::INFINITY } else { rel };
        }
        self.max_absolute_error = self.max_absolute_error.max((analytic - numeric).abs());
    }
}

type Builder<'a> = dyn Fn(&mut Tape<'_>, &[NodeId]) -> Result<NodeId> + 'a;
type Evaluation = (f64, Vec<usize>, Option<Vec<Vec<f64>>>);

/// Checks the gradient of `Σ r_i · out_i` with respect to every element of
/// every leaf in `inputs`, for a fixed random projection `r` drawn from `seed`.
pub fn check_leaves(
    name: &str,
    inputs: &[Tensor],
    build: &Builder<'_>,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheck> {
    let mut tape = Tape::empty();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|v| tape.input(v.clone().with_requires_grad(true)))
        .collect();
    let out = build(&mut tape, &ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grads = tape.backward_seeded(out, &r)?;

    let eval = |values: &[Tensor]| -> Result<(f64, Vec<usize>)> {
        let mut tape = Tape::empty();
        let ids: Vec<NodeId> = values.iter().map(|v| tape.input(v.clone())).collect();
        let out = build(&mut tape, &ids)?;
        let value = tape.value(out).data().iter().zip(&r).map(|(a, b)| a * b).sum();
        Ok((value, tape.activation_pattern()))
    };

    let mut report = GradCheck::new(name, tolerance);
    let mut values = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads
            .wrt(*id)
            .map_or_else(|| vec![0.0; inputs[k].len()], <[f64]>::to_vec);
        for (j, &a) in analytic.iter().enumerate() {
            let orig = values[k].data()[j];
            values[k].data_mut()[j] = orig + FD_STEP;
            let (plus, p_plus) = eval(&values)?;
            values[k].data_mut()[j] = orig - FD_STEP;
            let (minus, p_minus) = eval(&values)?;
            values[k].data_mut()[j] = orig;
            if p_plus != p_minus {
                report.record_kink();
            } else {
                report.record(a, (plus - minus) / (2.0 * FD_STEP));
            }
        }
    }
    Ok(report)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
        .expect("shape and data agree")
}

/// Checks every primitive on random inputs drawn from `seed`.
pub fn check_primitives(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = PRIMITIVE_TOLERANCE;
    let mut out = Vec::new();

    let conv_in = vec![random(&mut rng, &[7, 3], 1.0), random(&mut rng, &[3, 3, 4], 0.5), random(&mut rng, &[4], 0.5)];
    out.push(check_leaves("conv1d", &conv_in, &|t, x| t.conv1d_same(x[0], x[1], x[2]), seed, tol)?);

    let relu_in = vec![random(&mut rng, &[6, 4], 1.0)];
    out.push(check_leaves("relu", &relu_in, &|t, x| Ok(t.relu(x[0])), seed, tol)?);

    let pool_in = vec![random(&mut rng, &[9, 3], 1.0)];
    out.push(check_leaves("maxpool1d", &pool_in, &|t, x| t.maxpool1d(x[0], 2), seed, tol)?);

    for (name, act) in [("dense_relu", Activation::Relu), ("dense_linear", Activation::Linear)] {
        let dense_in = vec![random(&mut rng, &[6], 1.0), random(&mut rng, &[6, 5], 0.5), random(&mut rng, &[5], 0.5)];
        out.push(check_leaves(name, &dense_in, &move |t, x| t.dense(x[0], x[1], x[2], act), seed, tol)?);
    }

    for (name, seq) in [("lstm_sequence", true), ("lstm_final", false)] {
        let lstm_in = vec![
            random(&mut rng, &[5, 3], 1.0),
            random(&mut rng, &[3, 16], 0.5),
            random(&mut rng, &[4, 16], 0.5),
            random(&mut rng, &[16], 0.5),
        ];
        out.push(check_leaves(name, &lstm_in, &move |t, x| t.lstm(x[0], x[1], x[2], x[3], seq), seed, tol)?);
    }

    let cat_in = vec![random(&mut rng, &[4], 1.0), random(&mut rng, &[3], 1.0)];
    out.push(check_leaves("concat", &cat_in, &|t, x| t.concat(x[0], x[1]), seed, tol)?);

    let mse_in = vec![random(&mut rng, &[5], 1.0), random(&mut rng, &[5], 1.0)];
    out.push(check_leaves("mse", &mse_in, &|t, x| t.mse_loss(x[0], x[1]), seed, tol)?);

    Ok(out)
}

/// A reduced dual-branch configuration with every layer type of the full
/// architecture, small enough to difference every parameter.
pub fn small_dual_config() -> SinetConfig {
    let sv = Vocabulary::from_chars("CNO=()".chars(), false);
    let iv = Vocabulary::from_chars("InChI=1S/CHNO+-,()".chars(), false);
    let mut c = SinetConfig::new(Variant::DualBranch, sv, iv);
    c.smiles_len = 8;
    c.inchi_len = 12;
    c.conv_filters = 3;
    c.lstm_units = 4;
    c.dense_units = 5;
    c
}

/// Checks every parameter of a seeded model on a two-sample batch MSE loss
/// with random one-hot inputs. Parameters are jittered away from their
/// initial values first: zero biases put padded rows exactly on the ReLU kink.
pub fn check_model(config: &SinetConfig, seed: u64) -> Result<Vec<GradCheck>> {
    let model = SinetModel::build(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let onehot = |rng: &mut ChaCha8Rng, len: usize, vocab: &Vocabulary| {
        let n = rng.gen_range(1..=len);
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..vocab.chars().len())).collect();
        onehot_from_indices(&idx, len, vocab.width())
    };
    let mut samples = Vec::new();
    for _ in 0..2 {
        let s = config.variant.uses_smiles().then(|| onehot(&mut rng, config.smiles_len, &config.smiles_vocab));
        let i = config.variant.uses_inchi().then(|| onehot(&mut rng, config.inchi_len, &config.inchi_vocab));
        samples.push((s, i));
    }
    let targets = Tensor::vector(vec![rng.gen_range(-6.0..-4.0), rng.gen_range(-6.0..-4.0)]);

    let loss_of = |params: &[Tensor]| -> Result<Evaluation> {
        let mut tape = Tape::new(params);
        let mut preds = Vec::new();
        for (s, i) in &samples {
            let input = SampleInput {
                smiles: s.as_ref(),
                inchi: i.as_ref(),
            };
            preds.push(model.record_forward(&mut tape, input)?);
        }
        let p = tape.stack_scalars(&preds)?;
        let t = tape.input(targets.clone());
        let loss = tape.mse_loss(p, t)?;
        let value = tape.value(loss).item()?;
        let grads = if params.iter().any(Tensor::requires_grad) {
            Some(tape.backward(loss)?.into_param_grads(params))
        } else {
            None
        };
        Ok((value, tape.activation_pattern(), grads))
    };

    let mut params: Vec<Tensor> = model
        .parameters()
        .iter()
        .map(|p| {
            let mut p = p.clone().with_requires_grad(true);
            p.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
            p
        })
        .collect();
    let analytic = loss_of(&params)?.2.expect("parameters require grad");
    for p in &mut params {
        *p = p.clone().with_requires_grad(false);
    }

    let mut reports = Vec::new();
    for (k, name) in model.parameter_names().iter().enumerate() {
        let mut report = GradCheck::new(name.clone(), COMPOSITE_TOLERANCE);
        for (j, &a) in analytic[k].iter().enumerate() {
            let orig = params[k].data()[j];
            params[k].data_mut()[j] = orig + FD_STEP;
            let (plus, p_plus, _) = loss_of(&params)?;
            params[k].data_mut()[j] = orig - FD_STEP;
            let (minus, p_minus, _) = loss_of(&params)?;
            params[k].data_mut()[j] = orig;
            if p_plus != p_minus {
                report.record_kink();
            } else {
                report.record(a, (plus - minus) / (2.0 * FD_STEP));
            }
        }
        reports.push(report);
    }
    Ok(reports)
}
