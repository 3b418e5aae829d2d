use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sinet_core::encoding::{OverflowPolicy, UnknownPolicy};
use sinet_core::model::{SinetConfig, SinetModel, Variant};
use sinet_core::synthetic::{generate, SynthSpec};
use sinet_core::training::{self, EncodedSet, InputEncoder, SplitSpec, TrainConfig};
use sinet_core::{Dataset, Vocabulary};

fn corpus(n: usize, seed: u64) -> Dataset {
    generate(&SynthSpec::source(n, seed)).unwrap()
}

fn tiny_config(variant: Variant, ds: &Dataset) -> SinetConfig {
    let smiles: Vec<&str> = ds.records.iter().map(|r| r.smiles.as_str()).collect();
    let inchi: Vec<&str> = ds.records.iter().map(|r| r.inchi.as_str()).collect();
    let mut c = SinetConfig::new(
        variant,
        Vocabulary::build(&smiles, true).unwrap(),
        Vocabulary::build(&inchi, true).unwrap(),
    );
    c.smiles_len = 32;
    c.inchi_len = 28;
    c.conv_filters = 4;
    c.lstm_units = 4;
    c.dense_units = 4;
    c
}

fn encoded(c: &SinetConfig, ds: &Dataset) -> EncodedSet {
    InputEncoder::for_config(c, OverflowPolicy::Reject, UnknownPolicy::Reject)
        .unwrap()
        .encode(ds)
        .unwrap()
}

struct Fixture {
    model: SinetModel,
    train: EncodedSet,
    val: EncodedSet,
}

fn fixture(n: usize) -> Fixture {
    let ds = corpus(n, 3);
    let c = tiny_config(Variant::DualBranch, &ds);
    let set = encoded(&c, &ds);
    let split = training::stratified_split(&set.targets(), &SplitSpec::with_seed(0)).unwrap();
    Fixture {
        model: SinetModel::build(c, 0).unwrap(),
        train: set.subset(&split.train),
        val: set.subset(&split.validation),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_partitions_every_index(
        targets in prop::collection::vec(-8.0f64..-3.0, 10..300),
        seed in any::<u64>(),
        bins in 1usize..10,
    ) {
        let spec = SplitSpec { strat_bins: bins, seed, ..SplitSpec::default() };
        let s = training::stratified_split(&targets, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).chain(&s.validation).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..targets.len()).collect::<Vec<_>>());
        let n = targets.len() as f64;
        prop_assert!((s.train.len() as f64 - 0.7 * n).abs() <= 1.0);
        prop_assert!((s.test.len() as f64 - 0.2 * n).abs() <= 1.0);
        prop_assert!(s.train.windows(2).all(|w| w[0] < w[1]));
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn stratification_tracks_the_target_distribution_better_than_chance() {
    let y = corpus(400, 9).targets();
    let (mut strat, mut random) = (0.0, 0.0);
    for seed in 0..50 {
        let s = training::stratified_split(&y, &SplitSpec::with_seed(seed)).unwrap();
        let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
        strat += ks(&pick(&s.test), &y);

        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        random += ks(&pick(&idx[..s.test.len()]), &y);
    }
    assert!(strat < random, "stratified KS {} vs random {}", strat / 50.0, random / 50.0);
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let f = fixture(60);
    let mut m = f.model.clone();
    let h = training::train(
        &mut m,
        &f.train,
        &f.val,
        &TrainConfig { max_epochs: 0, ..TrainConfig::default() },
    )
    .unwrap();
    assert!(h.epochs.is_empty());
    assert_eq!(h.optimizer_steps, 0);
    assert!(m.parameters_bitwise_eq(&f.model));
}

#[test]
fn one_step_per_batch_including_the_remainder() {
    let f = fixture(100);
    let n = f.train.len();
    for batch_size in [32, 7, n, n + 5] {
        let mut m = f.model.clone();
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size,
            early_stop_patience: 100,
            ..TrainConfig::default()
        };
        let h = training::train(&mut m, &f.train, &f.val, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.optimizer_steps, 3 * n.div_ceil(batch_size) as u64, "batch {batch_size}");
    }
}

#[test]
fn restore_best_returns_the_best_validation_epoch() {
    let f = fixture(100);
    let mut m = f.model.clone();
    let cfg = TrainConfig {
        max_epochs: 12,
        learning_rate: 0.02,
        early_stop_patience: 100,
        ..TrainConfig::default()
    };
    let h = training::train(&mut m, &f.train, &f.val, &cfg).unwrap();
    let best = h.best_epoch.unwrap();
    let min = h.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
    assert_eq!(h.epochs[best - 1].val_mse, min);
    let now = training::evaluate(&m, &f.val, 1).unwrap().mse;
    assert_eq!(now.to_bits(), min.to_bits());

    let mut last = f.model.clone();
    let h2 = training::train(&mut last, &f.train, &f.val, &TrainConfig { restore_best: false, ..cfg }).unwrap();
    let final_mse = training::evaluate(&last, &f.val, 1).unwrap().mse;
    assert_eq!(final_mse.to_bits(), h2.epochs.last().unwrap().val_mse.to_bits());
}

#[test]
fn early_stopping_waits_exactly_patience_epochs() {
    let f = fixture(100);
    for patience in [1, 2, 3] {
        let mut m = f.model.clone();
        let cfg = TrainConfig {
            max_epochs: 200,
            learning_rate: 0.05,
            early_stop_patience: patience,
            ..TrainConfig::default()
        };
        let h = training::train(&mut m, &f.train, &f.val, &cfg).unwrap();
        assert!(h.stopped_early, "patience {patience} never stopped");
        let best = h.best_epoch.unwrap();
        assert_eq!(h.epochs.len(), best + patience);
        assert!(h.epochs[best..].iter().all(|e| e.val_mse >= h.epochs[best - 1].val_mse));
    }
}

#[test]
fn training_reduces_the_loss() {
    let f = fixture(120);
    let mut m = f.model.clone();
    let before = training::evaluate(&m, &f.train, 1).unwrap().mse;
    training::train(
        &mut m,
        &f.train,
        &f.val,
        &TrainConfig {
            max_epochs: 30,
            batch_size: 8,
            learning_rate: 0.05,
            early_stop_patience: 100,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let after = training::evaluate(&m, &f.train, 1).unwrap().mse;
    assert!(after < 0.05 * before, "{before} -> {after}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let f = fixture(80);
    let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    let mut a = f.model.clone();
    let mut b = f.model.clone();
    let ha = training::train(&mut a, &f.train, &f.val, &cfg).unwrap();
    let hb = training::train(&mut b, &f.train, &f.val, &TrainConfig { threads: 3, ..cfg.clone() }).unwrap();
    assert!(a.parameters_bitwise_eq(&b));
    assert_eq!(ha, hb);
    let mut c = f.model.clone();
    training::train(&mut c, &f.train, &f.val, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert!(!a.parameters_bitwise_eq(&c));
}

#[test]
fn invalid_configs_are_rejected() {
    let f = fixture(40);
    for cfg in [
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { early_stop_patience: 0, ..TrainConfig::default() },
        TrainConfig { threads: 0, ..TrainConfig::default() },
    ] {
        let err = training::train(&mut f.model.clone(), &f.train, &f.val, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
