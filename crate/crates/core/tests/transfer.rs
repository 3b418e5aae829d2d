use sinet_core::encoding::{OverflowPolicy, UnknownPolicy};
use sinet_core::model::{Provenance, SinetConfig, SinetModel, Variant};
use sinet_core::synthetic::{generate, SynthSpec};
use sinet_core::training::{self, InputEncoder, SplitSpec, TrainConfig};
use sinet_core::transfer::{compare_transfer, finetune, target_encoder, RunKind};
use sinet_core::{load_checkpoint_with_id, save_checkpoint, Dataset, SinetError, Vocabulary};

fn source_model(ds: &Dataset) -> SinetModel {
    let smiles: Vec<&str> = ds.records.iter().map(|r| r.smiles.as_str()).collect();
    let inchi: Vec<&str> = ds.records.iter().map(|r| r.inchi.as_str()).collect();
    let mut c = SinetConfig::new(
        Variant::DualBranch,
        Vocabulary::build(&smiles, true).unwrap(),
        Vocabulary::build(&inchi, true).unwrap(),
    );
    c.smiles_len = 80;
    c.inchi_len = 32;
    c.conv_filters = 4;
    c.lstm_units = 4;
    c.dense_units = 4;
    SinetModel::build(c, 5).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epoch_finetune_keeps_weights_and_records_lineage() {
    let src = generate(&SynthSpec::source(60, 1)).unwrap();
    let tgt = generate(&SynthSpec::shifted_target(40, 2)).unwrap();
    let m = source_model(&src);
    let set = target_encoder(&m).unwrap().encode(&tgt).unwrap();
    let (tuned, h) = finetune(
        &m,
        "abc",
        &set,
        &set,
        &TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(h.epochs.is_empty());
    assert!(tuned.parameters_bitwise_eq(&m));
    assert_eq!(tuned.metadata().provenance, Provenance::FinetunedFrom("abc".into()));
    assert_eq!(tuned.metadata().lineage, vec!["abc".to_string()]);
    let before = training::predict(&m, &set, 1).unwrap();
    let after = training::predict(&tuned, &set, 1).unwrap();
    assert_eq!(before, after);
}

#[test]
fn provenance_survives_checkpoints_across_two_generations() {
    let dir = tempfile::tempdir().unwrap();
    let src = generate(&SynthSpec::source(60, 1)).unwrap();
    let tgt = generate(&SynthSpec::shifted_target(40, 2)).unwrap();
    let m = source_model(&src);
    assert_eq!(m.metadata().provenance, Provenance::Scratch);
    let id0 = save_checkpoint(&m, &dir.path().join("a.sinc")).unwrap();
    let (loaded, id0b) = load_checkpoint_with_id(&dir.path().join("a.sinc")).unwrap();
    assert_eq!(id0, id0b);

    let set = target_encoder(&loaded).unwrap().encode(&tgt).unwrap();
    let (gen1, _) = finetune(&loaded, &id0, &set, &set, &quick()).unwrap();
    let id1 = save_checkpoint(&gen1, &dir.path().join("b.sinc")).unwrap();
    let (gen1, _) = load_checkpoint_with_id(&dir.path().join("b.sinc")).unwrap();
    let (gen2, _) = finetune(&gen1, &id1, &set, &set, &quick()).unwrap();
    assert_eq!(gen2.metadata().provenance, Provenance::FinetunedFrom(id1.clone()));
    assert_eq!(gen2.metadata().lineage, vec![id0, id1]);
}

#[test]
fn incompatible_encodings_are_refused() {
    let src = generate(&SynthSpec::source(60, 1)).unwrap();
    let m = source_model(&src);
    let mut other = m.config().clone();
    other.smiles_len = 90;
    let set = InputEncoder::for_config(&other, OverflowPolicy::Reject, UnknownPolicy::Reject)
        .unwrap()
        .encode(&src)
        .unwrap();
    let err = finetune(&m, "x", &set, &set, &quick()).unwrap_err();
    assert!(matches!(err, SinetError::Compatibility(_)));
}

#[test]
fn unseen_target_characters_map_to_unk() {
    let src = generate(&SynthSpec::linear_chain(30, 1)).unwrap();
    let tgt = generate(&SynthSpec::shifted_target(20, 2)).unwrap();
    let m = source_model(&src);
    let set = target_encoder(&m).unwrap().encode(&tgt).unwrap();
    let unk = m.config().smiles_vocab.unk_index().unwrap();
    assert!(set.samples.iter().any(|s| s.smiles.as_ref().unwrap().contains(&unk)));
}

#[test]
fn comparison_report_pairs_runs_on_shared_test_sets() {
    let src = generate(&SynthSpec::source(60, 1)).unwrap();
    let tgt = generate(&SynthSpec::shifted_target(50, 2)).unwrap();
    let m = source_model(&src);
    let seeds = [3, 4, 5];
    let r = compare_transfer(&m, "src", &tgt, &quick(), &seeds).unwrap();
    assert_eq!(r.rows.len(), 2 * seeds.len());
    assert_eq!(r.seeds, seeds);
    for &seed in &seeds {
        let rows: Vec<_> = r.rows.iter().filter(|row| row.seed == seed).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().any(|row| row.kind == RunKind::Scratch));
        assert!(rows.iter().any(|row| row.kind == RunKind::Finetuned));
        assert_eq!(rows[0].test_indices, rows[1].test_indices);
        let expected = training::stratified_split(&tgt.targets(), &SplitSpec::with_seed(seed)).unwrap();
        assert_eq!(rows[0].test_indices, expected.test);
    }
    assert_eq!(r.paired_mape().len(), seeds.len());
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * seeds.len());
    assert!(compare_transfer(&m, "src", &tgt, &quick(), &[]).is_err());
}

#[test]
fn pretraining_on_the_target_distribution_helps() {
    let pre = generate(&SynthSpec::source(600, 11)).unwrap();
    let tgt = generate(&SynthSpec::source(60, 12)).unwrap();
    let mut m = source_model(&pre);
    let enc = InputEncoder::for_config(m.config(), OverflowPolicy::Reject, UnknownPolicy::Reject)
        .unwrap()
        .encode(&pre)
        .unwrap();
    let split = training::stratified_split(&enc.targets(), &SplitSpec::with_seed(0)).unwrap();
    training::train(
        &mut m,
        &enc.subset(&split.train),
        &enc.subset(&split.validation),
        &TrainConfig {
            max_epochs: 20,
            learning_rate: 0.01,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let r = compare_transfer(&m, "self", &tgt, &quick(), &[0, 1, 2, 3, 4]).unwrap();
    let wins = r.paired_mape().iter().filter(|(_, s, f)| f < s).count();
    assert_eq!(wins, 5, "{:?}", r.paired_mape());
}
