use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sinet_core::checkpoint::{checkpoint_id, from_bytes, to_bytes};
use sinet_core::model::{SinetConfig, SinetModel, Variant};
use sinet_core::{load_checkpoint_with_id, save_checkpoint, SinetError, Vocabulary};

fn model(variant: Variant, seed: u64) -> SinetModel {
    let mut c = SinetConfig::new(
        variant,
        Vocabulary::from_chars("CNO=()".chars(), true),
        Vocabulary::from_chars("InChI=1S/CHNO".chars(), true),
    );
    c.smiles_len = 12;
    c.inchi_len = 16;
    c.conv_filters = 4;
    c.lstm_units = 3;
    c.dense_units = 5;
    SinetModel::build(c, seed).unwrap()
}

#[test]
fn bytes_round_trip_bitwise() {
    for variant in Variant::ALL {
        let m = model(variant, 4);
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert!(back.parameters_bitwise_eq(&m));
        assert_eq!(back.config(), m.config());
        assert_eq!(back.metadata(), m.metadata());
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn file_round_trip_reports_the_crc_id() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sinc");
    let m = model(Variant::DualBranch, 1);
    let id = save_checkpoint(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(id, checkpoint_id(&bytes).unwrap());
    assert_eq!(id.len(), 8);
    let (back, id2) = load_checkpoint_with_id(&path).unwrap();
    assert_eq!(id, id2);
    assert!(back.parameters_bitwise_eq(&m));
}

#[test]
fn every_single_byte_flip_is_detected() {
    let bytes = to_bytes(&model(Variant::DualBranch, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let mut corrupt = bytes.clone();
        let pos = rng.gen_range(0..corrupt.len());
        corrupt[pos] ^= rng.gen_range(1..=255u8);
        let err = from_bytes(&corrupt).unwrap_err();
        if pos >= 12 {
            assert!(matches!(err, SinetError::Corruption(_)), "flip at {pos}: {err}");
        } else {
            assert!(matches!(err, SinetError::Format { .. } | SinetError::Corruption(_)), "flip at {pos}: {err}");
        }
        assert_eq!(err.exit_code(), 3);
    }
}

#[test]
fn truncation_is_detected() {
    let bytes = to_bytes(&model(Variant::SmilesOnly, 0)).unwrap();
    for len in [0, 3, 8, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(from_bytes(&bytes[..len]).is_err(), "len {len}");
    }
}
