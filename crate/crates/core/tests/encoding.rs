use proptest::prelude::*;

use sinet_core::encoding::{EncoderSpec, OverflowPolicy, UnknownPolicy, Vocabulary};

const ALPHABET: &str = "CNOSPFIBrcl=#()[]123456789+-/@H";
const MAX_LEN: usize = 40;

fn alphabet_string(max: usize) -> impl Strategy<Value = String> {
    let chars: Vec<char> = ALPHABET.chars().collect();
    prop::collection::vec(prop::sample::select(chars), 1..=max).prop_map(|v| v.into_iter().collect())
}

fn encoder(corpus: &[String]) -> EncoderSpec {
    EncoderSpec::new(Vocabulary::build(corpus, false).unwrap(), MAX_LEN).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_encode(s in alphabet_string(MAX_LEN)) {
        let e = encoder(std::slice::from_ref(&s));
        let m = e.encode_onehot(&s).unwrap();
        prop_assert_eq!(e.decode_onehot(&m).unwrap(), s);
    }

    #[test]
    fn rows_are_one_hot_then_zero(s in alphabet_string(MAX_LEN)) {
        let e = encoder(&[ALPHABET.to_string()]);
        let m = e.encode_onehot(&s).unwrap();
        let n = s.chars().count();
        prop_assert_eq!(m.shape(), &[MAX_LEN, e.width()][..]);
        for (r, row) in m.data().chunks(e.width()).enumerate() {
            let sum: f64 = row.iter().sum();
            prop_assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert_eq!(sum, if r < n { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn vocabulary_ignores_corpus_order(
        corpus in prop::collection::vec(alphabet_string(12), 1..8),
        seed in any::<u64>(),
    ) {
        let mut shuffled = corpus.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let reversed: Vec<String> = corpus.iter().map(|s| s.chars().rev().collect()).collect();
        let a = Vocabulary::build(&corpus, true).unwrap();
        prop_assert_eq!(&a, &Vocabulary::build(&shuffled, true).unwrap());
        prop_assert_eq!(&a, &Vocabulary::build(&reversed, true).unwrap());
        let e1 = EncoderSpec::new(a, MAX_LEN).unwrap();
        let e2 = EncoderSpec::new(Vocabulary::build(&shuffled, true).unwrap(), MAX_LEN).unwrap();
        for s in &corpus {
            prop_assert!(e1.encode_onehot(s).unwrap().bitwise_eq(&e2.encode_onehot(s).unwrap()));
        }
    }

    #[test]
    fn truncation_keeps_the_prefix(s in alphabet_string(80)) {
        let e = EncoderSpec::with_policies(
            Vocabulary::from_chars(ALPHABET.chars(), false),
            MAX_LEN,
            OverflowPolicy::Truncate,
            UnknownPolicy::Reject,
        )
        .unwrap();
        let prefix: String = s.chars().take(MAX_LEN).collect();
        prop_assert_eq!(e.decode_onehot(&e.encode_onehot(&s).unwrap()).unwrap(), prefix);
    }
}

#[test]
fn overflow_and_unknown_are_rejected_by_default() {
    let e = EncoderSpec::new(Vocabulary::from_chars("CO".chars(), false), 3).unwrap();
    assert!(e.encode_indices("CCCC").is_err());
    assert!(e.encode_indices("CN").is_err());
    assert!(e.encode_indices("").is_err());
    assert_eq!(e.encode_indices("OC").unwrap(), vec![1, 0]);
}

#[test]
fn unknown_maps_to_the_last_column() {
    let v = Vocabulary::from_chars("CO".chars(), true);
    let e = EncoderSpec::with_policies(v, 4, OverflowPolicy::Reject, UnknownPolicy::MapToUnk).unwrap();
    assert_eq!(e.width(), 3);
    assert_eq!(e.encode_indices("CNO").unwrap(), vec![0, 2, 1]);
    let m = e.encode_onehot("CNO").unwrap();
    assert_eq!(e.decode_onehot(&m).unwrap(), "C\u{FFFD}O");
}

#[test]
fn vocabulary_text_round_trip() {
    let v = Vocabulary::build(&["InChI=1S/C2H6O/c1-2-3/h3H,2H2,1H3"], true).unwrap();
    assert_eq!(Vocabulary::from_text(&v.to_text().unwrap()).unwrap(), v);
}
