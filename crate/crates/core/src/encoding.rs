//! Character vocabularies and fixed-length one-hot encoding of line notations.
//!
//! Encoding is strictly per character: `Cl` is two symbols, `[nH]` is four.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SinetError};
use crate::tensor::Tensor;

/// Default padded length of SMILES inputs.
pub const SMILES_MAX_LEN: usize = 82;
/// Default padded length of InChI inputs.
pub const INCHI_MAX_LEN: usize = 162;

const UNK_LINE: &str = "<UNK>";

/// Ordered set of characters, sorted by code point, with an optional
/// trailing UNK slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
    has_unk: bool,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    chars: Vec<char>,
    unk: bool,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_chars(r.chars, r.unk)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            chars: v.chars,
            unk: v.has_unk,
        }
    }
}

impl Vocabulary {
    /// Sorted, de-duplicated vocabulary over `chars`.
    pub fn from_chars(chars: impl IntoIterator<Item = char>, reserve_unk: bool) -> Self {
        let chars: Vec<char> = chars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            chars,
            index,
            has_unk: reserve_unk,
        }
    }

    /// Every distinct character of `corpus`, plus an UNK slot when `reserve_unk`.
    pub fn build<S: AsRef<str>>(corpus: &[S], reserve_unk: bool) -> Result<Self> {
        if corpus.is_empty() {
            return Err(SinetError::Empty("cannot build a vocabulary from an empty corpus".into()));
        }
        Ok(Self::from_chars(
            corpus.iter().flat_map(|s| s.as_ref().chars()),
            reserve_unk,
        ))
    }

    /// Vocabulary holding every character of both inputs. Keeps UNK if either has it.
    pub fn union(a: &Vocabulary, b: &Vocabulary) -> Self {
        Self::from_chars(
            a.chars.iter().chain(&b.chars).copied(),
            a.has_unk || b.has_unk,
        )
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn unk_index(&self) -> Option<usize> {
        self.has_unk.then_some(self.chars.len())
    }

    /// One-hot width: number of characters plus the UNK slot if present.
    pub fn width(&self) -> usize {
        self.chars.len() + usize::from(self.has_unk)
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        self.chars.get(index).copied()
    }

    /// One character per line; the UNK slot is the literal line `<UNK>`.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for &c in &self.chars {
            if c == '\n' || c == '\r' {
                return Err(SinetError::Data(format!(
                    "character {c:?} cannot be written to a line-based vocabulary file"
                )));
            }
            writeln!(out, "{c}").expect("write to String");
        }
        if self.has_unk {
            out.push_str(UNK_LINE);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut chars = Vec::new();
        let mut unk = false;
        for (n, line) in text.lines().enumerate() {
            if line == UNK_LINE {
                unk = true;
                continue;
            }
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => {
                    return Err(SinetError::Data(format!(
                        "vocabulary line {} must hold exactly one character, got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        Ok(Self::from_chars(chars, unk))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| SinetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SinetError::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    #[default]
    Reject,
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    #[default]
    Reject,
    MapToUnk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub vocabulary: Vocabulary,
    pub max_len: usize,
    pub overflow_policy: OverflowPolicy,
    pub unknown_policy: UnknownPolicy,
}

impl EncoderSpec {
    /// Strict encoder: overflow and unknown characters are rejected.
    pub fn new(vocabulary: Vocabulary, max_len: usize) -> Result<Self> {
        Self::with_policies(vocabulary, max_len, OverflowPolicy::Reject, UnknownPolicy::Reject)
    }

    pub fn with_policies(
        vocabulary: Vocabulary,
        max_len: usize,
        overflow_policy: OverflowPolicy,
        unknown_policy: UnknownPolicy,
    ) -> Result<Self> {
        if max_len == 0 {
            return Err(SinetError::Config("max_len must be at least 1".into()));
        }
        if unknown_policy == UnknownPolicy::MapToUnk && vocabulary.unk_index().is_none() {
            return Err(SinetError::Config(
                "unknown characters map to UNK but the vocabulary reserves no UNK slot".into(),
            ));
        }
        Ok(Self {
            vocabulary,
            max_len,
            overflow_policy,
            unknown_policy,
        })
    }

    pub fn width(&self) -> usize {
        self.vocabulary.width()
    }

    /// Column index of every encoded character (padding is implicit).
    pub fn encode_indices(&self, s: &str) -> Result<Vec<usize>> {
        if s.is_empty() {
            return Err(SinetError::Empty("cannot encode an empty string".into()));
        }
        let len = s.chars().count();
        if len > self.max_len && self.overflow_policy == OverflowPolicy::Reject {
            return Err(SinetError::Overflow {
                string: s.to_string(),
                len,
                max_len: self.max_len,
            });
        }
        s.chars()
            .take(self.max_len)
            .enumerate()
            .map(|(offset, c)| match self.vocabulary.index_of(c) {
                Some(i) => Ok(i),
                None => match (self.unknown_policy, self.vocabulary.unk_index()) {
                    (UnknownPolicy::MapToUnk, Some(unk)) => Ok(unk),
                    _ => Err(SinetError::UnknownCharacter { character: c, offset }),
                },
            })
            .collect()
    }

    /// `[max_len × width]` one-hot matrix; rows past the string are zero.
    pub fn encode_onehot(&self, s: &str) -> Result<Tensor> {
        let idx = self.encode_indices(s)?;
        Ok(onehot_from_indices(&idx, self.max_len, self.width()))
    }

    /// Inverse of [`EncoderSpec::encode_onehot`]. UNK rows decode to U+FFFD.
    pub fn decode_onehot(&self, m: &Tensor) -> Result<String> {
        let width = self.width();
        if m.shape() != [self.max_len, width] {
            return Err(SinetError::Dimension(format!(
                "expected a [{} × {width}] matrix, got {:?}",
                self.max_len,
                m.shape()
            )));
        }
        let mut out = String::new();
        let mut in_padding = false;
        for (r, row) in m.data().chunks(width).enumerate() {
            let sum: f64 = row.iter().sum();
            let hot = row.iter().position(|&v| v == 1.0);
            let valid_hot = sum == 1.0 && hot.is_some() && row.iter().all(|&v| v == 0.0 || v == 1.0);
            if sum == 0.0 && row.iter().all(|&v| v == 0.0) {
                in_padding = true;
                continue;
            }
            if !valid_hot {
                return Err(SinetError::Data(format!("malformed one-hot row {r}: row sum {sum}")));
            }
            if in_padding {
                return Err(SinetError::Data(format!(
                    "one-hot row {r} follows zero padding"
                )));
            }
            let col = hot.expect("checked above");
            out.push(self.vocabulary.char_at(col).unwrap_or('\u{FFFD}'));
        }
        if out.is_empty() {
            return Err(SinetError::Empty("one-hot matrix encodes an empty string".into()));
        }
        Ok(out)
    }
}

/// Dense one-hot matrix from column indices; missing rows are zero padding.
pub fn onehot_from_indices(indices: &[usize], max_len: usize, width: usize) -> Tensor {
    let mut m = Tensor::zeros(&[max_len, width]);
    let data = m.data_mut();
    for (t, &c) in indices.iter().take(max_len).enumerate() {
        data[t * width + c] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(chars: &str) -> Vocabulary {
        Vocabulary::from_chars(chars.chars(), false)
    }

    #[test]
    fn vocabulary_is_sorted_unique_set() {
        let v = Vocabulary::build(&["CCO", "COC"], false).unwrap();
        assert_eq!(v.chars(), &['C', 'O']);
        let v = Vocabulary::build(&["c1ccccc1"], false).unwrap();
        assert_eq!(v.chars(), &['1', 'c']);
        let a = Vocabulary::build(&["CN=O", "c1cc1"], false).unwrap();
        let b = Vocabulary::build(&["c1cc1", "CN=O"], false).unwrap();
        assert_eq!(a, b);
        assert!(Vocabulary::build::<&str>(&[], false).is_err());
    }

    #[test]
    fn unk_slot_is_last() {
        let v = Vocabulary::build(&["CO"], true).unwrap();
        assert_eq!(v.width(), 3);
        assert_eq!(v.unk_index(), Some(2));
    }

    #[test]
    fn encode_examples() {
        let spec = EncoderSpec::new(vocab("CO"), 4).unwrap();
        let m = spec.encode_onehot("CO").unwrap();
        assert_eq!(m.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let spec = EncoderSpec::new(vocab("C"), 3).unwrap();
        assert_eq!(spec.encode_onehot("CCC").unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn unknown_character_reports_offset() {
        let spec = EncoderSpec::new(vocab("CO"), 4).unwrap();
        match spec.encode_onehot("CN") {
            Err(SinetError::UnknownCharacter { character, offset }) => {
                assert_eq!((character, offset), ('N', 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_maps_to_unk_when_allowed() {
        let v = Vocabulary::from_chars("CO".chars(), true);
        let spec =
            EncoderSpec::with_policies(v, 3, OverflowPolicy::Reject, UnknownPolicy::MapToUnk).unwrap();
        assert_eq!(spec.encode_indices("CNO").unwrap(), vec![0, 2, 1]);
        assert!(EncoderSpec::with_policies(vocab("CO"), 3, OverflowPolicy::Reject, UnknownPolicy::MapToUnk)
            .is_err());
    }

    #[test]
    fn overflow_policies() {
        let spec = EncoderSpec::new(vocab("C"), 2).unwrap();
        let err = spec.encode_onehot("CCC").unwrap_err();
        assert!(err.to_string().contains("\"CCC\""));
        let spec =
            EncoderSpec::with_policies(vocab("C"), 2, OverflowPolicy::Truncate, UnknownPolicy::Reject).unwrap();
        assert_eq!(spec.encode_indices("CCC").unwrap().len(), 2);
        assert!(EncoderSpec::new(vocab("C"), 0).is_err());
        assert!(spec.encode_onehot("").is_err());
    }

    #[test]
    fn decode_examples() {
        let spec = EncoderSpec::new(vocab("CO"), 2).unwrap();
        let m = Tensor::matrix(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(spec.decode_onehot(&m).unwrap(), "O");
        assert!(matches!(
            spec.decode_onehot(&Tensor::zeros(&[2, 2])),
            Err(SinetError::Empty(_))
        ));
        let bad = Tensor::matrix(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(spec.decode_onehot(&bad).is_err());
        let gap = Tensor::matrix(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(spec.decode_onehot(&gap).is_err());

        let spec = EncoderSpec::new(vocab("CO"), 5).unwrap();
        assert_eq!(spec.decode_onehot(&spec.encode_onehot("CCO").unwrap()).unwrap(), "CCO");
    }

    #[test]
    fn text_export_round_trip() {
        let v = Vocabulary::build(&["InChI=1S/CH4/h1H4"], true).unwrap();
        let text = v.to_text().unwrap();
        assert!(text.ends_with("<UNK>\n"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
    }
}
