use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token ↔ id map. Ids `0..4` are reserved for PAD, BOS, EOS and UNK; the
/// rest are ordered by descending corpus frequency, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_frequency: usize,
}

impl Vocabulary {
    pub fn build<'a, I>(sentences: I, min_frequency: usize) -> Self
    where
        I: IntoIterator<Item = &'a Vec<String>>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_frequency.max(1) && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()), min_frequency)
    }

    fn from_tokens(words: impl Iterator<Item = String>, min_frequency: usize) -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(words).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            index,
            min_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids followed by [`EOS`].
    pub fn encode_sentence(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Tokens for `ids`, dropping BOS/EOS/PAD markers.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != BOS && i != EOS && i != PAD)
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    /// One token per line in id order, after a `# min_frequency=N` header.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("# min_frequency={}\n", self.min_frequency);
        for t in &self.tokens[RESERVED.len()..] {
            let _ = writeln!(out, "{t}");
        }
        std::fs::write(path, out).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let min_frequency = header
            .strip_prefix("# min_frequency=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| DataError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "missing '# min_frequency=N' header".into(),
            })?;
        let vocab = Self::from_tokens(lines.map(str::to_string), min_frequency);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(DataError::Format {
                path: path.to_path_buf(),
                message: "duplicate tokens".into(),
            });
        }
        Ok(vocab)
    }
}

/// Sorted set of tag labels; position = multi-hot index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn from_labels<'a, I: IntoIterator<Item = &'a String>>(labels: I) -> Self {
        let set: BTreeSet<&String> = labels.into_iter().collect();
        LabelSet {
            labels: set.into_iter().cloned().collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Multi-hot vector; labels outside the set are ignored.
    pub fn multi_hot(&self, present: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.labels.len()];
        for p in present {
            if let Ok(i) = self.labels.binary_search(p) {
                v[i] = 1.0;
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter()
            .map(|d| d.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn min_frequency_one_never_maps_to_unk() {
        let c = sents(&["a b c", "c d"]);
        let v = Vocabulary::build(&c, 1);
        for t in ["a", "b", "c", "d"] {
            assert_ne!(v.id(t), UNK);
        }
    }

    #[test]
    fn rare_tokens_map_to_unk() {
        let c = sents(&["a b", "b"]);
        let v = Vocabulary::build(&c, 2);
        assert_eq!(v.id("a"), UNK);
        assert_ne!(v.id("b"), UNK);
        assert_eq!(v.id("never-seen"), UNK);
    }

    #[test]
    fn ids_follow_hand_counted_frequencies() {
        // Counts: the=4, lungs=2, clear=2, . =3, heart=1, no=1
        let c = sents(&[
            "the lungs clear .",
            "the heart . the",
            "no lungs clear the .",
        ]);
        let v = Vocabulary::build(&c, 1);
        let order: Vec<&str> = v.tokens()[4..].iter().map(String::as_str).collect();
        assert_eq!(order, vec!["the", ".", "clear", "lungs", "heart", "no"]);
    }

    #[test]
    fn encode_appends_eos_and_decode_strips_markers() {
        let c = sents(&["x y ."]);
        let v = Vocabulary::build(&c, 1);
        let ids = v.encode_sentence(&c[0]);
        assert_eq!(ids.last(), Some(&EOS));
        assert_eq!(v.decode(&ids), c[0]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = sents(&["b a a .", "c"]);
        let v = Vocabulary::build(&c, 1);
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn label_set_multi_hot() {
        let labels: Vec<String> = vec!["tag2".into(), "normal".into(), "tag1".into(), "tag2".into()];
        let set = LabelSet::from_labels(&labels);
        assert_eq!(set.labels(), &["normal", "tag1", "tag2"]);
        assert_eq!(set.multi_hot(&["tag2".into(), "zzz".into()]), vec![0.0, 0.0, 1.0]);
    }
}
