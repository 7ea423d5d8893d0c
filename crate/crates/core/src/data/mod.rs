//! Report corpora: on-disk representation, tokenization, vocabulary,
//! sentence statistics, embedding-based abnormality annotation and the
//! synthetic long-tail generator.

mod annotate;
mod features;
mod io;
mod stats;
mod synth;
mod text;
mod vocab;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub use annotate::{
    auto_annotate_abnormal, min_cosine_distance, resolve_flags, EmbeddingFile,
    DEFAULT_ABNORMAL_THRESHOLD,
};
pub use features::FeatureMap;
pub use io::{load_corpus, save_corpus, REPORTS_FILE};
pub use stats::{sentence_frequency_table, FrequencyTable};
pub use synth::{synth_corpus, SynthConfig, SynthCorpus, SynthDescription};
pub use text::{sentence_key, split_sentences, tokenize};
pub use vocab::{LabelSet, Vocabulary, BOS, EOS, PAD, UNK};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: truncated feature file, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One report as stored in the JSON-lines corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub abnormal: Vec<bool>,
    pub mti: Vec<String>,
    /// Feature file, relative to the corpus directory.
    pub feature: String,
}

impl Report {
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(DataError::Invalid(format!("{}: no sentences", self.id)));
        }
        if self.sentences.len() != self.abnormal.len() {
            return Err(DataError::Invalid(format!(
                "{}: {} sentences but {} abnormal flags",
                self.id,
                self.sentences.len(),
                self.abnormal.len()
            )));
        }
        if let Some(i) = self.sentences.iter().position(Vec::is_empty) {
            return Err(DataError::Invalid(format!("{}: sentence {i} is empty", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub report: Report,
    pub features: FeatureMap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reports(&self) -> impl Iterator<Item = &Report> {
        self.entries.iter().map(|e| &e.report)
    }

    /// Every sentence of every report, in corpus order.
    pub fn sentences(&self) -> impl Iterator<Item = &Vec<String>> {
        self.reports().flat_map(|r| r.sentences.iter())
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Train / validation / test index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle groups of records (records sharing `group_key` stay together)
/// and cut them by `ratios` (train, val, test).
pub fn split_corpus<F>(corpus: &Corpus, ratios: [f64; 3], seed: u64, group_key: F) -> Split
where
    F: Fn(&Report) -> String,
{
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (i, r) in corpus.reports().enumerate() {
        let key = group_key(r);
        match seen.get(&key) {
            Some(&g) => groups[g].1.push(i),
            None => {
                seen.insert(key.clone(), groups.len());
                groups.push((key, vec![i]));
            }
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let total: f64 = ratios.iter().sum();
    let n = groups.len();
    let n_train = ((ratios[0] / total) * n as f64).round() as usize;
    let n_val = (((ratios[1] / total) * n as f64).round() as usize).min(n - n_train.min(n));
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (g, (_, members)) in groups.into_iter().enumerate() {
        let bucket = if g < n_train {
            &mut split.train
        } else if g < n_train + n_val {
            &mut split.val
        } else {
            &mut split.test
        };
        bucket.extend(members);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// A report encoded for the model: token ids, flags, multi-hot tags and
/// the feature map converted to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub id: String,
    /// `[L×C]` feature map.
    pub features: Tensor,
    /// Token ids of each sentence; every sentence ends with [`EOS`].
    pub sentences: Vec<Vec<usize>>,
    pub abnormal: Vec<bool>,
    /// Multi-hot tag vector of length K.
    pub mti: Vec<f64>,
}

impl ReportRecord {
    pub fn new(
        id: impl Into<String>,
        features: Tensor,
        sentences: Vec<Vec<usize>>,
        abnormal: Vec<bool>,
        mti: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if sentences.is_empty() {
            return Err(DataError::Invalid(format!("{id}: no sentences")));
        }
        if sentences.len() != abnormal.len() {
            return Err(DataError::Invalid(format!(
                "{id}: {} sentences but {} abnormal flags",
                sentences.len(),
                abnormal.len()
            )));
        }
        if let Some(i) = sentences.iter().position(|s| s.last() != Some(&EOS)) {
            return Err(DataError::Invalid(format!(
                "{id}: sentence {i} does not end with EOS"
            )));
        }
        if features.rank() != 2 {
            return Err(DataError::Invalid(format!(
                "{id}: feature map must be rank 2, got {:?}",
                features.shape()
            )));
        }
        Ok(ReportRecord {
            id,
            features,
            sentences,
            abnormal,
            mti,
        })
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }
}

/// Encode every report of `corpus` with `vocab` and `labels`.
pub fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary, labels: &LabelSet) -> Result<Vec<ReportRecord>> {
    corpus
        .entries
        .iter()
        .map(|e| {
            e.report.validate()?;
            let sentences = e
                .report
                .sentences
                .iter()
                .map(|s| vocab.encode_sentence(s))
                .collect();
            ReportRecord::new(
                e.report.id.clone(),
                e.features.to_tensor(),
                sentences,
                e.report.abnormal.clone(),
                labels.multi_hot(&e.report.mti),
            )
        })
        .collect()
}
