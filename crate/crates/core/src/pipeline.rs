//! Glue between the corpus, the model and the metrics: dataset
//! preparation, generation-based evaluation and the training hook.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{encode_corpus, split_corpus, Corpus, DataError, LabelSet, ReportRecord, Split, Vocabulary};
use crate::inference::{generate_corpus, GeneratedReport, GenerationLimits};
use crate::metrics::{MetricsError, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::tensor::TensorError;
use crate::train::EvalPoint;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// One encoded partition with its reference paragraphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub records: Vec<ReportRecord>,
    pub references: Vec<Vec<Vec<String>>>,
}

impl Partition {
    pub fn encode(corpus: &Corpus, vocab: &Vocabulary, labels: &LabelSet) -> Result<Self> {
        Ok(Partition {
            records: encode_corpus(corpus, vocab, labels)?,
            references: corpus.reports().map(|r| r.sentences.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub split: Split,
    pub train: Partition,
    pub val: Partition,
    pub test: Partition,
}

impl Dataset {
    /// Splits `corpus` by record id, builds the vocabulary from the training
    /// sentences and the label set from every report.
    pub fn prepare(corpus: &Corpus, ratios: [f64; 3], seed: u64, min_frequency: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(PipelineError::Invalid("empty corpus".into()));
        }
        let split = split_corpus(corpus, ratios, seed, |r| r.id.clone());
        let train_corpus = corpus.subset(&split.train);
        let vocab = Vocabulary::build(train_corpus.sentences(), min_frequency);
        let labels = LabelSet::from_labels(corpus.reports().flat_map(|r| r.mti.iter()));
        Self::from_parts(corpus, split, vocab, labels)
    }

    /// Re-encodes `corpus` with a saved vocabulary and label set.
    pub fn from_parts(corpus: &Corpus, split: Split, vocab: Vocabulary, labels: LabelSet) -> Result<Self> {
        let part = |idx: &[usize]| Partition::encode(&corpus.subset(idx), &vocab, &labels);
        Ok(Dataset {
            train: part(&split.train)?,
            val: part(&split.val)?,
            test: part(&split.test)?,
            vocab: vocab.clone(),
            labels: labels.clone(),
            split,
        })
    }

    /// `base` with the vocabulary size, label count and feature shape taken
    /// from the data.
    pub fn model_config(&self, base: &ModelConfig) -> Result<ModelConfig> {
        let first = self
            .train
            .records
            .first()
            .ok_or_else(|| PipelineError::Invalid("training partition is empty".into()))?;
        let (locations, channels) = first.features.dims2()?;
        let cfg = ModelConfig {
            vocab_size: self.vocab.len(),
            mti_labels: self.labels.len().max(1),
            locations,
            feature_channels: channels,
            ..base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub generated: Vec<GeneratedReport>,
}

/// Generates a paragraph for every record and scores them against
/// `partition`'s references.
pub fn evaluate(model: &Model, partition: &Partition, vocab: &Vocabulary, limits: &GenerationLimits) -> Result<Evaluation> {
    if partition.is_empty() {
        return Err(PipelineError::Invalid("cannot evaluate an empty partition".into()));
    }
    let generated = generate_corpus(
        model,
        partition.records.iter().map(|r| (r.id.as_str(), &r.features)),
        limits,
    )?;
    let hyps: Vec<Vec<Vec<String>>> = generated.iter().map(|g| g.decode(vocab)).collect();
    let metrics = MetricsReport::compute(&hyps, &partition.references)?;
    Ok(Evaluation { metrics, generated })
}

/// A training hook that scores greedy generations on `partition`.
pub fn metrics_hook<'a>(
    partition: &'a Partition,
    vocab: &'a Vocabulary,
    limits: GenerationLimits,
) -> impl FnMut(&Model, &EvalPoint) -> std::result::Result<MetricsReport, String> + 'a {
    move |model, _| {
        evaluate(model, partition, vocab, &limits)
            .map(|e| e.metrics)
            .map_err(|e| e.to_string())
    }
}

pub fn save_labels(path: &Path, labels: &LabelSet) -> Result<()> {
    let mut text = labels.labels().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let labels: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    Ok(LabelSet::from_labels(&labels))
}
