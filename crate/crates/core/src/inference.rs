//! Greedy paragraph generation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Vocabulary, BOS, EOS};
use crate::model::{Branch, Model};
use crate::tape::Tape;
use crate::tensor::{sigmoid, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationLimits {
    pub max_sentences: usize,
    /// Maximum tokens per sentence, EOS excluded.
    pub max_words: usize,
    /// Generation stops after a sentence whose stop probability exceeds this.
    pub stop_threshold: f64,
    /// A sentence goes to the abnormal branch when its abnormality
    /// probability exceeds this.
    pub branch_threshold: f64,
}

impl GenerationLimits {
    pub fn new(max_sentences: usize, max_words: usize) -> Self {
        GenerationLimits {
            max_sentences,
            max_words,
            stop_threshold: 0.5,
            branch_threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sentences == 0 || self.max_words == 0 {
            return Err(TensorError::Contract("generation limits must be positive".into()));
        }
        for (name, t) in [("stop", self.stop_threshold), ("branch", self.branch_threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(TensorError::Contract(format!("{name} threshold {t} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    /// Token ids without BOS/EOS.
    pub tokens: Vec<usize>,
    pub branch: Branch,
    pub stop_prob: f64,
    pub abnormal_prob: f64,
}

/// Generates one paragraph for a `[L×C]` feature map.
pub fn generate_report(model: &Model, features: &Tensor, limits: &GenerationLimits) -> Result<Vec<GeneratedSentence>> {
    limits.validate()?;
    let dual = model.config.dual_enabled;
    let mut tape = Tape::inference();
    let bound = model.bind(&mut tape)?;
    let image = bound.encode_image(&mut tape, features)?;
    let (mut h, mut c) = bound.zero_state(&mut tape);
    let mut out = Vec::new();
    for _ in 0..limits.max_sentences {
        let step = bound.sentence_step(&mut tape, &image, h, c)?;
        let stop_prob = sigmoid(tape.scalar_value(step.stop_logit)?);
        let abnormal_prob = sigmoid(tape.scalar_value(step.abnormal_logit)?);
        let branch = if dual && abnormal_prob > limits.branch_threshold {
            Branch::Abnormal
        } else {
            Branch::Normal
        };
        let (mut wh, mut wc) = bound.word_start(&mut tape, branch, step.topic)?;
        let mut token = BOS;
        let mut tokens = Vec::new();
        loop {
            let (h2, c2, logits) = bound.word_step(&mut tape, branch, token, wh, wc)?;
            token = argmax(tape.value(logits).data());
            if token == EOS || tokens.len() == limits.max_words {
                break;
            }
            tokens.push(token);
            wh = h2;
            wc = c2;
        }
        out.push(GeneratedSentence {
            tokens,
            branch,
            stop_prob,
            abnormal_prob,
        });
        h = step.h;
        c = step.c;
        if stop_prob > limits.stop_threshold {
            break;
        }
    }
    Ok(out)
}

/// First index of the maximum over emittable tokens. BOS and PAD are never
/// prediction targets, so they are skipped; NaN never wins.
fn argmax(values: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &v) in values.iter().enumerate().skip(EOS + 1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedReport {
    pub id: String,
    pub sentences: Vec<GeneratedSentence>,
}

impl GeneratedReport {
    pub fn decode(&self, vocab: &Vocabulary) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| vocab.decode(&s.tokens)).collect()
    }
}

/// Generates a paragraph for each `(id, features)` pair, in input order.
pub fn generate_corpus<'a, I>(model: &Model, inputs: I, limits: &GenerationLimits) -> Result<Vec<GeneratedReport>>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let inputs: Vec<(&str, &Tensor)> = inputs.into_iter().collect();
    inputs
        .par_iter()
        .map(|(id, f)| {
            Ok(GeneratedReport {
                id: id.to_string(),
                sentences: generate_report(model, f, limits)?,
            })
        })
        .collect()
}

/// One line of a generated-corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLine {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub branches: Vec<Branch>,
    pub stop_probs: Vec<f64>,
    pub abnormal_probs: Vec<f64>,
}

impl GeneratedLine {
    pub fn new(report: &GeneratedReport, vocab: &Vocabulary) -> Self {
        GeneratedLine {
            id: report.id.clone(),
            sentences: report.decode(vocab),
            branches: report.sentences.iter().map(|s| s.branch).collect(),
            stop_probs: report.sentences.iter().map(|s| s.stop_prob).collect(),
            abnormal_probs: report.sentences.iter().map(|s| s.abnormal_prob).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GeneratedFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub fn write_generated(path: &Path, lines: &[GeneratedLine]) -> std::result::Result<(), GeneratedFileError> {
    let io = |source| GeneratedFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for l in lines {
        let json = serde_json::to_string(l).expect("plain struct serializes");
        writeln!(w, "{json}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_generated(path: &Path) -> std::result::Result<Vec<GeneratedLine>, GeneratedFileError> {
    let io = |source| GeneratedFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GeneratedFileError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
