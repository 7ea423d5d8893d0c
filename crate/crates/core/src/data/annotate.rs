//! Abnormality labels from word-embedding proximity to tag terms.

use std::collections::HashMap;
use std::path::Path;

use super::{DataError, Result};

/// Cosine-distance cutoff used when no threshold is configured.
pub const DEFAULT_ABNORMAL_THRESHOLD: f64 = 0.35;

/// Word vectors read from a text file of `word v1 v2 ... vd` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
            let values = values.map_err(|e| DataError::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("bad number: {e}"),
            })?;
            let bad = |message: String| DataError::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            if values.is_empty() {
                return Err(bad(format!("{word:?} has no vector")));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(bad(format!("{word:?} has {} values, expected {d}", values.len())))
                }
                _ => {}
            }
            if values.iter().all(|&v| v == 0.0) {
                return Err(bad(format!("{word:?} has a zero vector")));
            }
            vectors.insert(word.to_string(), values);
        }
        let dim = dim.ok_or_else(|| DataError::Format {
            path: origin.to_path_buf(),
            message: "no embeddings".into(),
        })?;
        Ok(EmbeddingFile { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Smallest cosine distance between any in-vocabulary sentence token and
/// any tag term; `None` when no sentence token has an embedding.
pub fn min_cosine_distance(
    sentence: &[String],
    embeddings: &EmbeddingFile,
    tag_terms: &[String],
) -> Result<Option<f64>> {
    let tags = tag_terms
        .iter()
        .map(|t| {
            embeddings
                .get(t)
                .ok_or_else(|| DataError::Config(format!("tag term {t:?} has no embedding")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<f64> = None;
    for tok in sentence {
        let Some(v) = embeddings.get(tok) else { continue };
        for t in &tags {
            let d = cosine_distance(v, t);
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    Ok(best)
}

/// A sentence is abnormal iff some token lies within `threshold` cosine
/// distance of some tag term.
pub fn auto_annotate_abnormal(
    sentence: &[String],
    embeddings: &EmbeddingFile,
    tag_terms: &[String],
    threshold: f64,
) -> Result<bool> {
    Ok(min_cosine_distance(sentence, embeddings, tag_terms)?.is_some_and(|d| d <= threshold))
}

/// Manual flags when available, otherwise automatic annotation.
pub fn resolve_flags(
    sentences: &[Vec<String>],
    manual: Option<&[bool]>,
    embeddings: &EmbeddingFile,
    tag_terms: &[String],
    threshold: f64,
) -> Result<Vec<bool>> {
    if let Some(flags) = manual {
        if flags.len() != sentences.len() {
            return Err(DataError::Invalid(format!(
                "{} manual flags for {} sentences",
                flags.len(),
                sentences.len()
            )));
        }
        return Ok(flags.to_vec());
    }
    sentences
        .iter()
        .map(|s| auto_annotate_abnormal(s, embeddings, tag_terms, threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn emb() -> EmbeddingFile {
        let text = "fibrosis 1 0 0\nscarring 0.8 0.6 0\nheart 0 1 0\nnormal 0 0 1\n";
        EmbeddingFile::parse(text, Path::new("toy.vec")).unwrap()
    }

    #[test]
    fn tag_term_itself_is_abnormal() {
        let e = emb();
        let tags = toks("fibrosis");
        assert!(auto_annotate_abnormal(&toks("diffuse fibrosis ."), &e, &tags, 0.0).unwrap());
    }

    #[test]
    fn orthogonal_tokens_are_normal() {
        let e = emb();
        let tags = toks("fibrosis");
        let d = min_cosine_distance(&toks("heart normal ."), &e, &tags).unwrap();
        assert!((d.unwrap() - 1.0).abs() < 1e-15);
        assert!(!auto_annotate_abnormal(&toks("heart normal ."), &e, &tags, 0.35).unwrap());
    }

    #[test]
    fn matches_hand_cosine() {
        // cos(scarring, fibrosis) = 0.8, so distance 0.2; cos(scarring, heart) = 0.6.
        let e = emb();
        let tags = toks("fibrosis");
        let d = min_cosine_distance(&toks("scarring"), &e, &tags).unwrap().unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        assert!(auto_annotate_abnormal(&toks("scarring"), &e, &tags, 0.35).unwrap());
        assert!(!auto_annotate_abnormal(&toks("scarring"), &e, &tags, 0.15).unwrap());
        let d = min_cosine_distance(&toks("scarring"), &e, &toks("heart")).unwrap().unwrap();
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn missing_tag_term_is_a_config_error() {
        let e = emb();
        let err = auto_annotate_abnormal(&toks("heart"), &e, &toks("effusion"), 0.3).unwrap_err();
        assert!(matches!(err, DataError::Config(_)));
    }

    #[test]
    fn parse_rejects_ragged_and_zero_vectors() {
        assert!(EmbeddingFile::parse("a 1 2\nb 1\n", Path::new("x")).is_err());
        assert!(EmbeddingFile::parse("a 0 0\n", Path::new("x")).is_err());
        let err = EmbeddingFile::parse("a 1 2\nb 1 q\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
    }

    #[test]
    fn manual_flags_take_precedence() {
        let e = emb();
        let s = vec![toks("fibrosis")];
        let flags = resolve_flags(&s, Some(&[false]), &e, &toks("fibrosis"), 0.35).unwrap();
        assert_eq!(flags, vec![false]);
        let flags = resolve_flags(&s, None, &e, &toks("fibrosis"), 0.35).unwrap();
        assert_eq!(flags, vec![true]);
    }

    proptest! {
        #[test]
        fn raising_threshold_never_unflags(lo in 0.0f64..2.0, delta in 0.0f64..1.0, pick in 0usize..4) {
            let e = emb();
            let words = ["fibrosis", "scarring", "heart", "normal"];
            let s = toks(words[pick]);
            let tags = toks("scarring");
            let a = auto_annotate_abnormal(&s, &e, &tags, lo).unwrap();
            let b = auto_annotate_abnormal(&s, &e, &tags, lo + delta).unwrap();
            prop_assert!(!a || b);
        }
    }
}
