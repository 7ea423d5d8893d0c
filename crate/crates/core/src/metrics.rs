//! Corpus-level text-generation metrics and the distinct-sentence count
//! per sentence position.
//!
//! BLEU pools clipped n-gram counts over the corpus. ROUGE-L, CIDEr-D and
//! METEOR-lite are averaged over pairs. METEOR-lite aligns exact matches
//! only (no stemming or synonyms).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("pair {0} has no reference")]
    NoReference(String),
    #[error("{hypotheses} hypotheses but {references} references")]
    Mismatch { hypotheses: usize, references: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// One hypothesis paragraph with its reference paragraphs, as flat token
/// sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub hypothesis: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn new(id: impl Into<String>, hypothesis: Vec<String>, references: Vec<Vec<String>>) -> Self {
        EvalPair {
            id: id.into(),
            hypothesis,
            references,
        }
    }
}

/// Space-separated tokens; handy in tests and examples.
pub fn toks(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

fn check(pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    match pairs.iter().find(|p| p.references.is_empty()) {
        Some(p) => Err(MetricsError::NoReference(p.id.clone())),
        None => Ok(()),
    }
}

/// Mean that does not depend on the order of `values`.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-1..`max_n`, unsmoothed. Element `k` is BLEU-(k+1).
///
/// The reference length of a pair is that of the reference closest in
/// length to the hypothesis (shorter on ties).
pub fn bleu(pairs: &[EvalPair], max_n: usize) -> Result<Vec<f64>> {
    check(pairs)?;
    let mut matched = vec![0usize; max_n];
    let mut possible = vec![0usize; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for p in pairs {
        let c = p.hypothesis.len();
        hyp_len += c;
        ref_len += p
            .references
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap_or(0);
        for n in 1..=max_n {
            let hyp = ngram_counts(&p.hypothesis, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &p.references {
                for (g, k) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in &hyp {
                matched[n - 1] += (*k).min(max_ref.get(g).copied().unwrap_or(0));
            }
            possible[n - 1] += c.saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 {
        return Ok(vec![0.0; max_n]);
    }
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0);
    let mut out = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 0..max_n {
        if matched[n] == 0 || possible[n] == 0 {
            zero = true;
        } else {
            log_sum += (matched[n] as f64 / possible[n] as f64).ln();
        }
        out.push(if zero {
            0.0
        } else {
            bp * (log_sum / (n + 1) as f64).exp()
        });
    }
    Ok(out)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

const ROUGE_BETA: f64 = 1.2;

fn rouge_l_pair(hyp: &[String], reference: &[String]) -> f64 {
    let l = lcs_len(hyp, reference);
    if l == 0 {
        return 0.0;
    }
    let r = l as f64 / reference.len() as f64;
    let p = l as f64 / hyp.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// Mean over pairs of the best LCS F-measure against any reference.
pub fn rouge_l(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let scores = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| rouge_l_pair(&p.hypothesis, r))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(order_free_mean(scores))
}

const CIDER_N: usize = 4;
const CIDER_SIGMA: f64 = 6.0;

// Ordered maps keep the floating-point sums independent of hashing.
struct TfIdf<'a> {
    vecs: Vec<BTreeMap<&'a [String], f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn tfidf<'a>(tokens: &'a [String], df: &HashMap<&'a [String], usize>, log_docs: f64) -> TfIdf<'a> {
    let mut vecs = Vec::with_capacity(CIDER_N);
    let mut norms = Vec::with_capacity(CIDER_N);
    for n in 1..=CIDER_N {
        let v: BTreeMap<&[String], f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                (g, tf as f64 * (log_docs - d.ln()))
            })
            .collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(v);
    }
    TfIdf {
        vecs,
        norms,
        len: tokens.len(),
    }
}

fn cider_sim(h: &TfIdf<'_>, r: &TfIdf<'_>) -> [f64; CIDER_N] {
    let delta = h.len as f64 - r.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; CIDER_N];
    for n in 0..CIDER_N {
        let mut val: f64 = 0.0;
        for (g, hv) in &h.vecs[n] {
            if let Some(rv) = r.vecs[n].get(g) {
                val += hv.min(*rv) * rv;
            }
        }
        if h.norms[n] != 0.0 && r.norms[n] != 0.0 {
            val /= h.norms[n] * r.norms[n];
        }
        out[n] = val * penalty;
    }
    out
}

/// CIDEr-D with document frequencies over the reference sets, clipped
/// n-gram weights and a Gaussian length penalty, scaled by 10.
///
/// When every reference n-gram occurs in every document (a single-document
/// corpus, for example) all weights vanish; the score is then 0 and a
/// warning is logged.
pub fn cider_d(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for p in pairs {
        let mut seen: HashSet<&[String]> = HashSet::new();
        for r in &p.references {
            for n in 1..=CIDER_N {
                seen.extend(ngram_counts(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_docs = (pairs.len() as f64).ln();
    let mut degenerate = true;
    let mut scores = Vec::with_capacity(pairs.len());
    for p in pairs {
        let h = tfidf(&p.hypothesis, &df, log_docs);
        let mut total = [0.0; CIDER_N];
        for r in &p.references {
            let rv = tfidf(r, &df, log_docs);
            if rv.norms.iter().any(|&x| x != 0.0) {
                degenerate = false;
            }
            for (t, s) in total.iter_mut().zip(cider_sim(&h, &rv)) {
                *t += s;
            }
        }
        let mean = total.iter().sum::<f64>() / CIDER_N as f64;
        scores.push(mean / p.references.len() as f64 * 10.0);
    }
    if degenerate {
        log::warn!(
            "CIDEr-D: every reference n-gram has zero IDF over {} document(s); score defined as 0",
            pairs.len()
        );
        return Ok(0.0);
    }
    Ok(order_free_mean(scores))
}

const METEOR_ALPHA: f64 = 0.9;
const METEOR_BEAM: usize = 64;

/// `(matches, chunks)` of an exact-match alignment that maximizes matches,
/// then (by beam search) minimizes chunks.
pub fn meteor_alignment(hyp: &[String], reference: &[String]) -> (usize, usize) {
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *ref_counts.entry(w.as_str()).or_insert(0) += 1;
    }
    let mut hyp_counts: HashMap<&str, usize> = HashMap::new();
    for w in hyp {
        *hyp_counts.entry(w.as_str()).or_insert(0) += 1;
    }
    let best: usize = hyp_counts
        .iter()
        .map(|(w, &c)| c.min(ref_counts.get(w).copied().unwrap_or(0)))
        .sum();
    if best == 0 {
        return (0, 0);
    }
    // Matches still obtainable from hyp[i..].
    let mut reachable = vec![0usize; hyp.len() + 1];
    {
        let mut used: HashMap<&str, usize> = HashMap::new();
        for i in (0..hyp.len()).rev() {
            let w = hyp[i].as_str();
            let u = used.entry(w).or_insert(0);
            let avail = ref_counts.get(w).copied().unwrap_or(0);
            reachable[i] = reachable[i + 1] + usize::from(*u < avail);
            *u += 1;
        }
    }
    let positions: HashMap<&str, Vec<usize>> = reference.iter().enumerate().fold(
        HashMap::new(),
        |mut m, (j, w)| {
            m.entry(w.as_str()).or_insert_with(Vec::new).push(j);
            m
        },
    );

    #[derive(Clone)]
    struct State {
        used: Vec<bool>,
        last: Option<usize>,
        matches: usize,
        chunks: usize,
    }
    let mut beam = vec![State {
        used: vec![false; reference.len()],
        last: None,
        matches: 0,
        chunks: 0,
    }];
    for (i, w) in hyp.iter().enumerate() {
        let mut next: Vec<State> = Vec::new();
        for s in &beam {
            if let Some(ps) = positions.get(w.as_str()) {
                for &j in ps {
                    if s.used[j] {
                        continue;
                    }
                    let mut t = s.clone();
                    t.used[j] = true;
                    let continues = s.last.is_some_and(|l| l + 1 == j);
                    t.chunks += usize::from(!continues);
                    t.last = Some(j);
                    t.matches += 1;
                    next.push(t);
                }
            }
            let mut skip = s.clone();
            skip.last = None;
            next.push(skip);
        }
        next.retain(|s| s.matches + reachable[i + 1] >= best);
        next.sort_by(|a, b| {
            a.chunks
                .cmp(&b.chunks)
                .then(b.matches.cmp(&a.matches))
                .then_with(|| a.last.cmp(&b.last))
        });
        next.dedup_by(|a, b| a.used == b.used && a.last == b.last && a.chunks == b.chunks);
        next.truncate(METEOR_BEAM);
        beam = next;
    }
    let chunks = beam
        .iter()
        .filter(|s| s.matches == best)
        .map(|s| s.chunks)
        .min()
        .unwrap_or(best);
    (best, chunks)
}

fn meteor_pair(hyp: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = meteor_alignment(hyp, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// Exact-match METEOR, best reference per pair, averaged over pairs.
pub fn meteor_lite(pairs: &[EvalPair]) -> Result<f64> {
    check(pairs)?;
    let scores = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| meteor_pair(&p.hypothesis, r))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(order_free_mean(scores))
}

/// Number of distinct sentences at each sentence position across
/// paragraphs. Paragraphs shorter than `m + 1` do not contribute at `m`.
pub fn distinct_per_index<T: Eq + std::hash::Hash, S: AsRef<[T]>>(paragraphs: &[Vec<S>]) -> Vec<usize> {
    let depth = paragraphs.iter().map(Vec::len).max().unwrap_or(0);
    (0..depth)
        .map(|m| {
            paragraphs
                .iter()
                .filter_map(|p| p.get(m))
                .map(|s| s.as_ref())
                .collect::<HashSet<&[T]>>()
                .len()
        })
        .collect()
}

/// All scores for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
    pub meteor_lite: f64,
    pub distinct: Vec<usize>,
}

impl MetricsReport {
    /// Scores generated paragraphs (lists of sentences) against reference
    /// paragraphs, one reference per hypothesis.
    pub fn compute(hypotheses: &[Vec<Vec<String>>], references: &[Vec<Vec<String>>]) -> Result<Self> {
        if hypotheses.len() != references.len() {
            return Err(MetricsError::Mismatch {
                hypotheses: hypotheses.len(),
                references: references.len(),
            });
        }
        let pairs: Vec<EvalPair> = hypotheses
            .iter()
            .zip(references)
            .enumerate()
            .map(|(i, (h, r))| EvalPair::new(i.to_string(), h.concat(), vec![r.concat()]))
            .collect();
        Self::from_pairs(&pairs, distinct_per_index(hypotheses))
    }

    pub fn from_pairs(pairs: &[EvalPair], distinct: Vec<usize>) -> Result<Self> {
        let b = bleu(pairs, 4)?;
        Ok(MetricsReport {
            bleu1: b[0],
            bleu2: b[1],
            bleu3: b[2],
            bleu4: b[3],
            rouge_l: rouge_l(pairs)?,
            cider_d: cider_d(pairs)?,
            meteor_lite: meteor_lite(pairs)?,
            distinct,
        })
    }

    pub fn bleu(&self) -> [f64; 4] {
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4]
    }

    /// Distinct sentences at position `m`, 0 when unoccupied.
    pub fn distinct_at(&self, m: usize) -> usize {
        self.distinct.get(m).copied().unwrap_or(0)
    }

    pub fn is_well_formed(&self) -> bool {
        let unit = [
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.rouge_l,
            self.meteor_lite,
        ];
        unit.iter().all(|v| v.is_finite() && (0.0..=1.0 + 1e-12).contains(v))
            && self.cider_d.is_finite()
            && (0.0..=10.0 + 1e-9).contains(&self.cider_d)
    }

    /// Aligned score table followed by the distinct-sentence row.
    pub fn render_table(&self, label: &str) -> String {
        let mut out = String::new();
        let width = label.len().max(6);
        let _ = writeln!(
            out,
            "{:<width$} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "model", "B-1", "B-2", "B-3", "B-4", "METEOR*", "ROUGE-L", "CIDEr-D"
        );
        let _ = writeln!(
            out,
            "{:<width$} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            label,
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor_lite,
            self.rouge_l,
            self.cider_d
        );
        let _ = writeln!(out, "* METEOR-lite: exact unigram matches only");
        let _ = write!(out, "{:<width$}", "m");
        for m in 0..self.distinct.len() {
            let _ = write!(out, " {m:>5}");
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<width$}", "distinct");
        for d in &self.distinct {
            let _ = write!(out, " {d:>5}");
        }
        let _ = writeln!(out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(h: &str, r: &str) -> EvalPair {
        EvalPair::new("p", toks(h), vec![toks(r)])
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bleu_perfect_match() {
        let pairs = vec![pair("a b c d e", "a b c d e"), pair("x y z w", "x y z w")];
        for v in bleu(&pairs, 4).unwrap() {
            assert!(close(v, 1.0, 1e-12));
        }
    }

    #[test]
    fn bleu_clipped_unigram_precision() {
        let b = bleu(&[pair("the the the the", "the cat")], 1).unwrap();
        // Clipped count 1 of 4; hypothesis longer than reference, so BP = 1.
        assert!(close(b[0], 0.25, 1e-12));
    }

    #[test]
    fn bleu_disjoint_and_empty() {
        assert_eq!(bleu(&[pair("a b", "c d")], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(bleu(&[], 4), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn bleu_brevity_penalty() {
        // c = 2, r = 4: BP = e^{1 - 2}.
        let b = bleu(&[pair("a b", "a b c d")], 2).unwrap();
        assert!(close(b[0], (-1.0f64).exp(), 1e-12));
        assert!(close(b[1], (-1.0f64).exp(), 1e-12));
    }

    #[test]
    fn bleu_pools_counts_over_corpus() {
        // Pair 1 matches 2/2 unigrams, pair 2 matches 1/3: pooled 3/5.
        let pairs = vec![pair("a b", "a b"), pair("c x y", "c d e")];
        let b = bleu(&pairs, 1).unwrap();
        assert!(close(b[0], 3.0 / 5.0, 1e-12));
    }

    #[test]
    fn rouge_cases() {
        assert!(close(rouge_l(&[pair("a b c", "a b c")]).unwrap(), 1.0, 1e-12));
        assert_eq!(rouge_l(&[pair("a b", "c d")]).unwrap(), 0.0);
        assert!(close(rouge_l(&[pair("a b c d", "a c d e")]).unwrap(), 0.75, 1e-12));
    }

    #[test]
    fn meteor_cases() {
        let identical = meteor_lite(&[pair("a b c", "a b c")]).unwrap();
        assert!(close(identical, 1.0 - 0.5 / 27.0, 1e-12));
        assert!(close(identical, 0.98148, 1e-5));
        assert_eq!(meteor_lite(&[pair("a b", "c d")]).unwrap(), 0.0);
        assert_eq!(meteor_alignment(&toks("a b"), &toks("b a")), (2, 2));
        assert!(close(meteor_lite(&[pair("a b", "b a")]).unwrap(), 0.5, 1e-12));
    }

    #[test]
    fn meteor_prefers_fewer_chunks() {
        // Matching the second "a" keeps "a b" contiguous.
        assert_eq!(meteor_alignment(&toks("a b"), &toks("a x a b")), (2, 1));
        assert_eq!(meteor_alignment(&toks("a b c d"), &toks("c d a b")), (4, 2));
    }

    fn distinct_refs() -> Vec<EvalPair> {
        vec![
            pair("heart size is normal", "heart size is normal"),
            pair("no focal airspace consolidation", "no focal airspace consolidation"),
            pair("the lungs are clear", "the lungs are clear"),
        ]
    }

    #[test]
    fn cider_self_reference_scores_ten() {
        let pairs = distinct_refs();
        assert!(close(cider_d(&pairs).unwrap(), 10.0, 1e-9));
        assert!(close(cider_d(&pairs[..2]).unwrap(), 10.0, 1e-9));
    }

    #[test]
    fn cider_zero_overlap_and_degenerate() {
        let mut pairs = distinct_refs();
        pairs[0].hypothesis = toks("pleural effusion");
        let s = cider_d(&pairs).unwrap();
        assert!(close(s, 20.0 / 3.0, 1e-9), "{s}");
        assert_eq!(cider_d(&[pair("a b", "a b")]).unwrap(), 0.0);
    }

    #[test]
    fn cider_ignores_ngrams_shared_by_every_document() {
        // "the" occurs in every reference, so it has zero weight: adding it
        // to a hypothesis with otherwise no overlap changes nothing.
        let base = vec![pair("x", "the heart"), pair("y", "the lungs")];
        let with_the = vec![pair("x the", "the heart"), pair("y", "the lungs")];
        let a = cider_d(&base).unwrap();
        let b = cider_d(&with_the).unwrap();
        assert_eq!(a, 0.0);
        assert!(b.abs() < 1e-12, "{b}");
    }

    #[test]
    fn distinct_counts() {
        let p = |s: &[&str]| s.iter().map(|x| toks(x)).collect::<Vec<_>>();
        let same = vec![p(&["a .", "b ."]); 7];
        assert_eq!(distinct_per_index(&same), vec![1, 1]);
        let corpus = vec![
            p(&["a .", "x ."]),
            p(&["b ."]),
            p(&["c .", "x .", "z ."]),
            p(&["a ."]),
            p(&["b .", "y ."]),
        ];
        assert_eq!(distinct_per_index(&corpus), vec![3, 2, 1]);
        assert!(distinct_per_index::<String, Vec<String>>(&[]).is_empty());
    }

    #[test]
    fn report_json_and_table() {
        let h = vec![vec![toks("heart size normal ."), toks("lungs are clear .")]];
        let r = MetricsReport::compute(&h, &h).unwrap();
        assert!(close(r.bleu4, 1.0, 1e-12));
        assert!(r.is_well_formed());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"bleu4\"") && json.contains("\"distinct\":[1,1]"));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let table = r.render_table("dual");
        assert!(table.contains("B-4") && table.contains("distinct"));
        assert!(MetricsReport::compute(&h, &[]).is_err());
    }

    fn lcs_table(a: &[u8], b: &[u8]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] {
                    t[i - 1][j - 1] + 1
                } else {
                    t[i - 1][j].max(t[i][j - 1])
                };
            }
        }
        t[a.len()][b.len()]
    }

    fn is_subsequence(needle: &[u8], hay: &[u8]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|x| it.any(|y| y == x))
    }

    fn lcs_brute(a: &[u8], b: &[u8]) -> usize {
        (0u32..1 << a.len())
            .filter_map(|mask| {
                let sub: Vec<u8> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
                is_subsequence(&sub, b).then_some(sub.len())
            })
            .max()
            .unwrap_or(0)
    }

    /// Minimum chunks over every maximal exact-match alignment.
    fn meteor_brute(h: &[u8], r: &[u8]) -> (usize, usize) {
        fn go(h: &[u8], r: &[u8], i: usize, used: &mut Vec<bool>, last: Option<usize>, m: usize, c: usize, best: &mut (usize, usize)) {
            if i == h.len() {
                if m > best.0 || (m == best.0 && c < best.1) {
                    *best = (m, c);
                }
                return;
            }
            for j in 0..r.len() {
                if !used[j] && r[j] == h[i] {
                    used[j] = true;
                    let extra = usize::from(last.is_none_or(|l| l + 1 != j));
                    go(h, r, i + 1, used, Some(j), m + 1, c + extra, best);
                    used[j] = false;
                }
            }
            go(h, r, i + 1, used, None, m, c, best);
        }
        let mut best = (0, 0);
        go(h, r, 0, &mut vec![false; r.len()], None, 0, 0, &mut best);
        best
    }

    fn as_tokens(v: &[u8]) -> Vec<String> {
        v.iter().map(|c| c.to_string()).collect()
    }

    proptest! {
        #[test]
        fn lcs_matches_table_and_enumeration(
            a in prop::collection::vec(0u8..4, 0..=12),
            b in prop::collection::vec(0u8..4, 0..=12),
        ) {
            let fast = lcs_len(&a, &b);
            prop_assert_eq!(fast, lcs_table(&a, &b));
            prop_assert_eq!(fast, lcs_brute(&a, &b));
        }

        #[test]
        fn meteor_beam_matches_exhaustive(
            h in prop::collection::vec(0u8..3, 1..=7),
            r in prop::collection::vec(0u8..3, 1..=7),
        ) {
            prop_assert_eq!(meteor_alignment(&as_tokens(&h), &as_tokens(&r)), meteor_brute(&h, &r));
        }

        #[test]
        fn repeating_a_token_never_exceeds_reference_count(k in 3usize..40) {
            // The reference holds "the" twice; k >= 3 keeps the brevity penalty at 1.
            let hyp = vec!["the".to_string(); k];
            let b = bleu(&[EvalPair::new("p", hyp, vec![toks("the cat the")])], 1).unwrap();
            prop_assert!((b[0] * k as f64 - 2.0).abs() < 1e-9);
        }

        #[test]
        fn metrics_are_permutation_invariant(
            seqs in prop::collection::vec(
                (prop::collection::vec(0u8..5, 1..8), prop::collection::vec(0u8..5, 1..8)), 2..6),
            rot in 0usize..5,
        ) {
            let pairs: Vec<EvalPair> = seqs
                .iter()
                .map(|(h, r)| EvalPair::new("p", as_tokens(h), vec![as_tokens(r)]))
                .collect();
            let mut shuffled = pairs.clone();
            shuffled.rotate_left(rot % pairs.len());
            shuffled.reverse();
            prop_assert_eq!(bleu(&pairs, 4).unwrap(), bleu(&shuffled, 4).unwrap());
            prop_assert_eq!(rouge_l(&pairs).unwrap(), rouge_l(&shuffled).unwrap());
            prop_assert_eq!(meteor_lite(&pairs).unwrap(), meteor_lite(&shuffled).unwrap());
            prop_assert_eq!(cider_d(&pairs).unwrap(), cider_d(&shuffled).unwrap());
        }

        #[test]
        fn identical_paragraphs_have_one_distinct_per_index(n in 1usize..30, depth in 1usize..5) {
            let para: Vec<Vec<String>> = (0..depth).map(|i| toks(&format!("s{i} ."))).collect();
            let corpus = vec![para; n];
            prop_assert_eq!(distinct_per_index(&corpus), vec![1; depth]);
        }
    }
}
