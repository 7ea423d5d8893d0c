//! Synthetic report corpora with a long-tailed sentence distribution.
//!
//! Sentences are drawn from a normal pool and an abnormal pool, each with
//! Zipf-distributed popularity. Normal sentences are built from a small
//! shared lexicon, abnormal ones from the rest of the vocabulary. Every pool
//! sentence owns a fixed random spatial pattern; a report's feature map is
//! the sum of its sentences' patterns plus Gaussian noise, so content is
//! recoverable from the features.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusEntry, DataError, FeatureMap, Report, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub records: usize,
    pub normal_pool: usize,
    pub abnormal_pool: usize,
    pub zipf_exponent: f64,
    /// Probability that a sentence slot is abnormal.
    pub abnormal_prob: f64,
    /// Standard deviation of the additive feature noise.
    pub noise: f64,
    /// Number of distinct content words.
    pub vocab_size: usize,
    /// Number of tag labels (label 0 is `"normal"`).
    pub tags: usize,
    #[serde(default = "one")]
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub locations: usize,
    pub channels: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            records: 300,
            normal_pool: 60,
            abnormal_pool: 140,
            zipf_exponent: 1.3,
            abnormal_prob: 0.2,
            noise: 0.1,
            vocab_size: 190,
            tags: 12,
            min_sentences: 3,
            max_sentences: 5,
            min_words: 2,
            max_words: 5,
            locations: 16,
            channels: 32,
        }
    }
}

fn one() -> usize {
    1
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(DataError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.abnormal_prob) {
            return fail("abnormal_prob must lie in [0, 1]");
        }
        if self.normal_pool == 0 || self.abnormal_pool == 0 {
            return fail("sentence pools must be nonempty");
        }
        if self.records == 0 {
            return fail("records must be positive");
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return fail("need 1 <= min_sentences <= max_sentences");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return fail("need 1 <= min_words <= max_words");
        }
        if self.vocab_size < 4 || self.tags == 0 {
            return fail("vocab_size must be >= 4 and tags >= 1");
        }
        if self.locations == 0 || self.channels == 0 {
            return fail("feature dimensions must be positive");
        }
        if !(self.noise >= 0.0) || !(self.zipf_exponent >= 0.0) {
            return fail("noise and zipf_exponent must be non-negative");
        }
        Ok(())
    }
}

/// The generative ground truth behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDescription {
    pub normal_sentences: Vec<Vec<String>>,
    pub abnormal_sentences: Vec<Vec<String>>,
    /// Zipf weights (unnormalized) shared by both pools, by rank.
    pub normal_weights: Vec<f64>,
    pub abnormal_weights: Vec<f64>,
    /// Tag of each abnormal pool sentence.
    pub abnormal_tags: Vec<String>,
    pub normal_lexicon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub description: SynthDescription,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut w = String::new();
    for _ in 0..2 {
        let s = i % base;
        w.push(CONSONANTS[s / VOWELS.len()] as char);
        w.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
    }
    while i > 0 {
        let s = i % base;
        w.push(CONSONANTS[s / VOWELS.len()] as char);
        w.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
    }
    w
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

fn build_pool(
    size: usize,
    lexicon: &[String],
    cfg: &SynthConfig,
    taken: &mut std::collections::HashSet<Vec<String>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<String>>> {
    let mut pool = Vec::with_capacity(size);
    let mut attempts = 0;
    while pool.len() < size {
        attempts += 1;
        if attempts > 1000 * size {
            return Err(DataError::Config(format!(
                "cannot draw {size} distinct sentences from a {}-word lexicon",
                lexicon.len()
            )));
        }
        let len = rng.random_range(cfg.min_words..=cfg.max_words);
        let mut s: Vec<String> = (0..len)
            .map(|_| lexicon[rng.random_range(0..lexicon.len())].clone())
            .collect();
        s.push(".".into());
        if taken.insert(s.clone()) {
            pool.push(s);
        }
    }
    Ok(pool)
}

fn pattern(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..cfg.locations * cfg.channels)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Generate a corpus deterministically from `cfg.seed`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let words: Vec<String> = (0..cfg.vocab_size).map(pseudo_word).collect();
    let normal_lexicon = (cfg.vocab_size / 4).max(2);
    let (normal_words, abnormal_words) = words.split_at(normal_lexicon);

    let mut taken = std::collections::HashSet::new();
    let normal = build_pool(cfg.normal_pool, normal_words, cfg, &mut taken, &mut rng)?;
    let abnormal = build_pool(cfg.abnormal_pool, abnormal_words, cfg, &mut taken, &mut rng)?;
    let normal_patterns: Vec<Vec<f64>> = (0..normal.len()).map(|_| pattern(cfg, &mut rng)).collect();
    let abnormal_patterns: Vec<Vec<f64>> = (0..abnormal.len()).map(|_| pattern(cfg, &mut rng)).collect();
    let abnormal_tags: Vec<String> = (0..abnormal.len())
        .map(|j| {
            if cfg.tags > 1 {
                format!("tag{:02}", 1 + j % (cfg.tags - 1))
            } else {
                "normal".to_string()
            }
        })
        .collect();

    let normal_weights = zipf_weights(normal.len(), cfg.zipf_exponent);
    let abnormal_weights = zipf_weights(abnormal.len(), cfg.zipf_exponent);
    let pick_normal = WeightedIndex::new(&normal_weights).map_err(|e| DataError::Config(e.to_string()))?;
    let pick_abnormal = WeightedIndex::new(&abnormal_weights).map_err(|e| DataError::Config(e.to_string()))?;

    let mut entries = Vec::with_capacity(cfg.records);
    for r in 0..cfg.records {
        let count = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
        let mut chosen: Vec<(bool, usize)> = Vec::with_capacity(count);
        for _ in 0..count {
            let is_abnormal = rng.random::<f64>() < cfg.abnormal_prob;
            let dist = if is_abnormal { &pick_abnormal } else { &pick_normal };
            let mut idx = dist.sample(&mut rng);
            for _ in 0..10 {
                if !chosen.contains(&(is_abnormal, idx)) {
                    break;
                }
                idx = dist.sample(&mut rng);
            }
            chosen.push((is_abnormal, idx));
        }
        // Findings about abnormalities lead the report.
        chosen.sort_by_key(|&(a, _)| !a);

        let mut values = vec![0.0f64; cfg.locations * cfg.channels];
        for &(a, idx) in &chosen {
            let p = if a { &abnormal_patterns[idx] } else { &normal_patterns[idx] };
            for (v, x) in values.iter_mut().zip(p) {
                *v += x;
            }
        }
        for v in &mut values {
            *v += cfg.noise * rng.sample::<f64, _>(StandardNormal);
        }

        let mut mti: Vec<String> = chosen
            .iter()
            .filter(|(a, _)| *a)
            .map(|&(_, idx)| abnormal_tags[idx].clone())
            .collect();
        if mti.is_empty() {
            mti.push("normal".into());
        }
        mti.sort();
        mti.dedup();

        let id = format!("synth{r:05}");
        entries.push(CorpusEntry {
            report: Report {
                sentences: chosen
                    .iter()
                    .map(|&(a, idx)| if a { abnormal[idx].clone() } else { normal[idx].clone() })
                    .collect(),
                abnormal: chosen.iter().map(|&(a, _)| a).collect(),
                mti,
                feature: format!("features/{id}.fmap"),
                id,
            },
            features: FeatureMap::new(
                cfg.locations,
                cfg.channels,
                values.into_iter().map(|v| v as f32).collect(),
            )?,
        });
    }

    Ok(SynthCorpus {
        corpus: Corpus { entries },
        description: SynthDescription {
            normal_sentences: normal,
            abnormal_sentences: abnormal,
            normal_weights,
            abnormal_weights,
            abnormal_tags,
            normal_lexicon,
        },
    })
}
