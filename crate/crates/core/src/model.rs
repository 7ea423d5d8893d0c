//! Hierarchical report decoder with abnormal/normal word-LSTM routing.
//!
//! An image feature map is embedded per location, a sentence LSTM attends
//! over the locations once per sentence and emits a topic vector, a stop
//! logit and an abnormality logit. Each topic is decoded into words by one
//! of two parameter-independent word LSTMs, selected by the sentence's
//! abnormal flag. A tag head on the pooled image embedding adds a
//! multi-label auxiliary loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ReportRecord, BOS};
use crate::nn::{Attention, Bindings, Embedding, Linear, LstmCell, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channels of the input feature map.
    pub feature_channels: usize,
    /// Image embedding, topic and word embedding width.
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub locations: usize,
    pub vocab_size: usize,
    pub mti_labels: usize,
    pub max_sentences: usize,
    pub max_words: usize,
    pub lambda_stop: f64,
    pub lambda_hierarchical: f64,
    pub lambda_abnormal: f64,
    pub lambda_mti: f64,
    pub dual_enabled: bool,
}

impl ModelConfig {
    /// Full-size dimensions for a given vocabulary.
    pub fn full_scale(vocab_size: usize) -> Self {
        ModelConfig {
            feature_channels: 1024,
            embed_dim: 512,
            hidden: 512,
            attention_dim: 512,
            locations: 196,
            vocab_size,
            mti_labels: 121,
            max_sentences: 8,
            max_words: 20,
            lambda_stop: 1.0,
            lambda_hierarchical: 1.0,
            lambda_abnormal: 1.0,
            lambda_mti: 10.0,
            dual_enabled: true,
        }
    }

    /// Small dimensions used for gradient checks.
    pub fn tiny(vocab_size: usize, mti_labels: usize) -> Self {
        ModelConfig {
            feature_channels: 6,
            embed_dim: 8,
            hidden: 8,
            attention_dim: 8,
            locations: 4,
            vocab_size,
            mti_labels,
            max_sentences: 4,
            max_words: 6,
            ..ModelConfig::full_scale(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feature_channels", self.feature_channels),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("locations", self.locations),
            ("vocab_size", self.vocab_size),
            ("mti_labels", self.mti_labels),
            ("max_sentences", self.max_sentences),
            ("max_words", self.max_words),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(TensorError::Contract(format!("model.{name} must be positive")));
        }
        if self.vocab_size <= BOS {
            return Err(TensorError::Contract(
                "model.vocab_size must include the reserved tokens".into(),
            ));
        }
        let lambdas = [
            ("lambda_stop", self.lambda_stop),
            ("lambda_hierarchical", self.lambda_hierarchical),
            ("lambda_abnormal", self.lambda_abnormal),
            ("lambda_mti", self.lambda_mti),
        ];
        if let Some((name, v)) = lambdas.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(TensorError::Contract(format!(
                "model.{name} must be a finite non-negative number, got {v}"
            )));
        }
        Ok(())
    }

    /// Weight actually applied to the abnormality loss: zero when a single
    /// word LSTM is used.
    pub fn effective_lambda_abnormal(&self) -> f64 {
        if self.dual_enabled {
            self.lambda_abnormal
        } else {
            0.0
        }
    }

    /// Dimension summary stored with checkpoints to detect mismatches.
    pub fn fingerprint(&self) -> Vec<usize> {
        vec![
            self.feature_channels,
            self.embed_dim,
            self.hidden,
            self.attention_dim,
            self.locations,
            self.vocab_size,
            self.mti_labels,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Abnormal,
    Normal,
}

impl Branch {
    pub fn prefix(self) -> &'static str {
        match self {
            Branch::Abnormal => "word_abn",
            Branch::Normal => "word_norm",
        }
    }
}

/// Word branch used for a sentence with the given abnormal flag.
pub fn route(config: &ModelConfig, abnormal: bool) -> Branch {
    if config.dual_enabled && abnormal {
        Branch::Abnormal
    } else {
        Branch::Normal
    }
}

/// Model configuration plus every learnable tensor under a stable name.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Seeded initialization. Both word branches are always allocated so that
    /// checkpoints of single- and dual-branch runs share one layout.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        Linear::register(&mut p, "img_embed", c.feature_channels, c.embed_dim, true, &mut rng)?;
        Attention::register(&mut p, "att", c.embed_dim, c.hidden, c.attention_dim, &mut rng)?;
        LstmCell::register(&mut p, "sent_lstm", c.embed_dim, c.hidden, &mut rng)?;
        Linear::register(&mut p, "topic", c.hidden, c.embed_dim, false, &mut rng)?;
        Linear::register(&mut p, "stop.prev", c.hidden, c.hidden, false, &mut rng)?;
        Linear::register(&mut p, "stop.cur", c.hidden, c.hidden, false, &mut rng)?;
        Linear::register(&mut p, "stop.out", c.hidden, 1, true, &mut rng)?;
        Linear::register(&mut p, "abn_head", c.hidden, 1, true, &mut rng)?;
        Embedding::register(&mut p, "word_emb", c.vocab_size, c.embed_dim, &mut rng)?;
        for branch in [Branch::Abnormal, Branch::Normal] {
            let prefix = branch.prefix();
            LstmCell::register(&mut p, &format!("{prefix}.lstm"), c.embed_dim, c.hidden, &mut rng)?;
            Linear::register(&mut p, &format!("{prefix}.out"), c.hidden, c.vocab_size, true, &mut rng)?;
        }
        Linear::register(&mut p, "mti_head", c.embed_dim, c.mti_labels, true, &mut rng)?;
        Ok(Model { config, params: p })
    }

    /// Same layout as [`Model::new`] with every value set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Model::new(config, 0)?;
        for t in m.params.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        Ok(m)
    }

    /// Names of the tensors owned by one word branch.
    pub fn branch_param_names(&self, branch: Branch) -> Vec<String> {
        let prefix = format!("{}.", branch.prefix());
        self.params
            .names()
            .iter()
            .filter(|n| n.starts_with(&prefix))
            .cloned()
            .collect()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Result<Bound<'a>> {
        let bindings = self.params.bind(tape);
        Bound::new(&self.config, bindings, tape)
    }

    /// Per-label probabilities of the tag head for one feature map.
    pub fn mti_predict(&self, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let bound = self.bind(&mut tape)?;
        let image = bound.encode_image(&mut tape, features)?;
        let p = bound.mti_probabilities(&mut tape, image.pooled)?;
        Ok(tape.value(p).clone())
    }

    /// Loss values for a batch without recording gradients.
    pub fn evaluate_losses(&self, batch: &[ReportRecord]) -> Result<LossValues> {
        let mut tape = Tape::inference();
        let bound = self.bind(&mut tape)?;
        let losses = bound.compute_losses(&mut tape, batch)?;
        losses.values(&tape)
    }
}

#[derive(Debug, Clone, Copy)]
struct WordBranch {
    lstm: LstmCell,
    out: Linear,
}

/// Embedded image: per-location embedding, its attention projection and the
/// location mean.
#[derive(Debug, Clone, Copy)]
pub struct ImageEncoding {
    pub locations: Var,
    pub projected: Var,
    pub pooled: Var,
}

/// Outputs of one sentence-LSTM step.
#[derive(Debug, Clone, Copy)]
pub struct SentenceStep {
    pub h: Var,
    pub c: Var,
    pub topic: Var,
    pub stop_logit: Var,
    pub abnormal_logit: Var,
    pub attention: Var,
}

/// Batch losses as tape nodes. Each component is summed within a record and
/// averaged over the batch.
#[derive(Debug, Clone, Copy)]
pub struct Losses {
    pub stop: Var,
    pub hierarchical: Var,
    pub abnormal: Var,
    pub mti: Var,
    pub total: Var,
    /// Number of predicted words in the batch.
    pub words: usize,
    pub records: usize,
}

impl Losses {
    pub fn values(&self, tape: &Tape) -> Result<LossValues> {
        Ok(LossValues {
            stop: tape.scalar_value(self.stop)?,
            hierarchical: tape.scalar_value(self.hierarchical)?,
            abnormal: tape.scalar_value(self.abnormal)?,
            mti: tape.scalar_value(self.mti)?,
            total: tape.scalar_value(self.total)?,
            words: self.words,
            records: self.records,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub stop: f64,
    pub hierarchical: f64,
    pub abnormal: f64,
    pub mti: f64,
    pub total: f64,
    pub words: usize,
    pub records: usize,
}

impl LossValues {
    /// Mean cross-entropy per predicted word.
    pub fn per_word(&self) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            self.hierarchical * self.records as f64 / self.words as f64
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.stop, self.hierarchical, self.abnormal, self.mti, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Parameters of a [`Model`] bound to a tape.
pub struct Bound<'a> {
    pub config: &'a ModelConfig,
    pub bindings: Bindings<'a>,
    img_embed: Linear,
    att: Attention,
    sent: LstmCell,
    topic: Linear,
    stop_prev: Linear,
    stop_cur: Linear,
    stop_out: Linear,
    abn_head: Linear,
    word_emb: Embedding,
    abnormal: WordBranch,
    normal: WordBranch,
    mti_head: Linear,
}

impl<'a> Bound<'a> {
    pub fn new(config: &'a ModelConfig, b: Bindings<'a>, tape: &Tape) -> Result<Self> {
        let branch = |prefix: &str| -> Result<WordBranch> {
            Ok(WordBranch {
                lstm: LstmCell::bind(&b, &format!("{prefix}.lstm"), tape)?,
                out: Linear::bind(&b, &format!("{prefix}.out"))?,
            })
        };
        let abnormal = branch(Branch::Abnormal.prefix())?;
        let normal = branch(Branch::Normal.prefix())?;
        Ok(Bound {
            config,
            img_embed: Linear::bind(&b, "img_embed")?,
            att: Attention::bind(&b, "att")?,
            sent: LstmCell::bind(&b, "sent_lstm", tape)?,
            topic: Linear::bind(&b, "topic")?,
            stop_prev: Linear::bind(&b, "stop.prev")?,
            stop_cur: Linear::bind(&b, "stop.cur")?,
            stop_out: Linear::bind(&b, "stop.out")?,
            abn_head: Linear::bind(&b, "abn_head")?,
            word_emb: Embedding::bind(&b, "word_emb")?,
            mti_head: Linear::bind(&b, "mti_head")?,
            abnormal,
            normal,
            bindings: b,
        })
    }

    fn branch(&self, branch: Branch) -> &WordBranch {
        match branch {
            Branch::Abnormal => &self.abnormal,
            Branch::Normal => &self.normal,
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (Var, Var) {
        let h = tape.leaf(Tensor::zeros(&[self.config.hidden]));
        let c = tape.leaf(Tensor::zeros(&[self.config.hidden]));
        (h, c)
    }

    /// Embeds an `[L×C_in]` feature map.
    pub fn encode_image(&self, tape: &mut Tape, features: &Tensor) -> Result<ImageEncoding> {
        let expected = [self.config.locations, self.config.feature_channels];
        if features.shape() != expected {
            return Err(TensorError::Shape {
                op: "encode_image",
                left: expected.to_vec(),
                right: features.shape().to_vec(),
            });
        }
        let x = tape.leaf(features.clone());
        let locations = self.img_embed.forward(tape, x)?;
        let pooled = tape.mean_rows(locations)?;
        let projected = self.att.project_locations(tape, locations)?;
        Ok(ImageEncoding {
            locations,
            projected,
            pooled,
        })
    }

    pub fn sentence_step(
        &self,
        tape: &mut Tape,
        image: &ImageEncoding,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<SentenceStep> {
        let (context, attention) = self
            .att
            .attend(tape, image.locations, image.projected, h_prev)?;
        let (h, c) = self.sent.step(tape, context, h_prev, c_prev)?;
        let topic = self.topic.forward(tape, h)?;
        let topic = tape.relu(topic);
        let prev = self.stop_prev.forward(tape, h_prev)?;
        let cur = self.stop_cur.forward(tape, h)?;
        let mixed = tape.add(prev, cur)?;
        let mixed = tape.tanh(mixed);
        let stop_logit = self.stop_out.forward(tape, mixed)?;
        let abnormal_logit = self.abn_head.forward(tape, h)?;
        Ok(SentenceStep {
            h,
            c,
            topic,
            stop_logit,
            abnormal_logit,
            attention,
        })
    }

    /// Word-LSTM state after consuming the topic vector from a zero state.
    pub fn word_start(&self, tape: &mut Tape, branch: Branch, topic: Var) -> Result<(Var, Var)> {
        let (h0, c0) = self.zero_state(tape);
        self.branch(branch).lstm.step(tape, topic, h0, c0)
    }

    /// Feeds one token; returns the new state and the `[V]` logits for the
    /// next token.
    pub fn word_step(
        &self,
        tape: &mut Tape,
        branch: Branch,
        token: usize,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var, Var)> {
        let wb = self.branch(branch);
        let x = self.word_emb.embed_one(tape, token)?;
        let (h, c) = wb.lstm.step(tape, x, h, c)?;
        let logits = wb.out.forward(tape, h)?;
        Ok((h, c, logits))
    }

    /// Teacher-forced logits `[(N-1)×V]` for `gold = [BOS, w1, .., EOS]`:
    /// row `t` predicts `gold[t + 1]`.
    pub fn word_forward(
        &self,
        tape: &mut Tape,
        topic: Var,
        gold: &[usize],
        branch: Branch,
    ) -> Result<Var> {
        if gold.len() < 2 {
            return Err(TensorError::Contract(format!(
                "word sequence needs BOS and at least one target, got {} tokens",
                gold.len()
            )));
        }
        let wb = *self.branch(branch);
        let (mut h, mut c) = self.word_start(tape, branch, topic)?;
        let mut states = Vec::with_capacity(gold.len() - 1);
        for &token in &gold[..gold.len() - 1] {
            let x = self.word_emb.embed_one(tape, token)?;
            let (h2, c2) = wb.lstm.step(tape, x, h, c)?;
            states.push(h2);
            h = h2;
            c = c2;
        }
        let hs = tape.stack(&states)?;
        wb.out.forward(tape, hs)
    }

    pub fn mti_logits(&self, tape: &mut Tape, pooled: Var) -> Result<Var> {
        self.mti_head.forward(tape, pooled)
    }

    pub fn mti_probabilities(&self, tape: &mut Tape, pooled: Var) -> Result<Var> {
        let logits = self.mti_logits(tape, pooled)?;
        Ok(tape.sigmoid(logits))
    }

    /// Unweighted loss terms of one record: `[stop], per-sentence word
    /// cross-entropies, [abnormal] (dual only), [tags]`.
    fn record_losses(&self, tape: &mut Tape, rec: &ReportRecord) -> Result<[Vec<Var>; 4]> {
        let cfg = self.config;
        if rec.sentences.is_empty() {
            return Err(TensorError::Contract(format!("{}: record has no sentences", rec.id)));
        }
        if rec.sentences.len() != rec.abnormal.len() {
            return Err(TensorError::Contract(format!(
                "{}: {} sentences but {} abnormal flags",
                rec.id,
                rec.sentences.len(),
                rec.abnormal.len()
            )));
        }
        if rec.mti.len() != cfg.mti_labels {
            return Err(TensorError::Contract(format!(
                "{}: tag vector of length {} but the model has {} labels",
                rec.id,
                rec.mti.len(),
                cfg.mti_labels
            )));
        }
        let image = self.encode_image(tape, &rec.features)?;
        let (mut h, mut c) = self.zero_state(tape);
        let m_total = rec.sentences.len();
        let mut stops = Vec::with_capacity(m_total);
        let mut flags = Vec::with_capacity(m_total);
        let mut words = Vec::with_capacity(m_total);
        let mut gold = Vec::new();
        for (sentence, &abnormal) in rec.sentences.iter().zip(&rec.abnormal) {
            let step = self.sentence_step(tape, &image, h, c)?;
            gold.clear();
            gold.push(BOS);
            gold.extend_from_slice(sentence);
            let logits = self.word_forward(tape, step.topic, &gold, route(cfg, abnormal))?;
            words.push(tape.softmax_cross_entropy(logits, &gold[1..])?);
            stops.push(step.stop_logit);
            flags.push(step.abnormal_logit);
            h = step.h;
            c = step.c;
        }
        let z: Vec<f64> = (0..m_total).map(|m| f64::from(u8::from(m + 1 == m_total))).collect();
        let stop_logits = tape.stack(&stops)?;
        let stop = tape.sigmoid_cross_entropy(stop_logits, &z)?;
        let abnormal = if cfg.dual_enabled {
            let targets: Vec<f64> = rec.abnormal.iter().map(|&a| f64::from(u8::from(a))).collect();
            let logits = tape.stack(&flags)?;
            vec![tape.sigmoid_cross_entropy(logits, &targets)?]
        } else {
            Vec::new()
        };
        let mti_logits = self.mti_logits(tape, image.pooled)?;
        let mti = tape.sigmoid_cross_entropy(mti_logits, &rec.mti)?;
        Ok([vec![stop], words, abnormal, vec![mti]])
    }

    /// Weighted multi-task loss of a batch.
    pub fn compute_losses(&self, tape: &mut Tape, batch: &[ReportRecord]) -> Result<Losses> {
        Ok(self.losses_impl(tape, batch, false)?.0)
    }

    /// [`Bound::compute_losses`] plus the weighted per-record and
    /// per-sentence terms whose sum is the total.
    pub fn compute_losses_with_terms(
        &self,
        tape: &mut Tape,
        batch: &[ReportRecord],
    ) -> Result<(Losses, Vec<Var>)> {
        self.losses_impl(tape, batch, true)
    }

    fn losses_impl(&self, tape: &mut Tape, batch: &[ReportRecord], with_terms: bool) -> Result<(Losses, Vec<Var>)> {
        if batch.is_empty() {
            return Err(TensorError::Contract("empty batch".into()));
        }
        let cfg = self.config;
        let mut parts: [Vec<Var>; 4] = Default::default();
        let mut words = 0;
        for rec in batch {
            let losses = self.record_losses(tape, rec)?;
            for (acc, l) in parts.iter_mut().zip(losses) {
                acc.extend(l);
            }
            words += rec.sentences.iter().map(Vec::len).sum::<usize>();
        }
        let scale = 1.0 / batch.len() as f64;
        let mut mean = |terms: &[Var]| -> Result<Var> {
            if terms.is_empty() {
                Ok(tape.leaf(Tensor::scalar(0.0)))
            } else {
                let s = tape.add_n(terms)?;
                Ok(tape.scale(s, scale))
            }
        };
        let stop = mean(&parts[0])?;
        let hierarchical = mean(&parts[1])?;
        let abnormal = mean(&parts[2])?;
        let mti = mean(&parts[3])?;
        let mut weighted = vec![
            tape.scale(stop, cfg.lambda_stop),
            tape.scale(hierarchical, cfg.lambda_hierarchical),
        ];
        if cfg.dual_enabled {
            weighted.push(tape.scale(abnormal, cfg.lambda_abnormal));
        }
        weighted.push(tape.scale(mti, cfg.lambda_mti));
        let total = tape.add_n(&weighted)?;
        let mut terms = Vec::new();
        if with_terms {
            let lambdas = [
                cfg.lambda_stop,
                cfg.lambda_hierarchical,
                cfg.effective_lambda_abnormal(),
                cfg.lambda_mti,
            ];
            for (part, lambda) in parts.iter().zip(lambdas) {
                for &v in part {
                    terms.push(tape.scale(v, lambda * scale));
                }
            }
        }
        let losses = Losses {
            stop,
            hierarchical,
            abnormal,
            mti,
            total,
            words,
            records: batch.len(),
        };
        Ok((losses, terms))
    }
}
