//! Run configuration: every tunable of a pipeline run in one value, read
//! from and written to flat `section.key = value` text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::data::SynthConfig;
use crate::inference::GenerationLimits;
use crate::model::ModelConfig;
use crate::selection::SelectionRule;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
    /// Tokens seen fewer times in training map to `<unk>`.
    pub min_frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generate: GenerationLimits,
    pub select: SelectionRule,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    /// The desk-scale reference profile: 300 synthetic records over a
    /// vocabulary of about 200 words, 32-wide layers and a 16-location map.
    pub fn toy() -> Self {
        let synth = SynthConfig::default();
        let model = ModelConfig {
            feature_channels: synth.channels,
            embed_dim: 32,
            hidden: 32,
            attention_dim: 32,
            locations: synth.locations,
            vocab_size: synth.vocab_size + 5,
            mti_labels: synth.tags,
            max_sentences: synth.max_sentences + 1,
            max_words: synth.max_words + 3,
            ..ModelConfig::full_scale(synth.vocab_size)
        };
        RunConfig {
            data: DataConfig {
                split: [0.8, 0.1, 0.1],
                split_seed: synth.seed,
                min_frequency: 1,
            },
            train: TrainConfig {
                learning_rate: 5e-3,
                max_epochs: 60,
                seed: 1,
                ..TrainConfig::default()
            },
            generate: GenerationLimits::new(model.max_sentences, model.max_words),
            select: SelectionRule::default(),
            model,
            synth,
        }
    }

    /// Applies every `section.key = value` line of `text` on top of `self`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim(), i + 1)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::toy();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Sets one dotted key; `line` is only used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey {
            line,
            key: key.to_string(),
        };
        let bad = |message: String| ConfigError::BadValue {
            line,
            key: key.to_string(),
            message,
        };
        let (section, field) = key.split_once('.').ok_or_else(unknown)?;
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let slot = tree
            .get_mut(section)
            .and_then(|s| s.get_mut(field))
            .ok_or_else(unknown)?;
        *slot = parse_like(slot, value).map_err(bad)?;
        *self = serde_json::from_value(tree).map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// Every key on its own line, sections and keys in sorted order.
    /// [`RunConfig::from_text`] reads it back to an equal value.
    pub fn to_text(&self) -> String {
        let tree = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        let sections = tree.as_object().expect("struct serializes to an object");
        for (section, fields) in sorted(sections) {
            for (key, v) in sorted(fields.as_object().expect("sections are structs")) {
                let _ = writeln!(out, "{section}.{key} = {}", render(v));
            }
        }
        out
    }

    /// Checks the invariants that do not depend on the data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.synth.validate().map_err(|e| err(&e))?;
        self.model.validate().map_err(|e| err(&e))?;
        self.train.validate().map_err(|e| err(&e))?;
        self.generate.validate().map_err(|e| err(&e))?;
        let s = self.data.split;
        if s.iter().any(|v| !(*v >= 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "data.split must be three non-negative fractions summing to 1, got {s:?}"
            )));
        }
        if s[0] == 0.0 {
            return Err(ConfigError::Invalid("data.split leaves no training records".into()));
        }
        if self.select.min_distinct == 0 {
            return Err(ConfigError::Invalid("select.min_distinct must be positive".into()));
        }
        Ok(())
    }
}

fn sorted(map: &Map<String, Value>) -> Vec<(&String, &Value)> {
    let mut v: Vec<_> = map.iter().collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}

fn render(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

fn parse_number(text: &str) -> Result<Value, String> {
    if let Ok(u) = text.parse::<u64>() {
        return Ok(Value::Number(u.into()));
    }
    if let Ok(i) = text.parse::<i64>() {
        return Ok(Value::Number(i.into()));
    }
    text.parse::<f64>()
        .ok()
        .and_then(Number::from_f64)
        .map(Value::Number)
        .ok_or_else(|| format!("`{text}` is not a finite number"))
}

/// Parses `text` into a value of the same kind as `current`.
fn parse_like(current: &Value, text: &str) -> Result<Value, String> {
    match current {
        Value::Bool(_) => match text {
            "true" | "on" | "yes" => Ok(Value::Bool(true)),
            "false" | "off" | "no" => Ok(Value::Bool(false)),
            _ => Err(format!("`{text}` is not a boolean")),
        },
        Value::Number(_) => parse_number(text),
        Value::String(_) => Ok(Value::String(text.to_string())),
        Value::Null => match text {
            "none" => Ok(Value::Null),
            _ => parse_number(text),
        },
        Value::Array(items) => {
            let parts: Vec<&str> = text.split(',').map(str::trim).collect();
            if parts.len() != items.len() {
                return Err(format!("expected {} comma-separated values", items.len()));
            }
            items
                .iter()
                .zip(parts)
                .map(|(item, p)| parse_like(item, p))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
        Value::Object(_) => Err("nested sections are not settable".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn toy_profile_is_valid_and_desk_scale() {
        let c = RunConfig::toy();
        c.validate().unwrap();
        assert_eq!((c.model.embed_dim, c.model.hidden, c.model.locations), (32, 32, 16));
        assert_eq!(c.synth.records, 300);
        assert!((190..=210).contains(&c.model.vocab_size));
    }

    #[test]
    fn text_round_trip() {
        let c = RunConfig::toy();
        let text = c.to_text();
        assert!(text.contains("model.hidden = 32\n"), "{text}");
        assert!(text.contains("train.max_iterations = none\n"));
        assert!(text.contains("data.split = 0.8, 0.1, 0.1\n"));
        assert_eq!(RunConfig::from_text(&text).unwrap(), c);
    }

    #[test]
    fn overrides_and_errors() {
        let mut c = RunConfig::toy();
        c.apply_text("# comment\n\nmodel.hidden = 64\nmodel.dual_enabled = off\ntrain.max_iterations = 12\ntrain.learning_rate = 1e-3\n")
            .unwrap();
        assert_eq!(c.model.hidden, 64);
        assert!(!c.model.dual_enabled);
        assert_eq!(c.train.max_iterations, Some(12));
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(
            c.apply_text("model.hiden = 3"),
            Err(ConfigError::UnknownKey { line: 1, key: "model.hiden".into() })
        );
        assert!(matches!(c.apply_text("\nmodel.hidden = 2.5"), Err(ConfigError::BadValue { line: 2, .. })));
        assert!(matches!(c.apply_text("model.hidden = -1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.apply_text("model.dual_enabled = maybe"), Err(ConfigError::BadValue { .. })));
        assert_eq!(c.apply_text("model.hidden"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(c.apply_text("model = 3"), Err(ConfigError::UnknownKey { .. })));
        assert_eq!(c.model.hidden, 64);
    }

    #[test]
    fn invariant_violations() {
        let mut c = RunConfig::toy();
        c.data.split = [0.5, 0.2, 0.2];
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let mut c = RunConfig::toy();
        c.train.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::toy();
        c.generate.stop_threshold = 1.5;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn random_overrides_round_trip(hidden in 1usize..512, lr in 1e-6f64..1.0, dual: bool, noise in 0.0f64..3.0) {
            let mut c = RunConfig::toy();
            c.model.hidden = hidden;
            c.train.learning_rate = lr;
            c.model.dual_enabled = dual;
            c.synth.noise = noise;
            prop_assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        }
    }
}
