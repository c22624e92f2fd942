use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Hierarchical ability-aware network.
    Apjfnn,
    /// Flat BiLSTM baseline with mean pooling.
    Bpjfnn,
    /// `Apjfnn` with a one-hot side feature prepended to the comparison vector.
    ApjfnnSide,
}

impl ModelKind {
    pub fn is_hierarchical(self) -> bool {
        !matches!(self, ModelKind::Bpjfnn)
    }

    pub fn uses_side(self) -> bool {
        matches!(self, ModelKind::ApjfnnSide)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Apjfnn => "apjfnn",
            ModelKind::Bpjfnn => "bpjfnn",
            ModelKind::ApjfnnSide => "apjfnn-side",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apjfnn" => Ok(ModelKind::Apjfnn),
            "bpjfnn" => Ok(ModelKind::Bpjfnn),
            "apjfnn-side" | "apjfnn+side" => Ok(ModelKind::ApjfnnSide),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Output non-linearity of the prediction head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    /// `sigmoid(W_y D + b_y)` with a scalar `W_y`.
    #[default]
    Sigmoid,
    /// Second entry of `softmax(W_y D + b_y)` with two output rows.
    Softmax2,
}

/// Layer widths. `hidden` is per LSTM direction, so every BiLSTM emits
/// `2·hidden` features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Width of the α and β attention projections.
    pub word_attention_dim: usize,
    /// Width of the γ and δ attention projections.
    pub match_attention_dim: usize,
    /// Width of the comparison vector `D`.
    pub fit_dim: usize,
    /// Side-feature categories, one-hot in this order. Only used by `ApjfnnSide`.
    #[serde(default)]
    pub side_categories: Vec<String>,
    #[serde(default)]
    pub output: OutputHead,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, vocab_size: usize) -> Self {
        Self {
            kind,
            vocab_size,
            embed_dim: 100,
            hidden: 200,
            word_attention_dim: 200,
            match_attention_dim: 400,
            fit_dim: 200,
            side_categories: if kind.uses_side() {
                vec!["female".into(), "male".into()]
            } else {
                Vec::new()
            },
            output: OutputHead::Sigmoid,
        }
    }

    /// Same widths scaled down for quick experiments.
    pub fn small(kind: ModelKind, vocab_size: usize, embed_dim: usize, hidden: usize) -> Self {
        Self {
            embed_dim,
            hidden,
            word_attention_dim: hidden,
            match_attention_dim: 2 * hidden,
            fit_dim: hidden,
            ..Self::new(kind, vocab_size)
        }
    }

    pub fn side_width(&self) -> usize {
        if self.kind.uses_side() {
            self.side_categories.len()
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("word_attention_dim", self.word_attention_dim),
            ("match_attention_dim", self.match_attention_dim),
            ("fit_dim", self.fit_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config(
                "vocabulary needs the two reserved entries".into(),
            ));
        }
        if self.kind.uses_side() && self.side_categories.is_empty() {
            return Err(Error::Config(
                "side model needs at least one side category".into(),
            ));
        }
        if self.output == OutputHead::Softmax2 && self.kind != ModelKind::Bpjfnn {
            return Err(Error::Config(
                "two-way softmax output is only offered for bpjfnn".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trip() {
        for k in [ModelKind::Apjfnn, ModelKind::Bpjfnn, ModelKind::ApjfnnSide] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("cnn".parse::<ModelKind>().is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let c = ModelConfig::new(ModelKind::ApjfnnSide, 10);
        assert_eq!(c.side_width(), 2);
        assert_eq!(c.embed_dim, 100);
        c.validate().unwrap();
        let bad = ModelConfig {
            hidden: 0,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            output: OutputHead::Softmax2,
            ..c
        };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&ModelConfig::new(ModelKind::Bpjfnn, 5)).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kind, ModelKind::Bpjfnn);
    }
}
