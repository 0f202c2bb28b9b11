//! Label verbalizers and the trainable multi-token mapping head.
//!
//! A [`LabelMapping`] assigns every label one or more vocabulary tokens.
//! The head scores label `t` as `M_t · g_t + b_t`, where `g_t` gathers the
//! mask logits of that label's tokens, and normalises with a softmax. An
//! ensemble averages the member distributions.

mod head;
mod presets;

pub use head::{
    ensemble_backward, head_backward, head_gradients, init_head, loss, member_loss, predict_ensemble,
    predict_single, predict_weighted, softmax, EnsembleBackward, HeadBackward, HeadGradients, PROB_FLOOR,
};
pub use presets::{preset, preset_ensemble, preset_names, MappingSpec};

use crate::corpus::LabelSet;
use crate::lm::tokenizer::TokenId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("mask logits contain a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("mapping {0:?} is not single-token")]
    NotSingleToken(String),
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { id: TokenId, vocab: usize },
    #[error("mapping word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("mapping {mapping:?} has no entry for label {label:?}")]
    MissingLabel { mapping: String, label: String },
    #[error("mapping {mapping:?} names label {label:?} which is not in the label set")]
    ExtraLabel { mapping: String, label: String },
    #[error("label {0} has no mapping tokens")]
    EmptyLabel(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("gold label {gold} out of range for {labels} labels")]
    GoldOutOfRange { gold: usize, labels: usize },
    #[error("unknown mapping preset {0:?}")]
    UnknownPreset(String),
}

/// Vocabulary logits at the mask position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskLogits {
    pub values: Vec<f64>,
}

impl MaskLogits {
    pub fn new(values: Vec<f64>) -> Self {
        MaskLogits { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<(), MappingError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(MappingError::NonFinite(i)),
            None => Ok(()),
        }
    }
}

/// Per-label token ids. Single-token mappings are the `n_t = 1` case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub name: String,
    pub tokens: Vec<Vec<TokenId>>,
}

impl LabelMapping {
    pub fn new(name: &str, tokens: Vec<Vec<TokenId>>) -> Result<Self, MappingError> {
        if tokens.len() < 2 {
            return Err(MappingError::Shape(format!("{} labels, need at least 2", tokens.len())));
        }
        if let Some(t) = tokens.iter().position(Vec::is_empty) {
            return Err(MappingError::EmptyLabel(t));
        }
        Ok(LabelMapping {
            name: name.to_string(),
            tokens,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_single_token(&self) -> bool {
        self.tokens.iter().all(|t| t.len() == 1)
    }

    pub fn check_vocab(&self, vocab: usize) -> Result<(), MappingError> {
        for &id in self.tokens.iter().flatten() {
            if id as usize >= vocab {
                return Err(MappingError::TokenOutOfVocab { id, vocab });
            }
        }
        Ok(())
    }

    fn gather(&self, logits: &MaskLogits, label: usize) -> Result<Vec<f64>, MappingError> {
        self.tokens[label]
            .iter()
            .map(|&id| {
                logits
                    .values
                    .get(id as usize)
                    .copied()
                    .ok_or(MappingError::TokenOutOfVocab { id, vocab: logits.len() })
            })
            .collect()
    }
}

/// Weight vector and bias per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingHead {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl MappingHead {
    /// `M_t = [1, .., 1]`, `b = 0`.
    pub fn unit(mapping: &LabelMapping) -> Self {
        MappingHead {
            weights: mapping.tokens.iter().map(|t| vec![1.0; t.len()]).collect(),
            biases: vec![0.0; mapping.num_labels()],
        }
    }

    pub fn zeros(mapping: &LabelMapping) -> Self {
        MappingHead {
            weights: mapping.tokens.iter().map(|t| vec![0.0; t.len()]).collect(),
            biases: vec![0.0; mapping.num_labels()],
        }
    }

    pub fn check_shape(&self, mapping: &LabelMapping) -> Result<(), MappingError> {
        if self.weights.len() != mapping.num_labels() || self.biases.len() != mapping.num_labels() {
            return Err(MappingError::Shape(format!(
                "head has {} weight rows / {} biases, mapping {:?} has {} labels",
                self.weights.len(),
                self.biases.len(),
                mapping.name,
                mapping.num_labels()
            )));
        }
        for (t, (w, toks)) in self.weights.iter().zip(&mapping.tokens).enumerate() {
            if w.len() != toks.len() {
                return Err(MappingError::Shape(format!(
                    "label {t}: {} weights for {} tokens",
                    w.len(),
                    toks.len()
                )));
            }
        }
        if self.weights.iter().flatten().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(MappingError::Shape("non-finite head parameter".into()));
        }
        Ok(())
    }

    /// `self -= lr * grads`
    pub fn apply(&mut self, grads: &HeadGradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (wj, gj) in w.iter_mut().zip(g) {
                *wj -= lr * gj;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            *b -= lr * g;
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub mapping: LabelMapping,
    pub head: MappingHead,
}

/// `B >= 1` mappings over the same label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEnsemble {
    pub members: Vec<EnsembleMember>,
    /// All members use one set of head parameters (requires equal shapes).
    #[serde(default)]
    pub shared_head: bool,
}

impl MappingEnsemble {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self, MappingError> {
        let first = members.first().ok_or(MappingError::EmptyEnsemble)?;
        let labels = first.mapping.num_labels();
        for m in &members {
            if m.mapping.num_labels() != labels {
                return Err(MappingError::Shape(format!(
                    "member {:?} has {} labels, expected {labels}",
                    m.mapping.name,
                    m.mapping.num_labels()
                )));
            }
            m.head.check_shape(&m.mapping)?;
        }
        Ok(MappingEnsemble {
            members,
            shared_head: false,
        })
    }

    /// Members reuse the first member's head. Every mapping must have the
    /// same per-label token counts.
    pub fn shared(members: Vec<EnsembleMember>) -> Result<Self, MappingError> {
        let mut e = MappingEnsemble::new(members)?;
        let head = e.members[0].head.clone();
        for m in &mut e.members {
            head.check_shape(&m.mapping)?;
            m.head = head.clone();
        }
        e.shared_head = true;
        Ok(e)
    }

    pub fn single(mapping: LabelMapping, head: MappingHead) -> Result<Self, MappingError> {
        MappingEnsemble::new(vec![EnsembleMember { mapping, head }])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.members[0].mapping.num_labels()
    }

    /// Applies per-member gradients. Shared heads take the summed update.
    pub fn apply(&mut self, grads: &[HeadGradients], lr: f64) {
        if self.shared_head {
            let mut total = grads[0].clone();
            for g in &grads[1..] {
                total.add_assign(g);
            }
            for m in &mut self.members {
                m.head.apply(&total, lr);
            }
        } else {
            for (m, g) in self.members.iter_mut().zip(grads) {
                m.head.apply(g, lr);
            }
        }
    }

    pub fn validate_labels(&self, labels: &LabelSet) -> Result<(), MappingError> {
        if self.num_labels() != labels.len() {
            return Err(MappingError::Shape(format!(
                "ensemble has {} labels, label set has {}",
                self.num_labels(),
                labels.len()
            )));
        }
        Ok(())
    }
}
