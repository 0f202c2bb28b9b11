//! Classification datasets, dependency annotations and K-shot splits.

mod conllu;
mod dataset;
mod kshot;

pub use conllu::{parse_conllu, parse_conllu_str, write_conllu};
pub use dataset::{parse_dataset, parse_dataset_str, TaskSchema};
pub use kshot::{sample_kshot, split_overlap, KShotSplit, SplitManifest};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("invalid label set: {0}")]
    LabelSet(String),
    #[error("invalid task schema: {0}")]
    Schema(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("label {label:?} has {available} examples, need at least {required}")]
    InsufficientExamples {
        label: String,
        available: usize,
        required: usize,
    },
}

/// Index into a [`LabelSet`].
pub type LabelId = usize;

/// A labeled text or text pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub sent0: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent1: Option<String>,
    pub label: LabelId,
}

/// Ordered, unique label names. Label ids are positions in this list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(CorpusError::LabelSet(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(CorpusError::LabelSet("empty label name".into()));
            }
            if names[..i].contains(name) {
                return Err(CorpusError::LabelSet(format!("duplicate label {name:?}")));
            }
        }
        Ok(LabelSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: LabelId) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = CorpusError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::new(names)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(labels: LabelSet) -> Self {
        labels.names
    }
}

/// One row of a dependency-annotated sentence. `head` is 1-based, 0 marks the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub form: String,
    pub pos: String,
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    tokens: Vec<AnnotatedToken>,
}

impl AnnotatedSentence {
    /// Checks head bounds and the single-root constraint.
    pub fn new(tokens: Vec<AnnotatedToken>) -> Result<Self, String> {
        if tokens.is_empty() {
            return Err("sentence has no tokens".into());
        }
        let n = tokens.len();
        if let Some(t) = tokens.iter().find(|t| t.head > n) {
            return Err(format!("head {} of {:?} out of range 0..={n}", t.head, t.form));
        }
        let roots = tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(format!("expected exactly one root, found {roots}"));
        }
        Ok(AnnotatedSentence { tokens })
    }

    pub fn tokens(&self) -> &[AnnotatedToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }
}
