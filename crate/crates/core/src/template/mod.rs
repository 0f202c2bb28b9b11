//! Cloze templates in the `*cls**sent_0*_It_was*mask*.*sep+*` notation.
//!
//! Grammar (one template per string):
//!
//! * text outside `*...*` is a literal; `_` decodes to a space
//! * `*cls*`, `*sep*`, `*sep+*` add the classifier / separator ids
//! * `*mask*` is the cloze position
//! * `*[+]sent[l|u][-]_N*` is sentence slot N (0 or 1): `+` prefixes a
//!   space and upper-cases the first character, `l` / `u` force the first
//!   character lower / upper case, `-` drops a trailing punctuation mark
//! * `*dep*` is the dependency-snippet slot
//! * `*od*`, `*sd*`, `*td*` are meta-description blocks
//!
//! A literal directly in front of `*mask*` always ends in a space so the
//! mask stays a separate word. Templates whose mask lives inside the task
//! description use `*td*` and omit `*mask*`.

mod meta;
mod parse;
mod render;

pub use meta::{compose_meta, MetaKind, MetaPrompt};
pub use parse::parse_template;
pub use render::{render, render_text, RenderedInput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("empty template")]
    Empty,
    #[error("template has no *mask* and no *td* block")]
    NoMask,
    #[error("template has {0} *mask* tokens, expected one")]
    MultipleMasks(usize),
    #[error("unknown template token *{0}*")]
    UnknownToken(String),
    #[error("unterminated token starting at byte {0}")]
    Unterminated(usize),
    #[error("template has more than one {0} segment")]
    Duplicate(&'static str),
    #[error("rendered input contains {0} mask tokens, expected one")]
    MaskCount(usize),
    #[error("template has a dependency slot but no snippet was supplied")]
    MissingDep,
    #[error("dependency snippet supplied but template has no *dep* slot")]
    UnexpectedDep,
    #[error("template has meta blocks but no meta-prompt was supplied")]
    MissingMeta,
    #[error("meta-prompt supplied but template has no meta blocks")]
    UnexpectedMeta,
    #[error("template uses *sent_1* but the example has no second sentence")]
    MissingSecondSentence,
    #[error("rendered input is empty")]
    EmptyRender,
    #[error("prompt needs {needed} tokens but the length budget is {budget}")]
    PromptTooLong { needed: usize, budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Case {
    #[default]
    Keep,
    Upper,
    Lower,
}

/// Surface adjustments applied to a sentence slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentHints {
    pub space_before: bool,
    pub first_char: Case,
    pub strip_punct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Literal(String),
    Sent0(SentHints),
    Sent1(SentHints),
    Mask,
    DepSlot,
    Meta(MetaKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub segments: Vec<Segment>,
    pub cls: bool,
    pub sep: bool,
    pub source: String,
}

impl Template {
    pub fn has_dep_slot(&self) -> bool {
        self.segments.contains(&Segment::DepSlot)
    }

    pub fn has_meta(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Meta(_)))
    }

    pub fn has_mask(&self) -> bool {
        self.segments.contains(&Segment::Mask)
    }

    pub fn uses_sent1(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Sent1(_)))
    }

    /// Copy with a dependency slot placed right after the last first-sentence
    /// slot. Templates that already have one are returned unchanged.
    pub fn with_dep_slot(&self) -> Template {
        if self.has_dep_slot() {
            return self.clone();
        }
        let mut t = self.clone();
        let at = t
            .segments
            .iter()
            .rposition(|s| matches!(s, Segment::Sent0(_)))
            .map(|i| i + 1)
            .unwrap_or(0);
        t.segments.insert(at, Segment::DepSlot);
        t
    }
}

impl std::fmt::Display for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Template {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_template(s)
    }
}
