//! Token selection by POS tag or dependency relation, and the filter sweep.

mod search;

pub use search::{grid_search, rank_results, FilterResult, FilterOutcome};

use crate::corpus::AnnotatedSentence;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("{kind} filter {name:?} is not in the filter catalog")]
    NotInCatalog { kind: FilterKind, name: String },
    #[error("max_tokens must be at least 1")]
    ZeroBudget,
    #[error("filter catalog line {line}: {message}")]
    CatalogSyntax { line: usize, message: String },
    #[error("bad filter {0:?}, expected KIND:NAME with KIND one of POS, DEP")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FilterKind {
    Pos,
    Dep,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Pos => "POS",
            FilterKind::Dep => "DEP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    pub name: String,
}

impl Filter {
    pub fn pos(name: &str) -> Self {
        Filter {
            kind: FilterKind::Pos,
            name: name.to_string(),
        }
    }

    pub fn dep(name: &str) -> Self {
        Filter {
            kind: FilterKind::Dep,
            name: name.to_string(),
        }
    }

    fn matches(&self, token: &crate::corpus::AnnotatedToken) -> bool {
        match self.kind {
            FilterKind::Pos => token.pos == self.name,
            FilterKind::Dep => {
                let base = token.deprel.split(':').next().unwrap_or_default();
                base.eq_ignore_ascii_case(&self.name)
            }
        }
    }
}

impl std::fmt::Display for Filter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.kind, self.name)
    }
}

impl std::str::FromStr for Filter {
    type Err = FilterError;

    /// Parses `POS:JJ` or `DEP:amod` (kind is case-insensitive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FilterError::BadSpec(s.to_string());
        let (kind, name) = s.split_once(':').ok_or_else(bad)?;
        let name = name.trim();
        if name.is_empty() {
            return Err(bad());
        }
        match kind.trim().to_ascii_uppercase().as_str() {
            "POS" => Ok(Filter::pos(name)),
            "DEP" => Ok(Filter::dep(name)),
            _ => Err(bad()),
        }
    }
}

/// Tokens selected from one input, in sentence order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DepSnippet {
    pub tokens: Vec<String>,
    pub source: Option<Filter>,
}

impl DepSnippet {
    pub fn empty() -> Self {
        DepSnippet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Joins snippets of a sentence pair, keeping at most `max_tokens`.
    pub fn concat(mut self, other: DepSnippet, max_tokens: usize) -> DepSnippet {
        self.tokens.extend(other.tokens);
        self.tokens.truncate(max_tokens);
        self.source = self.source.or(other.source);
        self
    }
}

pub const DEFAULT_MAX_TOKENS: usize = 8;

/// Filter names accepted per kind. Catalog order is the tie-break order of
/// the filter sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCatalog {
    pub filters: Vec<Filter>,
}

const TABLE_POS: [&str; 7] = ["amod", "advmod", "obj", "NN", "VBD", "VBZ", "VB"];
const TABLE_DEP: [&str; 5] = ["amod", "advmod", "ROOT", "obj", "nsubj"];
const EXTRA_POS: [&str; 5] = ["WDT", "NNP", "WRB", "WP", "JJ"];

impl FilterCatalog {
    /// The twelve sweep candidates: seven POS names and five relations.
    pub fn table() -> Self {
        let filters = TABLE_POS
            .iter()
            .map(|n| Filter::pos(n))
            .chain(TABLE_DEP.iter().map(|n| Filter::dep(n)))
            .collect();
        FilterCatalog { filters }
    }

    /// Every name `extract` accepts without a custom catalog: the sweep
    /// candidates plus the extra POS tags used in per-task sweeps.
    pub fn known() -> Self {
        let mut c = FilterCatalog::table();
        c.filters.extend(EXTRA_POS.iter().map(|n| Filter::pos(n)));
        c
    }

    pub fn contains(&self, filter: &Filter) -> bool {
        self.filters.contains(filter)
    }

    pub fn position(&self, filter: &Filter) -> Option<usize> {
        self.filters.iter().position(|f| f == filter)
    }

    /// Parses `KIND<TAB or space>NAME` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, FilterError> {
        let mut filters = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (kind, name) = (parts.next(), parts.next());
            let kind = match kind.map(str::to_ascii_uppercase).as_deref() {
                Some("POS") => FilterKind::Pos,
                Some("DEP") => FilterKind::Dep,
                other => {
                    return Err(FilterError::CatalogSyntax {
                        line: i + 1,
                        message: format!("unknown filter kind {other:?}"),
                    })
                }
            };
            let name = name.ok_or_else(|| FilterError::CatalogSyntax {
                line: i + 1,
                message: "missing filter name".into(),
            })?;
            if parts.next().is_some() {
                return Err(FilterError::CatalogSyntax {
                    line: i + 1,
                    message: "trailing fields".into(),
                });
            }
            let f = Filter {
                kind,
                name: name.to_string(),
            };
            if !filters.contains(&f) {
                filters.push(f);
            }
        }
        Ok(FilterCatalog { filters })
    }

    pub fn to_text(&self) -> String {
        self.filters
            .iter()
            .map(|f| format!("{}\t{}\n", f.kind, f.name))
            .collect()
    }

    pub fn extract(
        &self,
        sentence: &AnnotatedSentence,
        filter: &Filter,
        max_tokens: usize,
    ) -> Result<DepSnippet, FilterError> {
        if !self.contains(filter) {
            return Err(FilterError::NotInCatalog {
                kind: filter.kind,
                name: filter.name.clone(),
            });
        }
        if max_tokens == 0 {
            return Err(FilterError::ZeroBudget);
        }
        let tokens = sentence.tokens();
        let mut picked: Vec<usize> = Vec::new();
        let push = |i: usize, picked: &mut Vec<usize>| {
            if picked.len() < max_tokens && !picked.contains(&i) {
                picked.push(i);
            }
        };
        for (i, t) in tokens.iter().enumerate() {
            if !filter.matches(t) {
                continue;
            }
            push(i, &mut picked);
            if filter.kind == FilterKind::Dep && t.head > 0 {
                push(t.head - 1, &mut picked);
            }
        }
        picked.sort_unstable();
        Ok(DepSnippet {
            tokens: picked.into_iter().map(|i| tokens[i].form.clone()).collect(),
            source: Some(filter.clone()),
        })
    }
}

/// Selects tokens with the given filter, validated against [`FilterCatalog::known`].
///
/// A POS filter yields every token carrying the tag. A dependency filter
/// yields, for every arc with that relation, the dependent and its head
/// (the root alone for `ROOT`). Tokens are deduplicated by position, kept
/// in sentence order and capped at `max_tokens` in order of discovery.
pub fn extract(sentence: &AnnotatedSentence, filter: &Filter, max_tokens: usize) -> Result<DepSnippet, FilterError> {
    FilterCatalog::known().extract(sentence, filter, max_tokens)
}
