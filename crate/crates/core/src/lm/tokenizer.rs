//! Word-level tokenizer: whitespace split, every non-alphanumeric character
//! becomes its own token, optional lowercasing. The bracketed special tokens
//! (`[MASK]`, `[CLS]`, ...) are matched case-insensitively before splitting.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TokenizerRepr", into = "TokenizerRepr")]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    lowercase: bool,
}

#[derive(Serialize, Deserialize)]
struct TokenizerRepr {
    lowercase: bool,
    tokens: Vec<String>,
}

impl From<TokenizerRepr> for Tokenizer {
    fn from(r: TokenizerRepr) -> Self {
        Tokenizer::from_vocab(r.tokens.into_iter().filter(|t| !SPECIALS.contains(&t.as_str())), r.lowercase)
    }
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(t: Tokenizer) -> Self {
        TokenizerRepr {
            lowercase: t.lowercase,
            tokens: t.tokens,
        }
    }
}

impl Tokenizer {
    /// Vocabulary of the special tokens followed by `words` in first-seen order.
    pub fn from_vocab<S: AsRef<str>>(words: impl IntoIterator<Item = S>, lowercase: bool) -> Self {
        let mut tok = Tokenizer {
            tokens: Vec::new(),
            index: HashMap::new(),
            lowercase,
        };
        for s in SPECIALS {
            tok.insert(s.to_string());
        }
        for w in words {
            let w = w.as_ref();
            let w = if lowercase { w.to_lowercase() } else { w.to_string() };
            tok.insert(w);
        }
        tok
    }

    /// Builds a vocabulary from every piece produced by splitting `texts`.
    pub fn build<S: AsRef<str>>(texts: impl IntoIterator<Item = S>, lowercase: bool) -> Self {
        let mut tok = Tokenizer::from_vocab(std::iter::empty::<&str>(), lowercase);
        for text in texts {
            for piece in tok.split(text.as_ref()) {
                tok.insert(piece);
            }
        }
        tok
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as TokenId);
            self.tokens.push(token);
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn pad_id(&self) -> TokenId {
        0
    }
    pub fn unk_id(&self) -> TokenId {
        1
    }
    pub fn cls_id(&self) -> TokenId {
        2
    }
    pub fn sep_id(&self) -> TokenId {
        3
    }
    pub fn mask_id(&self) -> TokenId {
        4
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        if self.lowercase {
            if let Some(&id) = self.index.get(&token.to_lowercase()) {
                return id;
            }
        }
        self.unk_id()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id(token) != self.unk_id() || token == UNK
    }

    /// Splits text into surface pieces (lowercased when configured).
    pub fn split(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            if let Some(special) = SPECIALS.iter().find(|s| {
                rest.len() >= s.len() && rest.is_char_boundary(s.len()) && rest[..s.len()].eq_ignore_ascii_case(s)
            }) {
                out.push(special.to_string());
                rest = &rest[special.len()..];
                continue;
            }
            let c = rest.chars().next().expect("non-empty");
            let clen = c.len_utf8();
            if c.is_whitespace() {
                rest = &rest[clen..];
            } else if c.is_alphanumeric() {
                let end = rest
                    .char_indices()
                    .find(|(_, ch)| !ch.is_alphanumeric())
                    .map(|(i, _)| i)
                    .unwrap_or(rest.len());
                let word = &rest[..end];
                out.push(if self.lowercase { word.to_lowercase() } else { word.to_string() });
                rest = &rest[end..];
            } else {
                out.push(c.to_string());
                rest = &rest[clen..];
            }
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.split(text).iter().map(|p| self.id(p)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, specials first.
    pub fn to_vocab_file(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_vocab_file(text: &str, lowercase: bool) -> Self {
        Tokenizer::from_vocab(
            text.lines().filter(|l| !l.is_empty() && !SPECIALS.contains(l)),
            lowercase,
        )
    }
}
