use super::meta::count_mask_markers;
use super::{Case, MetaPrompt, Segment, SentHints, Template, TemplateError};
use crate::corpus::Example;
use crate::depfilter::DepSnippet;
use crate::lm::tokenizer::{TokenId, Tokenizer, MASK};
use serde::{Deserialize, Serialize};

/// Token ids fed to a backend, with the cloze position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderedInput {
    pub token_ids: Vec<TokenId>,
    pub mask_position: usize,
    pub truncated: bool,
}

impl RenderedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece {
    Sentence,
    Prompt,
}

fn apply_hints(hints: SentHints, text: &str) -> String {
    let mut s = text.trim().to_string();
    if hints.strip_punct && s.ends_with(|c: char| c.is_ascii_punctuation()) {
        s.pop();
    }
    let mut chars = s.chars();
    let cased = match (hints.first_char, chars.next()) {
        (Case::Upper, Some(c)) => c.to_uppercase().chain(chars).collect(),
        (Case::Lower, Some(c)) => c.to_lowercase().chain(chars).collect(),
        _ => s,
    };
    if hints.space_before {
        format!(" {cased}")
    } else {
        cased
    }
}

fn pieces(
    template: &Template,
    example: &Example,
    dep: Option<&DepSnippet>,
    meta: Option<&MetaPrompt>,
) -> Result<Vec<(Piece, String)>, TemplateError> {
    match (template.has_dep_slot(), dep.is_some()) {
        (true, false) => return Err(TemplateError::MissingDep),
        (false, true) => return Err(TemplateError::UnexpectedDep),
        _ => {}
    }
    match (template.has_meta(), meta.is_some()) {
        (true, false) => return Err(TemplateError::MissingMeta),
        (false, true) => return Err(TemplateError::UnexpectedMeta),
        _ => {}
    }
    let mut out = Vec::with_capacity(template.segments.len());
    for seg in &template.segments {
        let piece = match seg {
            Segment::Literal(text) => (Piece::Prompt, text.clone()),
            Segment::Sent0(h) => (Piece::Sentence, apply_hints(*h, &example.sent0)),
            Segment::Sent1(h) => {
                let s1 = example
                    .sent1
                    .as_deref()
                    .ok_or(TemplateError::MissingSecondSentence)?;
                (Piece::Sentence, apply_hints(*h, s1))
            }
            Segment::Mask => (Piece::Prompt, MASK.to_string()),
            Segment::DepSlot => {
                let snippet = dep.expect("checked above");
                if snippet.is_empty() {
                    (Piece::Prompt, String::new())
                } else {
                    (Piece::Prompt, format!(" {}. ", snippet.tokens.join(" ")))
                }
            }
            Segment::Meta(kind) => {
                let text = meta.expect("checked above").get(*kind).trim();
                if text.is_empty() {
                    (Piece::Prompt, String::new())
                } else {
                    (Piece::Prompt, format!(" {text} "))
                }
            }
        };
        out.push(piece);
    }
    Ok(out)
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The prompt as text, runs of whitespace collapsed. No truncation, no
/// `[CLS]`/`[SEP]`.
pub fn render_text(
    template: &Template,
    example: &Example,
    dep: Option<&DepSnippet>,
    meta: Option<&MetaPrompt>,
) -> Result<String, TemplateError> {
    let pieces = pieces(template, example, dep, meta)?;
    let text = normalize(&pieces.iter().map(|(_, s)| s.as_str()).collect::<String>());
    if text.is_empty() {
        return Err(TemplateError::EmptyRender);
    }
    let masks = count_mask_markers(&text);
    if masks != 1 {
        return Err(TemplateError::MaskCount(masks));
    }
    Ok(text)
}

/// Renders and tokenizes. Each segment is tokenized on its own, so slot
/// text never fuses with adjacent literal text. When the input exceeds
/// `max_len`, tokens are dropped from the right end of the longest sentence
/// slot until it fits; prompt tokens are never dropped.
pub fn render(
    template: &Template,
    example: &Example,
    dep: Option<&DepSnippet>,
    meta: Option<&MetaPrompt>,
    tokenizer: &Tokenizer,
    max_len: usize,
) -> Result<RenderedInput, TemplateError> {
    let pieces = pieces(template, example, dep, meta)?;
    let mask = tokenizer.mask_id();
    let mut encoded: Vec<(Piece, Vec<TokenId>)> = pieces
        .iter()
        .map(|(kind, text)| (*kind, tokenizer.encode(text)))
        .collect();

    let count = |kind: Piece, enc: &[(Piece, Vec<TokenId>)]| -> usize {
        enc.iter()
            .filter(|(k, _)| *k == kind)
            .flat_map(|(_, ids)| ids)
            .filter(|&&id| id == mask)
            .count()
    };
    let (prompt_masks, sentence_masks) = (count(Piece::Prompt, &encoded), count(Piece::Sentence, &encoded));
    if prompt_masks != 1 || sentence_masks != 0 {
        return Err(TemplateError::MaskCount(prompt_masks + sentence_masks));
    }

    let specials = usize::from(template.cls) + usize::from(template.sep);
    let budget = max_len.saturating_sub(specials);
    let prompt_len: usize = encoded
        .iter()
        .filter(|(k, _)| *k == Piece::Prompt)
        .map(|(_, ids)| ids.len())
        .sum();
    if prompt_len > budget {
        return Err(TemplateError::PromptTooLong {
            needed: prompt_len + specials,
            budget: max_len,
        });
    }
    let mut total: usize = encoded.iter().map(|(_, ids)| ids.len()).sum();
    let truncated = total > budget;
    while total > budget {
        let longest = encoded
            .iter_mut()
            .filter(|(k, _)| *k == Piece::Sentence)
            .rev()
            .max_by_key(|(_, ids)| ids.len())
            .expect("prompt fits, so a sentence slot is over budget");
        longest.1.pop();
        total -= 1;
    }

    let mut token_ids = Vec::with_capacity(total + specials);
    if template.cls {
        token_ids.push(tokenizer.cls_id());
    }
    for (_, ids) in &encoded {
        token_ids.extend_from_slice(ids);
    }
    if template.sep {
        token_ids.push(tokenizer.sep_id());
    }
    if total == 0 {
        return Err(TemplateError::EmptyRender);
    }
    let mask_position = token_ids
        .iter()
        .position(|&id| id == mask)
        .expect("mask is a prompt token and survives truncation");
    Ok(RenderedInput {
        token_ids,
        mask_position,
        truncated,
    })
}
