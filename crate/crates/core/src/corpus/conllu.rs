//! Minimal CoNLL-U reader and writer.
//!
//! Only FORM, UPOS/XPOS, HEAD and DEPREL survive a read. XPOS is preferred
//! over UPOS because the filter catalog uses Penn Treebank tags. Multiword
//! token ranges (`1-2`) and empty nodes (`1.1`) are skipped.

use super::{AnnotatedSentence, AnnotatedToken, CorpusError};
use std::fmt::Write as _;
use std::path::Path;

pub fn parse_conllu(path: &Path) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_conllu_str(&text)
}

pub fn parse_conllu_str(text: &str) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let mut sentences = Vec::new();
    let mut current: Vec<AnnotatedToken> = Vec::new();
    let mut start_line = 1;

    let mut flush = |tokens: &mut Vec<AnnotatedToken>, line: usize| -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let sentence = AnnotatedSentence::new(std::mem::take(tokens))
            .map_err(|message| CorpusError::Conllu { line, message })?;
        sentences.push(sentence);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            flush(&mut current, start_line)?;
            start_line = line + 1;
            continue;
        }
        if raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Conllu {
                line,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| CorpusError::Conllu {
            line,
            message: format!("non-integer token id {:?}", cols[0]),
        })?;
        if id != current.len() + 1 {
            return Err(CorpusError::Conllu {
                line,
                message: format!("token id {id} out of sequence (expected {})", current.len() + 1),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| CorpusError::Conllu {
            line,
            message: format!("non-integer head {:?}", cols[6]),
        })?;
        let pos = if cols[4] != "_" { cols[4] } else { cols[3] };
        current.push(AnnotatedToken {
            form: cols[1].to_string(),
            pos: pos.to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    flush(&mut current, start_line)?;
    Ok(sentences)
}

/// Writes sentences as CoNLL-U with the tag in XPOS and UPOS left empty.
pub fn write_conllu(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for sentence in sentences {
        for (i, t) in sentence.tokens().iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t_\t_\t{}\t_\t{}\t{}\t_\t_",
                i + 1,
                t.form,
                t.pos,
                t.head,
                t.deprel
            )
            .expect("write to String");
        }
        out.push('\n');
    }
    out
}
