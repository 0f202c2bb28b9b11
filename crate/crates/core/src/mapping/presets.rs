//! Verbalizer definitions by label name, and the built-in task mappings.

use super::{LabelMapping, MappingError};
use crate::corpus::LabelSet;
use crate::lm::tokenizer::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A mapping written with words, keyed by label name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub name: String,
    pub labels: BTreeMap<String, Vec<String>>,
}

impl MappingSpec {
    pub fn new(name: &str, entries: &[(&str, &str)]) -> Self {
        MappingSpec {
            name: name.to_string(),
            labels: entries
                .iter()
                .map(|(label, words)| {
                    (label.to_string(), words.split_whitespace().map(str::to_string).collect())
                })
                .collect(),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.labels.values().flatten().map(String::as_str)
    }

    /// Resolves words to ids in label-set order. A word that splits into
    /// several pieces is represented by its first piece.
    pub fn resolve(&self, labels: &LabelSet, tokenizer: &Tokenizer) -> Result<LabelMapping, MappingError> {
        if let Some(extra) = self.labels.keys().find(|k| labels.id_of(k).is_none()) {
            return Err(MappingError::ExtraLabel {
                mapping: self.name.clone(),
                label: extra.clone(),
            });
        }
        let mut tokens = Vec::with_capacity(labels.len());
        for (t, label) in labels.names().iter().enumerate() {
            let words = self.labels.get(label).ok_or_else(|| MappingError::MissingLabel {
                mapping: self.name.clone(),
                label: label.clone(),
            })?;
            if words.is_empty() {
                return Err(MappingError::EmptyLabel(t));
            }
            let mut ids = Vec::with_capacity(words.len());
            for word in words {
                let pieces = tokenizer.split(word);
                let first = pieces.first().ok_or_else(|| MappingError::UnknownWord(word.clone()))?;
                if pieces.len() > 1 {
                    log::warn!(
                        "mapping {:?}: {word:?} splits into {} pieces, using {first:?}",
                        self.name,
                        pieces.len()
                    );
                }
                if !tokenizer.contains(first) {
                    return Err(MappingError::UnknownWord(word.clone()));
                }
                ids.push(tokenizer.id(first));
            }
            tokens.push(ids);
        }
        LabelMapping::new(&self.name, tokens)
    }
}

const SST2: [&str; 2] = ["negative", "positive"];
const SST5: [&str; 5] = ["very negative", "negative", "neutral", "positive", "very positive"];
const TREC: [&str; 6] = ["description", "entity", "abbreviation", "human", "location", "numeric"];
const QNLI: [&str; 2] = ["not_entailment", "entailment"];
const SNLI: [&str; 3] = ["contradiction", "entailment", "neutral"];

fn spec(name: &str, labels: &[&str], words: &[&str]) -> MappingSpec {
    let entries: Vec<(&str, &str)> = labels.iter().copied().zip(words.iter().copied()).collect();
    MappingSpec::new(name, &entries)
}

const QNLI_GROWING: [[&str; 2]; 4] = [
    ["Fortunately And", "Recently Together"],
    ["Fortunately And Nonetheless", "Recently Together Okay"],
    ["Fortunately And Nonetheless However", "Recently Together Okay Yes"],
    ["Fortunately And Nonetheless However Instead", "Recently Together Okay Yes So"],
];

const SST5_GROWING: [[&str; 5]; 4] = [
    ["terrible disgusting", "bad simple", "okay neutral", "good better", "great fascinating"],
    [
        "terrible disgusting awful",
        "bad simple ordinary",
        "okay neutral fine",
        "good better pretty",
        "great fascinating magnificent",
    ],
    [
        "terrible disgusting awful horrible",
        "bad simple ordinary ill",
        "okay neutral fine regular",
        "good better pretty gorgeous",
        "great fascinating magnificent wonderful",
    ],
    [
        "terrible disgusting awful horrible ridiculous",
        "bad simple ordinary ill doomed",
        "okay neutral fine regular normal",
        "good better pretty gorgeous beautiful",
        "great fascinating magnificent wonderful spectacular",
    ],
];

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = ["sst-2", "sst-5", "trec", "qnli", "snli"]
        .iter()
        .flat_map(|t| [format!("{t}/single"), format!("{t}/multi")])
        .collect();
    names.extend((2..=5).map(|n| format!("qnli/multi-{n}")));
    names.extend((2..=5).map(|n| format!("sst-5/multi-{n}")));
    names
}

pub fn preset(name: &str) -> Option<MappingSpec> {
    let s = match name {
        "sst-2/single" => spec(name, &SST2, &["bad", "good"]),
        "sst-5/single" => spec(name, &SST5, &["terrible", "bad", "okay", "good", "great"]),
        "trec/single" => spec(
            name,
            &TREC,
            &["Description", "Entity", "Expression", "Human", "Location", "Number"],
        ),
        "qnli/single" => spec(name, &QNLI, &["No", "Yes"]),
        "snli/single" => spec(name, &SNLI, &["No", "Yes", "Maybe"]),
        "sst-2/multi" => spec(
            name,
            &SST2,
            &["terrible pathetic bad ridiculous", "wonderful delicious gorgeous delightful"],
        ),
        "sst-5/multi" => spec(
            name,
            &SST5,
            &[
                "disgusting awful horrible ridiculous boring",
                "simple better unnecessary weird doomed",
                "hilarious hilarious dark weird dark",
                "fascinating remarkable gorgeous incredible remarkable",
                "magnificent wonderful terrific magnificent spectacular",
            ],
        ),
        "snli/multi" => spec(
            name,
            &SNLI,
            &[
                "No inconformity inconsistent disagreement not",
                "Yes agree same accord good",
                "Maybe like seem might sound",
            ],
        ),
        "qnli/multi" => spec(name, &QNLI, &["No Nonetheless Yet Notably", "Yes Okay Notably good"]),
        "trec/multi" => spec(
            name,
            &TREC,
            &[
                "Description is depict what how",
                "Entity concept Which name type",
                "stand expression form does What",
                "Human team group organization man",
                "Location street road city where",
                "Number How one many quantity",
            ],
        ),
        _ => {
            let (task, n) = name.split_once("/multi-")?;
            let n: usize = n.parse().ok()?;
            let idx = n.checked_sub(2).filter(|i| *i < 4)?;
            match task {
                "qnli" => spec(name, &QNLI, &QNLI_GROWING[idx]),
                "sst-5" => spec(name, &SST5, &SST5_GROWING[idx]),
                _ => return None,
            }
        }
    };
    Some(s)
}

/// The growing-size mapping families used for joint inference.
pub fn preset_ensemble(name: &str) -> Option<Vec<MappingSpec>> {
    match name {
        "qnli/growing" | "sst-5/growing" => {
            let task = name.split('/').next()?;
            (2..=5).map(|n| preset(&format!("{task}/multi-{n}"))).collect()
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves_against_its_labels() {
        for name in preset_names() {
            let spec = preset(&name).unwrap();
            let task = name.split('/').next().unwrap();
            let labels = match task {
                "sst-2" => LabelSet::new(SST2).unwrap(),
                "sst-5" => LabelSet::new(SST5).unwrap(),
                "trec" => LabelSet::new(TREC).unwrap(),
                "qnli" => LabelSet::new(QNLI).unwrap(),
                _ => LabelSet::new(SNLI).unwrap(),
            };
            let tok = Tokenizer::build(spec.words(), true);
            let m = spec.resolve(&labels, &tok).unwrap();
            assert_eq!(m.num_labels(), labels.len(), "{name}");
        }
    }

    #[test]
    fn growing_families_have_increasing_sizes() {
        let e = preset_ensemble("sst-5/growing").unwrap();
        let sizes: Vec<usize> = e.iter().map(|s| s.labels["neutral"].len()).collect();
        assert_eq!(sizes, [2, 3, 4, 5]);
        assert_eq!(preset_ensemble("qnli/growing").unwrap().len(), 4);
        assert!(preset("qnli/multi-6").is_none());
    }

    #[test]
    fn resolve_errors() {
        let labels = LabelSet::new(["negative", "positive"]).unwrap();
        let tok = Tokenizer::build(["bad good"], true);
        let missing = MappingSpec::new("m", &[("negative", "bad")]);
        assert!(matches!(missing.resolve(&labels, &tok), Err(MappingError::MissingLabel { .. })));
        let extra = MappingSpec::new("m", &[("negative", "bad"), ("positive", "good"), ("meh", "bad")]);
        assert!(matches!(extra.resolve(&labels, &tok), Err(MappingError::ExtraLabel { .. })));
        let unknown = MappingSpec::new("m", &[("negative", "awful"), ("positive", "good")]);
        assert_eq!(unknown.resolve(&labels, &tok), Err(MappingError::UnknownWord("awful".into())));
    }

    #[test]
    fn multi_piece_word_uses_first_piece() {
        let labels = LabelSet::new(["a", "b"]).unwrap();
        let tok = Tokenizer::build(["not entailment yes"], true);
        let m = MappingSpec::new("m", &[("a", "not-entailment"), ("b", "yes")])
            .resolve(&labels, &tok)
            .unwrap();
        assert_eq!(m.tokens[0], vec![tok.id("not")]);
    }
}
