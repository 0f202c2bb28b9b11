use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKind {
    Od,
    Sd,
    Td,
}

impl MetaKind {
    pub const ALL: [MetaKind; 3] = [MetaKind::Od, MetaKind::Sd, MetaKind::Td];
}

impl std::str::FromStr for MetaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "od" => Ok(MetaKind::Od),
            "sd" => Ok(MetaKind::Sd),
            "td" => Ok(MetaKind::Td),
            other => Err(format!("unknown meta block {other:?} (expected od, sd or td)")),
        }
    }
}

/// Mask tail appended when composition drops the block that held the mask.
pub const DEFAULT_MASK_TAIL: &str = "[MASK]";

/// Object, summary and task descriptions. Any field may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetaPrompt {
    #[serde(default)]
    pub od: String,
    #[serde(default)]
    pub sd: String,
    #[serde(default)]
    pub td: String,
}

impl MetaPrompt {
    pub fn new(od: &str, sd: &str, td: &str) -> Self {
        MetaPrompt {
            od: od.to_string(),
            sd: sd.to_string(),
            td: td.to_string(),
        }
    }

    pub fn get(&self, kind: MetaKind) -> &str {
        match kind {
            MetaKind::Od => &self.od,
            MetaKind::Sd => &self.sd,
            MetaKind::Td => &self.td,
        }
    }

    fn get_mut(&mut self, kind: MetaKind) -> &mut String {
        match kind {
            MetaKind::Od => &mut self.od,
            MetaKind::Sd => &mut self.sd,
            MetaKind::Td => &mut self.td,
        }
    }

    pub fn mask_count(&self) -> usize {
        MetaKind::ALL.iter().map(|&k| count_mask_markers(self.get(k))).sum()
    }

    /// Built-in descriptions for the benchmark tasks. SST-2 uses the
    /// capitalised single-sentence form; the rest follow the per-task table.
    pub fn preset(task: &str) -> Option<MetaPrompt> {
        let m = match task.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sst2" => MetaPrompt::new(
                "A movie review",
                "Talking about its director, actor, performance, character skill, and story.",
                "The emotion of this review was [MASK]",
            ),
            "sst5" => MetaPrompt::new(
                "A movie review",
                "talking about its director, actor, performance, character skill, and story,",
                "the emotion of this review was [MASK]",
            ),
            "trec" => MetaPrompt::new(
                "A English question.",
                "about huaman, description, location numeric entity , and abbreviations.",
                "The question type is [mask].",
            ),
            "snli" => MetaPrompt::new(
                "It is a Stanford Natural Language Inference sentence pairs",
                "manually labeled as entailment , contradiction , and neutral.",
                "whether the context contains the answer to the question?[mask]",
            ),
            "qnli" => MetaPrompt::new(
                "It is a Stanford Question Answering sentence pairs",
                "manually labeled as entailment and contradiction.",
                "whether the context contains the answer to the question? [mask]",
            ),
            _ => return None,
        };
        Some(m)
    }
}

pub(crate) fn count_mask_markers(text: &str) -> usize {
    text.to_ascii_lowercase().matches("[mask]").count()
}

/// Keeps only the selected blocks. If the dropped blocks carried the mask,
/// the task description becomes [`DEFAULT_MASK_TAIL`] so the composed
/// prompt still has exactly one mask.
pub fn compose_meta(meta: &MetaPrompt, parts: &[MetaKind]) -> MetaPrompt {
    let mut out = MetaPrompt::default();
    for &kind in parts {
        *out.get_mut(kind) = meta.get(kind).to_string();
    }
    if meta.mask_count() > 0 && out.mask_count() == 0 {
        out.td = if out.td.trim().is_empty() {
            DEFAULT_MASK_TAIL.to_string()
        } else {
            format!("{} {DEFAULT_MASK_TAIL}", out.td)
        };
    }
    out
}
