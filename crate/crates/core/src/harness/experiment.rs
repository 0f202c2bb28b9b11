use super::HarnessError;
use crate::corpus::{AnnotatedSentence, Example, LabelSet};
use crate::depfilter::{DepSnippet, Filter, FilterCatalog, DEFAULT_MAX_TOKENS};
use crate::lm::{OptimizerKind, RemoteConfig, Tokenizer};
use crate::mapping::MappingSpec;
use crate::template::{render, MetaPrompt, RenderedInput, Segment, Template};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;

/// How the per-seed result is chosen among grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Dev accuracy picks the checkpoint and the cell; test is only reported.
    #[default]
    Dev,
    /// Dev picks the checkpoint, the best test accuracy over cells is reported.
    TestMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Stop a cell after this many dev evaluations without improvement.
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default)]
    pub selection: Selection,
    /// Fine-tune the backbone as well as the mapping heads.
    #[serde(default = "yes")]
    pub train_backbone: bool,
    /// Head learning rate; defaults to the cell's learning rate.
    #[serde(default)]
    pub head_lr: Option<f64>,
    #[serde(default)]
    pub head_seed: u64,
    #[serde(default)]
    pub head_optimizer: OptimizerKind,
    /// Worker threads for grid cells. Does not affect results.
    #[serde(default = "one", skip_serializing)]
    pub parallelism: usize,
}

fn default_k() -> usize {
    16
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_batch_sizes() -> Vec<usize> {
    vec![4, 8, 16]
}
fn default_learning_rates() -> Vec<f64> {
    vec![1e-5, 2e-5, 5e-5]
}
fn default_max_steps() -> usize {
    1000
}
fn default_eval_every() -> usize {
    100
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            k: default_k(),
            seeds: default_seeds(),
            batch_sizes: default_batch_sizes(),
            learning_rates: default_learning_rates(),
            max_steps: default_max_steps(),
            eval_every: default_eval_every(),
            patience: None,
            selection: Selection::Dev,
            train_backbone: true,
            head_lr: None,
            head_seed: 0,
            head_optimizer: OptimizerKind::default(),
            parallelism: 1,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("at least one positive batch size is required");
        }
        if self.learning_rates.is_empty() || self.learning_rates.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return bad("at least one non-negative learning rate is required");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinySpec {
    #[serde(default = "d16")]
    pub dim: usize,
    #[serde(default = "one")]
    pub layers: usize,
    #[serde(default)]
    pub ffn_dim: Option<usize>,
    #[serde(default = "len64")]
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

fn d16() -> usize {
    16
}
fn len64() -> usize {
    64
}

impl Default for TinySpec {
    fn default() -> Self {
        TinySpec {
            dim: 16,
            layers: 1,
            ffn_dim: None,
            max_len: 64,
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Tiny(TinySpec),
    Remote(RemoteConfig),
}

/// Dependency annotations aligned with dataset rows, keyed by example id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub sent0: HashMap<String, AnnotatedSentence>,
    pub sent1: HashMap<String, AnnotatedSentence>,
}

impl Annotations {
    /// Pairs `examples[i]` with `sent0[i]` (and `sent1[i]` for pair tasks).
    pub fn aligned(
        examples: &[Example],
        sent0: Vec<AnnotatedSentence>,
        sent1: Option<Vec<AnnotatedSentence>>,
    ) -> Result<Self, HarnessError> {
        let check = |n: usize, which: &str| {
            if n != examples.len() {
                Err(HarnessError::Config(format!(
                    "{which} annotation file has {n} sentences for {} examples",
                    examples.len()
                )))
            } else {
                Ok(())
            }
        };
        check(sent0.len(), "first-sentence")?;
        let mut a = Annotations::default();
        for (e, s) in examples.iter().zip(sent0) {
            a.sent0.insert(e.id.clone(), s);
        }
        if let Some(s1) = sent1 {
            check(s1.len(), "second-sentence")?;
            for (e, s) in examples.iter().zip(s1) {
                a.sent1.insert(e.id.clone(), s);
            }
        }
        Ok(a)
    }
}

/// Everything needed to run the protocol on one task configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub task: String,
    pub labels: LabelSet,
    pub train_pool: Vec<Example>,
    pub test: Vec<Example>,
    pub train_annotations: Option<Annotations>,
    pub test_annotations: Option<Annotations>,
    pub template: Template,
    pub filter: Option<Filter>,
    pub max_dep_tokens: usize,
    pub catalog: FilterCatalog,
    pub meta: Option<MetaPrompt>,
    pub mappings: Vec<MappingSpec>,
    pub shared_head: bool,
    pub lowercase: bool,
    pub protocol: Protocol,
    pub backend: BackendSpec,
    /// Vocabulary for the backend; built from the training pool when absent.
    #[serde(default)]
    pub vocab: Option<Vec<String>>,
}

impl Experiment {
    /// Minimal experiment: manual template, tiny backend, default protocol.
    pub fn new(
        task: &str,
        labels: LabelSet,
        train_pool: Vec<Example>,
        test: Vec<Example>,
        template: Template,
        mappings: Vec<MappingSpec>,
    ) -> Self {
        Experiment {
            task: task.to_string(),
            labels,
            train_pool,
            test,
            train_annotations: None,
            test_annotations: None,
            template,
            filter: None,
            max_dep_tokens: DEFAULT_MAX_TOKENS,
            catalog: FilterCatalog::known(),
            meta: None,
            mappings,
            shared_head: false,
            lowercase: true,
            protocol: Protocol::default(),
            backend: BackendSpec::Tiny(TinySpec::default()),
            vocab: None,
        }
    }

    /// Same experiment with a different dependency filter.
    pub fn with_filter(&self, filter: Option<Filter>) -> Experiment {
        Experiment {
            filter,
            ..self.clone()
        }
    }

    /// The template actually rendered: a dependency slot is added when a
    /// filter is set and the template has none.
    pub fn effective_template(&self) -> Template {
        match &self.filter {
            Some(_) => self.template.with_dep_slot(),
            None => self.template.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.protocol.validate()?;
        if self.mappings.is_empty() {
            return Err(HarnessError::Config("at least one mapping is required".into()));
        }
        if self.test.is_empty() {
            return Err(HarnessError::Config("test set is empty".into()));
        }
        for e in self.train_pool.iter().chain(&self.test) {
            if e.label >= self.labels.len() {
                return Err(HarnessError::Config(format!("example {:?} has label {} out of range", e.id, e.label)));
            }
        }
        let template = self.effective_template();
        if template.has_dep_slot() && self.filter.is_none() {
            return Err(HarnessError::Config("template has *dep* but no filter is configured".into()));
        }
        if let Some(f) = &self.filter {
            if !self.catalog.contains(f) {
                return Err(crate::depfilter::FilterError::NotInCatalog {
                    kind: f.kind,
                    name: f.name.clone(),
                }
                .into());
            }
            if self.train_annotations.is_none() || self.test_annotations.is_none() {
                return Err(HarnessError::Config("a filter needs train and test annotations".into()));
            }
        }
        if template.has_meta() != self.meta.is_some() {
            return Err(HarnessError::Config(
                "meta blocks in the template and a meta-prompt must be configured together".into(),
            ));
        }
        if template.uses_sent1() && self.train_pool.iter().chain(&self.test).any(|e| e.sent1.is_none()) {
            return Err(HarnessError::Config("template uses *sent_1* but examples have no second sentence".into()));
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> Tokenizer {
        if let Some(v) = &self.vocab {
            return Tokenizer::from_vocab(v, self.lowercase);
        }
        let mut texts: Vec<String> = Vec::new();
        for e in &self.train_pool {
            texts.push(e.sent0.clone());
            texts.extend(e.sent1.clone());
        }
        for seg in &self.template.segments {
            if let Segment::Literal(t) = seg {
                texts.push(t.clone());
            }
        }
        if let Some(m) = &self.meta {
            texts.extend([m.od.clone(), m.sd.clone(), m.td.clone()]);
        }
        for spec in &self.mappings {
            texts.extend(spec.words().map(str::to_string));
        }
        Tokenizer::build(texts, self.lowercase)
    }

    fn snippet(&self, e: &Example, ann: Option<&Annotations>) -> Result<Option<DepSnippet>, HarnessError> {
        let Some(filter) = &self.filter else {
            return Ok(None);
        };
        let ann = ann.ok_or_else(|| HarnessError::MissingAnnotation(e.id.clone()))?;
        let s0 = ann
            .sent0
            .get(&e.id)
            .ok_or_else(|| HarnessError::MissingAnnotation(e.id.clone()))?;
        let mut snippet = self.catalog.extract(s0, filter, self.max_dep_tokens)?;
        if e.sent1.is_some() {
            if let Some(s1) = ann.sent1.get(&e.id) {
                let second = self.catalog.extract(s1, filter, self.max_dep_tokens)?;
                snippet = snippet.concat(second, self.max_dep_tokens);
            }
        }
        Ok(Some(snippet))
    }

    /// Renders the training pool and the test set.
    pub(crate) fn render_all(
        &self,
        tokenizer: &Tokenizer,
        max_len: usize,
    ) -> Result<(Vec<RenderedInput>, Vec<RenderedInput>), HarnessError> {
        let template = self.effective_template();
        let go = |examples: &[Example], ann: Option<&Annotations>| -> Result<Vec<RenderedInput>, HarnessError> {
            examples
                .iter()
                .map(|e| {
                    let dep = self.snippet(e, ann)?;
                    Ok(render(&template, e, dep.as_ref(), self.meta.as_ref(), tokenizer, max_len)?)
                })
                .collect()
        };
        Ok((
            go(&self.train_pool, self.train_annotations.as_ref())?,
            go(&self.test, self.test_annotations.as_ref())?,
        ))
    }

    /// SHA-256 over the serialized experiment (data included), hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("experiment serializes");
        hex::encode(Sha256::digest(&json))
    }
}
