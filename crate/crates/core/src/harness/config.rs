//! TOML experiment files.
//!
//! ```toml
//! [task]
//! schema = "schema.toml"        # or an inline [task.schema] table
//! train = "train.tsv"
//! test = "test.tsv"
//! train_conllu = "train.conllu" # needed when a filter is set
//! test_conllu = "test.conllu"
//!
//! [template]
//! text = "*cls**sent_0*_It_was*mask*.*sep+*"
//! filter = "POS:JJ"
//!
//! [mapping]
//! members = ["sst-2/single"]
//!
//! [protocol]
//! k = 16
//!
//! [backend]
//! kind = "tiny"
//!
//! [output]
//! dir = "out"
//! ```

use super::experiment::{Annotations, BackendSpec, Experiment, Protocol, TinySpec};
use super::sweep::KSweepSettings;
use super::HarnessError;
use crate::corpus::{parse_conllu, parse_dataset, TaskSchema};
use crate::depfilter::{Filter, FilterCatalog, DEFAULT_MAX_TOKENS};
use crate::lm::Tokenizer;
use crate::mapping::{preset, preset_ensemble, MappingSpec};
use crate::template::{compose_meta, parse_template, MetaKind, MetaPrompt};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaRef {
    Path(PathBuf),
    Inline(TaskSchema),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    /// Report name; defaults to the schema name.
    #[serde(default)]
    pub name: Option<String>,
    pub schema: SchemaRef,
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub train_conllu: Option<PathBuf>,
    #[serde(default)]
    pub test_conllu: Option<PathBuf>,
    #[serde(default)]
    pub train_conllu_sent1: Option<PathBuf>,
    #[serde(default)]
    pub test_conllu_sent1: Option<PathBuf>,
    /// One token per line; built from the training pool when absent.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default = "yes")]
    pub lowercase: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSection {
    pub text: String,
    #[serde(default)]
    pub filter: Option<String>,
    #[serde(default = "default_max_dep")]
    pub max_dep_tokens: usize,
    /// Custom catalog file (`KIND NAME` per line).
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Built-in meta-prompt by task name.
    #[serde(default)]
    pub meta_preset: Option<String>,
    #[serde(default)]
    pub od: Option<String>,
    #[serde(default)]
    pub sd: Option<String>,
    #[serde(default)]
    pub td: Option<String>,
    /// Meta blocks to keep, e.g. `["sd", "td"]`; all by default.
    #[serde(default)]
    pub meta_parts: Option<Vec<MetaKind>>,
}

fn default_max_dep() -> usize {
    DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSection {
    /// Preset names (`sst-2/multi`, `qnli/growing`, ...) or names from `define`.
    pub members: Vec<String>,
    #[serde(default)]
    pub shared_head: bool,
    /// Custom mappings: name -> label -> words.
    #[serde(default)]
    pub define: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Candidates as `KIND:NAME`; the whole catalog when absent.
    #[serde(default)]
    pub candidates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub ks: Vec<usize>,
    #[serde(flatten)]
    pub settings: Option<KSweepSettings>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Member report files.
    #[serde(default)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub task: TaskSection,
    pub template: TemplateSection,
    pub mapping: MappingSection,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_backend")]
    pub backend: BackendSpec,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    /// Directory relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_backend() -> BackendSpec {
    BackendSpec::Tiny(TinySpec::default())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parses a scalar override value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` overrides to a parsed table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), HarnessError> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(HarnessError::Config(format!("override key {key:?} is malformed")));
        }
        let mut cur = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("override {key:?}: {p:?} is not a table")))?;
        }
        cur.insert(parts[parts.len() - 1].to_string(), override_value(value.trim()));
    }
    Ok(())
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        Self::parse_with_backend(text, base_dir, overrides, None)
    }

    /// Like [`ConfigFile::parse`]; `backend` switches the backend kind before
    /// overrides apply, dropping the other kind's settings.
    pub fn parse_with_backend(
        text: &str,
        base_dir: &Path,
        overrides: &[String],
        backend: Option<&str>,
    ) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
        if let Some(kind) = backend {
            let same = table
                .get("backend")
                .and_then(|b| b.get("kind"))
                .and_then(toml::Value::as_str)
                .is_some_and(|k| k == kind);
            if !same {
                let mut b = toml::Table::new();
                b.insert("kind".into(), toml::Value::String(kind.to_string()));
                table.insert("backend".into(), toml::Value::Table(b));
            }
        }
        apply_overrides(&mut table, overrides)?;
        if let Some(toml::Value::Table(b)) = table.get_mut("backend") {
            b.entry("kind").or_insert_with(|| toml::Value::String("tiny".into()));
        }
        let mut cfg: ConfigFile = table.try_into().map_err(|e| HarnessError::Config(format!("{e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        Self::load_with_backend(path, overrides, None)
    }

    pub fn load_with_backend(path: &Path, overrides: &[String], backend: Option<&str>) -> Result<Self, HarnessError> {
        let text = read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with_backend(&text, &base, overrides, backend)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn schema(&self) -> Result<TaskSchema, HarnessError> {
        match &self.task.schema {
            SchemaRef::Inline(s) => Ok(s.clone()),
            SchemaRef::Path(p) => {
                toml::from_str(&read(&self.resolve(p))?).map_err(|e| HarnessError::Config(format!("schema: {e}")))
            }
        }
    }

    fn mappings(&self) -> Result<Vec<MappingSpec>, HarnessError> {
        let mut out = Vec::new();
        for name in &self.mapping.members {
            if let Some(def) = self.mapping.define.get(name) {
                out.push(MappingSpec {
                    name: name.clone(),
                    labels: def.clone(),
                });
            } else if let Some(spec) = preset(name) {
                out.push(spec);
            } else if let Some(specs) = preset_ensemble(name) {
                out.extend(specs);
            } else {
                return Err(crate::mapping::MappingError::UnknownPreset(name.clone()).into());
            }
        }
        if out.is_empty() {
            return Err(HarnessError::Config("mapping.members is empty".into()));
        }
        Ok(out)
    }

    fn meta(&self, task: &str) -> Result<Option<MetaPrompt>, HarnessError> {
        let t = &self.template;
        let base = match &t.meta_preset {
            Some(name) => Some(
                MetaPrompt::preset(name)
                    .ok_or_else(|| HarnessError::Config(format!("no meta-prompt preset for {name:?}")))?,
            ),
            None if t.od.is_some() || t.sd.is_some() || t.td.is_some() => Some(MetaPrompt::default()),
            None => None,
        };
        let Some(mut meta) = base else {
            if t.meta_parts.is_some() {
                return Err(HarnessError::Config(format!(
                    "{task}: meta_parts given without a meta-prompt"
                )));
            }
            return Ok(None);
        };
        if let Some(v) = &t.od {
            meta.od = v.clone();
        }
        if let Some(v) = &t.sd {
            meta.sd = v.clone();
        }
        if let Some(v) = &t.td {
            meta.td = v.clone();
        }
        if let Some(parts) = &t.meta_parts {
            meta = compose_meta(&meta, parts);
        }
        Ok(Some(meta))
    }

    /// Loads data and annotations and assembles the experiment.
    pub fn experiment(&self) -> Result<Experiment, HarnessError> {
        let schema = self.schema()?;
        let (labels, train_pool) = parse_dataset(&self.resolve(&self.task.train), &schema)?;
        let (_, test) = parse_dataset(&self.resolve(&self.task.test), &schema)?;
        let task = self.task.name.clone().unwrap_or_else(|| schema.name.clone());
        let template = parse_template(&self.template.text)?;
        let filter = self
            .template
            .filter
            .as_deref()
            .map(str::parse::<Filter>)
            .transpose()?;
        let catalog = match &self.template.catalog {
            Some(p) => FilterCatalog::parse(&read(&self.resolve(p))?)?,
            None => FilterCatalog::known(),
        };
        let load_ann = |examples: &[crate::corpus::Example],
                        s0: &Option<PathBuf>,
                        s1: &Option<PathBuf>|
         -> Result<Option<Annotations>, HarnessError> {
            let Some(p0) = s0 else { return Ok(None) };
            let a0 = parse_conllu(&self.resolve(p0))?;
            let a1 = s1.as_ref().map(|p| parse_conllu(&self.resolve(p))).transpose()?;
            Ok(Some(Annotations::aligned(examples, a0, a1)?))
        };
        let train_annotations = load_ann(&train_pool, &self.task.train_conllu, &self.task.train_conllu_sent1)?;
        let test_annotations = load_ann(&test, &self.task.test_conllu, &self.task.test_conllu_sent1)?;
        let vocab = match &self.task.vocab {
            Some(p) => {
                let t = Tokenizer::from_vocab_file(&read(&self.resolve(p))?, self.task.lowercase);
                Some((0..t.vocab_size() as u32).map(|i| t.token(i).unwrap_or_default().to_string()).collect())
            }
            None => None,
        };
        let meta = self.meta(&task)?;
        let mut exp = Experiment::new(&task, labels, train_pool, test, template, self.mappings()?);
        exp.train_annotations = train_annotations;
        exp.test_annotations = test_annotations;
        exp.filter = filter;
        exp.max_dep_tokens = self.template.max_dep_tokens;
        exp.catalog = catalog;
        exp.meta = meta;
        exp.shared_head = self.mapping.shared_head;
        exp.lowercase = self.task.lowercase;
        exp.protocol = self.protocol.clone();
        exp.backend = self.backend.clone();
        exp.vocab = vocab;
        Ok(exp)
    }

    /// Grid-search candidates in configured order, defaulting to the
    /// experiment's catalog.
    pub fn search_candidates(&self, catalog: &FilterCatalog) -> Result<Vec<Filter>, HarnessError> {
        match &self.search.candidates {
            Some(c) => c.iter().map(|s| Ok(s.parse::<Filter>()?)).collect(),
            None => Ok(catalog.filters.clone()),
        }
    }

    pub fn sweep_settings(&self) -> KSweepSettings {
        self.sweep.settings.unwrap_or_default()
    }
}

/// Reads a config file, applies overrides and builds the experiment.
pub fn load_experiment(path: &Path, overrides: &[String]) -> Result<(ConfigFile, Experiment), HarnessError> {
    let cfg = ConfigFile::load(path, overrides)?;
    let exp = cfg.experiment()?;
    Ok((cfg, exp))
}
