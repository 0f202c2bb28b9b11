use super::{CorpusError, Example, LabelSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Column layout of a delimited dataset file.
///
/// Label cells are resolved first by name against `labels`, then as an
/// integer index into it. Rows without an `id_column` get their 0-based
/// data-row position as id, which is also how annotation files align.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSchema {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub pair: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub sent0_column: usize,
    #[serde(default)]
    pub sent1_column: Option<usize>,
    pub label_column: usize,
    #[serde(default)]
    pub id_column: Option<usize>,
    /// Expected column count; defaults to one past the highest used column.
    #[serde(default)]
    pub columns: Option<usize>,
}

fn default_delimiter() -> String {
    "\t".to_string()
}

impl TaskSchema {
    pub fn single(name: &str, labels: &[&str]) -> Self {
        TaskSchema {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            pair: false,
            delimiter: default_delimiter(),
            header: false,
            sent0_column: 0,
            sent1_column: None,
            label_column: 1,
            id_column: None,
            columns: None,
        }
    }

    pub fn pair(name: &str, labels: &[&str]) -> Self {
        TaskSchema {
            pair: true,
            sent1_column: Some(1),
            label_column: 2,
            ..TaskSchema::single(name, labels)
        }
    }

    pub fn label_set(&self) -> Result<LabelSet, CorpusError> {
        LabelSet::new(self.labels.iter().cloned())
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.delimiter.is_empty() {
            return Err(CorpusError::Schema("empty delimiter".into()));
        }
        if self.pair != self.sent1_column.is_some() {
            return Err(CorpusError::Schema(
                "sent1_column must be set exactly when pair = true".into(),
            ));
        }
        if let Some(columns) = self.columns {
            if self.min_columns() > columns {
                return Err(CorpusError::Schema(format!(
                    "columns = {columns} but schema references column {}",
                    self.min_columns() - 1
                )));
            }
        }
        Ok(())
    }

    fn min_columns(&self) -> usize {
        [
            Some(self.sent0_column),
            self.sent1_column,
            Some(self.label_column),
            self.id_column,
        ]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(0)
            + 1
    }

    fn resolve_label(&self, labels: &LabelSet, cell: &str, line: usize) -> Result<usize, CorpusError> {
        let cell = cell.trim();
        if let Some(id) = labels.id_of(cell) {
            return Ok(id);
        }
        match cell.parse::<usize>() {
            Ok(id) if id < labels.len() => Ok(id),
            _ => Err(CorpusError::UnknownLabel {
                line,
                label: cell.to_string(),
            }),
        }
    }
}

pub fn parse_dataset(path: &Path, schema: &TaskSchema) -> Result<(LabelSet, Vec<Example>), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset_str(&text, schema)
}

/// Parses dataset text; line numbers in errors are 1-based file lines.
pub fn parse_dataset_str(text: &str, schema: &TaskSchema) -> Result<(LabelSet, Vec<Example>), CorpusError> {
    schema.validate()?;
    let labels = schema.label_set()?;
    let expected = schema.columns.unwrap_or_else(|| schema.min_columns());
    let mut examples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if schema.header && idx == 0 {
            continue;
        }
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(schema.delimiter.as_str()).collect();
        if cells.len() != expected {
            return Err(CorpusError::ColumnCount {
                line,
                expected,
                found: cells.len(),
            });
        }
        let label = schema.resolve_label(&labels, cells[schema.label_column], line)?;
        let id = match schema.id_column {
            Some(c) => cells[c].to_string(),
            None => examples.len().to_string(),
        };
        examples.push(Example {
            id,
            sent0: cells[schema.sent0_column].to_string(),
            sent1: schema.sent1_column.map(|c| cells[c].to_string()),
            label,
        });
    }
    Ok((labels, examples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sst2_row_maps_fields() {
        let schema = TaskSchema::single("sst-2", &["negative", "positive"]);
        let (labels, ex) = parse_dataset_str("a gorgeous film\t1\n", &schema).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(
            ex,
            vec![Example {
                id: "0".into(),
                sent0: "a gorgeous film".into(),
                sent1: None,
                label: 1
            }]
        );
    }

    #[test]
    fn label_names_resolve_before_indices() {
        let schema = TaskSchema::single("t", &["negative", "positive"]);
        let (_, ex) = parse_dataset_str("x\tpositive\ny\t0\n", &schema).unwrap();
        assert_eq!(ex[0].label, 1);
        assert_eq!(ex[1].label, 0);
    }

    #[test]
    fn snli_pair_row_populates_sent1() {
        let schema = TaskSchema::pair("snli", &["entailment", "neutral", "contradiction"]);
        let (_, ex) = parse_dataset_str("A man sleeps.\tA person rests.\tentailment\n", &schema).unwrap();
        assert_eq!(ex[0].sent1.as_deref(), Some("A person rests."));
        assert_eq!(ex[0].label, 0);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let schema = TaskSchema::single("t", &["a", "b"]);
        let err = parse_dataset_str("x\t0\ny\t1\textra\n", &schema).unwrap_err();
        assert!(matches!(err, CorpusError::ColumnCount { line: 2, expected: 2, found: 3 }));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_label_is_named() {
        let schema = TaskSchema::single("t", &["a", "b"]);
        let err = parse_dataset_str("x\tmaybe\n", &schema).unwrap_err();
        assert!(err.to_string().contains("\"maybe\""), "{err}");
        let err = parse_dataset_str("x\t2\n", &schema).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { .. }));
    }

    #[test]
    fn header_and_id_column() {
        let mut schema = TaskSchema::single("t", &["a", "b"]);
        schema.header = true;
        schema.id_column = Some(2);
        let (_, ex) = parse_dataset_str("sentence\tlabel\tid\nfoo\tb\tq17\n", &schema).unwrap();
        assert_eq!(ex[0].id, "q17");
        assert_eq!(ex[0].label, 1);
    }

    #[test]
    fn schema_pair_mismatch_rejected() {
        let mut schema = TaskSchema::single("t", &["a", "b"]);
        schema.pair = true;
        assert!(matches!(parse_dataset_str("", &schema), Err(CorpusError::Schema(_))));
    }
}
