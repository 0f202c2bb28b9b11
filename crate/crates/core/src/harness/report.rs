use crate::corpus::LabelSet;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Mean, population variance and median of per-seed accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
}

/// Aggregates values in the given order. Empty input gives NaN fields.
pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary {
            mean: f64::NAN,
            variance: f64::NAN,
            median: f64::NAN,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Summary { mean, variance, median }
}

/// `"87.2 (3.4)"`: mean accuracy in percent and variance in squared
/// percentage points, one decimal each.
pub fn format_cell(mean: f64, variance: f64) -> String {
    format!("{:.1} ({:.1})", mean * 100.0, variance * 1e4)
}

/// Signed difference in percentage points, `"+0.0"` style.
pub fn format_gain(delta: f64) -> String {
    let pp = delta * 100.0;
    if format!("{:.1}", pp.abs()) == "0.0" {
        "+0.0".to_string()
    } else {
        format!("{pp:+.1}")
    }
}

/// One (seed, batch size, learning rate) grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Step of the dev-selected checkpoint.
    pub best_step: Option<usize>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// The selected result of one K-shot split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Test-set label distributions of the selected cell, for joint inference.
    pub test_probabilities: Vec<Vec<f64>>,
}

/// Evaluation order record. For every cell, all dev evaluations precede
/// checkpoint selection, which precedes the single test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum AuditEvent {
    DevEval {
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        step: usize,
        accuracy: f64,
    },
    CheckpointSelected {
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        step: usize,
    },
    TestEval {
        seed: u64,
        batch_size: usize,
        learning_rate: f64,
        step: usize,
        accuracy: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub config_hash: String,
    pub labels: LabelSet,
    pub seeds: Vec<SeedResult>,
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
    pub cells: Vec<CellResult>,
    /// False when any cell failed.
    pub complete: bool,
    pub test_gold: Vec<usize>,
    #[serde(default)]
    pub audit: Vec<AuditEvent>,
}

impl EvalReport {
    /// Builds a report, computing the aggregates from `seeds` in order.
    pub fn from_seeds(
        task: &str,
        config_hash: String,
        labels: LabelSet,
        seeds: Vec<SeedResult>,
        cells: Vec<CellResult>,
        test_gold: Vec<usize>,
        audit: Vec<AuditEvent>,
    ) -> Self {
        let s = summarize(&seeds.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        let complete = cells.iter().all(CellResult::ok);
        EvalReport {
            task: task.to_string(),
            config_hash,
            labels,
            seeds,
            mean: s.mean,
            variance: s.variance,
            median: s.median,
            cells,
            complete,
            test_gold,
            audit,
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mean: self.mean,
            variance: self.variance,
            median: self.median,
        }
    }

    pub fn seed_accuracies(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.accuracy).collect()
    }

    /// `"mean (variance)"` cell for this report.
    pub fn cell(&self) -> String {
        format_cell(self.mean, self.variance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Plain-text table of cells and the aggregate row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task {}  config {}", self.task, &self.config_hash);
        let _ = writeln!(out, "{:>6} {:>4} {:>9} {:>7} {:>7} {:>6}", "seed", "bs", "lr", "dev", "test", "step");
        for c in &self.cells {
            let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
            let _ = write!(
                out,
                "{:>6} {:>4} {:>9.1e} {:>7} {:>7} {:>6}",
                c.seed,
                c.batch_size,
                c.learning_rate,
                pct(c.dev_accuracy),
                pct(c.test_accuracy),
                c.best_step.map_or("-".to_string(), |s| s.to_string())
            );
            if let Some(e) = &c.error {
                let _ = write!(out, "  failed: {e}");
            }
            out.push('\n');
        }
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "seed {} best {:.1} (bs {}, lr {:.1e})",
                s.seed,
                s.accuracy * 100.0,
                s.batch_size,
                s.learning_rate
            );
        }
        let _ = writeln!(out, "mean (variance) {}  median {:.1}", self.cell(), self.median * 100.0);
        if !self.complete {
            let _ = writeln!(out, "incomplete: some cells failed");
        }
        out
    }
}
