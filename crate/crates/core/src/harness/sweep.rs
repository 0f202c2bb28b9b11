use super::experiment::Experiment;
use super::report::{format_cell, format_gain, EvalReport};
use super::run::run_experiment;
use super::HarnessError;
use serde::{Deserialize, Serialize};

/// Fixed hyperparameters used for every row of a K sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KSweepSettings {
    #[serde(default = "default_bs")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
}

fn default_bs() -> usize {
    4
}
fn default_lr() -> f64 {
    1e-5
}
fn default_steps() -> usize {
    1000
}

impl Default for KSweepSettings {
    fn default() -> Self {
        KSweepSettings {
            batch_size: default_bs(),
            learning_rate: default_lr(),
            max_steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub mean: f64,
    pub variance: f64,
    /// Mean minus the previous row's mean; zero for the first row.
    pub gain: f64,
    pub report: EvalReport,
}

impl KSweepRow {
    /// `"88.0 (26.0) +1.2"`.
    pub fn display(&self) -> String {
        format!("K={} {} ({})", self.k, format_cell(self.mean, self.variance), format_gain(self.gain))
    }
}

/// Runs the experiment once per `k` with the batch size, learning rate and
/// step budget fixed by `settings`.
pub fn k_sweep(experiment: &Experiment, ks: &[usize], settings: KSweepSettings) -> Result<Vec<KSweepRow>, HarnessError> {
    if ks.is_empty() {
        return Err(HarnessError::Config("k sweep needs at least one k".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config(format!("k values must be strictly increasing, got {ks:?}")));
    }
    if ks[0] == 0 {
        return Err(HarnessError::Config("k must be at least 1".into()));
    }
    let mut rows: Vec<KSweepRow> = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut exp = experiment.clone();
        exp.protocol.k = k;
        exp.protocol.batch_sizes = vec![settings.batch_size];
        exp.protocol.learning_rates = vec![settings.learning_rate];
        exp.protocol.max_steps = settings.max_steps;
        let report = run_experiment(&exp)?;
        let gain = rows.last().map_or(0.0, |prev| report.mean - prev.mean);
        log::info!("k={k}: mean {:.4}", report.mean);
        rows.push(KSweepRow {
            k,
            mean: report.mean,
            variance: report.variance,
            gain,
            report,
        });
    }
    Ok(rows)
}
