use super::Filter;
use crate::harness::{run_experiment, EvalReport, Experiment};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FilterOutcome {
    Ok { mean: f64, variance: f64, report: Box<EvalReport> },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub filter: Filter,
    /// Position in the experiment's catalog, the final tie-break.
    pub catalog_position: Option<usize>,
    pub outcome: FilterOutcome,
}

impl FilterResult {
    pub fn mean(&self) -> Option<f64> {
        match &self.outcome {
            FilterOutcome::Ok { mean, .. } => Some(*mean),
            FilterOutcome::Failed { .. } => None,
        }
    }
}

/// Orders results by mean accuracy (descending), then variance
/// (ascending), then catalog position. Failed candidates go last.
pub fn rank_results(mut results: Vec<FilterResult>) -> Vec<FilterResult> {
    let key = |r: &FilterResult| match &r.outcome {
        FilterOutcome::Ok { mean, variance, .. } => (0u8, -mean, *variance),
        FilterOutcome::Failed { .. } => (1u8, 0.0, 0.0),
    };
    results.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(a.catalog_position.unwrap_or(usize::MAX).cmp(&b.catalog_position.unwrap_or(usize::MAX)))
    });
    results
}

/// Runs the full protocol once per candidate filter and ranks them. A
/// failing candidate is recorded and the sweep continues.
pub fn grid_search(candidates: &[Filter], experiment: &Experiment) -> Vec<FilterResult> {
    let results = candidates
        .iter()
        .map(|f| {
            let outcome = match run_experiment(&experiment.with_filter(Some(f.clone()))) {
                Ok(report) => {
                    log::info!("filter {f}: mean {:.4} variance {:.6}", report.mean, report.variance);
                    FilterOutcome::Ok {
                        mean: report.mean,
                        variance: report.variance,
                        report: Box::new(report),
                    }
                }
                Err(e) => {
                    log::warn!("filter {f} failed: {e}");
                    FilterOutcome::Failed { error: e.to_string() }
                }
            };
            FilterResult {
                filter: f.clone(),
                catalog_position: experiment.catalog.position(f),
                outcome,
            }
        })
        .collect();
    rank_results(results)
}
