use super::report::{AuditEvent, EvalReport, SeedResult};
use super::HarnessError;
use sha2::{Digest, Sha256};

/// Joint inference over member runs: for every seed the members' test
/// distributions are averaged and the argmax is scored against gold.
///
/// Members must share the task, label set, test labels and seed list.
pub fn ensemble_report(reports: &[EvalReport]) -> Result<EvalReport, HarnessError> {
    let first = reports
        .first()
        .ok_or_else(|| HarnessError::Incompatible("no reports given".into()))?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    let seeds: Vec<u64> = first.seeds.iter().map(|s| s.seed).collect();
    for r in &reports[1..] {
        if r.labels != first.labels {
            return Err(HarnessError::Incompatible(format!(
                "label sets differ: {:?} vs {:?}",
                first.labels.names(),
                r.labels.names()
            )));
        }
        if r.task != first.task {
            return Err(HarnessError::Incompatible(format!("tasks differ: {} vs {}", first.task, r.task)));
        }
        if r.test_gold != first.test_gold {
            return Err(HarnessError::Incompatible("test sets differ".into()));
        }
        if r.seeds.iter().map(|s| s.seed).collect::<Vec<_>>() != seeds {
            return Err(HarnessError::Incompatible("seed lists differ".into()));
        }
    }
    let n_test = first.test_gold.len();
    let mut out = Vec::with_capacity(seeds.len());
    let mut audit = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let mut avg = first.seeds[i].test_probabilities.clone();
        for (k, r) in reports.iter().enumerate() {
            let probs = &r.seeds[i].test_probabilities;
            if probs.len() != n_test || probs.iter().any(|p| p.len() != first.labels.len()) {
                return Err(HarnessError::Incompatible(format!(
                    "report {} has malformed test distributions for seed {seed}",
                    r.config_hash
                )));
            }
            if k == 0 {
                continue;
            }
            for (a, p) in avg.iter_mut().zip(probs) {
                for (x, y) in a.iter_mut().zip(p) {
                    *x += (y - *x) / (k + 1) as f64;
                }
            }
        }
        let correct = avg
            .iter()
            .zip(&first.test_gold)
            .filter(|(p, &g)| {
                let mut best = 0;
                for (j, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = j;
                    }
                }
                best == g
            })
            .count();
        let accuracy = correct as f64 / n_test.max(1) as f64;
        audit.push(AuditEvent::TestEval {
            seed,
            batch_size: 0,
            learning_rate: 0.0,
            step: 0,
            accuracy,
        });
        out.push(SeedResult {
            seed,
            accuracy,
            batch_size: 0,
            learning_rate: 0.0,
            test_probabilities: avg,
        });
    }
    let mut h = Sha256::new();
    for r in reports {
        h.update(r.config_hash.as_bytes());
        h.update(b"\n");
    }
    let mut report = EvalReport::from_seeds(
        &first.task,
        hex::encode(h.finalize()),
        first.labels.clone(),
        out,
        Vec::new(),
        first.test_gold.clone(),
        audit,
    );
    report.complete = reports.iter().all(|r| r.complete);
    Ok(report)
}
