//! Seeded K-shot sampling.
//!
//! The sampler is specified down to the bit so that splits can be
//! reproduced outside this crate:
//!
//! 1. `rng = ChaCha8Rng::seed_from_u64(seed)` (rand_chacha stream).
//! 2. Labels are visited in [`LabelSet`] order. For each label the pool is
//!    its examples in input order.
//! 3. A partial Fisher–Yates pass fills positions `0..2k`: for position `i`
//!    draw `j = i + uniform(len - i)` and swap `pool[i]` with `pool[j]`.
//!    `uniform(n)` takes `x = rng.next_u64()`, rejects `x >= (u64::MAX / n) * n`
//!    and returns `x % n`.
//! 4. `pool[..k]` goes to train and `pool[k..2k]` to dev.

use super::{CorpusError, Example, LabelSet};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KShotSplit {
    pub seed: u64,
    pub k: usize,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

impl KShotSplit {
    pub fn train_ids(&self) -> Vec<&str> {
        self.train.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn dev_ids(&self) -> Vec<&str> {
        self.dev.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn manifest(&self, task: &str) -> SplitManifest {
        SplitManifest {
            task: task.to_string(),
            seed: self.seed,
            k: self.k,
            train: self.train.iter().map(|e| e.id.clone()).collect(),
            dev: self.dev.iter().map(|e| e.id.clone()).collect(),
        }
    }
}

/// Audit record of one split, ids only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub task: String,
    pub seed: u64,
    pub k: usize,
    pub train: Vec<String>,
    pub dev: Vec<String>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let n = n as u64;
    let zone = (u64::MAX / n) * n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

pub fn sample_kshot(
    examples: &[Example],
    labels: &LabelSet,
    k: usize,
    seed: u64,
) -> Result<KShotSplit, CorpusError> {
    if k == 0 {
        return Err(CorpusError::ZeroK);
    }
    let mut pools: Vec<Vec<&Example>> = vec![Vec::new(); labels.len()];
    for e in examples {
        if let Some(pool) = pools.get_mut(e.label) {
            pool.push(e);
        }
    }
    for (label, pool) in pools.iter().enumerate() {
        if pool.len() < 2 * k {
            return Err(CorpusError::InsufficientExamples {
                label: labels.name(label).unwrap_or_default().to_string(),
                available: pool.len(),
                required: 2 * k,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(k * labels.len());
    let mut dev = Vec::with_capacity(k * labels.len());
    for pool in &mut pools {
        let len = pool.len();
        for i in 0..2 * k {
            let j = i + uniform(&mut rng, len - i);
            pool.swap(i, j);
        }
        train.extend(pool[..k].iter().map(|e| (*e).clone()));
        dev.extend(pool[k..2 * k].iter().map(|e| (*e).clone()));
    }
    Ok(KShotSplit { seed, k, train, dev })
}

/// Number of train ids two splits have in common.
pub fn split_overlap(a: &KShotSplit, b: &KShotSplit) -> usize {
    let ids: HashSet<&str> = a.train.iter().map(|e| e.id.as_str()).collect();
    b.train.iter().filter(|e| ids.contains(e.id.as_str())).count()
}
