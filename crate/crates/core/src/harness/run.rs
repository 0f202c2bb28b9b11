use super::experiment::{BackendSpec, Experiment, Selection};
use super::report::{AuditEvent, CellResult, EvalReport, SeedResult};
use super::HarnessError;
use crate::corpus::{sample_kshot, KShotSplit};
use crate::lm::{FlatAdam, LmBackend, LmError, RemoteBackend, TinyConfig, TinyMlm, Tokenizer};
use crate::mapping::{
    ensemble_backward, init_head, predict_ensemble, EnsembleMember, HeadGradients, LabelMapping, MappingEnsemble,
    MappingHead, MaskLogits, PROB_FLOOR,
};
use crate::template::RenderedInput;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

enum Backbone {
    Tiny(TinyConfig),
    Remote(Arc<RemoteBackend>),
}

/// Mask logits of a fixed backbone for every pool and test input.
struct Frozen {
    pool: Vec<MaskLogits>,
    test: Vec<MaskLogits>,
}

/// An experiment with inputs rendered, mappings resolved and the backend
/// connected. Shared read-only by every grid cell.
pub struct Prepared {
    pub experiment: Experiment,
    pub tokenizer: Tokenizer,
    pub pool_inputs: Vec<RenderedInput>,
    pub test_inputs: Vec<RenderedInput>,
    pub mappings: Vec<LabelMapping>,
    pool_index: HashMap<String, usize>,
    backbone: Backbone,
    frozen: Option<Frozen>,
}

impl Prepared {
    pub fn new(experiment: &Experiment) -> Result<Self, HarnessError> {
        experiment.validate()?;
        let tokenizer = experiment.tokenizer();
        let (backbone, vocab, max_len) = match &experiment.backend {
            BackendSpec::Tiny(spec) => {
                let config = TinyConfig {
                    vocab_size: tokenizer.vocab_size(),
                    dim: spec.dim,
                    layers: spec.layers,
                    ffn_dim: spec.ffn_dim,
                    max_len: spec.max_len,
                    seed: spec.seed,
                    optimizer: spec.optimizer,
                };
                config.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                (Backbone::Tiny(config), tokenizer.vocab_size(), spec.max_len)
            }
            BackendSpec::Remote(config) => {
                let remote = RemoteBackend::connect(config.clone())?;
                let hs = remote.handshake();
                if tokenizer.vocab_size() > hs.vocab_size {
                    return Err(HarnessError::Config(format!(
                        "tokenizer has {} entries but the service vocabulary has {}",
                        tokenizer.vocab_size(),
                        hs.vocab_size
                    )));
                }
                if hs.mask_id != tokenizer.mask_id() {
                    return Err(HarnessError::Config(format!(
                        "service mask id {} differs from tokenizer mask id {}",
                        hs.mask_id,
                        tokenizer.mask_id()
                    )));
                }
                (Backbone::Remote(Arc::new(remote)), hs.vocab_size, hs.max_len)
            }
        };
        let (pool_inputs, test_inputs) = experiment.render_all(&tokenizer, max_len)?;
        let truncated = pool_inputs.iter().chain(&test_inputs).filter(|i| i.truncated).count();
        if truncated > 0 {
            log::info!("{truncated} inputs were truncated to {max_len} tokens");
        }
        let mut mappings = Vec::with_capacity(experiment.mappings.len());
        for spec in &experiment.mappings {
            let m = spec.resolve(&experiment.labels, &tokenizer)?;
            m.check_vocab(vocab)?;
            mappings.push(m);
        }
        let pool_index = experiment
            .train_pool
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();

        let mut prepared = Prepared {
            experiment: experiment.clone(),
            tokenizer,
            pool_inputs,
            test_inputs,
            mappings,
            pool_index,
            backbone,
            frozen: None,
        };
        let trains_backbone = experiment.protocol.train_backbone && matches!(prepared.backbone, Backbone::Tiny(_));
        if experiment.protocol.train_backbone && !trains_backbone {
            log::warn!("backend is not trainable; only the mapping heads are fine-tuned");
        }
        if !trains_backbone {
            let backend: Box<dyn LmBackend> = match &prepared.backbone {
                Backbone::Tiny(config) => Box::new(TinyMlm::new(config.clone(), prepared.tokenizer.mask_id())?),
                Backbone::Remote(r) => Box::new((**r).clone()),
            };
            prepared.frozen = Some(Frozen {
                pool: backend.score_batch(&prepared.pool_inputs)?,
                test: backend.score_batch(&prepared.test_inputs)?,
            });
        }
        Ok(prepared)
    }

    fn indices(&self, examples: &[crate::corpus::Example]) -> Vec<usize> {
        examples.iter().map(|e| self.pool_index[&e.id]).collect()
    }

    fn fresh_ensemble(&self, seed: u64) -> Result<MappingEnsemble, HarnessError> {
        let head_seed = self.experiment.protocol.head_seed;
        let members = self
            .mappings
            .iter()
            .enumerate()
            .map(|(b, m)| EnsembleMember {
                mapping: m.clone(),
                head: init_head(m, mix(&[seed, head_seed, b as u64])),
            })
            .collect();
        Ok(if self.experiment.shared_head {
            MappingEnsemble::shared(members)?
        } else {
            MappingEnsemble::new(members)?
        })
    }
}

/// SplitMix64 fold, used to derive independent RNG seeds.
fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn head_params(head: &MappingHead) -> Vec<f64> {
    head.weights.iter().flatten().chain(&head.biases).copied().collect()
}

fn set_head_params(head: &mut MappingHead, flat: &[f64]) {
    let mut it = flat.iter();
    for w in head.weights.iter_mut().flatten().chain(head.biases.iter_mut()) {
        *w = *it.next().expect("flat head length");
    }
}

/// Adam state for the mapping heads, one per trainable head.
struct HeadOptimizer {
    states: Vec<FlatAdam>,
}

impl HeadOptimizer {
    fn new(ensemble: &MappingEnsemble, kind: crate::lm::OptimizerKind) -> Self {
        let n = if ensemble.shared_head { 1 } else { ensemble.len() };
        HeadOptimizer {
            states: (0..n).map(|_| FlatAdam::new(kind)).collect(),
        }
    }

    fn step(&mut self, ensemble: &mut MappingEnsemble, grads: &[HeadGradients], lr: f64) {
        if ensemble.shared_head {
            let mut total = grads[0].clone();
            for g in &grads[1..] {
                total.add_assign(g);
            }
            let mut p = head_params(&ensemble.members[0].head);
            self.states[0].update(&mut p, &total.flatten(), lr);
            for m in &mut ensemble.members {
                set_head_params(&mut m.head, &p);
            }
        } else {
            for ((m, g), state) in ensemble.members.iter_mut().zip(grads).zip(&mut self.states) {
                let mut p = head_params(&m.head);
                state.update(&mut p, &g.flatten(), lr);
                set_head_params(&mut m.head, &p);
            }
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and mean negative log-likelihood of the ensemble.
fn evaluate(logits: &[MaskLogits], ensemble: &MappingEnsemble, gold: &[usize]) -> Result<(f64, f64, Vec<Vec<f64>>), HarnessError> {
    let mut correct = 0usize;
    let mut nll = 0.0;
    let mut probs = Vec::with_capacity(logits.len());
    for (l, &g) in logits.iter().zip(gold) {
        let p = predict_ensemble(l, ensemble)?;
        if argmax(&p) == g {
            correct += 1;
        }
        nll -= p[g].max(PROB_FLOOR).ln();
        probs.push(p);
    }
    let n = gold.len().max(1) as f64;
    Ok((correct as f64 / n, nll / n, probs))
}

/// One fine-tuned grid cell, restored to its dev-selected checkpoint.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub dev_accuracy: f64,
    pub best_step: usize,
    pub test_accuracy: f64,
    pub test_probabilities: Vec<Vec<f64>>,
    pub ensemble: MappingEnsemble,
    pub model: Option<TinyMlm>,
    pub audit: Vec<AuditEvent>,
}

/// Fine-tunes on `split.train`, selects the checkpoint with the best dev
/// accuracy (lower dev loss, then earlier step on ties) and evaluates it on
/// the test set.
pub fn train_cell(prepared: &Prepared, split: &KShotSplit, batch_size: usize, lr: f64) -> Result<TrainedCell, HarnessError> {
    let protocol = &prepared.experiment.protocol;
    let train_idx = prepared.indices(&split.train);
    let dev_idx = prepared.indices(&split.dev);
    let train_gold: Vec<usize> = split.train.iter().map(|e| e.label).collect();
    let dev_gold: Vec<usize> = split.dev.iter().map(|e| e.label).collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| prepared.pool_inputs[i].clone()).collect::<Vec<_>>();
    let dev_inputs = pick(&dev_idx);

    let mut model = match (&prepared.backbone, &prepared.frozen) {
        (Backbone::Tiny(config), None) => Some(TinyMlm::new(config.clone(), prepared.tokenizer.mask_id())?),
        _ => None,
    };
    let mut ensemble = prepared.fresh_ensemble(split.seed)?;
    let mut head_opt = HeadOptimizer::new(&ensemble, protocol.head_optimizer);
    let head_lr = protocol.head_lr.unwrap_or(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[split.seed, batch_size as u64, lr.to_bits()]));

    let dev_logits = |model: &Option<TinyMlm>| -> Result<Vec<MaskLogits>, HarnessError> {
        match (&prepared.frozen, model) {
            (Some(f), _) => Ok(dev_idx.iter().map(|&i| f.pool[i].clone()).collect()),
            (None, Some(m)) => Ok(m.score_batch(&dev_inputs)?),
            (None, None) => unreachable!("a trained backbone always has a model"),
        }
    };

    let key = |step| (split.seed, batch_size, lr, step);
    let mut audit = Vec::new();
    let mut record_dev = |step: usize, acc: f64| {
        let (seed, batch_size, learning_rate, step) = key(step);
        audit.push(AuditEvent::DevEval {
            seed,
            batch_size,
            learning_rate,
            step,
            accuracy: acc,
        });
    };

    let (acc0, loss0, _) = evaluate(&dev_logits(&model)?, &ensemble, &dev_gold)?;
    record_dev(0, acc0);
    let mut best = (acc0, loss0, 0usize, ensemble.clone(), model.clone());
    let mut stale = 0usize;

    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut cursor = order.len();
    for step in 1..=protocol.max_steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let gold: Vec<usize> = batch.iter().map(|&j| train_gold[j]).collect();
        let head_grads = match (&prepared.frozen, model.as_mut()) {
            (Some(f), _) => {
                let logits: Vec<MaskLogits> = batch.iter().map(|&j| f.pool[train_idx[j]].clone()).collect();
                ensemble_backward(&logits, &ensemble, &gold)?.members
            }
            (None, Some(m)) => {
                let inputs: Vec<RenderedInput> = batch.iter().map(|&j| prepared.pool_inputs[train_idx[j]].clone()).collect();
                let mut grads = None;
                let ens = &ensemble;
                m.train_step(&inputs, lr, &mut |logits: &[MaskLogits]| {
                    let back = ensemble_backward(logits, ens, &gold).map_err(|e| LmError::Objective(e.to_string()))?;
                    grads = Some(back.members);
                    Ok((back.loss, back.logits))
                })?;
                grads.expect("objective ran")
            }
            (None, None) => unreachable!("a trained backbone always has a model"),
        };
        head_opt.step(&mut ensemble, &head_grads, head_lr);

        if step % protocol.eval_every == 0 || step == protocol.max_steps {
            let (acc, loss, _) = evaluate(&dev_logits(&model)?, &ensemble, &dev_gold)?;
            record_dev(step, acc);
            if acc > best.0 || (acc == best.0 && loss < best.1) {
                best = (acc, loss, step, ensemble.clone(), model.clone());
                stale = 0;
            } else {
                stale += 1;
                if protocol.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
    }

    let (dev_accuracy, _, best_step, ensemble, model) = best;
    let (seed, bs, learning_rate, step) = key(best_step);
    audit.push(AuditEvent::CheckpointSelected {
        seed,
        batch_size: bs,
        learning_rate,
        step,
    });
    let test_logits = match (&prepared.frozen, &model) {
        (Some(f), _) => f.test.clone(),
        (None, Some(m)) => m.score_batch(&prepared.test_inputs)?,
        (None, None) => unreachable!("a trained backbone always has a model"),
    };
    let test_gold: Vec<usize> = prepared.experiment.test.iter().map(|e| e.label).collect();
    let (test_accuracy, _, test_probabilities) = evaluate(&test_logits, &ensemble, &test_gold)?;
    audit.push(AuditEvent::TestEval {
        seed,
        batch_size: bs,
        learning_rate,
        step,
        accuracy: test_accuracy,
    });
    Ok(TrainedCell {
        dev_accuracy,
        best_step,
        test_accuracy,
        test_probabilities,
        ensemble,
        model,
        audit,
    })
}

/// Samples one split per seed. Fails before any training if a label has
/// fewer than `2k` examples.
pub fn sample_splits(experiment: &Experiment) -> Result<Vec<KShotSplit>, HarnessError> {
    let p = &experiment.protocol;
    p.seeds
        .iter()
        .map(|&s| Ok(sample_kshot(&experiment.train_pool, &experiment.labels, p.k, s)?))
        .collect()
}

/// Runs every (seed, batch size, learning rate) cell and aggregates the
/// per-seed selected accuracies.
pub fn run_experiment(experiment: &Experiment) -> Result<EvalReport, HarnessError> {
    let prepared = Prepared::new(experiment)?;
    let splits = sample_splits(experiment)?;
    run_prepared(&prepared, &splits)
}

pub(crate) fn run_prepared(prepared: &Prepared, splits: &[KShotSplit]) -> Result<EvalReport, HarnessError> {
    let experiment = &prepared.experiment;
    let p = &experiment.protocol;
    let mut cells = Vec::new();
    for (s, _) in splits.iter().enumerate() {
        for &bs in &p.batch_sizes {
            for &lr in &p.learning_rates {
                cells.push((s, bs, lr));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(p.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<TrainedCell, HarnessError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, bs, lr)| {
                let r = train_cell(prepared, &splits[s], bs, lr);
                match &r {
                    Ok(c) => log::info!(
                        "seed {} bs {bs} lr {lr:e}: dev {:.3} test {:.3} (step {})",
                        splits[s].seed,
                        c.dev_accuracy,
                        c.test_accuracy,
                        c.best_step
                    ),
                    Err(e) => log::warn!("seed {} bs {bs} lr {lr:e} failed: {e}", splits[s].seed),
                }
                r
            })
            .collect()
    });

    let mut results = Vec::with_capacity(cells.len());
    let mut audit = Vec::new();
    let mut seeds = Vec::new();
    let mut first_error = None;
    for (s, split) in splits.iter().enumerate() {
        let mut chosen: Option<(f64, &TrainedCell, usize, f64)> = None;
        for (&(cs, bs, lr), outcome) in cells.iter().zip(&outcomes) {
            if cs != s {
                continue;
            }
            match outcome {
                Ok(cell) => {
                    audit.extend(cell.audit.iter().cloned());
                    results.push(CellResult {
                        seed: split.seed,
                        batch_size: bs,
                        learning_rate: lr,
                        dev_accuracy: Some(cell.dev_accuracy),
                        test_accuracy: Some(cell.test_accuracy),
                        best_step: Some(cell.best_step),
                        error: None,
                    });
                    let score = match p.selection {
                        Selection::Dev => cell.dev_accuracy,
                        Selection::TestMax => cell.test_accuracy,
                    };
                    if chosen.as_ref().is_none_or(|c| score > c.0) {
                        chosen = Some((score, cell, bs, lr));
                    }
                }
                Err(e) => {
                    first_error.get_or_insert_with(|| e.to_string());
                    results.push(CellResult {
                        seed: split.seed,
                        batch_size: bs,
                        learning_rate: lr,
                        dev_accuracy: None,
                        test_accuracy: None,
                        best_step: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        if let Some((_, cell, bs, lr)) = chosen {
            seeds.push(SeedResult {
                seed: split.seed,
                accuracy: cell.test_accuracy,
                batch_size: bs,
                learning_rate: lr,
                test_probabilities: cell.test_probabilities.clone(),
            });
        }
    }
    if seeds.is_empty() {
        return Err(HarnessError::AllCellsFailed(first_error.unwrap_or_default()));
    }
    Ok(EvalReport::from_seeds(
        &experiment.task,
        experiment.config_hash(),
        experiment.labels.clone(),
        seeds,
        results,
        experiment.test.iter().map(|e| e.label).collect(),
        audit,
    ))
}
