use super::{LabelMapping, MappingEnsemble, MappingError, MappingHead, MaskLogits};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Floor applied to `p(gold)` before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn predict_single(logits: &MaskLogits, mapping: &LabelMapping) -> Result<Vec<f64>, MappingError> {
    if !mapping.is_single_token() {
        return Err(MappingError::NotSingleToken(mapping.name.clone()));
    }
    logits.check_finite()?;
    let scores = (0..mapping.num_labels())
        .map(|t| mapping.gather(logits, t).map(|g| g[0]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(softmax(&scores))
}

/// Xavier-normal weights with `fan_in = n_t`, `fan_out = 1`; zero biases.
pub fn init_head(mapping: &LabelMapping, seed: u64) -> MappingHead {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = mapping
        .tokens
        .iter()
        .map(|toks| {
            let std = (2.0 / (toks.len() as f64 + 1.0)).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..toks.len()).map(|_| normal.sample(&mut rng)).collect()
        })
        .collect();
    MappingHead {
        weights,
        biases: vec![0.0; mapping.num_labels()],
    }
}

fn scores(logits: &MaskLogits, mapping: &LabelMapping, head: &MappingHead) -> Result<(Vec<f64>, Vec<Vec<f64>>), MappingError> {
    head.check_shape(mapping)?;
    logits.check_finite()?;
    let mut s = Vec::with_capacity(mapping.num_labels());
    let mut gathered = Vec::with_capacity(mapping.num_labels());
    for t in 0..mapping.num_labels() {
        let g = mapping.gather(logits, t)?;
        let dot: f64 = head.weights[t].iter().zip(&g).map(|(w, x)| w * x).sum();
        s.push(dot + head.biases[t]);
        gathered.push(g);
    }
    Ok((s, gathered))
}

pub fn predict_weighted(logits: &MaskLogits, mapping: &LabelMapping, head: &MappingHead) -> Result<Vec<f64>, MappingError> {
    Ok(softmax(&scores(logits, mapping, head)?.0))
}

/// Mean of the members' distributions. The running mean is exact when
/// members agree, so `B` identical members reproduce one member bit for bit.
pub fn predict_ensemble(logits: &MaskLogits, ensemble: &MappingEnsemble) -> Result<Vec<f64>, MappingError> {
    let first = ensemble.members.first().ok_or(MappingError::EmptyEnsemble)?;
    let mut acc = predict_weighted(logits, &first.mapping, &first.head)?;
    for (k, m) in ensemble.members.iter().enumerate().skip(1) {
        let p = predict_weighted(logits, &m.mapping, &m.head)?;
        for (a, x) in acc.iter_mut().zip(p) {
            *a += (x - *a) / (k + 1) as f64;
        }
    }
    Ok(acc)
}

fn nll(p: &[f64], gold: usize, floored: &mut usize) -> Result<f64, MappingError> {
    let pg = *p.get(gold).ok_or(MappingError::GoldOutOfRange { gold, labels: p.len() })?;
    if pg < PROB_FLOOR {
        *floored += 1;
    }
    Ok(-pg.max(PROB_FLOOR).ln())
}

/// Mean negative log-likelihood of the gold labels.
pub fn loss(predictions: &[Vec<f64>], gold: &[usize]) -> Result<f64, MappingError> {
    if predictions.is_empty() {
        return Err(MappingError::EmptyBatch);
    }
    if predictions.len() != gold.len() {
        return Err(MappingError::Shape(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let mut floored = 0;
    let mut total = 0.0;
    for (p, &g) in predictions.iter().zip(gold) {
        total += nll(p, g, &mut floored)?;
    }
    if floored > 0 {
        log::warn!("{floored} gold probabilities below {PROB_FLOOR:e} were floored");
    }
    Ok(total / predictions.len() as f64)
}

/// Ensemble training loss: mean over members of each member's batch loss.
/// `member_predictions[b][i]` is member `b`'s distribution for example `i`.
pub fn member_loss(member_predictions: &[Vec<Vec<f64>>], gold: &[usize]) -> Result<f64, MappingError> {
    if member_predictions.is_empty() {
        return Err(MappingError::EmptyEnsemble);
    }
    let mut total = 0.0;
    for preds in member_predictions {
        total += loss(preds, gold)?;
    }
    Ok(total / member_predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl HeadGradients {
    fn zeros_like(head: &MappingHead) -> Self {
        HeadGradients {
            weights: head.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: vec![0.0; head.biases.len()],
        }
    }

    pub(crate) fn add_assign(&mut self, other: &HeadGradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.biases.iter_mut().zip(&other.biases) {
            *x += y;
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights.iter_mut().flatten().for_each(|x| *x *= s);
        self.biases.iter_mut().for_each(|x| *x *= s);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(&self.biases).copied().collect()
    }
}

/// Gradients of the mean batch loss for one mapping head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadBackward {
    pub loss: f64,
    pub head: HeadGradients,
    /// `dL/dlogits` per example, dense over the vocabulary.
    pub logits: Vec<Vec<f64>>,
}

/// Loss and exact gradients of the mean negative log-likelihood with
/// respect to the head and to the mask logits. Per example
/// `dL/ds_t = p_t - [t = gold]`, chained through `s_t = M_t · g_t + b_t`.
pub fn head_backward(
    logits: &[MaskLogits],
    mapping: &LabelMapping,
    head: &MappingHead,
    gold: &[usize],
) -> Result<HeadBackward, MappingError> {
    if logits.is_empty() {
        return Err(MappingError::EmptyBatch);
    }
    if logits.len() != gold.len() {
        return Err(MappingError::Shape(format!("{} inputs for {} gold labels", logits.len(), gold.len())));
    }
    let n = logits.len() as f64;
    let mut grads = HeadGradients::zeros_like(head);
    let mut dlogits = Vec::with_capacity(logits.len());
    let mut total = 0.0;
    let mut floored = 0;
    for (l, &g) in logits.iter().zip(gold) {
        let (s, gathered) = scores(l, mapping, head)?;
        let p = softmax(&s);
        total += nll(&p, g, &mut floored)?;
        let mut dl = vec![0.0; l.len()];
        for t in 0..p.len() {
            let delta = (p[t] - if t == g { 1.0 } else { 0.0 }) / n;
            grads.biases[t] += delta;
            for (j, &id) in mapping.tokens[t].iter().enumerate() {
                grads.weights[t][j] += delta * gathered[t][j];
                dl[id as usize] += delta * head.weights[t][j];
            }
        }
        dlogits.push(dl);
    }
    if floored > 0 {
        log::warn!("{floored} gold probabilities below {PROB_FLOOR:e} were floored");
    }
    Ok(HeadBackward {
        loss: total / n,
        head: grads,
        logits: dlogits,
    })
}

/// Gradients of the mean batch loss with respect to `M` and `b`.
pub fn head_gradients(
    logits: &[MaskLogits],
    mapping: &LabelMapping,
    head: &MappingHead,
    gold: &[usize],
) -> Result<HeadGradients, MappingError> {
    head_backward(logits, mapping, head, gold).map(|b| b.head)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBackward {
    pub loss: f64,
    pub members: Vec<HeadGradients>,
    pub logits: Vec<Vec<f64>>,
}

/// Gradients of the member-averaged loss. Each member's head gradient is
/// its own batch gradient divided by `B`.
pub fn ensemble_backward(
    logits: &[MaskLogits],
    ensemble: &MappingEnsemble,
    gold: &[usize],
) -> Result<EnsembleBackward, MappingError> {
    if ensemble.is_empty() {
        return Err(MappingError::EmptyEnsemble);
    }
    let b = ensemble.len() as f64;
    let mut out = EnsembleBackward {
        loss: 0.0,
        members: Vec::with_capacity(ensemble.len()),
        logits: vec![vec![0.0; logits.first().map_or(0, MaskLogits::len)]; logits.len()],
    };
    for m in &ensemble.members {
        let mut back = head_backward(logits, &m.mapping, &m.head, gold)?;
        back.head.scale(1.0 / b);
        out.loss += back.loss / b;
        for (acc, dl) in out.logits.iter_mut().zip(&back.logits) {
            for (a, d) in acc.iter_mut().zip(dl) {
                *a += d / b;
            }
        }
        out.members.push(back.head);
    }
    Ok(out)
}
