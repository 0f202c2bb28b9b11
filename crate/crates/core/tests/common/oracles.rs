//! Independent reference computations shared by the test targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semprompt::lm::{LmBackend, TinyConfig, TinyMlm};
use semprompt::mapping::{
    ensemble_backward, member_loss, predict_weighted, EnsembleMember, LabelMapping, MappingEnsemble, MappingHead,
    MaskLogits,
};
use semprompt::template::RenderedInput;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub struct HeadInstance {
    pub logits: Vec<MaskLogits>,
    pub ensemble: MappingEnsemble,
    pub gold: Vec<usize>,
}

/// Random instance with |Y| <= 5, n_t <= 5, B <= 4.
pub fn head_instance(seed: u64) -> HeadInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.random_range(8..24);
    let labels = rng.random_range(2..=5);
    let members = rng.random_range(1..=4);
    let batch = rng.random_range(1..=6);
    let mut ms = Vec::new();
    for b in 0..members {
        let tokens: Vec<Vec<u32>> = (0..labels)
            .map(|_| (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..vocab) as u32).collect())
            .collect();
        let mapping = LabelMapping::new(&format!("m{b}"), tokens).unwrap();
        let head = MappingHead {
            weights: mapping
                .tokens
                .iter()
                .map(|t| t.iter().map(|_| rng.random_range(-1.5..1.5)).collect())
                .collect(),
            biases: (0..labels).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        ms.push(EnsembleMember { mapping, head });
    }
    let logits = (0..batch)
        .map(|_| MaskLogits::new((0..vocab).map(|_| rng.random_range(-3.0..3.0)).collect()))
        .collect();
    let gold = (0..batch).map(|_| rng.random_range(0..labels)).collect();
    HeadInstance {
        logits,
        ensemble: MappingEnsemble::new(ms).unwrap(),
        gold,
    }
}

fn ensemble_loss(inst: &HeadInstance, ensemble: &MappingEnsemble, logits: &[MaskLogits]) -> f64 {
    let preds: Vec<Vec<Vec<f64>>> = ensemble
        .members
        .iter()
        .map(|m| logits.iter().map(|l| predict_weighted(l, &m.mapping, &m.head).unwrap()).collect())
        .collect();
    member_loss(&preds, &inst.gold).unwrap()
}

/// Largest relative error between analytic and central-difference
/// gradients over every head parameter and every mask logit.
pub fn head_fd_error(inst: &HeadInstance) -> f64 {
    let h = 1e-5;
    let back = ensemble_backward(&inst.logits, &inst.ensemble, &inst.gold).unwrap();
    let mut worst: f64 = 0.0;
    for b in 0..inst.ensemble.len() {
        let head = &inst.ensemble.members[b].head;
        let coords: Vec<(usize, Option<usize>)> = (0..head.biases.len())
            .flat_map(|t| (0..head.weights[t].len()).map(move |j| (t, Some(j))).chain([(t, None)]))
            .collect();
        for (t, j) in coords {
            let bump = |delta: f64| {
                let mut e = inst.ensemble.clone();
                match j {
                    Some(j) => e.members[b].head.weights[t][j] += delta,
                    None => e.members[b].head.biases[t] += delta,
                }
                ensemble_loss(inst, &e, &inst.logits)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let analytic = match j {
                Some(j) => back.members[b].weights[t][j],
                None => back.members[b].biases[t],
            };
            worst = worst.max(rel_err(analytic, numeric, 1e-6));
        }
    }
    for i in 0..inst.logits.len() {
        for v in 0..inst.logits[i].len() {
            let bump = |delta: f64| {
                let mut l = inst.logits.clone();
                l[i].values[v] += delta;
                ensemble_loss(inst, &inst.ensemble, &l)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            worst = worst.max(rel_err(back.logits[i][v], numeric, 1e-6));
        }
    }
    worst
}

fn matvec_row(x: &[f64], w: &ndarray::Array2<f64>) -> Vec<f64> {
    let (r, c) = w.dim();
    assert_eq!(x.len(), r);
    (0..c).map(|j| (0..r).map(|i| x[i] * w[[i, j]]).sum()).collect()
}

/// Straight-line recomputation of a one-layer TinyMlm's mask logits with
/// explicit loops. Tensor order follows `param_names()`.
pub fn tiny_reference_logits(model: &TinyMlm, ids: &[u32], mask: usize) -> Vec<f64> {
    let names = model.param_names();
    let p = |n: &str| &model.params()[names.iter().position(|x| x == n).unwrap()];
    let (embed, pos) = (p("embed"), p("pos"));
    let d = embed.dim().1;
    let t = ids.len();
    let x: Vec<Vec<f64>> = (0..t)
        .map(|i| (0..d).map(|k| embed[[ids[i] as usize, k]] + pos[[i, k]]).collect())
        .collect();
    let q: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, p("layer0.wq"))).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, p("layer0.wk"))).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, p("layer0.wv"))).collect();
    let mut out = Vec::new();
    for i in 0..t {
        let scores: Vec<f64> = (0..t)
            .map(|j| (0..d).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let h: Vec<f64> = (0..d).map(|c| (0..t).map(|j| e[j] / z * v[j][c]).sum()).collect();
        let o = matvec_row(&h, p("layer0.wo"));
        let x1: Vec<f64> = (0..d).map(|c| x[i][c] + o[c]).collect();
        let pre = matvec_row(&x1, p("layer0.w1"));
        let b1 = p("layer0.b1");
        let act: Vec<f64> = pre
            .iter()
            .enumerate()
            .map(|(c, &u)| {
                let u = u + b1[[0, c]];
                0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh())
            })
            .collect();
        let f = matvec_row(&act, p("layer0.w2"));
        let b2 = p("layer0.b2");
        out.push((0..d).map(|c| x1[c] + f[c] + b2[[0, c]]).collect::<Vec<f64>>());
    }
    let hm = &out[mask];
    (0..embed.dim().0).map(|w| (0..d).map(|c| embed[[w, c]] * hm[c]).sum()).collect()
}

pub fn input(ids: &[u32], mask: usize) -> RenderedInput {
    RenderedInput {
        token_ids: ids.to_vec(),
        mask_position: mask,
        truncated: false,
    }
}

/// Max relative error of parameter gradients against central differences
/// on `coords` random coordinates of a d=16, P=1 model. The probe loss is
/// `sum_i c_i . logits_i` for fixed random `c`.
pub fn tiny_fd_error(seed: u64, coords: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = TinyConfig::new(14);
    config.seed = seed;
    let model = TinyMlm::new(config, 4).unwrap();
    let inputs = vec![input(&[2, 7, 4, 9, 3], 2), input(&[2, 4, 11, 3], 1)];
    let probes: Vec<Vec<f64>> = inputs
        .iter()
        .map(|_| (0..14).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let grads = model.gradients(&inputs, &probes).unwrap();
    let loss = |m: &TinyMlm| -> f64 {
        inputs
            .iter()
            .zip(&probes)
            .map(|(i, c)| {
                let l = m.score(i).unwrap();
                l.values.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        // coordinates the probe actually depends on
        let (t, i, j) = loop {
            let t = rng.random_range(0..model.params().len());
            let (r, c) = model.params()[t].dim();
            let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
            if grads[t][[i, j]].abs() > 1e-9 {
                break (t, i, j);
            }
        };
        let bump = |delta: f64| {
            let mut m = model.clone();
            m.params_mut()[t][[i, j]] += delta;
            loss(&m)
        };
        let numeric = (bump(h) - bump(-h)) / (2.0 * h);
        worst = worst.max(rel_err(grads[t][[i, j]], numeric, 1e-6));
    }
    worst
}
