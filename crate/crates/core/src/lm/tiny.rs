//! A small transformer encoder with tied input/output embeddings.
//!
//! Per layer (single-head attention, residual connections, no layer norm):
//!
//! ```text
//! q, k, v = x Wq, x Wk, x Wv
//! x1 = x + softmax(q kᵀ / √d) v Wo
//! x2 = x1 + gelu(x1 W1 + b1) W2 + b2
//! ```
//!
//! The input is `E[ids] + P[0..T]`; mask logits are `E · x_L[mask]`, so the
//! embedding table `E` doubles as the output projection.

use super::optim::{Optimizer, OptimizerKind};
use super::{validate_input, LmBackend, LmError, Objective, TokenId};
use crate::mapping::MaskLogits;
use crate::template::RenderedInput;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyConfig {
    pub vocab_size: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Feed-forward width; defaults to `2 * dim`.
    #[serde(default)]
    pub ffn_dim: Option<usize>,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

fn default_dim() -> usize {
    16
}
fn default_layers() -> usize {
    1
}
fn default_max_len() -> usize {
    64
}

impl TinyConfig {
    pub fn new(vocab_size: usize) -> Self {
        TinyConfig {
            vocab_size,
            dim: default_dim(),
            layers: default_layers(),
            ffn_dim: None,
            max_len: default_max_len(),
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }

    pub fn ffn(&self) -> usize {
        self.ffn_dim.unwrap_or(2 * self.dim)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if !(16..=128).contains(&self.dim) {
            return Err(LmError::Config(format!("dim {} outside 16..=128", self.dim)));
        }
        if !(1..=4).contains(&self.layers) {
            return Err(LmError::Config(format!("layers {} outside 1..=4", self.layers)));
        }
        if self.vocab_size < 6 {
            return Err(LmError::Config(format!("vocab_size {} too small", self.vocab_size)));
        }
        if self.max_len < 2 {
            return Err(LmError::Config("max_len must be at least 2".into()));
        }
        if self.ffn() == 0 {
            return Err(LmError::Config("ffn_dim must be positive".into()));
        }
        Ok(())
    }

    /// `(name, rows, cols)` of every parameter tensor, in storage order.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        let (d, f) = (self.dim, self.ffn());
        let mut s = vec![
            ("embed".to_string(), self.vocab_size, d),
            ("pos".to_string(), self.max_len, d),
        ];
        for l in 0..self.layers {
            for (name, r, c) in [
                ("wq", d, d),
                ("wk", d, d),
                ("wv", d, d),
                ("wo", d, d),
                ("w1", d, f),
                ("b1", 1, f),
                ("w2", f, d),
                ("b2", 1, d),
            ] {
                s.push((format!("layer{l}.{name}"), r, c));
            }
        }
        s
    }
}

const EMBED: usize = 0;
const POS: usize = 1;
const PER_LAYER: usize = 8;
const WQ: usize = 0;
const WK: usize = 1;
const WV: usize = 2;
const WO: usize = 3;
const W1: usize = 4;
const B1: usize = 5;
const W2: usize = 6;
const B2: usize = 7;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    h: Array2<f64>,
    x1: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
}

struct ForwardCache {
    ids: Vec<usize>,
    mask: usize,
    layers: Vec<LayerCache>,
    out: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TinyMlm {
    config: TinyConfig,
    params: Vec<Array2<f64>>,
    optimizer: Optimizer,
    mask_id: TokenId,
}

impl TinyMlm {
    /// Random initialisation from `config.seed`: embeddings and positions
    /// `N(0, 1/d)`, projection matrices `N(0, 1/fan_in)`, biases zero.
    pub fn new(config: TinyConfig, mask_id: TokenId) -> Result<Self, LmError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = config
            .shapes()
            .into_iter()
            .map(|(name, r, c)| {
                if name.ends_with("b1") || name.ends_with("b2") {
                    return Array2::zeros((r, c));
                }
                let fan_in = if name == "embed" || name == "pos" { c } else { r };
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("finite");
                Array2::from_shape_simple_fn((r, c), || normal.sample(&mut rng))
            })
            .collect();
        Ok(TinyMlm {
            optimizer: Optimizer::new(config.optimizer),
            config,
            params,
            mask_id,
        })
    }

    pub fn zeros(config: TinyConfig, mask_id: TokenId) -> Result<Self, LmError> {
        config.validate()?;
        let params = config.shapes().into_iter().map(|(_, r, c)| Array2::zeros((r, c))).collect();
        Ok(TinyMlm {
            optimizer: Optimizer::new(config.optimizer),
            config,
            params,
            mask_id,
        })
    }

    pub(crate) fn from_params(config: TinyConfig, mask_id: TokenId, params: Vec<Array2<f64>>) -> Result<Self, LmError> {
        config.validate()?;
        let shapes = config.shapes();
        if shapes.len() != params.len() {
            return Err(LmError::Checkpoint(format!("{} tensors, expected {}", params.len(), shapes.len())));
        }
        for ((name, r, c), p) in shapes.iter().zip(&params) {
            if p.dim() != (*r, *c) {
                return Err(LmError::Checkpoint(format!("{name}: shape {:?}, expected ({r}, {c})", p.dim())));
            }
        }
        Ok(TinyMlm {
            optimizer: Optimizer::new(config.optimizer),
            config,
            params,
            mask_id,
        })
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.config.shapes().into_iter().map(|(n, _, _)| n).collect()
    }

    /// The tied embedding / output projection matrix.
    pub fn output_projection(&self) -> &Array2<f64> {
        &self.params[EMBED]
    }

    fn layer(&self, l: usize, which: usize) -> &Array2<f64> {
        &self.params[2 + PER_LAYER * l + which]
    }

    fn forward(&self, input: &RenderedInput) -> Result<ForwardCache, LmError> {
        validate_input(input, self.config.vocab_size, self.config.max_len, self.mask_id)?;
        let ids: Vec<usize> = input.token_ids.iter().map(|&i| i as usize).collect();
        let t = ids.len();
        let d = self.config.dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut x = Array2::zeros((t, d));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &self.params[EMBED].row(id);
            row += &self.params[POS].row(i);
        }
        let mut layers = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let q = x.dot(self.layer(l, WQ));
            let k = x.dot(self.layer(l, WK));
            let v = x.dot(self.layer(l, WV));
            let mut attn = q.dot(&k.t()) * scale;
            softmax_rows(&mut attn);
            let h = attn.dot(&v);
            let x1 = &x + &h.dot(self.layer(l, WO));
            let z = x1.dot(self.layer(l, W1)) + &self.layer(l, B1).row(0);
            let r = z.mapv(gelu);
            let x2 = &x1 + &r.dot(self.layer(l, W2)) + &self.layer(l, B2).row(0);
            layers.push(LayerCache {
                x: std::mem::replace(&mut x, x2),
                q,
                k,
                v,
                attn,
                h,
                x1,
                z,
                r,
            });
        }
        Ok(ForwardCache {
            ids,
            mask: input.mask_position,
            layers,
            out: x,
        })
    }

    fn logits_from(&self, cache: &ForwardCache) -> MaskLogits {
        let hidden: ArrayView1<f64> = cache.out.row(cache.mask);
        MaskLogits::new(self.params[EMBED].dot(&hidden).to_vec())
    }

    /// Accumulates parameter gradients for one example given `dL/dlogits`.
    fn backward_into(&self, cache: &ForwardCache, dlogits: &[f64], grads: &mut [Array2<f64>]) {
        let d = self.config.dim;
        let scale = 1.0 / (d as f64).sqrt();
        let dl = ArrayView1::from(dlogits);
        let hidden = cache.out.row(cache.mask);
        // logits = E · h
        {
            let outer = dl
                .to_owned()
                .insert_axis(Axis(1))
                .dot(&hidden.to_owned().insert_axis(Axis(0)));
            grads[EMBED] += &outer;
        }
        let mut dx = Array2::zeros(cache.out.raw_dim());
        dx.row_mut(cache.mask).assign(&self.params[EMBED].t().dot(&dl));

        for (l, c) in cache.layers.iter().enumerate().rev() {
            let base = 2 + PER_LAYER * l;
            // feed-forward block
            let df = &dx;
            grads[base + B2] += &df.sum_axis(Axis(0)).insert_axis(Axis(0));
            grads[base + W2] += &c.r.t().dot(df);
            let dr = df.dot(&self.layer(l, W2).t());
            let dz = &dr * &c.z.mapv(gelu_grad);
            grads[base + B1] += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            grads[base + W1] += &c.x1.t().dot(&dz);
            let dx1 = &dx + &dz.dot(&self.layer(l, W1).t());
            // attention block
            grads[base + WO] += &c.h.t().dot(&dx1);
            let dh = dx1.dot(&self.layer(l, WO).t());
            let da = dh.dot(&c.v.t());
            let dv = c.attn.t().dot(&dh);
            let row_dot: Array1<f64> = (&da * &c.attn).sum_axis(Axis(1));
            let ds = (&da - &row_dot.insert_axis(Axis(1))) * &c.attn * scale;
            let dq = ds.dot(&c.k);
            let dk = ds.t().dot(&c.q);
            grads[base + WQ] += &c.x.t().dot(&dq);
            grads[base + WK] += &c.x.t().dot(&dk);
            grads[base + WV] += &c.x.t().dot(&dv);
            dx = dx1
                + dq.dot(&self.layer(l, WQ).t())
                + dk.dot(&self.layer(l, WK).t())
                + dv.dot(&self.layer(l, WV).t());
        }
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(i);
            let mut e = grads[EMBED].row_mut(id);
            e += &row;
            let mut p = grads[POS].row_mut(i);
            p += &row;
        }
    }

    fn zero_grads(&self) -> Vec<Array2<f64>> {
        self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect()
    }

    /// Parameter gradients of `Σ_i dlogits[i] · logits_i`.
    pub fn gradients(&self, inputs: &[RenderedInput], dlogits: &[Vec<f64>]) -> Result<Vec<Array2<f64>>, LmError> {
        if inputs.len() != dlogits.len() {
            return Err(LmError::GradientShape(format!("{} inputs, {} gradients", inputs.len(), dlogits.len())));
        }
        let mut grads = self.zero_grads();
        for (input, dl) in inputs.iter().zip(dlogits) {
            if dl.len() != self.config.vocab_size {
                return Err(LmError::GradientShape(format!(
                    "logit gradient of length {}, vocabulary {}",
                    dl.len(),
                    self.config.vocab_size
                )));
            }
            let cache = self.forward(input)?;
            self.backward_into(&cache, dl, &mut grads);
        }
        Ok(grads)
    }

    /// Backpropagates supplied logit gradients and applies one optimiser step.
    pub fn apply_logit_gradients(&mut self, inputs: &[RenderedInput], dlogits: &[Vec<f64>], lr: f64) -> Result<(), LmError> {
        let grads = self.gradients(inputs, dlogits)?;
        self.optimizer.update(&mut self.params, &grads, lr);
        Ok(())
    }
}

impl LmBackend for TinyMlm {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn score(&self, input: &RenderedInput) -> Result<MaskLogits, LmError> {
        let cache = self.forward(input)?;
        Ok(self.logits_from(&cache))
    }

    fn trainable(&self) -> bool {
        true
    }

    fn train_step(&mut self, inputs: &[RenderedInput], lr: f64, objective: &mut Objective<'_>) -> Result<f64, LmError> {
        let caches = inputs.iter().map(|i| self.forward(i)).collect::<Result<Vec<_>, _>>()?;
        let logits: Vec<MaskLogits> = caches.iter().map(|c| self.logits_from(c)).collect();
        let (loss, dlogits) = objective(&logits)?;
        if dlogits.len() != inputs.len() {
            return Err(LmError::GradientShape(format!("{} inputs, {} gradients", inputs.len(), dlogits.len())));
        }
        let mut grads = self.zero_grads();
        for (cache, dl) in caches.iter().zip(&dlogits) {
            if dl.len() != self.config.vocab_size {
                return Err(LmError::GradientShape(format!("logit gradient of length {}", dl.len())));
            }
            self.backward_into(cache, dl, &mut grads);
        }
        self.optimizer.update(&mut self.params, &grads, lr);
        Ok(loss)
    }
}
