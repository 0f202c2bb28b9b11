use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[serde(rename = "adamw")]
    AdamW {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adamw() -> Self {
        OptimizerKind::AdamW {
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
            weight_decay: 0.0,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adamw()
    }
}

/// Gradient descent or AdamW (decoupled weight decay) over a list of tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.scaled_add(-lr, g);
                }
            }
            OptimizerKind::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
                    self.v = self.m.clone();
                }
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    ndarray::Zip::from(p)
                        .and(g)
                        .and(m)
                        .and(v)
                        .for_each(|p, &g, m, v| {
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                            *p -= lr * (update + weight_decay * *p);
                        });
                }
            }
        }
    }
}

/// AdamW for a flat parameter vector (used by mapping heads).
#[derive(Debug, Clone)]
pub struct FlatAdam {
    inner: Optimizer,
    buf: Vec<Array2<f64>>,
}

impl FlatAdam {
    pub fn new(kind: OptimizerKind) -> Self {
        FlatAdam {
            inner: Optimizer::new(kind),
            buf: Vec::new(),
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        if self.buf.is_empty() {
            self.buf = vec![Array2::zeros((1, params.len()))];
        }
        self.buf[0].iter_mut().zip(params.iter()).for_each(|(b, p)| *b = *p);
        let g = Array2::from_shape_vec((1, grads.len()), grads.to_vec()).expect("shape");
        self.inner.update(&mut self.buf, &[g], lr);
        params.iter_mut().zip(self.buf[0].iter()).for_each(|(p, b)| *p = *b);
    }
}
