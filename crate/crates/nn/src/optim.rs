//! SGD and Adam. Frozen blocks are skipped entirely: no parameter change,
//! no moment update, bit-identical tensors across any number of steps.

use bae_core::linalg::Matrix;

use crate::net::{Gradients, LayerGrads, LayerParams, NetworkParams, BLOCKS};

pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) {
        for b in BLOCKS {
            if params.freeze.is_frozen(b) {
                continue;
            }
            let gs: Vec<LayerGrads> = grads.block(b).to_vec();
            for (p, g) in params.block_mut(b).iter_mut().zip(gs.iter()) {
                apply_sgd(p, g, self.lr);
            }
        }
    }
}

fn apply_sgd(p: &mut LayerParams, g: &LayerGrads, lr: f64) {
    match (p, g) {
        (LayerParams::Dense { weights, bias }, LayerGrads::Dense { d_weights, d_bias }) => {
            for (w, dw) in weights.data_mut().iter_mut().zip(d_weights.data()) {
                *w -= lr * dw;
            }
            for (b, db) in bias.iter_mut().zip(d_bias) {
                *b -= lr * db;
            }
        }
        (
            LayerParams::BatchNorm { gamma, beta, .. },
            LayerGrads::BatchNorm { d_gamma, d_beta },
        ) => {
            for (x, dx) in gamma.iter_mut().zip(d_gamma) {
                *x -= lr * dx;
            }
            for (x, dx) in beta.iter_mut().zip(d_beta) {
                *x -= lr * dx;
            }
        }
        (LayerParams::SphereNorm, LayerGrads::SphereNorm) => {}
        _ => unreachable!("gradients built from the same spec"),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Adam with per-tensor first/second moments and bias correction. Each
/// tensor keeps its own step counter so freezing pauses its schedule.
pub struct Adam {
    pub hyper: AdamHyper,
    // Indexed [block][layer][tensor-within-layer].
    state: Option<[Vec<Vec<Moments>>; 3]>,
}

impl Adam {
    pub fn new(hyper: AdamHyper) -> Self {
        Adam { hyper, state: None }
    }

    pub fn with_lr(lr: f64) -> Self {
        Adam::new(AdamHyper {
            lr,
            ..AdamHyper::default()
        })
    }

    fn ensure_state(&mut self, params: &NetworkParams) {
        if self.state.is_some() {
            return;
        }
        let make = |layers: &[LayerParams]| -> Vec<Vec<Moments>> {
            layers
                .iter()
                .map(|l| match l {
                    LayerParams::Dense { weights, bias } => vec![
                        Moments {
                            m: vec![0.0; weights.data().len()],
                            v: vec![0.0; weights.data().len()],
                            t: 0,
                        },
                        Moments {
                            m: vec![0.0; bias.len()],
                            v: vec![0.0; bias.len()],
                            t: 0,
                        },
                    ],
                    LayerParams::BatchNorm { gamma, beta, .. } => vec![
                        Moments {
                            m: vec![0.0; gamma.len()],
                            v: vec![0.0; gamma.len()],
                            t: 0,
                        },
                        Moments {
                            m: vec![0.0; beta.len()],
                            v: vec![0.0; beta.len()],
                            t: 0,
                        },
                    ],
                    LayerParams::SphereNorm => vec![],
                })
                .collect()
        };
        self.state = Some([
            make(&params.encoder),
            make(&params.decoder),
            make(&params.discriminator),
        ]);
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) {
        self.ensure_state(params);
        let hyper = self.hyper;
        let state = self.state.as_mut().expect("initialized above");
        for (bi, b) in BLOCKS.iter().enumerate() {
            if params.freeze.is_frozen(*b) {
                continue;
            }
            let block_state = &mut state[bi];
            let gs: Vec<LayerGrads> = grads.block(*b).to_vec();
            for ((p, g), moments) in params
                .block_mut(*b)
                .iter_mut()
                .zip(gs.iter())
                .zip(block_state.iter_mut())
            {
                match (p, g) {
                    (
                        LayerParams::Dense { weights, bias },
                        LayerGrads::Dense { d_weights, d_bias },
                    ) => {
                        adam_update_matrix(weights, d_weights, &mut moments[0], hyper);
                        adam_update_vec(bias, d_bias, &mut moments[1], hyper);
                    }
                    (
                        LayerParams::BatchNorm { gamma, beta, .. },
                        LayerGrads::BatchNorm { d_gamma, d_beta },
                    ) => {
                        adam_update_vec(gamma, d_gamma, &mut moments[0], hyper);
                        adam_update_vec(beta, d_beta, &mut moments[1], hyper);
                    }
                    (LayerParams::SphereNorm, LayerGrads::SphereNorm) => {}
                    _ => unreachable!("gradients built from the same spec"),
                }
            }
        }
    }
}

fn adam_update_matrix(w: &mut Matrix, g: &Matrix, mom: &mut Moments, h: AdamHyper) {
    mom.t += 1;
    let bc1 = 1.0 - h.beta1.powi(mom.t as i32);
    let bc2 = 1.0 - h.beta2.powi(mom.t as i32);
    for ((w, &g), (m, v)) in w
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
    {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *w -= h.lr * mhat / (vhat.sqrt() + h.eps);
    }
}

fn adam_update_vec(w: &mut [f64], g: &[f64], mom: &mut Moments, h: AdamHyper) {
    mom.t += 1;
    let bc1 = 1.0 - h.beta1.powi(mom.t as i32);
    let bc2 = 1.0 - h.beta2.powi(mom.t as i32);
    for ((w, &g), (m, v)) in w
        .iter_mut()
        .zip(g)
        .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
    {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *w -= h.lr * mhat / (vhat.sqrt() + h.eps);
    }
}
