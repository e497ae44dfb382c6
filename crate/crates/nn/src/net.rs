//! Network structure, initialization, forward pass, and reverse-mode
//! gradients. Three named blocks — encoder, decoder, discriminator — are
//! chained as f(D(E(x))); the reconstruction head taps the decoder output.

use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;
use bae_core::{Rng, Stream};

use crate::error::NnError;
use crate::loss::{loss_grad, loss_value, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    BatchNorm {
        features: usize,
    },
    SphereNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Encoder,
    Decoder,
    Discriminator,
}

pub const BLOCKS: [Block; 3] = [Block::Encoder, Block::Decoder, Block::Discriminator];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn block(&self, b: Block) -> &[LayerSpec] {
        match b {
            Block::Encoder => &self.encoder,
            Block::Decoder => &self.decoder,
            Block::Discriminator => &self.discriminator,
        }
    }

    /// Checks dimension chaining across all three blocks for the given
    /// input width, and that softmax appears only as the final
    /// discriminator activation.
    pub fn validate(&self, input_dim: usize) -> Result<(), NnError> {
        let mut dim = input_dim;
        for (bi, b) in BLOCKS.iter().enumerate() {
            let layers = self.block(*b);
            for (li, layer) in layers.iter().enumerate() {
                let last_disc = bi == 2 && li + 1 == layers.len();
                match layer {
                    LayerSpec::Dense {
                        inputs,
                        outputs,
                        activation,
                    } => {
                        if *inputs != dim {
                            return Err(NnError::InvalidSpec(format!(
                                "{b:?} layer {li}: expected {dim} inputs, spec says {inputs}"
                            )));
                        }
                        if *activation == Activation::Softmax && !last_disc {
                            return Err(NnError::InvalidSpec(
                                "softmax is only allowed as the final discriminator activation"
                                    .into(),
                            ));
                        }
                        dim = *outputs;
                    }
                    LayerSpec::BatchNorm { features } => {
                        if *features != dim {
                            return Err(NnError::InvalidSpec(format!(
                                "{b:?} layer {li}: batch_norm of {features} features on {dim} inputs"
                            )));
                        }
                    }
                    LayerSpec::SphereNorm => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Dense { weights: Matrix, bias: Vec<f64> },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    SphereNorm,
}

/// Per-block freeze flags. Frozen blocks receive no parameter updates;
/// gradients still flow through them to earlier blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Freeze {
    pub encoder: bool,
    pub decoder: bool,
    pub discriminator: bool,
}

impl Freeze {
    pub fn none() -> Self {
        Freeze::default()
    }

    pub fn is_frozen(&self, b: Block) -> bool {
        match b {
            Block::Encoder => self.encoder,
            Block::Decoder => self.decoder,
            Block::Discriminator => self.discriminator,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
    pub discriminator: Vec<LayerParams>,
    pub freeze: Freeze,
}

impl NetworkParams {
    pub fn block(&self, b: Block) -> &[LayerParams] {
        match b {
            Block::Encoder => &self.encoder,
            Block::Decoder => &self.decoder,
            Block::Discriminator => &self.discriminator,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Vec<LayerParams> {
        match b {
            Block::Encoder => &mut self.encoder,
            Block::Decoder => &mut self.decoder,
            Block::Discriminator => &mut self.discriminator,
        }
    }
}

/// Glorot-uniform initialization: U(+-sqrt(6 / (fan_in + fan_out))),
/// biases zero. Weights are drawn row-major per dense layer, blocks in
/// encoder, decoder, discriminator order; changing the draw order breaks
/// seed reproducibility.
pub fn init(spec: &NetworkSpec, rng: &Rng) -> NetworkParams {
    let mut wrng = rng.substream(Stream::WeightInit);
    let mut make_block = |layers: &[LayerSpec]| -> Vec<LayerParams> {
        layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense {
                    inputs, outputs, ..
                } => {
                    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                    let data: Vec<f64> = (0..inputs * outputs)
                        .map(|_| wrng.uniform(-limit, limit))
                        .collect();
                    LayerParams::Dense {
                        weights: Matrix::from_vec(*inputs, *outputs, data).expect("shape"),
                        bias: vec![0.0; *outputs],
                    }
                }
                LayerSpec::BatchNorm { features } => LayerParams::BatchNorm {
                    gamma: vec![1.0; *features],
                    beta: vec![0.0; *features],
                    running_mean: vec![0.0; *features],
                    running_var: vec![1.0; *features],
                },
                LayerSpec::SphereNorm => LayerParams::SphereNorm,
            })
            .collect()
    };
    NetworkParams {
        spec: spec.clone(),
        encoder: make_block(&spec.encoder),
        decoder: make_block(&spec.decoder),
        discriminator: make_block(&spec.discriminator),
        freeze: Freeze::none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.99;
const SPHERE_EPS: f64 = 1e-12;

enum LayerCache {
    Dense {
        input: Matrix,
        z: Matrix,
        out: Matrix,
        activation: Activation,
    },
    BatchNorm {
        xhat: Matrix,
        out: Matrix,
        inv_std: Vec<f64>,
        train_mode: bool,
        running_scale: Vec<f64>,
    },
    SphereNorm {
        out: Matrix,
        inv_norm: Vec<f64>,
    },
}

pub struct ForwardTrace {
    /// Decoder output (reconstruction head).
    pub recon: Matrix,
    /// Discriminator output (task head).
    pub prediction: Matrix,
    caches: [Vec<LayerCache>; 3],
}

impl ForwardTrace {
    fn block_caches(&self, b: Block) -> &[LayerCache] {
        match b {
            Block::Encoder => &self.caches[0],
            Block::Decoder => &self.caches[1],
            Block::Discriminator => &self.caches[2],
        }
    }

    /// Pre-activation matrices of the dense layers in a block, in order.
    pub fn dense_preactivations(&self, b: Block) -> Vec<&Matrix> {
        self.block_caches(b)
            .iter()
            .filter_map(|c| match c {
                LayerCache::Dense { z, .. } => Some(z),
                _ => None,
            })
            .collect()
    }

    /// Output of every layer in a block, in order.
    pub fn layer_outputs(&self, b: Block) -> Vec<&Matrix> {
        self.block_caches(b)
            .iter()
            .map(|c| match c {
                LayerCache::Dense { out, .. } => out,
                LayerCache::BatchNorm { out, .. } => out,
                LayerCache::SphereNorm { out, .. } => out,
            })
            .collect()
    }
}

fn apply_activation(z: &Matrix, act: Activation) -> Matrix {
    let mut out = z.clone();
    match act {
        Activation::Linear => {}
        Activation::Relu => {
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for v in out.data_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
        }
        Activation::Tanh => {
            for v in out.data_mut() {
                *v = v.tanh();
            }
        }
        Activation::Softmax => {
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    out
}

fn forward_block(
    layers: &mut [LayerParams],
    specs: &[LayerSpec],
    mut x: Matrix,
    mode: Mode,
) -> (Matrix, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    for (params, spec) in layers.iter_mut().zip(specs) {
        match (params, spec) {
            (LayerParams::Dense { weights, bias }, LayerSpec::Dense { activation, .. }) => {
                let mut z = x.matmul(weights).expect("validated shapes");
                for r in 0..z.rows() {
                    for (v, b) in z.row_mut(r).iter_mut().zip(bias.iter()) {
                        *v += b;
                    }
                }
                let out = apply_activation(&z, *activation);
                caches.push(LayerCache::Dense {
                    input: x,
                    z,
                    out: out.clone(),
                    activation: *activation,
                });
                x = out;
            }
            (
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
                LayerSpec::BatchNorm { features },
            ) => {
                let b = x.rows() as f64;
                let f = *features;
                let mut out = Matrix::zeros(x.rows(), f);
                let mut xhat = Matrix::zeros(x.rows(), f);
                let mut inv_std = vec![0.0; f];
                let mut running_scale = vec![0.0; f];
                if mode == Mode::Train {
                    for j in 0..f {
                        let mut mean = 0.0;
                        for r in 0..x.rows() {
                            mean += x.get(r, j);
                        }
                        mean /= b;
                        let mut var = 0.0;
                        for r in 0..x.rows() {
                            let d = x.get(r, j) - mean;
                            var += d * d;
                        }
                        var /= b;
                        let istd = 1.0 / (var + BN_EPS).sqrt();
                        inv_std[j] = istd;
                        for r in 0..x.rows() {
                            let xh = (x.get(r, j) - mean) * istd;
                            xhat.set(r, j, xh);
                            out.set(r, j, gamma[j] * xh + beta[j]);
                        }
                        running_mean[j] = BN_MOMENTUM * running_mean[j] + (1.0 - BN_MOMENTUM) * mean;
                        running_var[j] = BN_MOMENTUM * running_var[j] + (1.0 - BN_MOMENTUM) * var;
                    }
                } else {
                    for j in 0..f {
                        let istd = 1.0 / (running_var[j] + BN_EPS).sqrt();
                        inv_std[j] = istd;
                        running_scale[j] = gamma[j] * istd;
                        for r in 0..x.rows() {
                            let xh = (x.get(r, j) - running_mean[j]) * istd;
                            xhat.set(r, j, xh);
                            out.set(r, j, gamma[j] * xh + beta[j]);
                        }
                    }
                }
                caches.push(LayerCache::BatchNorm {
                    xhat,
                    out: out.clone(),
                    inv_std,
                    train_mode: mode == Mode::Train,
                    running_scale,
                });
                x = out;
            }
            (LayerParams::SphereNorm, LayerSpec::SphereNorm) => {
                let mut out = x.clone();
                let mut inv_norm = vec![1.0; x.rows()];
                for r in 0..x.rows() {
                    let n: f64 = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    // Zero rows pass through unchanged.
                    if n > SPHERE_EPS {
                        inv_norm[r] = 1.0 / n;
                        for v in out.row_mut(r) {
                            *v *= inv_norm[r];
                        }
                    }
                }
                caches.push(LayerCache::SphereNorm {
                    out: out.clone(),
                    inv_norm,
                });
                x = out;
            }
            _ => unreachable!("params built from the same spec"),
        }
    }
    (x, caches)
}

/// Full forward pass, retaining intermediate activations per layer. Train
/// mode updates batch-norm running statistics in place.
pub fn forward(params: &mut NetworkParams, x: &Matrix, mode: Mode) -> ForwardTrace {
    let spec = params.spec.clone();
    let (enc_out, enc_cache) = forward_block(&mut params.encoder, &spec.encoder, x.clone(), mode);
    let (recon, dec_cache) = forward_block(&mut params.decoder, &spec.decoder, enc_out, mode);
    let (prediction, disc_cache) =
        forward_block(&mut params.discriminator, &spec.discriminator, recon.clone(), mode);
    ForwardTrace {
        recon,
        prediction,
        caches: [enc_cache, dec_cache, disc_cache],
    }
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { d_weights: Matrix, d_bias: Vec<f64> },
    BatchNorm { d_gamma: Vec<f64>, d_beta: Vec<f64> },
    SphereNorm,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: Vec<LayerGrads>,
    pub decoder: Vec<LayerGrads>,
    pub discriminator: Vec<LayerGrads>,
}

impl Gradients {
    pub fn block(&self, b: Block) -> &[LayerGrads] {
        match b {
            Block::Encoder => &self.encoder,
            Block::Decoder => &self.decoder,
            Block::Discriminator => &self.discriminator,
        }
    }

    fn zero_block(grads: &mut Vec<LayerGrads>) {
        for g in grads.iter_mut() {
            match g {
                LayerGrads::Dense { d_weights, d_bias } => {
                    for v in d_weights.data_mut() {
                        *v = 0.0;
                    }
                    for v in d_bias.iter_mut() {
                        *v = 0.0;
                    }
                }
                LayerGrads::BatchNorm { d_gamma, d_beta } => {
                    for v in d_gamma.iter_mut() {
                        *v = 0.0;
                    }
                    for v in d_beta.iter_mut() {
                        *v = 0.0;
                    }
                }
                LayerGrads::SphereNorm => {}
            }
        }
    }
}

fn backward_block(
    layers: &[LayerParams],
    caches: &[LayerCache],
    mut d_out: Matrix,
) -> (Matrix, Vec<LayerGrads>) {
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(layers.len());
    for (params, cache) in layers.iter().zip(caches).rev() {
        match (params, cache) {
            (
                LayerParams::Dense { weights, .. },
                LayerCache::Dense {
                    input,
                    z,
                    out,
                    activation,
                },
            ) => {
                let d_z = match activation {
                    Activation::Linear => d_out,
                    Activation::Relu => {
                        let mut d = d_out;
                        for (v, zv) in d.data_mut().iter_mut().zip(z.data()) {
                            if *zv <= 0.0 {
                                *v = 0.0;
                            }
                        }
                        d
                    }
                    Activation::Sigmoid => {
                        let mut d = d_out;
                        for (v, yv) in d.data_mut().iter_mut().zip(out.data()) {
                            *v *= yv * (1.0 - yv);
                        }
                        d
                    }
                    Activation::Tanh => {
                        let mut d = d_out;
                        for (v, yv) in d.data_mut().iter_mut().zip(out.data()) {
                            *v *= 1.0 - yv * yv;
                        }
                        d
                    }
                    Activation::Softmax => {
                        // dz_i = y_i (dy_i - sum_j dy_j y_j), rowwise.
                        let mut d = Matrix::zeros(d_out.rows(), d_out.cols());
                        for r in 0..d_out.rows() {
                            let dy = d_out.row(r);
                            let y = out.row(r);
                            let s: f64 = dy.iter().zip(y).map(|(a, b)| a * b).sum();
                            for c in 0..d_out.cols() {
                                d.set(r, c, y[c] * (dy[c] - s));
                            }
                        }
                        d
                    }
                };
                let d_weights = input.transpose().matmul(&d_z).expect("shapes");
                let mut d_bias = vec![0.0; d_z.cols()];
                for r in 0..d_z.rows() {
                    for (b, &v) in d_bias.iter_mut().zip(d_z.row(r)) {
                        *b += v;
                    }
                }
                let d_input = d_z.matmul(&weights.transpose()).expect("shapes");
                grads.push(LayerGrads::Dense { d_weights, d_bias });
                d_out = d_input;
            }
            (
                LayerParams::BatchNorm { gamma, .. },
                LayerCache::BatchNorm {
                    xhat,
                    inv_std,
                    train_mode,
                    running_scale,
                    ..
                },
            ) => {
                let rows = d_out.rows();
                let cols = d_out.cols();
                let mut d_gamma = vec![0.0; cols];
                let mut d_beta = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        d_gamma[c] += d_out.get(r, c) * xhat.get(r, c);
                        d_beta[c] += d_out.get(r, c);
                    }
                }
                let mut d_input = Matrix::zeros(rows, cols);
                if *train_mode {
                    let b = rows as f64;
                    for c in 0..cols {
                        let scale = gamma[c] * inv_std[c] / b;
                        for r in 0..rows {
                            let v = b * d_out.get(r, c)
                                - d_beta[c]
                                - xhat.get(r, c) * d_gamma[c];
                            d_input.set(r, c, scale * v);
                        }
                    }
                } else {
                    for c in 0..cols {
                        for r in 0..rows {
                            d_input.set(r, c, d_out.get(r, c) * running_scale[c]);
                        }
                    }
                }
                grads.push(LayerGrads::BatchNorm { d_gamma, d_beta });
                d_out = d_input;
            }
            (LayerParams::SphereNorm, LayerCache::SphereNorm { out, inv_norm }) => {
                let mut d_input = Matrix::zeros(d_out.rows(), d_out.cols());
                for r in 0..d_out.rows() {
                    let dy = d_out.row(r);
                    let y = out.row(r);
                    let s: f64 = dy.iter().zip(y).map(|(a, b)| a * b).sum();
                    for c in 0..d_out.cols() {
                        d_input.set(r, c, (dy[c] - y[c] * s) * inv_norm[r]);
                    }
                }
                grads.push(LayerGrads::SphereNorm);
                d_out = d_input;
            }
            _ => unreachable!("cache built alongside params"),
        }
    }
    grads.reverse();
    (d_out, grads)
}

/// Composite loss: task_weight * task_loss(prediction, y)
/// + recon_weight * recon_loss(recon, x).
#[derive(Debug, Clone, Copy)]
pub struct CompositeLoss {
    pub task_weight: f64,
    pub recon_weight: f64,
    pub task_loss: LossKind,
    pub recon_loss: LossKind,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    pub task: f64,
    pub recon: f64,
}

/// Forward + reverse pass for one batch. Gradients of frozen blocks are
/// zeroed after backprop (gradients still flow through them). Train mode.
pub fn loss_and_grad(
    params: &mut NetworkParams,
    x: &Matrix,
    y: &Matrix,
    composite: &CompositeLoss,
) -> Result<(LossParts, Gradients), NnError> {
    let trace = forward(params, x, Mode::Train);
    let task = loss_value(composite.task_loss, &trace.prediction, y);
    let recon = loss_value(composite.recon_loss, &trace.recon, x);
    let total = composite.task_weight * task + composite.recon_weight * recon;
    if !total.is_finite() {
        return Err(NnError::NanLoss { batch_index: 0 });
    }

    let d_pred = loss_grad(composite.task_loss, &trace.prediction, y)
        .scaled(composite.task_weight);
    let (d_recon_from_disc, disc_grads) =
        backward_block(&params.discriminator, &trace.caches[2], d_pred);

    // The reconstruction head taps the decoder output: add its direct
    // gradient to what flows back from the discriminator.
    let d_recon_direct =
        loss_grad(composite.recon_loss, &trace.recon, x).scaled(composite.recon_weight);
    let d_recon_total = d_recon_from_disc.add(&d_recon_direct)?;

    let (d_enc_out, dec_grads) = backward_block(&params.decoder, &trace.caches[1], d_recon_total);
    let (_, enc_grads) = backward_block(&params.encoder, &trace.caches[0], d_enc_out);

    let mut grads = Gradients {
        encoder: enc_grads,
        decoder: dec_grads,
        discriminator: disc_grads,
    };
    if params.freeze.encoder {
        Gradients::zero_block(&mut grads.encoder);
    }
    if params.freeze.decoder {
        Gradients::zero_block(&mut grads.decoder);
    }
    if params.freeze.discriminator {
        Gradients::zero_block(&mut grads.discriminator);
    }
    Ok((LossParts { total, task, recon }, grads))
}
