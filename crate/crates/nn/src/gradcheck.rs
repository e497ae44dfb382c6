//! Central-finite-difference gradient verification. The numeric side only
//! ever calls the forward pass, so it stays independent of the backprop
//! code it checks.

use bae_core::linalg::Matrix;
use bae_core::{Rng, Stream};

use crate::loss::{loss_value, LossKind};
use crate::net::{
    forward, init, loss_and_grad, Activation, CompositeLoss, Gradients, LayerGrads, LayerParams,
    LayerSpec, Mode, NetworkParams, NetworkSpec, BLOCKS,
};

pub fn flatten_params(p: &NetworkParams) -> Vec<f64> {
    let mut out = Vec::new();
    for b in BLOCKS {
        for layer in p.block(b) {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    out.extend_from_slice(weights.data());
                    out.extend_from_slice(bias);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.extend_from_slice(gamma);
                    out.extend_from_slice(beta);
                }
                LayerParams::SphereNorm => {}
            }
        }
    }
    out
}

pub fn unflatten_params(p: &mut NetworkParams, v: &[f64]) {
    let mut i = 0;
    for b in BLOCKS {
        for layer in p.block_mut(b).iter_mut() {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    for w in weights.data_mut() {
                        *w = v[i];
                        i += 1;
                    }
                    for x in bias.iter_mut() {
                        *x = v[i];
                        i += 1;
                    }
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    for x in gamma.iter_mut() {
                        *x = v[i];
                        i += 1;
                    }
                    for x in beta.iter_mut() {
                        *x = v[i];
                        i += 1;
                    }
                }
                LayerParams::SphereNorm => {}
            }
        }
    }
    assert_eq!(i, v.len());
}

pub fn flatten_grads(g: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for b in BLOCKS {
        for layer in g.block(b) {
            match layer {
                LayerGrads::Dense { d_weights, d_bias } => {
                    out.extend_from_slice(d_weights.data());
                    out.extend_from_slice(d_bias);
                }
                LayerGrads::BatchNorm { d_gamma, d_beta } => {
                    out.extend_from_slice(d_gamma);
                    out.extend_from_slice(d_beta);
                }
                LayerGrads::SphereNorm => {}
            }
        }
    }
    out
}

pub fn composite_loss_value(
    params: &mut NetworkParams,
    x: &Matrix,
    y: &Matrix,
    c: &CompositeLoss,
) -> f64 {
    let trace = forward(params, x, Mode::Train);
    c.task_weight * loss_value(c.task_loss, &trace.prediction, y)
        + c.recon_weight * loss_value(c.recon_loss, &trace.recon, x)
}

struct Config {
    spec: NetworkSpec,
    composite: CompositeLoss,
    input_dim: usize,
    classes: usize,
    has_sigmoid: bool,
}

/// Random architecture drawing from every layer kind; the task head is
/// either linear + MSE or softmax + CCE, the reconstruction loss either
/// MSE or (behind a sigmoid decoder) BCE.
fn random_config(rng: &mut Rng) -> Config {
    let input_dim = 2 + rng.below(3);
    let hidden_acts = [
        Activation::Linear,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ];
    let pick = |rng: &mut Rng| hidden_acts[rng.below(hidden_acts.len())];

    let bottleneck = 1 + rng.below(3);
    let enc_act = pick(rng);
    let mut encoder = vec![LayerSpec::Dense {
        inputs: input_dim,
        outputs: bottleneck,
        activation: enc_act,
    }];
    match rng.below(3) {
        0 => encoder.push(LayerSpec::BatchNorm {
            features: bottleneck,
        }),
        1 => encoder.push(LayerSpec::SphereNorm),
        _ => {}
    }

    let use_bce = rng.below(2) == 0;
    let decoder = vec![LayerSpec::Dense {
        inputs: bottleneck,
        outputs: input_dim,
        activation: if use_bce {
            Activation::Sigmoid
        } else {
            Activation::Linear
        },
    }];

    let use_cce = rng.below(2) == 0;
    let classes = if use_cce { 2 + rng.below(2) } else { 1 };
    let hidden = 2 + rng.below(3);
    let disc_act = pick(rng);
    let discriminator = vec![
        LayerSpec::Dense {
            inputs: input_dim,
            outputs: hidden,
            activation: disc_act,
        },
        LayerSpec::Dense {
            inputs: hidden,
            outputs: classes,
            activation: if use_cce {
                Activation::Softmax
            } else {
                Activation::Linear
            },
        },
    ];
    let has_sigmoid =
        use_bce || enc_act == Activation::Sigmoid || disc_act == Activation::Sigmoid;

    Config {
        spec: NetworkSpec {
            encoder,
            decoder,
            discriminator,
        },
        composite: CompositeLoss {
            task_weight: rng.uniform(0.1, 0.9),
            recon_weight: rng.uniform(0.1, 0.9),
            task_loss: if use_cce {
                LossKind::CategoricalCrossEntropy
            } else {
                LossKind::Mse
            },
            recon_loss: if use_bce {
                LossKind::BinaryCrossEntropy
            } else {
                LossKind::Mse
            },
        },
        input_dim,
        classes,
        has_sigmoid,
    }
}

/// Central differences are meaningless within the step size of a relu
/// kink; configs whose pre-activations come that close are re-drawn.
fn min_abs_relu_preactivation(
    params: &mut NetworkParams,
    spec: &NetworkSpec,
    x: &Matrix,
) -> f64 {
    let trace = forward(params, x, Mode::Train);
    let mut min_abs = f64::INFINITY;
    for b in BLOCKS {
        let mut dense_idx = 0;
        let pre = trace.dense_preactivations(b);
        for layer in spec.block(b) {
            if let LayerSpec::Dense { activation, .. } = layer {
                if *activation == Activation::Relu {
                    for v in pre[dense_idx].data() {
                        min_abs = min_abs.min(v.abs());
                    }
                }
                dense_idx += 1;
            }
        }
    }
    min_abs
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub configs_checked: usize,
    pub configs_drawn: usize,
    pub worst_rel_err: f64,
    pub elapsed_secs: f64,
}

/// Runs `n_configs` random layer/loss configurations, comparing every
/// analytic parameter gradient against central differences (h = 1e-5).
/// Tolerance is 1e-6 relative, relaxed to 1e-4 when a sigmoid path is in
/// play. Returns an error string naming the first violation.
pub fn run_random_config_suite(n_configs: usize, seed: u64) -> Result<SuiteReport, String> {
    let start = std::time::Instant::now();
    let mut rng = Rng::with_stream(seed, Stream::Probes);
    let mut covered = std::collections::HashSet::new();
    let h = 1e-5;
    let mut case = 0usize;
    let mut drawn = 0usize;
    let mut worst_rel_err = 0.0_f64;
    while case < n_configs {
        drawn += 1;
        if drawn > 4 * n_configs {
            return Err("too many kink re-draws".into());
        }
        let cfg = random_config(&mut rng);
        let batch = 3 + rng.below(4);
        // Inputs kept in (0, 1) so BCE reconstruction targets are valid and
        // pre-activations stay away from sigmoid saturation.
        let x_data: Vec<f64> = (0..batch * cfg.input_dim)
            .map(|_| rng.uniform(0.05, 0.95))
            .collect();
        let x = Matrix::from_vec(batch, cfg.input_dim, x_data).expect("shape");
        let y = if cfg.composite.task_loss == LossKind::CategoricalCrossEntropy {
            let mut data = vec![0.0; batch * cfg.classes];
            for r in 0..batch {
                data[r * cfg.classes + rng.below(cfg.classes)] = 1.0;
            }
            Matrix::from_vec(batch, cfg.classes, data).expect("shape")
        } else {
            let data: Vec<f64> = (0..batch).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Matrix::from_vec(batch, 1, data).expect("shape")
        };

        let mut params = init(&cfg.spec, &Rng::new(1000 + drawn as u64));
        if min_abs_relu_preactivation(&mut params, &cfg.spec, &x) < 1e-3 {
            continue;
        }
        case += 1;
        let (_, grads) =
            loss_and_grad(&mut params, &x, &y, &cfg.composite).map_err(|e| e.to_string())?;
        let analytic = flatten_grads(&grads);
        let theta0 = flatten_params(&params);
        let tol = if cfg.has_sigmoid { 1e-4 } else { 1e-6 };
        for i in 0..theta0.len() {
            let mut theta = theta0.clone();
            theta[i] += h;
            unflatten_params(&mut params, &theta);
            let up = composite_loss_value(&mut params, &x, &y, &cfg.composite);
            theta[i] = theta0[i] - h;
            unflatten_params(&mut params, &theta);
            let down = composite_loss_value(&mut params, &x, &y, &cfg.composite);
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[i] - numeric).abs()
                / analytic[i].abs().max(numeric.abs()).max(1.0);
            worst_rel_err = worst_rel_err.max(err);
            if err > tol {
                return Err(format!(
                    "config {case} param {i}: analytic {} vs numeric {} (err {err:e}, tol {tol:e})",
                    analytic[i], numeric
                ));
            }
        }
        unflatten_params(&mut params, &theta0);

        for l in cfg
            .spec
            .encoder
            .iter()
            .chain(&cfg.spec.decoder)
            .chain(&cfg.spec.discriminator)
        {
            match l {
                LayerSpec::Dense { activation, .. } => {
                    covered.insert(format!("{activation:?}"));
                }
                LayerSpec::BatchNorm { .. } => {
                    covered.insert("BatchNorm".to_string());
                }
                LayerSpec::SphereNorm => {
                    covered.insert("SphereNorm".to_string());
                }
            }
        }
        covered.insert(format!("{:?}", cfg.composite.task_loss));
        covered.insert(format!("{:?}", cfg.composite.recon_loss));
    }
    for needed in [
        "Linear",
        "Relu",
        "Sigmoid",
        "Tanh",
        "Softmax",
        "BatchNorm",
        "SphereNorm",
        "Mse",
        "BinaryCrossEntropy",
        "CategoricalCrossEntropy",
    ] {
        if !covered.contains(needed) {
            return Err(format!("coverage gap: {needed}"));
        }
    }
    Ok(SuiteReport {
        configs_checked: case,
        configs_drawn: drawn,
        worst_rel_err,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
