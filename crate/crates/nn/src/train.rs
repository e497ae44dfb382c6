//! The five training procedures: three adversarial schedules that
//! alternate a full-network phase with an autoencoder phase under different
//! freeze patterns, the unsupervised-then-task baseline, and the plain
//! discriminator baseline.

use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;
use bae_core::{Dataset, Rng, Stream, Task};

use crate::error::NnError;
use crate::loss::{accuracy, loss_value, LossKind};
use crate::net::{forward, init, loss_and_grad, CompositeLoss, Mode, NetworkParams, NetworkSpec};
use crate::optim::{Adam, AdamHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BaeType0,
    BaeType1,
    BaeType2,
    UaeThenNn,
    PlainNn,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::BaeType0 => "bae_type0",
            Algorithm::BaeType1 => "bae_type1",
            Algorithm::BaeType2 => "bae_type2",
            Algorithm::UaeThenNn => "uae_then_nn",
            Algorithm::PlainNn => "plain_nn",
        }
    }
}

/// How the two phases of the adversarial schedules map onto epochs:
/// `Alternating` runs phase A on odd epochs and phase B on even epochs;
/// `Both` runs A then B inside every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSchedule {
    #[default]
    Alternating,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    Mse,
    Accuracy,
}

impl EvalMetric {
    /// True when `a` is strictly better than `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            EvalMetric::Mse => a < b,
            EvalMetric::Accuracy => a > b,
        }
    }

    pub fn worst(&self) -> f64 {
        match self {
            EvalMetric::Mse => f64::INFINITY,
            EvalMetric::Accuracy => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub algorithm: Algorithm,
    pub w_nn: f64,
    pub w_ae: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub task_loss: LossKind,
    pub recon_loss: LossKind,
    pub eval_metric: EvalMetric,
    #[serde(default)]
    pub phases_per_epoch: PhaseSchedule,
}

impl TrainingPlan {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(0.0..=1.0).contains(&self.w_nn) || !(0.0..=1.0).contains(&self.w_ae) {
            return Err(NnError::InvalidData(format!(
                "weights must lie in [0, 1], got w_nn = {}, w_ae = {}",
                self.w_nn, self.w_ae
            )));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(NnError::InvalidData(
                "need epochs >= 1 and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub recon_loss: f64,
    pub test_metric: f64,
    /// Whether this epoch competes for the best checkpoint (stage 2 only
    /// for the two-stage baseline).
    pub counts_for_best: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_test_metric: f64,
    pub best_epoch: usize,
    pub failed: bool,
}

impl MetricTrace {
    /// Recomputes the best metric from the per-epoch rows (bookkeeping
    /// audit).
    pub fn recompute_best(&self, metric: EvalMetric) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for e in self.epochs.iter().filter(|e| e.counts_for_best) {
            if best.is_none() || metric.better(e.test_metric, best.unwrap().0) {
                best = Some((e.test_metric, e.epoch));
            }
        }
        best
    }
}

pub struct TrainOutcome {
    /// Parameters at the best epoch.
    pub params: NetworkParams,
    /// Parameters after the last completed epoch.
    pub final_params: NetworkParams,
    pub trace: MetricTrace,
}

struct Phase {
    freeze_encoder: bool,
    freeze_decoder: bool,
    freeze_discriminator: bool,
    task_weight: f64,
    recon_weight: f64,
}

fn evaluate(params: &mut NetworkParams, test: &Dataset, metric: EvalMetric) -> f64 {
    let trace = forward(params, &test.inputs, Mode::Eval);
    match metric {
        EvalMetric::Mse => loss_value(LossKind::Mse, &trace.prediction, &test.targets),
        EvalMetric::Accuracy => accuracy(&trace.prediction, &test.targets),
    }
}

/// One pass over the shuffled training set in batches. Returns the mean
/// task and reconstruction components.
fn run_phase(
    params: &mut NetworkParams,
    opt: &mut Adam,
    train: &Dataset,
    plan: &TrainingPlan,
    phase: &Phase,
    shuffle_rng: &mut Rng,
) -> Result<(f64, f64), NnError> {
    params.freeze.encoder = phase.freeze_encoder;
    params.freeze.decoder = phase.freeze_decoder;
    params.freeze.discriminator = phase.freeze_discriminator;
    let composite = CompositeLoss {
        task_weight: phase.task_weight,
        recon_weight: phase.recon_weight,
        task_loss: plan.task_loss,
        recon_loss: plan.recon_loss,
    };

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle_rng.shuffle(&mut order);

    let mut task_sum = 0.0;
    let mut recon_sum = 0.0;
    let mut batches = 0usize;
    for (batch_index, chunk) in order.chunks(plan.batch_size).enumerate() {
        let x_rows: Vec<Vec<f64>> = chunk.iter().map(|&i| train.inputs.row(i).to_vec()).collect();
        let y_rows: Vec<Vec<f64>> = chunk.iter().map(|&i| train.targets.row(i).to_vec()).collect();
        let x = Matrix::from_rows(&x_rows)?;
        let y = Matrix::from_rows(&y_rows)?;
        let (parts, grads) = loss_and_grad(params, &x, &y, &composite).map_err(|e| match e {
            NnError::NanLoss { .. } => NnError::NanLoss { batch_index },
            other => other,
        })?;
        opt.step(params, &grads);
        task_sum += parts.task;
        recon_sum += parts.recon;
        batches += 1;
    }
    Ok((task_sum / batches as f64, recon_sum / batches as f64))
}

/// Trains one model under the plan. A non-finite loss aborts the run and
/// marks the trace as failed; everything trained so far is kept.
pub fn train(
    spec: &NetworkSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    plan: &TrainingPlan,
    master_seed: u64,
) -> Result<TrainOutcome, NnError> {
    plan.validate()?;
    spec.validate(train_data.inputs.cols())?;
    if train_data.is_empty() || test_data.is_empty() {
        return Err(NnError::InvalidData("empty train or test set".into()));
    }
    if train_data.task != test_data.task {
        return Err(NnError::InvalidData("train/test task mismatch".into()));
    }
    if plan.eval_metric == EvalMetric::Accuracy && train_data.task != Task::Classification {
        return Err(NnError::InvalidData(
            "accuracy metric requires classification targets".into(),
        ));
    }

    let rng = Rng::new(master_seed);
    let mut params = init(spec, &rng);
    let mut shuffle_rng = rng.substream(Stream::BatchShuffle);
    let mut opt = Adam::new(AdamHyper {
        lr: plan.lr,
        ..AdamHyper::default()
    });

    let phase_a = |plan: &TrainingPlan| -> Phase {
        match plan.algorithm {
            // Full network with the task-dominant mix.
            Algorithm::BaeType2 => Phase {
                freeze_encoder: false,
                freeze_decoder: false,
                freeze_discriminator: false,
                task_weight: 1.0 - plan.w_nn,
                recon_weight: plan.w_nn,
            },
            // Types 0 and 1 freeze the decoder in the first phase.
            Algorithm::BaeType0 | Algorithm::BaeType1 => Phase {
                freeze_encoder: false,
                freeze_decoder: true,
                freeze_discriminator: false,
                task_weight: 1.0 - plan.w_nn,
                recon_weight: plan.w_nn,
            },
            Algorithm::UaeThenNn | Algorithm::PlainNn => unreachable!("handled separately"),
        }
    };
    let phase_b = |plan: &TrainingPlan| -> Phase {
        match plan.algorithm {
            // Discriminator frozen, autoencoder trained with the
            // reconstruction-dominant mix.
            Algorithm::BaeType2 | Algorithm::BaeType1 => Phase {
                freeze_encoder: false,
                freeze_decoder: false,
                freeze_discriminator: true,
                task_weight: 1.0 - plan.w_ae,
                recon_weight: plan.w_ae,
            },
            // Type 0 trains only the decoder in the second phase.
            Algorithm::BaeType0 => Phase {
                freeze_encoder: true,
                freeze_decoder: false,
                freeze_discriminator: true,
                task_weight: 1.0 - plan.w_ae,
                recon_weight: plan.w_ae,
            },
            Algorithm::UaeThenNn | Algorithm::PlainNn => unreachable!("handled separately"),
        }
    };

    let mut trace = MetricTrace {
        epochs: Vec::new(),
        best_test_metric: plan.eval_metric.worst(),
        best_epoch: 0,
        failed: false,
    };
    let mut best_params = params.clone();

    let record = |params: &mut NetworkParams,
                      trace: &mut MetricTrace,
                      best_params: &mut NetworkParams,
                      epoch: usize,
                      task_loss: f64,
                      recon_loss: f64,
                      counts_for_best: bool,
                      plan: &TrainingPlan,
                      test_data: &Dataset| {
        let metric = evaluate(params, test_data, plan.eval_metric);
        trace.epochs.push(EpochRecord {
            epoch,
            task_loss,
            recon_loss,
            test_metric: metric,
            counts_for_best,
        });
        if counts_for_best && plan.eval_metric.better(metric, trace.best_test_metric) {
            trace.best_test_metric = metric;
            trace.best_epoch = epoch;
            *best_params = params.clone();
        }
    };

    match plan.algorithm {
        Algorithm::BaeType0 | Algorithm::BaeType1 | Algorithm::BaeType2 => {
            for epoch in 1..=plan.epochs {
                let result = match plan.phases_per_epoch {
                    PhaseSchedule::Alternating => {
                        let phase = if epoch % 2 == 1 {
                            phase_a(plan)
                        } else {
                            phase_b(plan)
                        };
                        run_phase(&mut params, &mut opt, train_data, plan, &phase, &mut shuffle_rng)
                    }
                    PhaseSchedule::Both => {
                        match run_phase(
                            &mut params,
                            &mut opt,
                            train_data,
                            plan,
                            &phase_a(plan),
                            &mut shuffle_rng,
                        ) {
                            Ok(_) => run_phase(
                                &mut params,
                                &mut opt,
                                train_data,
                                plan,
                                &phase_b(plan),
                                &mut shuffle_rng,
                            ),
                            Err(e) => Err(e),
                        }
                    }
                };
                match result {
                    Ok((task_loss, recon_loss)) => record(
                        &mut params,
                        &mut trace,
                        &mut best_params,
                        epoch,
                        task_loss,
                        recon_loss,
                        true,
                        plan,
                        test_data,
                    ),
                    Err(NnError::NanLoss { .. }) => {
                        trace.failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Algorithm::UaeThenNn => {
            // Stage 1: reconstruction only, discriminator untouched.
            let stage1 = Phase {
                freeze_encoder: false,
                freeze_decoder: false,
                freeze_discriminator: true,
                task_weight: 0.0,
                recon_weight: 1.0,
            };
            // Stage 2: task only, autoencoder frozen.
            let stage2 = Phase {
                freeze_encoder: true,
                freeze_decoder: true,
                freeze_discriminator: false,
                task_weight: 1.0,
                recon_weight: 0.0,
            };
            'stages: for (stage, phase, counts) in
                [(1usize, &stage1, false), (2usize, &stage2, true)]
            {
                for e in 1..=plan.epochs {
                    let epoch = (stage - 1) * plan.epochs + e;
                    match run_phase(&mut params, &mut opt, train_data, plan, phase, &mut shuffle_rng)
                    {
                        Ok((task_loss, recon_loss)) => record(
                            &mut params,
                            &mut trace,
                            &mut best_params,
                            epoch,
                            task_loss,
                            recon_loss,
                            counts,
                            plan,
                            test_data,
                        ),
                        Err(NnError::NanLoss { .. }) => {
                            trace.failed = true;
                            break 'stages;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Algorithm::PlainNn => {
            let phase = Phase {
                freeze_encoder: false,
                freeze_decoder: false,
                freeze_discriminator: false,
                task_weight: 1.0,
                recon_weight: 0.0,
            };
            for epoch in 1..=plan.epochs {
                match run_phase(&mut params, &mut opt, train_data, plan, &phase, &mut shuffle_rng) {
                    Ok((task_loss, recon_loss)) => record(
                        &mut params,
                        &mut trace,
                        &mut best_params,
                        epoch,
                        task_loss,
                        recon_loss,
                        true,
                        plan,
                        test_data,
                    ),
                    Err(NnError::NanLoss { .. }) => {
                        trace.failed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        final_params: params,
        trace,
    })
}

/// Shallow linear autoencoder around a bottleneck plus a one-hidden-layer
/// discriminator: the architecture used for the simulated regression runs.
pub fn regression_spec(input_dim: usize, bottleneck: usize, hidden: usize) -> NetworkSpec {
    use crate::net::{Activation, LayerSpec};
    NetworkSpec {
        encoder: vec![LayerSpec::Dense {
            inputs: input_dim,
            outputs: bottleneck,
            activation: Activation::Linear,
        }],
        decoder: vec![LayerSpec::Dense {
            inputs: bottleneck,
            outputs: input_dim,
            activation: Activation::Linear,
        }],
        discriminator: vec![
            LayerSpec::Dense {
                inputs: input_dim,
                outputs: hidden,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: hidden,
                outputs: 1,
                activation: Activation::Linear,
            },
        ],
    }
}

/// Discriminator-only spec for the plain baseline (no autoencoder in front).
pub fn plain_spec(input_dim: usize, hidden: usize) -> NetworkSpec {
    use crate::net::{Activation, LayerSpec};
    NetworkSpec {
        encoder: vec![],
        decoder: vec![],
        discriminator: vec![
            LayerSpec::Dense {
                inputs: input_dim,
                outputs: hidden,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: hidden,
                outputs: 1,
                activation: Activation::Linear,
            },
        ],
    }
}

/// Dense autoencoder with a sigmoid reconstruction head plus the deeper
/// funnel discriminator used for the image classification runs.
pub fn image_spec(input_dim: usize, bottleneck: usize, classes: usize) -> NetworkSpec {
    use crate::net::{Activation, LayerSpec};
    NetworkSpec {
        encoder: vec![LayerSpec::Dense {
            inputs: input_dim,
            outputs: bottleneck,
            activation: Activation::Linear,
        }],
        decoder: vec![LayerSpec::Dense {
            inputs: bottleneck,
            outputs: input_dim,
            activation: Activation::Sigmoid,
        }],
        discriminator: vec![
            LayerSpec::Dense {
                inputs: input_dim,
                outputs: 64,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: 64,
                outputs: 32,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: 32,
                outputs: 16,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: 16,
                outputs: classes,
                activation: Activation::Softmax,
            },
        ],
    }
}

/// Discriminator-only variant of `image_spec`.
pub fn plain_image_spec(input_dim: usize, classes: usize) -> NetworkSpec {
    let full = image_spec(input_dim, 1, classes);
    NetworkSpec {
        encoder: vec![],
        decoder: vec![],
        discriminator: full.discriminator,
    }
}
