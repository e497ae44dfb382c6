//! Versioned JSON checkpoint format: a map from "block/layer/tensor" names
//! to row-major float arrays with shapes, plus the network spec.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;

use crate::error::NnError;
use crate::net::{init, Block, LayerParams, NetworkParams, NetworkSpec, BLOCKS};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    spec: NetworkSpec,
    tensors: BTreeMap<String, TensorEntry>,
}

fn block_name(b: Block) -> &'static str {
    match b {
        Block::Encoder => "encoder",
        Block::Decoder => "decoder",
        Block::Discriminator => "discriminator",
    }
}

fn tensor_names(p: &LayerParams) -> Vec<(&'static str, Vec<usize>, Vec<f64>)> {
    match p {
        LayerParams::Dense { weights, bias } => vec![
            (
                "weights",
                vec![weights.rows(), weights.cols()],
                weights.data().to_vec(),
            ),
            ("bias", vec![bias.len()], bias.clone()),
        ],
        LayerParams::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
        } => vec![
            ("gamma", vec![gamma.len()], gamma.clone()),
            ("beta", vec![beta.len()], beta.clone()),
            ("running_mean", vec![running_mean.len()], running_mean.clone()),
            ("running_var", vec![running_var.len()], running_var.clone()),
        ],
        LayerParams::SphereNorm => vec![],
    }
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<(), NnError> {
    let mut tensors = BTreeMap::new();
    for b in BLOCKS {
        for (li, layer) in params.block(b).iter().enumerate() {
            for (name, shape, data) in tensor_names(layer) {
                tensors.insert(
                    format!("{}/{}/{}", block_name(b), li, name),
                    TensorEntry { shape, data },
                );
            }
        }
    }
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec: params.spec.clone(),
        tensors,
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<NetworkParams, NnError> {
    let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(NnError::InvalidData(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    // Structure comes from the stored network layout, tensors from the file.
    let mut params = init(&file.spec, &bae_core::Rng::new(0));
    for b in BLOCKS {
        let layers = params.block_mut(b);
        for (li, layer) in layers.iter_mut().enumerate() {
            let fetch = |name: &str| -> Result<TensorEntry, NnError> {
                let key = format!("{}/{}/{}", block_name(b), li, name);
                let e = file
                    .tensors
                    .get(&key)
                    .ok_or_else(|| NnError::InvalidData(format!("missing tensor {key}")))?;
                Ok(TensorEntry {
                    shape: e.shape.clone(),
                    data: e.data.clone(),
                })
            };
            match layer {
                LayerParams::Dense { weights, bias } => {
                    let w = fetch("weights")?;
                    *weights = Matrix::from_vec(w.shape[0], w.shape[1], w.data)?;
                    *bias = fetch("bias")?.data;
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    *gamma = fetch("gamma")?.data;
                    *beta = fetch("beta")?.data;
                    *running_mean = fetch("running_mean")?.data;
                    *running_var = fetch("running_var")?.data;
                }
                LayerParams::SphereNorm => {}
            }
        }
    }
    Ok(params)
}
