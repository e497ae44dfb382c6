//! Solver instance files: a utility surface, a sample, K, and options.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;
use bae_core::{Rng, Stream};
use bae_theory::{InitStrategy, SolveOptions, UtilityFunction};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// W(a) = a'Ha + linear'a.
    Quadratic {
        h: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Option<Vec<f64>>,
    },
    /// W(a) = -|a|^2.
    NegQuadratic { dim: usize },
    /// W(a) = phi(a'Ha) for a named scalar profile.
    Radial { phi: RadialProfile, h: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RadialProfile {
    /// phi(x) = sqrt(x) (utility |a| for H = I).
    Sqrt,
    /// phi(x) = log(1 + x).
    Log1p,
    /// phi(x) = x^2.
    Square,
    /// phi(x) = x (plain quadratic form).
    Identity,
}

fn square_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let m = Matrix::from_rows(rows)?;
    if m.rows() != m.cols() {
        bail!("matrix must be square, got {}x{}", m.rows(), m.cols());
    }
    Ok(m)
}

impl UtilitySpec {
    pub fn build(&self) -> Result<UtilityFunction> {
        Ok(match self {
            UtilitySpec::Quadratic { h, linear } => {
                UtilityFunction::quadratic(square_matrix(h)?, linear.clone())?
            }
            UtilitySpec::NegQuadratic { dim } => UtilityFunction::neg_norm_squared(*dim),
            UtilitySpec::Radial { phi, h } => {
                let h = square_matrix(h)?;
                match phi {
                    RadialProfile::Sqrt => UtilityFunction::radial(
                        |x| x.sqrt(),
                        |x| 0.5 / x.sqrt(),
                        |x| -0.25 / (x * x.sqrt()),
                        h,
                    )?,
                    RadialProfile::Log1p => UtilityFunction::radial(
                        |x| (1.0 + x).ln(),
                        |x| 1.0 / (1.0 + x),
                        |x| -1.0 / ((1.0 + x) * (1.0 + x)),
                        h,
                    )?,
                    RadialProfile::Square => {
                        UtilityFunction::radial(|x| x * x, |x| 2.0 * x, |_| 2.0, h)?
                    }
                    RadialProfile::Identity => {
                        UtilityFunction::radial(|x| x, |_| 1.0, |_| 0.0, h)?
                    }
                }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            UtilitySpec::Quadratic { h, .. } | UtilitySpec::Radial { h, .. } => h.len(),
            UtilitySpec::NegQuadratic { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSpec {
    /// Inline rows.
    Rows(Vec<Vec<f64>>),
    /// Generated standard-normal sample.
    Gaussian { n: usize, dim: usize, seed: u64 },
}

impl SampleSpec {
    pub fn build(&self) -> Result<Matrix> {
        match self {
            SampleSpec::Rows(rows) => Ok(Matrix::from_rows(rows)?),
            SampleSpec::Gaussian { n, dim, seed } => {
                let mut rng = Rng::with_stream(*seed, Stream::DataGen);
                Ok(rng.normal_matrix(*n, *dim))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct InstanceOptions {
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub objective_tol: Option<f64>,
    pub action_tol: Option<f64>,
    pub init: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveInstance {
    #[serde(rename = "W")]
    pub w: UtilitySpec,
    pub sample: SampleSpec,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub options: InstanceOptions,
}

impl SolveInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("parsing solve instance")
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let mut opts = SolveOptions::new(self.k);
        if let Some(r) = self.options.restarts {
            opts.restarts = r;
        }
        if let Some(m) = self.options.max_iters {
            opts.max_iters = m;
        }
        if let Some(t) = self.options.objective_tol {
            opts.objective_tol = t;
        }
        if let Some(t) = self.options.action_tol {
            opts.action_tol = t;
        }
        if let Some(init) = &self.options.init {
            opts.init = match init.as_str() {
                "random_rows" => InitStrategy::RandomRows,
                "kpp_style" => InitStrategy::KppStyle,
                other => bail!("unknown init strategy {other}"),
            };
        }
        Ok(opts)
    }
}
