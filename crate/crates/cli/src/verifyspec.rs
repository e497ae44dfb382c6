//! Verification job files: a utility surface, a candidate policy, a sample,
//! and probe points; runs the structural certificate and reports each check.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bae_core::linalg::{self, Matrix};
use bae_theory::bregman::Policy;
use bae_theory::closed_form::{verify_gradient_monotone, VerifyTolerances};
use bae_theory::{
    check_sphere_condition, quadratic_policy, quadratic_policy_known_moments, sphere_policy,
    verify_policy,
};

use crate::instance::{RadialProfile, SampleSpec, UtilitySpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Spectral projection built from H and the sample (or known moments).
    QuadraticClosedForm {
        #[serde(default)]
        known_identity_moments: bool,
    },
    /// Norm rescaling onto the mean-norm sphere.
    Sphere,
    /// No compression.
    Identity,
    /// Full pooling to the sample mean.
    PoolToMean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyJob {
    pub w: UtilitySpec,
    pub policy: PolicySpec,
    pub sample: SampleSpec,
    /// Probe points for the maximality check; defaults to the sample rows.
    #[serde(default)]
    pub probes: Option<SampleSpec>,
    /// Reflect the second coordinate so pools pair up exactly.
    #[serde(default)]
    pub symmetrize: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub all_ok: bool,
    pub lines: Vec<(String, bool, String)>,
}

fn symmetrize(sample: &Matrix) -> Result<Matrix> {
    if sample.cols() < 2 {
        bail!("symmetrize needs at least two feature columns");
    }
    let mut rows = Vec::with_capacity(2 * sample.rows());
    for r in 0..sample.rows() {
        let row = sample.row(r).to_vec();
        let mut reflected = row.clone();
        reflected[1] = -reflected[1];
        rows.push(row);
        rows.push(reflected);
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn run_verify(job: &VerifyJob) -> Result<VerifyOutcome> {
    let w = job.w.build()?;
    let mut sample = job.sample.build()?;
    if job.symmetrize {
        sample = symmetrize(&sample)?;
    }

    let policy: Box<dyn Policy>;
    let mut lines: Vec<(String, bool, String)> = Vec::new();
    let mut eval_sample = sample.clone();
    match &job.policy {
        PolicySpec::QuadraticClosedForm {
            known_identity_moments,
        } => {
            let h = match &job.w {
                UtilitySpec::Quadratic { h, .. } => Matrix::from_rows(h)?,
                _ => bail!("the quadratic closed form needs a quadratic utility"),
            };
            let qp = if *known_identity_moments {
                quadratic_policy_known_moments(
                    &h,
                    &Matrix::identity(h.rows()),
                    vec![0.0; h.rows()],
                )?
            } else {
                quadratic_policy(&h, &sample)?
            };
            lines.push((
                "projection_idempotent_matrix".into(),
                {
                    let aa = qp.projection.matmul(&qp.projection)?;
                    aa.sub(&qp.projection)?.max_abs() <= 1e-10
                },
                format!("rank {}", qp.rank),
            ));
            eval_sample = qp.center_sample(&sample);
            let proj = qp.projection.clone();
            policy = Box::new(move |x: &[f64]| proj.matvec(x).expect("dim"));
        }
        PolicySpec::Sphere => {
            let sp = sphere_policy(&sample)?;
            lines.push((
                "sphere_beta".into(),
                sp.beta.is_finite() && sp.beta > 0.0,
                format!("beta {:.6}, zero rows {}", sp.beta, sp.zero_rows),
            ));
            // The optimality certificate for the sphere is its boundary
            // condition; evaluate it for the radial profile in play.
            if let UtilitySpec::Radial { phi, .. } = &job.w {
                let max_norm = (0..sample.rows())
                    .map(|r| linalg::norm(sample.row(r)))
                    .fold(0.0_f64, f64::max);
                let rep = match phi {
                    RadialProfile::Sqrt => check_sphere_condition(
                        &|x| x.sqrt(),
                        &|x| 0.5 / x.sqrt(),
                        sp.beta,
                        max_norm,
                        2000,
                    )?,
                    RadialProfile::Log1p => check_sphere_condition(
                        &|x| (1.0 + x).ln(),
                        &|x| 1.0 / (1.0 + x),
                        sp.beta,
                        max_norm,
                        2000,
                    )?,
                    RadialProfile::Square => check_sphere_condition(
                        &|x| x * x,
                        &|x| 2.0 * x,
                        sp.beta,
                        max_norm,
                        2000,
                    )?,
                    RadialProfile::Identity => {
                        check_sphere_condition(&|x| x, &|_| 1.0, sp.beta, max_norm, 2000)?
                    }
                };
                lines.push((
                    "sphere_condition".into(),
                    rep.ok,
                    format!("max {:.3e} at radius {:.3}", rep.worst_value, rep.worst_radius),
                ));
            }
            policy = Box::new(move |x: &[f64]| sp.apply(x));
        }
        PolicySpec::Identity => {
            policy = Box::new(|x: &[f64]| x.to_vec());
        }
        PolicySpec::PoolToMean => {
            let mean = sample.mean_row();
            policy = Box::new(move |_x: &[f64]| mean.clone());
        }
    }

    let probes = match &job.probes {
        Some(spec) => spec.build()?,
        None => eval_sample.clone(),
    };
    let rep = verify_policy(&w, policy.as_ref(), &eval_sample, &probes, VerifyTolerances::default())?;
    lines.push((
        "unbiased".into(),
        rep.unbiased.ok,
        format!(
            "groups {}, worst deviation {:.3e}",
            rep.unbiased.groups, rep.unbiased.worst_deviation
        ),
    ));
    lines.push((
        "projection_idempotent".into(),
        rep.idempotent.ok,
        format!("worst deviation {:.3e}", rep.idempotent.worst_deviation),
    ));
    lines.push((
        "w_monotone_image".into(),
        rep.w_monotone.ok,
        format!("worst pair value {:.3e}", rep.w_monotone.worst_value),
    ));
    lines.push((
        "maximal".into(),
        rep.maximal.ok,
        format!("worst probe value {:.3e}", rep.maximal.worst_value),
    ));
    let grad = verify_gradient_monotone(&w, policy.as_ref(), &eval_sample, 1e-9)?;
    lines.push((
        "gradient_monotone".into(),
        grad.ok,
        format!(
            "worst pair value {:.3e} over {} pairs",
            grad.worst_value, grad.pairs_checked
        ),
    ));
    lines.push((
        "value_comparison".into(),
        true,
        format!(
            "E[W(policy)] {:.4}, E[W(raw)] {:.4}, W(mean) {:.4}",
            rep.policy_value, rep.raw_value, rep.pooled_value
        ),
    ));

    let all_ok = lines.iter().all(|(_, ok, _)| *ok);
    Ok(VerifyOutcome { all_ok, lines })
}

pub fn parse_verify_job(text: &str) -> Result<VerifyJob> {
    serde_json::from_str(text).context("parsing verify job")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_policy_under_convex_utility_passes() {
        let job = VerifyJob {
            w: UtilitySpec::Quadratic {
                h: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                linear: None,
            },
            policy: PolicySpec::Identity,
            sample: SampleSpec::Gaussian {
                n: 300,
                dim: 2,
                seed: 3,
            },
            probes: None,
            symmetrize: false,
        };
        let out = run_verify(&job).unwrap();
        assert!(out.all_ok, "{:?}", out.lines);
    }

    #[test]
    fn sphere_policy_under_convex_radial_fails_condition() {
        let job = VerifyJob {
            w: UtilitySpec::Radial {
                phi: RadialProfile::Identity,
                h: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            policy: PolicySpec::Sphere,
            sample: SampleSpec::Gaussian {
                n: 500,
                dim: 2,
                seed: 5,
            },
            probes: None,
            symmetrize: false,
        };
        let out = run_verify(&job).unwrap();
        assert!(!out.all_ok);
        let cond = out
            .lines
            .iter()
            .find(|(name, _, _)| name == "sphere_condition")
            .unwrap();
        assert!(!cond.1, "convex profile must fail the boundary condition");
    }

    #[test]
    fn quadratic_closed_form_with_known_moments_passes() {
        let job = VerifyJob {
            w: UtilitySpec::Quadratic {
                h: vec![vec![1.0, 0.0], vec![0.0, -1.0]],
                linear: None,
            },
            policy: PolicySpec::QuadraticClosedForm {
                known_identity_moments: true,
            },
            sample: SampleSpec::Gaussian {
                n: 2000,
                dim: 2,
                seed: 9,
            },
            probes: None,
            symmetrize: true,
        };
        let out = run_verify(&job).unwrap();
        assert!(out.all_ok, "{:?}", out.lines);
    }
}
