//! Acceptance suite: one pass/fail line per criterion, run as a plain
//! binary (harness = false) so skips and soft failures can carry distinct
//! exit codes under BAE_ACCEPT_STRICT=1.
//!
//! Exit codes: 0 all criteria passed (skips/soft failures allowed),
//! 1 hard failure, 3 runtime error; with BAE_ACCEPT_STRICT=1 a skip exits 4
//! and a soft failure exits 5.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bae_cli::config::{DatasetConfig, ExperimentConfig};
use bae_cli::runner::{self, Summary};
use bae_core::linalg::{self, Matrix};
use bae_core::{inertia, Rng, Stream};
use bae_nn::{Algorithm, PhaseSchedule};
use bae_theory::closed_form::VerifyTolerances;
use bae_theory::{
    brute_force_oracle, check_gradient_monotone, check_maximal, check_projection_idempotent,
    check_sphere_condition, check_unbiased, jensen_direction_probe, quadratic_policy_known_moments,
    solve, solve_traced, sphere_policy, FeatureSet, SolveOptions, UtilityFunction,
};

enum Outcome {
    Pass(String),
    Fail(String),
    SoftFail(String),
    Skip(String),
}

struct SuiteState {
    hard_failures: usize,
    soft_failures: usize,
    skips: usize,
}

fn record(state: &mut SuiteState, id: &str, name: &str, started: Instant, outcome: Outcome) {
    let elapsed = started.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Outcome::Pass(d) => ("PASS", d.clone()),
        Outcome::Fail(d) => {
            state.hard_failures += 1;
            ("FAIL", d.clone())
        }
        Outcome::SoftFail(d) => {
            state.soft_failures += 1;
            ("SOFT-FAIL", d.clone())
        }
        Outcome::Skip(d) => {
            state.skips += 1;
            ("SKIP", d.clone())
        }
    };
    println!("{tag:9} {id:<4} {name:<34} [{elapsed:6.1}s] {detail}");
}

fn main() {
    let mut state = SuiteState {
        hard_failures: 0,
        soft_failures: 0,
        skips: 0,
    };
    let checks: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("A1", "gradient suite", a1_gradient_suite),
        ("A2", "clustering oracle equivalence", a2_oracle_equivalence),
        ("A3", "monotone ascent", a3_monotone_ascent),
        ("A4", "jensen direction", a4_jensen_direction),
        ("A5", "quadratic closed form", a5_quadratic_closed_form),
        ("A6", "sphere policy", a6_sphere_policy),
        ("A7", "simulated benchmark regime 1", a7_simulated_regime_1),
        ("A8", "simulated benchmark regime 2", a8_simulated_regime_2),
        ("A9", "image subset (soft)", a9_image_subset),
        ("A10", "bit-identical summaries", a10_determinism),
        ("A11", "inertia and radial hessian", a11_inertia_radial),
    ];
    for (id, name, f) in checks {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(f)
            .unwrap_or_else(|e| Outcome::Fail(format!("panicked: {e:?}")));
        record(&mut state, id, name, started, outcome);
    }

    let strict = std::env::var("BAE_ACCEPT_STRICT").map_or(false, |v| v == "1");
    let code = if state.hard_failures > 0 {
        1
    } else if strict && state.skips > 0 {
        4
    } else if strict && state.soft_failures > 0 {
        5
    } else {
        0
    };
    std::process::exit(code);
}

// --- A1 -------------------------------------------------------------------

fn a1_gradient_suite() -> Outcome {
    match bae_nn::gradcheck::run_random_config_suite(120, 424242) {
        Ok(rep) => {
            if rep.elapsed_secs >= 30.0 {
                return Outcome::Fail(format!("took {:.1}s (budget 30s)", rep.elapsed_secs));
            }
            Outcome::Pass(format!(
                "{} configs, worst rel err {:.2e}",
                rep.configs_checked, rep.worst_rel_err
            ))
        }
        Err(e) => Outcome::Fail(e),
    }
}

// --- A2 / A3 ---------------------------------------------------------------

fn random_symmetric(n: usize, rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            let x = rng.normal();
            m.set(r, c, x);
            m.set(c, r, x);
        }
    }
    m
}

/// Random instance family of the clustering criteria: n <= 8, L <= 2,
/// K <= 3, W in {convex, indefinite, negative} quadratics.
fn random_instance(rng: &mut Rng) -> (UtilityFunction, Matrix, usize) {
    let dim = 1 + rng.below(2);
    let kind = rng.below(3);
    let h = match kind {
        0 => {
            let m = random_symmetric(dim, rng);
            let mut pd = m.transpose().matmul(&m).unwrap();
            for i in 0..dim {
                pd.set(i, i, pd.get(i, i) + 0.1);
            }
            pd
        }
        1 => {
            if dim == 1 {
                Matrix::diag(&[1.0 + rng.uniform(0.0, 1.0)])
            } else {
                let mut h = random_symmetric(dim, rng);
                h.set(0, 0, h.get(0, 0).abs() + 0.5);
                h.set(1, 1, -h.get(1, 1).abs() - 0.5);
                h
            }
        }
        _ => {
            let m = random_symmetric(dim, rng);
            let mut nd = m.transpose().matmul(&m).unwrap().scaled(-1.0);
            for i in 0..dim {
                nd.set(i, i, nd.get(i, i) - 0.1);
            }
            nd
        }
    };
    let w = UtilityFunction::quadratic(h, None).unwrap();
    let n = 3 + rng.below(6);
    let sample = rng.normal_matrix(n, dim);
    let k = 1 + rng.below(3);
    (w, sample, k)
}

fn a2_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = Rng::with_stream(2024, Stream::Solver);
    let total = 200;
    let mut exceptions = Vec::new();
    for case in 0..total as u64 {
        let (w, sample, k) = random_instance(&mut rng);
        let opts = SolveOptions::new(k);
        let mut srng = Rng::with_stream(5000 + case, Stream::Solver);
        let policy = match solve(&w, &sample, &opts, &mut srng) {
            Ok(p) => p,
            Err(e) => return Outcome::Fail(format!("case {case}: {e}")),
        };
        let exact = match brute_force_oracle(&w, &sample, k) {
            Ok(p) => p,
            Err(e) => return Outcome::Fail(format!("oracle {case}: {e}")),
        };
        if exact.objective - policy.objective < -1e-9 {
            return Outcome::Fail(format!(
                "case {case}: solver {} above oracle {}",
                policy.objective, exact.objective
            ));
        }
        if (exact.objective - policy.objective).abs() > 1e-9 {
            exceptions.push((case, exact.objective - policy.objective));
        }
    }
    if started.elapsed().as_secs_f64() >= 120.0 {
        return Outcome::Fail(format!(
            "took {:.1}s (budget 120s)",
            started.elapsed().as_secs_f64()
        ));
    }
    if exceptions.len() * 100 > total {
        return Outcome::Fail(format!(
            "{} of {total} instances missed the optimum: {exceptions:?}",
            exceptions.len()
        ));
    }
    Outcome::Pass(format!(
        "{}/{} matched within 1e-9; documented exceptions: {:?}",
        total - exceptions.len(),
        total,
        exceptions
    ))
}

fn a3_monotone_ascent() -> Outcome {
    let mut rng = Rng::with_stream(33, Stream::Solver);
    let mut iterations = 0usize;
    for case in 0..60u64 {
        let (w, sample, k) = random_instance(&mut rng);
        let mut opts = SolveOptions::new(k);
        opts.restarts = 10;
        let mut srng = Rng::with_stream(7000 + case, Stream::Solver);
        let (_, traces) = match solve_traced(&w, &sample, &opts, &mut srng) {
            Ok(x) => x,
            Err(e) => return Outcome::Fail(format!("case {case}: {e}")),
        };
        for trace in traces {
            for pair in trace.windows(2) {
                iterations += 1;
                if pair[1] < pair[0] - 1e-12 {
                    return Outcome::Fail(format!(
                        "case {case}: objective fell from {} to {}",
                        pair[0], pair[1]
                    ));
                }
            }
        }
    }
    Outcome::Pass(format!("{iterations} accepted iterations, none decreasing"))
}

// --- A4 --------------------------------------------------------------------

fn a4_jensen_direction() -> Outcome {
    let rows: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|&v| vec![v]).collect();
    let sample = Matrix::from_rows(&rows).unwrap();
    let k_grid = [1usize, 2, 3, 4, 5];
    let mut opts = SolveOptions::new(1);
    opts.restarts = 30;

    let w_convex = UtilityFunction::norm_squared(1);
    let mut rng = Rng::with_stream(4, Stream::Solver);
    let curve = match jensen_direction_probe(&w_convex, &sample, &k_grid, &opts, &mut rng) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    for pair in curve.windows(2) {
        if pair[1].1 < pair[0].1 - 1e-9 {
            return Outcome::Fail(format!(
                "convex objective decreased in K: {:?} -> {:?}",
                pair[0], pair[1]
            ));
        }
    }
    let no_compression = (0..5).map(|r| w_convex.eval(sample.row(r))).sum::<f64>() / 5.0;
    let at_n = curve.last().unwrap().1;
    if (at_n - no_compression).abs() > 1e-9 {
        return Outcome::Fail(format!(
            "convex K=n objective {at_n} != no-compression value {no_compression}"
        ));
    }

    let w_concave = UtilityFunction::neg_norm_squared(1);
    let pooled = w_concave.eval(&sample.mean_row());
    let curve = match jensen_direction_probe(&w_concave, &sample, &k_grid, &opts, &mut rng) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    for (k, obj) in curve {
        if (obj - pooled).abs() > 1e-9 {
            return Outcome::Fail(format!(
                "concave objective at K={k} is {obj}, pooling value {pooled}"
            ));
        }
    }
    Outcome::Pass("convex curve non-decreasing to the no-compression value; concave flat at W(mean)".into())
}

// --- A5 --------------------------------------------------------------------

/// Standard-normal pairs (x1, x2), (x1, -x2): still standard normal, and
/// every pool of the closed-form policy averages exactly to its action.
fn symmetrized_gaussian(n_pairs: usize, seed: u64) -> Matrix {
    let mut rng = Rng::with_stream(seed, Stream::DataGen);
    let mut rows = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        let x = rng.normal_vec(2);
        rows.push(vec![x[0], x[1]]);
        rows.push(vec![x[0], -x[1]]);
    }
    Matrix::from_rows(&rows).unwrap()
}

fn a5_quadratic_closed_form() -> Outcome {
    let h = Matrix::diag(&[1.0, -1.0]);
    let w = UtilityFunction::quadratic(h.clone(), None).unwrap();
    let sample = symmetrized_gaussian(10_000, 51);

    let policy = match quadratic_policy_known_moments(&h, &Matrix::identity(2), vec![0.0, 0.0]) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let aa = policy.projection.matmul(&policy.projection).unwrap();
    let idem = aa.sub(&policy.projection).unwrap().max_abs();
    if idem > 1e-10 {
        return Outcome::Fail(format!("A*A - A deviates by {idem:e}"));
    }
    let expected_a = Matrix::diag(&[1.0, 0.0]);
    if policy.projection.sub(&expected_a).unwrap().max_abs() > 1e-12 {
        return Outcome::Fail("projection is not diag(1, 0)".into());
    }

    let proj = policy.projection.clone();
    let as_policy = move |x: &[f64]| proj.matvec(x).unwrap();
    match check_unbiased(&as_policy, &sample, 1e-9) {
        Ok(rep) if rep.ok => {}
        Ok(rep) => return Outcome::Fail(format!("unbiasedness: {rep:?}")),
        Err(e) => return Outcome::Fail(e.to_string()),
    }
    match check_projection_idempotent(&as_policy, &sample, 1e-10) {
        Ok(rep) if rep.ok => {}
        Ok(rep) => return Outcome::Fail(format!("idempotency: {rep:?}")),
        Err(e) => return Outcome::Fail(e.to_string()),
    }
    match check_gradient_monotone(&w, &as_policy, &sample, 1e-9) {
        Ok(rep) if rep.ok => {}
        Ok(rep) => return Outcome::Fail(format!("gradient monotonicity: {rep:?}")),
        Err(e) => return Outcome::Fail(e.to_string()),
    }
    // Maximality certificate on a grid, tolerance = spacing^2.
    let step = 0.01_f64;
    let xi = FeatureSet::new(
        (-350..=350)
            .map(|t| vec![t as f64 * step, 0.0])
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let mut grng = Rng::with_stream(77, Stream::Probes);
    let probe_rows: Vec<Vec<f64>> = (0..400)
        .map(|_| vec![grng.uniform(-3.0, 3.0), grng.uniform(-3.0, 3.0)])
        .collect();
    let probes = Matrix::from_rows(&probe_rows).unwrap();
    match check_maximal(&w, &xi, &probes, step * step) {
        Ok(rep) if rep.ok => {}
        Ok(rep) => return Outcome::Fail(format!("maximality: {rep:?}")),
        Err(e) => return Outcome::Fail(e.to_string()),
    }

    // Monte-Carlo values: E[W(A(X))] near 1, E[W(X)] near 0, within three
    // standard errors computed on the independent pairs.
    let n = sample.rows();
    let pairs = (n / 2) as f64;
    let mut policy_vals = Vec::with_capacity(n);
    let mut raw_vals = Vec::with_capacity(n);
    for r in 0..n {
        policy_vals.push(w.eval(&as_policy(sample.row(r))));
        raw_vals.push(w.eval(sample.row(r)));
    }
    let (policy_mean, policy_std) = runner::mean_std(&policy_vals);
    let (raw_mean, raw_std) = runner::mean_std(&raw_vals);
    let policy_se = policy_std / pairs.sqrt();
    let raw_se = raw_std / pairs.sqrt();
    if (policy_mean - 1.0).abs() > 3.0 * policy_se {
        return Outcome::Fail(format!(
            "E[W(policy)] = {policy_mean:.4} not within 3 SE ({policy_se:.4}) of 1"
        ));
    }
    if raw_mean.abs() > 3.0 * raw_se {
        return Outcome::Fail(format!(
            "E[W(raw)] = {raw_mean:.4} not within 3 SE ({raw_se:.4}) of 0"
        ));
    }
    if policy_mean <= raw_mean {
        return Outcome::Fail("compression failed to beat the identity".into());
    }

    // K-finite solver approaches the closed-form value from below.
    let small = symmetrized_gaussian(1000, 52);
    let closed_value = (0..small.rows())
        .map(|r| w.eval(&as_policy(small.row(r))))
        .sum::<f64>()
        / small.rows() as f64;
    let opts = SolveOptions::new(32);
    let mut srng = Rng::with_stream(53, Stream::Solver);
    let kpol = match solve(&w, &small, &opts, &mut srng) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let gap = (closed_value - kpol.objective) / closed_value.abs();
    if !(0.0..=0.05).contains(&gap) {
        if kpol.objective > closed_value {
            // The empirical K-finite optimum may exceed the linear policy's
            // empirical value slightly; that still certifies the 5% gap.
        } else {
            return Outcome::Fail(format!(
                "K=32 objective {} vs closed form {closed_value} (gap {:.2}%)",
                kpol.objective,
                gap * 100.0
            ));
        }
    }
    Outcome::Pass(format!(
        "A = diag(1,0); E[W(A X)] = {policy_mean:.3}, E[W(X)] = {raw_mean:.3}, K=32 gap {:.2}%",
        gap.max(0.0) * 100.0
    ))
}

// --- A6 --------------------------------------------------------------------

fn a6_sphere_policy() -> Outcome {
    // Radius of the mean-norm sphere for planar standard normals, via
    // Simpson quadrature of the chi(2) mean (the independent oracle).
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, steps: usize| {
        let h = (b - a) / steps as f64;
        let mut s = f(a) + f(b);
        for i in 1..steps {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let chi_mean = simpson(&|r: f64| r * r * (-0.5 * r * r).exp(), 0.0, 12.0, 4000);
    let expected_beta = (std::f64::consts::PI / 2.0).sqrt();
    if (chi_mean - expected_beta).abs() > 1e-6 {
        return Outcome::Fail(format!(
            "quadrature oracle {chi_mean} disagrees with sqrt(pi/2)"
        ));
    }

    let mut rng = Rng::with_stream(61, Stream::DataGen);
    let sample = rng.normal_matrix(100_000, 2);
    let policy = match sphere_policy(&sample) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    if (policy.beta - expected_beta).abs() > 0.01 {
        return Outcome::Fail(format!(
            "beta {} not within 0.01 of {expected_beta}",
            policy.beta
        ));
    }
    for r in 0..1000 {
        let a = policy.apply(sample.row(r));
        let err = (linalg::norm(&a) - policy.beta).abs() / policy.beta;
        if err > 1e-12 {
            return Outcome::Fail(format!("output norm off by {err:e}"));
        }
    }

    // phi(x) = sqrt(x): the boundary expression is identically zero.
    let rep = match check_sphere_condition(
        &|x: f64| x.sqrt(),
        &|x: f64| 0.5 / x.sqrt(),
        policy.beta,
        6.0,
        4000,
    ) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    if !rep.ok || rep.worst_value.abs() > 1e-9 {
        return Outcome::Fail(format!("sqrt profile: worst {:.3e}", rep.worst_value));
    }
    // phi(x) = x (convex): the condition must fail.
    let convex = match check_sphere_condition(&|x| x, &|_| 1.0, policy.beta, 6.0, 4000) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    if convex.ok {
        return Outcome::Fail("convex profile unexpectedly satisfied the condition".into());
    }
    Outcome::Pass(format!(
        "beta = {:.4} (target {:.4}); sqrt profile max {:.1e}; convex profile rejected",
        policy.beta, expected_beta, rep.worst_value
    ))
}

// --- A7 / A8 ---------------------------------------------------------------

fn simulated_config(d: usize, nu_star: usize, n: usize, bottleneck: usize) -> ExperimentConfig {
    ExperimentConfig {
        version: 1,
        dataset: DatasetConfig::Simulated {
            d: vec![d],
            nu_star: vec![nu_star],
            n: vec![n],
            sigma: vec![0.0],
        },
        bottleneck: vec![bottleneck],
        discriminator_hidden: 64,
        algorithms: vec![Algorithm::PlainNn, Algorithm::UaeThenNn, Algorithm::BaeType2],
        seeds: vec![0, 1, 2, 3, 4],
        epochs: 20,
        lr: 0.001,
        batch_size: 32,
        w_nn: 0.1,
        w_ae: 0.9,
        phases_per_epoch: PhaseSchedule::Alternating,
        train_fraction: 0.8,
    }
}

fn grid_mean(summary: &Summary, algorithm: &str) -> Option<f64> {
    summary
        .aggregates
        .iter()
        .find(|a| a.algorithm == algorithm)
        .and_then(|a| a.mean)
}

fn a7_simulated_regime_1() -> Outcome {
    let started = Instant::now();
    let cfg = simulated_config(50, 1, 2000, 1);
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let summary = match runner::run_experiment(&cfg, &cfg.seeds, dir.path(), 1, None) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("{e:#}")),
    };
    let nn = grid_mean(&summary, "plain_nn");
    let uae = grid_mean(&summary, "uae_then_nn_b1");
    let bae = grid_mean(&summary, "bae_type2_b1");
    let (Some(nn), Some(uae), Some(bae)) = (nn, uae, bae) else {
        return Outcome::Fail("missing aggregate rows".into());
    };
    if started.elapsed().as_secs_f64() >= 600.0 {
        return Outcome::Fail("exceeded the 10 minute budget".into());
    }
    if !(bae < nn && nn < uae) {
        return Outcome::Fail(format!(
            "ordering violated: bae {bae:.4}, nn {nn:.4}, uae {uae:.4}"
        ));
    }
    if !(bae < 0.02 && nn > 0.02) {
        return Outcome::Fail(format!(
            "threshold violated: bae {bae:.4} (< 0.02 required), nn {nn:.4} (> 0.02 required)"
        ));
    }
    Outcome::Pass(format!("bae {bae:.4} < 0.02 < nn {nn:.4} < uae {uae:.4}"))
}

fn a8_simulated_regime_2() -> Outcome {
    let cfg = simulated_config(10, 10, 1000, 10);
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let summary = match runner::run_experiment(&cfg, &cfg.seeds, dir.path(), 1, None) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("{e:#}")),
    };
    let nn = grid_mean(&summary, "plain_nn");
    let bae = grid_mean(&summary, "bae_type2_b10");
    let (Some(nn), Some(bae)) = (nn, bae) else {
        return Outcome::Fail("missing aggregate rows".into());
    };
    if bae > nn {
        return Outcome::Fail(format!("bae mean {bae:.4} above plain nn mean {nn:.4}"));
    }
    Outcome::Pass(format!("bae {bae:.4} <= nn {nn:.4}"))
}

// --- A9 --------------------------------------------------------------------

fn mnist_paths() -> Option<(PathBuf, PathBuf, PathBuf, PathBuf)> {
    let base = std::env::var_os("BAE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    let candidates = [
        (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ),
        (
            "train-images.idx3-ubyte",
            "train-labels.idx1-ubyte",
            "t10k-images.idx3-ubyte",
            "t10k-labels.idx1-ubyte",
        ),
    ];
    for (ti, tl, vi, vl) in candidates {
        let paths = (base.join(ti), base.join(tl), base.join(vi), base.join(vl));
        if paths.0.is_file() && paths.1.is_file() && paths.2.is_file() && paths.3.is_file() {
            return Some(paths);
        }
    }
    None
}

fn a9_image_subset() -> Outcome {
    let Some((ti, tl, vi, vl)) = mnist_paths() else {
        return Outcome::Skip(
            "IDX files not found (set BAE_DATA_DIR or place them under ./data)".into(),
        );
    };
    let started = Instant::now();
    let cfg = ExperimentConfig {
        version: 1,
        dataset: DatasetConfig::Idx {
            train_images: ti,
            train_labels: tl,
            test_images: vi,
            test_labels: vl,
            train_subset: 8000,
            test_subset: 2000,
            noise: vec![0.0],
            clip_to_unit: true,
        },
        bottleneck: vec![32],
        discriminator_hidden: 64,
        algorithms: vec![Algorithm::PlainNn, Algorithm::BaeType2],
        seeds: vec![0, 1, 2],
        epochs: 15,
        lr: 0.001,
        batch_size: 32,
        w_nn: 0.1,
        w_ae: 0.9,
        phases_per_epoch: PhaseSchedule::Alternating,
        train_fraction: 0.8,
    };
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let summary = match runner::run_experiment(&cfg, &cfg.seeds, dir.path(), 1, None) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("{e:#}")),
    };
    let nn = grid_mean(&summary, "plain_nn");
    let bae = grid_mean(&summary, "bae_type2_b32");
    let (Some(nn), Some(bae)) = (nn, bae) else {
        return Outcome::Fail("missing aggregate rows".into());
    };
    if started.elapsed().as_secs_f64() >= 1200.0 {
        return Outcome::Fail("exceeded the 20 minute budget".into());
    }
    if bae >= nn {
        Outcome::Pass(format!("bae accuracy {bae:.4} >= nn accuracy {nn:.4}"))
    } else {
        Outcome::SoftFail(format!(
            "bae accuracy {bae:.4} < nn accuracy {nn:.4}; desk-scale margin not reproduced, investigate"
        ))
    }
}

// --- A10 -------------------------------------------------------------------

fn a10_determinism() -> Outcome {
    let mut cfg = simulated_config(10, 1, 300, 2);
    cfg.seeds = vec![0, 1];
    cfg.epochs = 4;
    let read = |p: &Path| std::fs::read(p.join("summary.csv")).expect("summary exists");
    let mut bytes = Vec::new();
    for jobs in [1usize, 1, 3] {
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        if let Err(e) = runner::run_experiment(&cfg, &cfg.seeds, dir.path(), jobs, None) {
            return Outcome::Fail(format!("{e:#}"));
        }
        bytes.push(read(dir.path()));
    }
    if bytes[0] != bytes[1] {
        return Outcome::Fail("repeated run changed summary.csv".into());
    }
    if bytes[0] != bytes[2] {
        return Outcome::Fail("worker count changed summary.csv".into());
    }
    Outcome::Pass("summary.csv bit-identical across repeats and worker counts".into())
}

// --- A11 -------------------------------------------------------------------

fn a11_inertia_radial() -> Outcome {
    match inertia(&Matrix::diag(&[2.0, -3.0, 0.0]), 1e-10) {
        Ok((2, 2)) => {}
        Ok(other) => return Outcome::Fail(format!("inertia(diag(2,-3,0)) = {other:?}")),
        Err(e) => return Outcome::Fail(e.to_string()),
    }

    // Radial Hessian formula against second-order central differences of
    // W(a) = phi(a'Ha) on random fixtures.
    let mut rng = Rng::with_stream(111, Stream::Probes);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let dim = 2 + rng.below(2);
        let hm = random_symmetric(dim, &mut rng);
        let (al, be, ga) = (rng.normal(), 0.3 * rng.normal(), rng.normal());
        let w = UtilityFunction::radial(
            move |x| al * x + be * x * x + ga * (1.0 + x * x).ln(),
            move |x| al + 2.0 * be * x + ga * 2.0 * x / (1.0 + x * x),
            move |x| 2.0 * be + ga * 2.0 * (1.0 - x * x) / ((1.0 + x * x) * (1.0 + x * x)),
            hm,
        )
        .unwrap();
        let a = rng.normal_vec(dim);
        let analytic = w.hess(&a);
        let h = 1e-4;
        for j in 0..dim {
            let mut hi = a.clone();
            let mut lo = a.clone();
            hi[j] += h;
            lo[j] -= h;
            let ghi = w.grad(&hi);
            let glo = w.grad(&lo);
            for i in 0..dim {
                let fd = (ghi[i] - glo[i]) / (2.0 * h);
                let err = (analytic.get(i, j) - fd).abs()
                    / analytic.get(i, j).abs().max(fd.abs()).max(1.0);
                worst = worst.max(err);
                if err > 1e-5 {
                    return Outcome::Fail(format!(
                        "fixture {case} entry ({i},{j}): analytic {} vs fd {fd} (err {err:e})",
                        analytic.get(i, j)
                    ));
                }
            }
        }
    }
    Outcome::Pass(format!(
        "inertia convention holds; radial Hessian worst rel err {worst:.2e} over 50 fixtures"
    ))
}
