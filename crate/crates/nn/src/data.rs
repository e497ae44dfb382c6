//! Dataset generation and loading: the simulated logistic-mixture
//! regression task, IDX image files, Gaussian feature noise, and
//! deterministic splits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use bae_core::linalg::Matrix;
use bae_core::{Dataset, Rng, Stream, Task};

use crate::error::NnError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedSpec {
    /// Feature dimension d.
    pub d: usize,
    /// Latent dimension of the target (number of logistic units).
    pub nu_star: usize,
    /// Dataset size.
    pub n: usize,
    /// Noise scale.
    pub sigma: f64,
    pub seed: u64,
}

impl SimulatedSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.d < 1 || self.nu_star < 1 || self.n < 2 || self.sigma < 0.0 {
            return Err(NnError::InvalidData(format!(
                "invalid simulated spec: d={}, nu_star={}, n={}, sigma={}",
                self.d, self.nu_star, self.n, self.sigma
            )));
        }
        Ok(())
    }
}

/// Target formula, separated out so fixtures can cross-check it row by row:
/// y_i = sum_j c_j * logistic(w_j . x_i) + sigma * eps_i.
pub fn simulated_targets(
    x: &Matrix,
    unit_weights: &Matrix,
    coefficients: &[f64],
    sigma: f64,
    noise: &[f64],
) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        let mut acc = 0.0;
        for (j, &c) in coefficients.iter().enumerate() {
            let z: f64 = unit_weights.row(j).iter().zip(xi).map(|(w, v)| w * v).sum();
            acc += c * (1.0 / (1.0 + (-z).exp()));
        }
        y.push(acc + sigma * noise[i]);
    }
    y
}

/// Draw order is fixed: X row-major, then the unit weight rows, then the
/// coefficients, then the noise. All standard normal.
pub fn generate_simulated(spec: &SimulatedSpec) -> Result<Dataset, NnError> {
    spec.validate()?;
    let mut rng = Rng::with_stream(spec.seed, Stream::DataGen);
    let x = rng.normal_matrix(spec.n, spec.d);
    let unit_weights = rng.normal_matrix(spec.nu_star, spec.d);
    let coefficients = rng.normal_vec(spec.nu_star);
    let noise = rng.normal_vec(spec.n);
    let y = simulated_targets(&x, &unit_weights, &coefficients, spec.sigma, &noise);
    let targets = Matrix::from_vec(spec.n, 1, y)?;
    Ok(Dataset::new(x, targets, Task::Regression)?)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise_factor: f64,
    pub clip_to_unit: bool,
}

/// Adds N(0,1) noise scaled by the noise factor to the inputs; targets are
/// untouched. With `clip_to_unit` the result is clamped to [0, 1] so
/// cross-entropy reconstruction targets stay valid.
pub fn add_noise(ds: &Dataset, spec: &NoiseSpec, rng: &mut Rng) -> Result<Dataset, NnError> {
    if spec.noise_factor < 0.0 {
        return Err(NnError::InvalidData("negative noise factor".into()));
    }
    let mut inputs = ds.inputs.clone();
    if spec.noise_factor > 0.0 {
        for v in inputs.data_mut() {
            *v += spec.noise_factor * rng.normal();
            if spec.clip_to_unit {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(Dataset {
        inputs,
        targets: ds.targets.clone(),
        task: ds.task,
    })
}

/// Seeded permutation split; every row lands in exactly one part.
pub fn split(ds: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset), NnError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(NnError::InvalidData(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let train_n = (train_fraction * n as f64).round() as usize;
    let train_idx = &order[..train_n];
    let test_idx = &order[train_n..];
    Ok((ds.select(train_idx), ds.select(test_idx)))
}

/// Class-stratified subset split for classification data: `train_n` and
/// `test_n` rows total, spread as evenly as possible across classes, drawn
/// without replacement.
pub fn stratified_subset(
    ds: &Dataset,
    train_n: usize,
    test_n: usize,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset), NnError> {
    if ds.task != Task::Classification {
        return Err(NnError::InvalidData(
            "stratified subsetting requires classification targets".into(),
        ));
    }
    if train_n + test_n > ds.len() {
        return Err(NnError::InvalidData(format!(
            "requested {} rows from {}",
            train_n + test_n,
            ds.len()
        )));
    }
    let labels = ds.labels();
    let classes = ds.targets.cols();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for pool in per_class.iter_mut() {
        rng.shuffle(pool);
    }
    let take = |count: usize, per_class: &mut [Vec<usize>]| -> Result<Vec<usize>, NnError> {
        let mut picked = Vec::with_capacity(count);
        let base = count / classes;
        let extra = count % classes;
        for (c, pool) in per_class.iter_mut().enumerate() {
            let want = base + usize::from(c < extra);
            if pool.len() < want {
                return Err(NnError::InvalidData(format!(
                    "class {c} has only {} rows left, need {want}",
                    pool.len()
                )));
            }
            picked.extend(pool.drain(..want));
        }
        Ok(picked)
    };
    let train_idx = take(train_n, &mut per_class)?;
    let test_idx = take(test_n, &mut per_class)?;
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, NnError> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(NnError::InvalidData("truncated IDX header".into()));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label pair: pixels scaled to [0, 1] as flat rows,
/// labels one-hot over 10 classes.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, NnError> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    if be_u32(&images, 0)? != IDX_IMAGES_MAGIC {
        return Err(NnError::InvalidData(format!(
            "bad image magic in {}",
            images_path.display()
        )));
    }
    if be_u32(&labels, 0)? != IDX_LABELS_MAGIC {
        return Err(NnError::InvalidData(format!(
            "bad label magic in {}",
            labels_path.display()
        )));
    }
    let count = be_u32(&images, 4)? as usize;
    let rows = be_u32(&images, 8)? as usize;
    let cols = be_u32(&images, 12)? as usize;
    let label_count = be_u32(&labels, 4)? as usize;
    if label_count != count {
        return Err(NnError::InvalidData(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let pixels = rows * cols;
    if images.len() != 16 + count * pixels {
        return Err(NnError::InvalidData("truncated image file".into()));
    }
    if labels.len() != 8 + count {
        return Err(NnError::InvalidData("truncated label file".into()));
    }

    let mut x = Vec::with_capacity(count * pixels);
    for &b in &images[16..] {
        x.push(b as f64 / 255.0);
    }
    let mut y = vec![0.0; count * 10];
    for (i, &l) in labels[8..].iter().enumerate() {
        if l > 9 {
            return Err(NnError::InvalidData(format!("label {l} out of range")));
        }
        y[i * 10 + l as usize] = 1.0;
    }
    Ok(Dataset::new(
        Matrix::from_vec(count, pixels, x)?,
        Matrix::from_vec(count, 10, y)?,
        Task::Classification,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_targets_match_scalar_fixture() {
        // Three rows in d = 2, one logistic unit, no noise.
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.5, -1.0]]).unwrap();
        let c = vec![2.0];
        let y = simulated_targets(&x, &w, &c, 0.0, &[0.0, 0.0, 0.0]);
        for (i, yi) in y.iter().enumerate() {
            let z = 0.5 * x.get(i, 0) - 1.0 * x.get(i, 1);
            let expected = 2.0 / (1.0 + (-z).exp());
            assert!((yi - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unit_positive_coefficient_keeps_targets_in_logistic_range() {
        // With c = 1 the noiseless target is a logistic value in (0, 1);
        // rescale the generated coefficient away.
        let spec = SimulatedSpec {
            d: 3,
            nu_star: 1,
            n: 50,
            sigma: 0.0,
            seed: 5,
        };
        let mut rng = Rng::with_stream(spec.seed, Stream::DataGen);
        let x = rng.normal_matrix(spec.n, spec.d);
        let w = rng.normal_matrix(1, spec.d);
        let y = simulated_targets(&x, &w, &[1.0], 0.0, &vec![0.0; spec.n]);
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = SimulatedSpec {
            d: 4,
            nu_star: 2,
            n: 30,
            sigma: 0.25,
            seed: 9,
        };
        let a = generate_simulated(&spec).unwrap();
        let b = generate_simulated(&spec).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn noise_zero_is_identity_and_same_seed_is_same_noise() {
        let spec = SimulatedSpec {
            d: 2,
            nu_star: 1,
            n: 20,
            sigma: 0.0,
            seed: 3,
        };
        let ds = generate_simulated(&spec).unwrap();
        let mut rng = Rng::with_stream(1, Stream::Noise);
        let same = add_noise(
            &ds,
            &NoiseSpec {
                noise_factor: 0.0,
                clip_to_unit: false,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(same.inputs, ds.inputs);

        let mut r1 = Rng::with_stream(42, Stream::Noise);
        let mut r2 = Rng::with_stream(42, Stream::Noise);
        let spec_n = NoiseSpec {
            noise_factor: 0.5,
            clip_to_unit: false,
        };
        let n1 = add_noise(&ds, &spec_n, &mut r1).unwrap();
        let n2 = add_noise(&ds, &spec_n, &mut r2).unwrap();
        assert_eq!(n1.inputs, n2.inputs);
    }

    #[test]
    fn clipped_noise_mean_matches_quadrature_oracle() {
        // Inputs all zero, noise factor 0.5, clipped to [0, 1]. The clipped
        // mean is E[max(min(0.5 Z, 1), 0)]; Simpson quadrature of
        // 0.5 t phi(t) on [0, 2] plus the upper tail mass.
        let n = 200_000;
        let zeros = Dataset::new(
            Matrix::zeros(n, 1),
            Matrix::zeros(n, 1),
            Task::Regression,
        )
        .unwrap();
        let mut rng = Rng::with_stream(7, Stream::Noise);
        let noisy = add_noise(
            &zeros,
            &NoiseSpec {
                noise_factor: 0.5,
                clip_to_unit: true,
            },
            &mut rng,
        )
        .unwrap();
        let mean: f64 = noisy.inputs.data().iter().sum::<f64>() / n as f64;
        assert!(noisy.inputs.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, steps: usize| {
            let h = (b - a) / steps as f64;
            let mut s = f(a) + f(b);
            for i in 1..steps {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let body = simpson(&|t| 0.5 * t * phi(t), 0.0, 2.0, 2000);
        let tail = simpson(&phi, 2.0, 10.0, 2000);
        let expected = body + tail;
        assert!((expected - 0.19523).abs() < 1e-4, "oracle {expected}");
        assert!(
            (mean - expected).abs() < 0.004,
            "empirical {mean} vs oracle {expected}"
        );
    }

    #[test]
    fn split_partitions_rows_exactly() {
        let spec = SimulatedSpec {
            d: 2,
            nu_star: 1,
            n: 10,
            sigma: 0.0,
            seed: 1,
        };
        let ds = generate_simulated(&spec).unwrap();
        let mut rng = Rng::with_stream(0, Stream::Split);
        let (train, test) = split(&ds, 0.8, &mut rng).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);

        // Union of rows covers the dataset exactly once.
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for part in [&train, &test] {
            for r in 0..part.len() {
                seen.push(part.inputs.row(r).iter().map(|v| v.to_bits()).collect());
            }
        }
        seen.sort();
        let mut original: Vec<Vec<u64>> = (0..ds.len())
            .map(|r| ds.inputs.row(r).iter().map(|v| v.to_bits()).collect())
            .collect();
        original.sort();
        assert_eq!(seen, original);

        let mut rng = Rng::with_stream(0, Stream::Split);
        let (all, none) = split(&ds, 1.0, &mut rng).unwrap();
        assert_eq!(all.len(), 10);
        assert_eq!(none.len(), 0);
    }

    fn write_idx_fixture(
        dir: &Path,
        prefix: &str,
        images: &[[u8; 4]],
        labels: &[u8],
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        // 2x2 images.
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        let ip = dir.join(format!("{prefix}-images-idx3-ubyte"));
        let lp = dir.join(format!("{prefix}-labels-idx1-ubyte"));
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) =
            write_idx_fixture(dir.path(), "a", &[[0, 51, 102, 255], [255, 0, 0, 0]], &[3, 7]);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.inputs.cols(), 4);
        assert!((ds.inputs.get(0, 1) - 0.2).abs() < 1e-12);
        assert!((ds.inputs.get(0, 3) - 1.0).abs() < 1e-12);
        assert_eq!(ds.targets.get(0, 3), 1.0);
        assert_eq!(ds.targets.get(1, 7), 1.0);

        // Wrong magic in the label file.
        let bad = dir.path().join("bad-labels");
        fs::write(&bad, [0u8, 0, 8, 5, 0, 0, 0, 2, 3, 7]).unwrap();
        assert!(load_idx(&ip, &bad).is_err());

        // Count mismatch.
        let (_ip2, lp2) = write_idx_fixture(dir.path(), "b", &[[0, 0, 0, 0]], &[1]);
        assert!(load_idx(&ip, &lp2).is_err());
    }

    #[test]
    fn stratified_subset_balances_classes() {
        let n = 100;
        let mut y = vec![0.0; n * 10];
        for i in 0..n {
            y[i * 10 + i % 10] = 1.0;
        }
        let ds = Dataset::new(
            Matrix::zeros(n, 3),
            Matrix::from_vec(n, 10, y).unwrap(),
            Task::Classification,
        )
        .unwrap();
        let mut rng = Rng::with_stream(0, Stream::Split);
        let (train, test) = stratified_subset(&ds, 50, 20, &mut rng).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 20);
        let counts = |d: &Dataset| {
            let mut c = vec![0usize; 10];
            for l in d.labels() {
                c[l] += 1;
            }
            c
        };
        assert!(counts(&train).iter().all(|&c| c == 5));
        assert!(counts(&test).iter().all(|&c| c == 2));
    }
}
