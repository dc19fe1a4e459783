//! Dimensionality scaling benchmark: both learners on synthetic
//! single-Gaussian data of growing dimension, with a log-log exponent fit.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{column_stats_of, Dataset};
use crate::error::{Error, Result};
use crate::inference::{predict, Partition};
use crate::model::{LearnerConfig, Mixture, Representation};

/// Largest dimension that gets a random rotation; above it the covariance
/// is diagonal.
pub const MAX_ROTATED_DIM: usize = 64;

/// Smallest dimension used by [`fit_exponent`].
pub const FIT_MIN_DIM: usize = 32;

#[derive(Clone, Debug)]
pub struct ScalingConfig {
    pub dims: Vec<usize>,
    pub n_points: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub learners: Vec<Representation>,
    /// Timing repetitions per cell; the median is reported.
    pub repetitions: usize,
    pub delta: f64,
    pub beta: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            dims: (0..=8).map(|k| 1 << k).collect(),
            n_points: 1000,
            train_fraction: 0.9,
            seed: 0,
            learners: vec![Representation::Covariance, Representation::Precision],
            repetitions: 3,
            delta: 1.0,
            beta: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalingRow {
    pub dim: usize,
    pub learner: Representation,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub component_count: usize,
    /// Held-out predictions of the last dimension (not part of the CSV).
    pub predictions: Vec<f64>,
}

pub fn learner_name(r: Representation) -> &'static str {
    match r {
        Representation::Covariance => "reference",
        Representation::Precision => "fast",
    }
}

/// `n` draws from one Gaussian with a seeded mean and covariance: axis
/// scales uniform in [0.5, 2], randomly rotated when `dim <= 64`.
pub fn gen_gaussian_dataset(dim: usize, n: usize, seed: u64) -> Result<Dataset> {
    if dim == 0 || n == 0 {
        return Err(Error::config("dimension and point count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (dim as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mean: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let scales: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect();
    let rotation = (dim <= MAX_ROTATED_DIM).then(|| {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
        g.qr().q()
    });
    let mut rows = Vec::with_capacity(n);
    let mut z = vec![0.0; dim];
    for _ in 0..n {
        for (zk, s) in z.iter_mut().zip(&scales) {
            *zk = s * rng.sample::<f64, _>(StandardNormal);
        }
        let row = match &rotation {
            Some(q) => (0..dim)
                .map(|r| mean[r] + (0..dim).map(|c| q[(r, c)] * z[c]).sum::<f64>())
                .collect(),
            None => mean.iter().zip(&z).map(|(m, v)| m + v).collect(),
        };
        rows.push(row);
    }
    Dataset::new((0..dim).map(|k| format!("x{k}")).collect(), rows, None)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times training and held-out prediction of every learner on every
/// dimension. Only the learning and prediction loops are timed, after one
/// untimed warm-up pass.
pub fn run_scaling(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.learners.is_empty() {
        return Err(Error::config("no learners selected"));
    }
    if cfg.dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("dimensions must be strictly increasing"));
    }
    let reps = cfg.repetitions.max(1);
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        let ds = gen_gaussian_dataset(dim, cfg.n_points, cfg.seed)?;
        let n_train = ((cfg.n_points as f64 * cfg.train_fraction).round() as usize).clamp(1, cfg.n_points);
        let (train, test) = ds.rows.split_at(n_train);
        let std = column_stats_of(train).std;
        let part = Partition::trailing(dim, 1)?;
        let known: Vec<Vec<f64>> = test.iter().map(|r| part.known_of(r)).collect();

        for &learner in &cfg.learners {
            let config = LearnerConfig::builder(&std)
                .delta(cfg.delta)
                .beta(cfg.beta)
                .representation(learner)
                .build()?;
            let mut train_times = Vec::with_capacity(reps);
            let mut test_times = Vec::with_capacity(reps);
            let mut last = None;
            // one untimed warm-up pass per cell
            let mut warm = Mixture::new(config.clone());
            for row in train {
                warm.learn(row)?;
            }
            for _ in 0..reps {
                let mut mix = Mixture::new(config.clone());
                let started = Instant::now();
                for row in train {
                    mix.learn(row)?;
                }
                train_times.push(started.elapsed().as_secs_f64());

                let started = Instant::now();
                let predictions = known
                    .iter()
                    .map(|k| predict(&mix, &part, k).map(|p| p.target_mean[0]))
                    .collect::<Result<Vec<_>>>()?;
                test_times.push(started.elapsed().as_secs_f64());
                last = Some((mix.len(), predictions));
            }
            let (component_count, predictions) = last.expect("at least one repetition");
            rows.push(ScalingRow {
                dim,
                learner,
                train_seconds: median(train_times),
                test_seconds: median(test_times),
                component_count,
                predictions,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln(train_seconds)` against `ln(dim)` over rows
/// with `dim >= 32`.
pub fn fit_exponent(rows: &[ScalingRow]) -> Result<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.dim >= FIT_MIN_DIM)
        .map(|r| ((r.dim as f64).ln(), r.train_seconds.ln()))
        .collect();
    if points.len() < 4 {
        return Err(Error::config(format!(
            "exponent fit needs at least 4 rows with dim >= {FIT_MIN_DIM}, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::config("non-positive timing in exponent fit"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("exponent fit needs distinct dimensions"));
    }
    Ok(sxy / sxx)
}

/// `dim,learner,train_seconds,test_seconds,component_count`
pub fn write_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dim", "learner", "train_seconds", "test_seconds", "component_count"])?;
    for r in rows {
        w.write_record([
            r.dim.to_string(),
            learner_name(r.learner).to_string(),
            format!("{:.9}", r.train_seconds),
            format!("{:.9}", r.test_seconds),
            r.component_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(power: i32) -> Vec<ScalingRow> {
        [32usize, 64, 128, 256]
            .iter()
            .map(|&dim| ScalingRow {
                dim,
                learner: Representation::Precision,
                train_seconds: (dim as f64).powi(power),
                test_seconds: 0.0,
                component_count: 1,
                predictions: vec![],
            })
            .collect()
    }

    #[test]
    fn exponent_of_exact_powers() {
        assert!((fit_exponent(&synthetic(2)).unwrap() - 2.0).abs() < 1e-9);
        assert!((fit_exponent(&synthetic(3)).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn exponent_needs_enough_rows() {
        let mut rows = synthetic(2);
        rows.pop();
        assert!(fit_exponent(&rows).is_err());
        rows[0].dim = 16;
        assert!(fit_exponent(&rows).is_err());
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_gaussian_dataset(4, 50, 7).unwrap();
        let b = gen_gaussian_dataset(4, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.width(), 4);
        assert!(a.classes.is_none());
        assert_ne!(a, gen_gaussian_dataset(4, 50, 8).unwrap());
    }

    #[test]
    fn one_dimensional_sample_mean() {
        let seed = 3;
        let ds = gen_gaussian_dataset(1, 1000, seed).unwrap();
        // replay the generator's draws for the true mean and scale
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let mu: f64 = rng.gen_range(-5.0..5.0);
        let scale: f64 = rng.gen_range(0.5..2.0);
        let mean = ds.rows.iter().map(|r| r[0]).sum::<f64>() / 1000.0;
        let stderr = scale / 1000f64.sqrt();
        assert!((mean - mu).abs() < 5.0 * stderr, "{mean} vs {mu}");
    }

    #[test]
    fn small_run_has_one_component_and_agreeing_learners() {
        let cfg = ScalingConfig {
            dims: vec![1, 2, 4, 8],
            n_points: 200,
            repetitions: 1,
            ..ScalingConfig::default()
        };
        let rows = run_scaling(&cfg).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.component_count == 1));
        for pair in rows.chunks(2) {
            assert_eq!(pair[0].dim, pair[1].dim);
            for (a, b) in pair[0].predictions.iter().zip(&pair[1].predictions) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("dim,learner,train_seconds,test_seconds,component_count\n1,reference,"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn bad_configs() {
        let cfg = ScalingConfig {
            learners: vec![],
            ..ScalingConfig::default()
        };
        assert!(run_scaling(&cfg).is_err());
        let cfg = ScalingConfig {
            dims: vec![4, 2],
            ..ScalingConfig::default()
        };
        assert!(run_scaling(&cfg).is_err());
    }
}
