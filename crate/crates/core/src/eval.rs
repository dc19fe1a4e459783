//! k-fold cross-validation of a learner on a tabular dataset.

use std::time::Instant;

use crate::data::{column_stats_of, one_hot, stratified_kfold, Dataset};
use crate::error::{Error, Result};
use crate::inference::{argmax, predict, Partition};
use crate::model::{LearnerConfig, Mixture, Representation, DEFAULT_BETA};

#[derive(Clone, Debug)]
pub struct LearnerParams {
    pub delta: f64,
    pub beta: f64,
    pub v_min: u64,
    pub sp_min: f64,
    pub pruning: bool,
    pub representation: Representation,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            beta: DEFAULT_BETA,
            v_min: 5,
            sp_min: 3.0,
            pruning: true,
            representation: Representation::Precision,
        }
    }
}

impl LearnerParams {
    pub fn config(&self, dataset_std: &[f64]) -> Result<LearnerConfig> {
        LearnerConfig::builder(dataset_std)
            .delta(self.delta)
            .beta(self.beta)
            .v_min(self.v_min)
            .sp_min(self.sp_min)
            .pruning(self.pruning)
            .representation(self.representation)
            .build()
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub learner: LearnerParams,
    pub folds: usize,
    pub seed: u64,
    /// z-score feature columns with training-fold statistics.
    pub standardize: bool,
    /// Regression targets (column indices) when the dataset has no class
    /// column; empty means the last column.
    pub targets: Vec<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            learner: LearnerParams::default(),
            folds: 10,
            seed: 0,
            standardize: false,
            targets: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    /// Accuracy for classification, RMSE for regression.
    pub score: f64,
    pub components: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    /// Predicted target block of each test row, in test order.
    pub predictions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct CvReport {
    pub task: Task,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn mean_score(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.score))
    }

    /// Sample standard deviation of the per-fold scores.
    pub fn std_score(&self) -> f64 {
        sample_std(self.folds.iter().map(|f| f.score))
    }

    pub fn mean_components(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.components as f64))
    }

    pub fn std_components(&self) -> f64 {
        sample_std(self.folds.iter().map(|f| f.components as f64))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(values.clone());
    let (ss, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - m).powi(2), n + 1));
    if n < 2 {
        0.0
    } else {
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Joint training matrix and the known/target split for a dataset.
pub struct Encoded {
    pub task: Task,
    pub data: Dataset,
    pub partition: Partition,
    /// Columns eligible for standardization.
    pub features: Vec<usize>,
}

/// Classification datasets get their class appended as a one-hot block;
/// regression datasets predict `targets` (default: last column).
pub fn encode(ds: &Dataset, targets: &[usize]) -> Result<Encoded> {
    if ds.classes.is_some() {
        let data = one_hot(ds)?;
        let width = ds.width();
        let partition = Partition::trailing(data.width(), ds.class_count())?;
        Ok(Encoded {
            task: Task::Classification,
            data,
            partition,
            features: (0..width).collect(),
        })
    } else {
        if ds.width() < 2 && targets.is_empty() {
            return Err(Error::config("regression needs at least two columns"));
        }
        let targets = if targets.is_empty() { vec![ds.width() - 1] } else { targets.to_vec() };
        let partition = Partition::with_targets(ds.width(), &targets)?;
        Ok(Encoded {
            task: Task::Regression,
            features: partition.known().to_vec(),
            data: ds.clone(),
            partition,
        })
    }
}

/// Trains a fresh mixture on `rows` (one pass, in order).
pub fn train(rows: &[Vec<f64>], params: &LearnerParams) -> Result<Mixture> {
    let stats = column_stats_of(rows);
    let mut mix = Mixture::new(params.config(&stats.std)?);
    mix.learn_all(rows.iter().map(Vec::as_slice))?;
    Ok(mix)
}

pub fn cross_validate(ds: &Dataset, opts: &EvalOptions) -> Result<CvReport> {
    let enc = encode(ds, &opts.targets)?;
    let plan = stratified_kfold(&enc.data, opts.folds, opts.seed)?;
    let part = &enc.partition;
    let mut folds = Vec::with_capacity(opts.folds);

    for fold in 0..opts.folds {
        let mut train_rows = enc.data.subset(&plan.train_indices(fold)).rows;
        let test = enc.data.subset(&plan.test_indices(fold));
        let mut test_rows = test.rows.clone();
        if opts.standardize {
            let stats = column_stats_of(&train_rows);
            for row in train_rows.iter_mut().chain(test_rows.iter_mut()) {
                for &c in &enc.features {
                    row[c] = (row[c] - stats.mean[c]) / stats.std[c];
                }
            }
        }

        let started = Instant::now();
        let mix = train(&train_rows, &opts.learner)?;
        let train_seconds = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let mut predictions = Vec::with_capacity(test_rows.len());
        let mut hits = 0usize;
        let mut sq_err = 0.0;
        let mut n_err = 0usize;
        for (i, row) in test_rows.iter().enumerate() {
            let pred = predict(&mix, part, &part.known_of(row))?;
            let out = pred.target_mean.as_slice().to_vec();
            match enc.task {
                Task::Classification => {
                    let truth = test.classes.as_ref().expect("class column").targets[i];
                    hits += usize::from(argmax(&out) == truth);
                }
                Task::Regression => {
                    for (p, t) in out.iter().zip(part.target_of(row)) {
                        sq_err += (p - t).powi(2);
                        n_err += 1;
                    }
                }
            }
            predictions.push(out);
        }
        let test_seconds = started.elapsed().as_secs_f64();
        let score = match enc.task {
            Task::Classification => hits as f64 / test_rows.len() as f64,
            Task::Regression => (sq_err / n_err.max(1) as f64).sqrt(),
        };
        folds.push(FoldResult {
            fold,
            score,
            components: mix.len(),
            train_seconds,
            test_seconds,
            predictions,
        });
    }
    Ok(CvReport { task: enc.task, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_csv;
    use std::path::Path;

    fn iris() -> Dataset {
        load_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/iris.csv"), Some("species")).unwrap()
    }

    #[test]
    fn iris_cross_validation() {
        let report = cross_validate(&iris(), &EvalOptions::default()).unwrap();
        assert_eq!(report.task, Task::Classification);
        assert_eq!(report.folds.len(), 10);
        assert!(report.mean_score() >= 0.9, "accuracy {}", report.mean_score());
        let k = report.mean_components();
        assert!((2.0..=6.0).contains(&k), "components {k}");
    }

    #[test]
    fn fast_and_reference_agree() {
        let fast = cross_validate(&iris(), &EvalOptions::default()).unwrap();
        let mut opts = EvalOptions::default();
        opts.learner.representation = Representation::Covariance;
        let reference = cross_validate(&iris(), &opts).unwrap();
        assert!((fast.mean_score() - reference.mean_score()).abs() < 1e-8);
        for (a, b) in fast.folds.iter().zip(&reference.folds) {
            assert_eq!(a.components, b.components);
            for (pa, pb) in a.predictions.iter().zip(&b.predictions) {
                for (x, y) in pa.iter().zip(pb) {
                    assert!((x - y).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn regression_task() {
        let ds = iris();
        let plain = Dataset::new(ds.column_names.clone(), ds.rows.clone(), None).unwrap();
        let opts = EvalOptions {
            folds: 5,
            ..EvalOptions::default()
        };
        let report = cross_validate(&plain, &opts).unwrap();
        assert_eq!(report.task, Task::Regression);
        // petal width predicted from the other three measurements
        assert!(report.mean_score() < 0.5, "rmse {}", report.mean_score());
    }

    #[test]
    fn one_fold_is_rejected() {
        let opts = EvalOptions {
            folds: 1,
            ..EvalOptions::default()
        };
        assert!(matches!(cross_validate(&iris(), &opts), Err(Error::Config(_))));
    }

    #[test]
    fn beta_zero_single_component() {
        let mut opts = EvalOptions::default();
        opts.learner.beta = 0.0;
        let report = cross_validate(&iris(), &opts).unwrap();
        assert!(report.folds.iter().all(|f| f.components == 1));
    }
}
