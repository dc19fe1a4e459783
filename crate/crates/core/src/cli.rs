//! Command-line interface. Reports go to `--out` or standard output as CSV;
//! human-readable summaries go to standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{self, ScalingConfig};
use crate::data::{column_stats, load_csv, one_hot, Dataset};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, EvalOptions, LearnerParams, Task};
use crate::inference::{argmax, Partition};
use crate::model::{Mixture, Representation, DEFAULT_BETA};
use crate::model_file::ModelFile;
use crate::rl::{self, AgentConfig, EnvSpec, TaskName};

#[derive(Parser, Debug)]
#[command(name = "igmn", version, about = "Incremental Gaussian mixture learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model in one pass over a CSV file
    Train(TrainArgs),
    /// k-fold cross-validation
    Eval(EvalArgs),
    /// Predict target columns with a saved model
    Predict(PredictArgs),
    /// Training-time scaling over dimensions
    Bench(BenchArgs),
    /// Q-learning on a control task
    Rl(RlArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LearnerKind {
    Fast,
    Reference,
}

impl From<LearnerKind> for Representation {
    fn from(k: LearnerKind) -> Self {
        match k {
            LearnerKind::Fast => Representation::Precision,
            LearnerKind::Reference => Representation::Covariance,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct LearnerArgs {
    /// Initial spread as a fraction of each column's standard deviation
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Novelty tail probability; 0 never creates a second component
    /// [default: 4.9e-324, the smallest positive double]
    #[arg(long, default_value_t = DEFAULT_BETA, hide_default_value = true)]
    pub beta: f64,
    #[arg(long = "vmin", default_value_t = 5)]
    pub v_min: u64,
    #[arg(long = "spmin", default_value_t = 3.0)]
    pub sp_min: f64,
    #[arg(long)]
    pub no_pruning: bool,
    #[arg(long, value_enum, default_value_t = LearnerKind::Fast)]
    pub learner: LearnerKind,
}

impl LearnerArgs {
    fn params(&self) -> LearnerParams {
        LearnerParams {
            delta: self.delta,
            beta: self.beta,
            v_min: self.v_min,
            sp_min: self.sp_min,
            pruning: !self.no_pruning,
            representation: self.learner.into(),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Class column (name or 0-based index); trains a classifier
    #[arg(long)]
    pub class: Option<String>,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Present rows in a seeded random order instead of file order
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub class: Option<String>,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// z-score features with training-fold statistics
    #[arg(long)]
    pub standardize: bool,
    /// Regression targets (names or indices, comma separated); default last column
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Model columns to predict (names or indices, comma separated);
    /// default: the class block, or the last column
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', value_enum, default_value = "reference,fast")]
    pub learners: Vec<LearnerKind>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RlArgs {
    /// cart-pole or mountain-car
    #[arg(long, default_value = "cart-pole")]
    pub task: String,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Keep running after the solve criterion is met
    #[arg(long)]
    pub full: bool,
    /// Uniformly random actions (baseline)
    #[arg(long)]
    pub random: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code:
/// 0 success, 1 runtime failure, 2 usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Rl(a) => cmd_rl(&a),
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Loads a dataset and, for classification, appends the one-hot class block.
fn load_training_data(path: &Path, class: Option<&str>) -> Result<Dataset> {
    let ds = load_csv(path, class)?;
    if ds.classes.is_some() {
        one_hot(&ds)
    } else {
        Ok(ds)
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let ds = load_training_data(&a.data, a.class.as_deref())?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if a.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
    }
    let mut mix = Mixture::new(a.learner.params().config(&column_stats(&ds).std)?);
    let started = Instant::now();
    for &i in &order {
        mix.learn(&ds.rows[i])?;
    }
    let seconds = started.elapsed().as_secs_f64();

    let class_labels = ds.classes.as_ref().map(|c| c.labels.clone()).unwrap_or_default();
    let file = ModelFile {
        mixture: mix,
        columns: ds.column_names.clone(),
        class_labels,
    };
    file.save(&a.out)?;
    eprintln!(
        "components {} train_seconds {:.6} skipped_updates {}",
        file.mixture.len(),
        seconds,
        file.mixture.skipped_updates()
    );
    Ok(())
}

fn resolve_columns(names: &[String], wanted: &[String]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|w| {
            names
                .iter()
                .position(|n| n == w)
                .or_else(|| w.parse::<usize>().ok().filter(|i| *i < names.len()))
                .ok_or_else(|| Error::config(format!("unknown column `{w}`")))
        })
        .collect()
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ds = load_csv(&a.data, a.class.as_deref())?;
    let targets = resolve_columns(&ds.column_names, &a.targets)?;
    let opts = EvalOptions {
        learner: a.learner.params(),
        folds: a.folds,
        seed: a.seed,
        standardize: a.standardize,
        targets,
    };
    let report = cross_validate(&ds, &opts)?;
    let metric = match report.task {
        Task::Classification => "accuracy",
        Task::Regression => "rmse",
    };
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["fold", metric, "components"])?;
    for f in &report.folds {
        w.write_record([f.fold.to_string(), format!("{:.6}", f.score), f.components.to_string()])?;
    }
    w.write_record([
        "mean".to_string(),
        format!("{:.6}", report.mean_score()),
        format!("{:.3}", report.mean_components()),
    ])?;
    w.write_record([
        "std".to_string(),
        format!("{:.6}", report.std_score()),
        format!("{:.3}", report.std_components()),
    ])?;
    w.flush()?;
    eprintln!(
        "{metric} {:.4} +- {:.4}, components {:.2} +- {:.2}",
        report.mean_score(),
        report.std_score(),
        report.mean_components(),
        report.std_components()
    );
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let mix = &file.mixture;
    let dim = mix.config().dim();
    let names: Vec<String> = if file.columns.is_empty() {
        (0..dim).map(|i| format!("x{i}")).collect()
    } else {
        file.columns.clone()
    };

    let target = if !a.targets.is_empty() {
        resolve_columns(&names, &a.targets)?
    } else if !file.class_labels.is_empty() {
        (dim - file.class_labels.len()..dim).collect()
    } else {
        vec![dim - 1]
    };
    let part = Partition::with_targets(dim, &target)?;
    let classifier = !file.class_labels.is_empty() && target == (dim - file.class_labels.len()..dim).collect::<Vec<_>>();

    // a class column in the input is ignored
    let class_column = file
        .class_labels
        .first()
        .and_then(|_| names[dim - file.class_labels.len()].split_once('='))
        .map(|(c, _)| c.to_string());
    let header: Vec<String> = csv::Reader::from_path(&a.data)?
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let class_present = class_column.as_ref().filter(|c| header.contains(c));
    let ds = load_csv(&a.data, class_present.map(String::as_str))?;

    let known_names: Vec<&String> = part.known().iter().map(|&i| &names[i]).collect();
    let source: Vec<usize> = if !file.columns.is_empty() && known_names.iter().all(|n| ds.column_index(n).is_some()) {
        known_names.iter().map(|n| ds.column_index(n).expect("checked")).collect()
    } else if ds.width() == part.known().len() {
        (0..ds.width()).collect()
    } else if ds.width() == dim {
        part.known().to_vec()
    } else {
        return Err(Error::config(format!(
            "data has {} columns; the model needs {} known columns ({} dimensions in total)",
            ds.width(),
            part.known().len(),
            dim
        )));
    };

    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    let mut head: Vec<String> = Vec::new();
    for &t in &target {
        head.push(names[t].clone());
        head.push(format!("{}_var", names[t]));
    }
    if classifier {
        head.push("predicted_class".into());
    }
    w.write_record(&head)?;
    for row in &ds.rows {
        let x_i: Vec<f64> = source.iter().map(|&c| row[c]).collect();
        let pred = mix.predict(&part, &x_i)?;
        let mut rec: Vec<String> = Vec::with_capacity(head.len());
        for k in 0..target.len() {
            rec.push(format!("{:.17e}", pred.target_mean[k]));
            rec.push(format!("{:.17e}", pred.target_cov[(k, k)]));
        }
        if classifier {
            rec.push(file.class_labels[argmax(pred.target_mean.as_slice())].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = ScalingConfig {
        dims: a.dims.clone(),
        n_points: a.n,
        seed: a.seed,
        learners: a.learners.iter().map(|&l| l.into()).collect(),
        repetitions: a.repetitions,
        ..ScalingConfig::default()
    };
    let rows = bench::run_scaling(&cfg)?;
    bench::write_csv(&rows, sink(&a.out)?)?;
    for &learner in &cfg.learners {
        let own: Vec<_> = rows.iter().filter(|r| r.learner == learner).cloned().collect();
        match bench::fit_exponent(&own) {
            Ok(slope) => eprintln!("{} exponent {slope:.3}", bench::learner_name(learner)),
            Err(e) => eprintln!("{} exponent unavailable: {e}", bench::learner_name(learner)),
        }
    }
    Ok(())
}

pub fn cmd_rl(a: &RlArgs) -> Result<()> {
    let task: TaskName = a.task.parse()?;
    let spec = EnvSpec::new(task);
    let mut cfg = AgentConfig::default();
    if let Some(n) = a.episodes {
        cfg.episode_cap = n;
    }
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    if let Some(d) = a.delta {
        cfg.learner.delta = d;
    }
    if let Some(b) = a.beta {
        cfg.learner.beta = b;
    }
    cfg.stop_when_solved = !a.full;
    let report = if a.random {
        rl::run_random(&spec, &cfg, a.seed)?
    } else {
        rl::run_task(&spec, &cfg, a.seed)?
    };
    rl::write_csv(&report.episodes, sink(&a.out)?)?;
    let show = |v: Option<usize>| v.map_or_else(|| "none".to_string(), |e| e.to_string());
    eprintln!(
        "{} solved_at {} first_success {} max_components {}",
        task.as_str(),
        show(report.solved_at),
        show(report.first_success),
        report.max_components
    );
    Ok(())
}
