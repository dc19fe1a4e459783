//! Plain-text model files.
//!
//! Line oriented, one `key value...` record per line, every real written with
//! 17 significant digits so a save/load cycle restores each binary64 exactly.
//!
//! ```text
//! igmn-model 1
//! representation precision
//! dim 3
//! delta 5.0000000000000000e-1
//! beta 4.9406564584124654e-324
//! v_min 5
//! sp_min 3.0000000000000000e0
//! pruning true
//! std 1.0e0 2.0e0 5.0e-1
//! column sepal_length          (one per dimension, optional)
//! label Iris-setosa            (class labels, optional)
//! components 1
//! component
//! sp ...
//! age ...
//! prior ...
//! log_det_cov ...
//! mean <dim reals>
//! row <dim reals>              (dim rows of the precision or covariance matrix)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GaussianComponent, LearnerConfig, Mixture, Representation, Spread};
use crate::numerics::{SymMatrix, Vector};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "igmn-model";

/// A trained mixture plus the column metadata needed to apply it to files.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub mixture: Mixture,
    /// Name of each model dimension; empty when unknown.
    pub columns: Vec<String>,
    /// Class labels, in one-hot order, for classification models.
    pub class_labels: Vec<String>,
}

fn real(out: &mut String, v: f64) {
    write!(out, " {v:.16e}").unwrap();
}

impl ModelFile {
    pub fn new(mixture: Mixture) -> Self {
        Self {
            mixture,
            columns: Vec::new(),
            class_labels: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mix = &self.mixture;
        let cfg = mix.config();
        let mut out = String::new();
        writeln!(out, "{MAGIC} {FORMAT_VERSION}").unwrap();
        writeln!(out, "representation {}", cfg.representation().as_str()).unwrap();
        writeln!(out, "dim {}", cfg.dim()).unwrap();
        out.push_str("delta");
        real(&mut out, cfg.delta());
        out.push_str("\nbeta");
        real(&mut out, cfg.beta());
        writeln!(out, "\nv_min {}", cfg.v_min()).unwrap();
        out.push_str("sp_min");
        real(&mut out, cfg.sp_min());
        writeln!(out, "\npruning {}", cfg.pruning()).unwrap();
        out.push_str("std");
        cfg.dataset_std().iter().for_each(|v| real(&mut out, *v));
        out.push('\n');
        for c in &self.columns {
            writeln!(out, "column {c}").unwrap();
        }
        for l in &self.class_labels {
            writeln!(out, "label {l}").unwrap();
        }
        writeln!(out, "components {}", mix.len()).unwrap();
        for comp in mix.components() {
            out.push_str("component\nsp");
            real(&mut out, comp.sp);
            writeln!(out, "\nage {}", comp.age).unwrap();
            out.push_str("prior");
            real(&mut out, comp.prior);
            out.push_str("\nlog_det_cov");
            real(&mut out, comp.log_det_cov);
            out.push_str("\nmean");
            comp.mean.iter().for_each(|v| real(&mut out, *v));
            out.push('\n');
            let m = comp.spread.matrix();
            for r in 0..m.nrows() {
                out.push_str("row");
                m.row(r).iter().for_each(|v| real(&mut out, *v));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let header = lines.expect(MAGIC)?;
        let version: u32 = parse_one(&header, "format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let representation: Representation = lines.expect("representation")?.parse()?;
        let dim: usize = parse_one(&lines.expect("dim")?, "dim")?;
        let delta = parse_one(&lines.expect("delta")?, "delta")?;
        let beta = parse_one(&lines.expect("beta")?, "beta")?;
        let v_min = parse_one(&lines.expect("v_min")?, "v_min")?;
        let sp_min = parse_one(&lines.expect("sp_min")?, "sp_min")?;
        let pruning = parse_one(&lines.expect("pruning")?, "pruning")?;
        let std = parse_reals(&lines.expect("std")?, dim)?;
        let config = LearnerConfig::builder(&std)
            .delta(delta)
            .beta(beta)
            .v_min(v_min)
            .sp_min(sp_min)
            .pruning(pruning)
            .representation(representation)
            .build()?;

        let mut columns = Vec::new();
        let mut class_labels = Vec::new();
        let count: usize = loop {
            let (key, rest) = lines.next_record()?;
            match key {
                "column" => columns.push(rest.to_string()),
                "label" => class_labels.push(rest.to_string()),
                "components" => break parse_one(rest, "components")?,
                other => return Err(Error::ModelFormat(format!("unexpected key `{other}`"))),
            }
        };
        if !columns.is_empty() && columns.len() != dim {
            return Err(Error::ModelFormat(format!("{} column names for {dim} dimensions", columns.len())));
        }

        let mut components = Vec::with_capacity(count);
        for _ in 0..count {
            lines.expect("component")?;
            let sp = parse_one(&lines.expect("sp")?, "sp")?;
            let age = parse_one(&lines.expect("age")?, "age")?;
            let prior = parse_one(&lines.expect("prior")?, "prior")?;
            let log_det_cov = parse_one(&lines.expect("log_det_cov")?, "log_det_cov")?;
            let mean = Vector::from_vec(parse_reals(&lines.expect("mean")?, dim)?);
            let mut matrix = SymMatrix::zeros(dim, dim);
            for r in 0..dim {
                let row = parse_reals(&lines.expect("row")?, dim)?;
                matrix.row_mut(r).iter_mut().zip(row).for_each(|(m, v)| *m = v);
            }
            let spread = match representation {
                Representation::Covariance => Spread::Covariance(matrix),
                Representation::Precision => Spread::Precision(matrix),
            };
            components.push(GaussianComponent {
                mean,
                spread,
                log_det_cov,
                sp,
                age,
                prior,
            });
        }
        if let Some((key, _)) = lines.peek_record() {
            return Err(Error::ModelFormat(format!("trailing data starting with `{key}`")));
        }
        Ok(Self {
            mixture: Mixture::from_parts(config, components)?,
            columns,
            class_labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
        }
    }

    fn skip_blank(&mut self) {
        while matches!(self.inner.peek(), Some((_, l)) if l.trim().is_empty()) {
            self.inner.next();
        }
    }

    fn peek_record(&mut self) -> Option<(&'a str, &'a str)> {
        self.skip_blank();
        self.inner.peek().map(|(_, l)| split_record(l))
    }

    fn next_record(&mut self) -> Result<(&'a str, &'a str)> {
        self.skip_blank();
        self.inner
            .next()
            .map(|(_, l)| split_record(l))
            .ok_or_else(|| Error::ModelFormat("unexpected end of file".into()))
    }

    fn expect(&mut self, key: &str) -> Result<String> {
        self.skip_blank();
        let line_no = self.inner.peek().map_or(0, |(n, _)| n + 1);
        let (k, rest) = self.next_record()?;
        if k != key {
            return Err(Error::ModelFormat(format!("line {line_no}: expected `{key}`, found `{k}`")));
        }
        Ok(rest.to_string())
    }
}

fn split_record(line: &str) -> (&str, &str) {
    let line = line.trim_end();
    match line.split_once(' ') {
        Some((k, rest)) => (k, rest.trim_start()),
        None => (line, ""),
    }
}

fn parse_one<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::ModelFormat(format!("invalid {what} `{s}`")))
}

fn parse_reals(s: &str, expected: usize) -> Result<Vec<f64>> {
    let values = s
        .split_whitespace()
        .map(|t| parse_one::<f64>(t, "number"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::ModelFormat(format!("expected {expected} numbers, found {}", values.len())));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Partition;
    use crate::model::DEFAULT_BETA;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained(repr: Representation) -> Mixture {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = LearnerConfig::builder(&[1.0, 0.5, 2.0])
            .delta(0.3)
            .beta(0.1)
            .representation(repr)
            .build()
            .unwrap();
        let mut mix = Mixture::new(cfg);
        for _ in 0..200 {
            let c = if rng.gen_bool(0.5) { 3.0 } else { -3.0 };
            let x: Vec<f64> = (0..3).map(|_| c + rng.gen_range(-1.0..1.0)).collect();
            mix.learn(&x).unwrap();
        }
        mix
    }

    #[test]
    fn roundtrip_is_bitwise() {
        for repr in [Representation::Precision, Representation::Covariance] {
            let mix = trained(repr);
            let mut file = ModelFile::new(mix.clone());
            file.columns = vec!["a".into(), "b b".into(), "c".into()];
            file.class_labels = vec!["x".into()];
            let text = file.to_text();
            let back = ModelFile::from_text(&text).unwrap();
            assert_eq!(back.columns, file.columns);
            assert_eq!(back.class_labels, file.class_labels);
            assert_eq!(back.mixture.components(), mix.components());
            assert_eq!(back.mixture.config(), mix.config());
            assert_eq!(back.to_text(), text);
            let part = Partition::trailing(3, 1).unwrap();
            let a = mix.predict(&part, &[0.4, -0.2]).unwrap();
            let b = back.mixture.predict(&part, &[0.4, -0.2]).unwrap();
            assert_eq!(a.target_mean[0].to_bits(), b.target_mean[0].to_bits());
        }
    }

    #[test]
    fn default_beta_survives() {
        let cfg = LearnerConfig::builder(&[1.0]).build().unwrap();
        let text = ModelFile::new(Mixture::new(cfg)).to_text();
        let back = ModelFile::from_text(&text).unwrap();
        assert_eq!(back.mixture.config().beta(), DEFAULT_BETA);
        assert!(back.mixture.is_empty());
    }

    #[test]
    fn unknown_version_rejected() {
        let cfg = LearnerConfig::builder(&[1.0]).build().unwrap();
        let text = ModelFile::new(Mixture::new(cfg)).to_text().replace("igmn-model 1", "igmn-model 7");
        let err = ModelFile::from_text(&text).unwrap_err();
        assert!(err.to_string().contains("unsupported format version 7"));
    }

    #[test]
    fn truncated_file_rejected() {
        let text = ModelFile::new(trained(Representation::Precision)).to_text();
        let cut: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(ModelFile::from_text(&cut).is_err());
        assert!(ModelFile::from_text("").is_err());
        assert!(ModelFile::from_text(&format!("{text}extra 1\n")).is_err());
    }
}
