//! Tabular data: CSV ingestion, column statistics, one-hot class encoding
//! and stratified k-fold plans.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::STD_FLOOR;

/// Class column of a dataset, label-encoded.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassInfo {
    pub column_name: String,
    /// Distinct labels, sorted; a row's class is an index into this list.
    pub labels: Vec<String>,
    pub targets: Vec<usize>,
}

/// Numeric feature matrix plus an optional class column.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub classes: Option<ClassInfo>,
}

impl Dataset {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, classes: Option<ClassInfo>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::config("dataset has no rows"));
        }
        let width = column_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::config(format!("row {bad} has {} values, expected {width}", rows[bad].len())));
        }
        if let Some(c) = &classes {
            if c.targets.len() != rows.len() || c.targets.iter().any(|t| *t >= c.labels.len()) {
                return Err(Error::config("class targets do not match rows"));
            }
        }
        Ok(Self {
            column_names,
            rows,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.as_ref().map_or(0, |c| c.labels.len())
    }

    /// Rows restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            column_names: self.column_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            classes: self.classes.as_ref().map(|c| ClassInfo {
                column_name: c.column_name.clone(),
                labels: c.labels.clone(),
                targets: indices.iter().map(|&i| c.targets[i]).collect(),
            }),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Reads a headed, comma-separated file. Every cell must be a finite number
/// except in `class_column` (matched by header name, or by zero-based index
/// when the name is all digits).
pub fn load_csv(path: &Path, class_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let class_idx = match class_column {
        None => None,
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .or_else(|| name.parse::<usize>().ok().filter(|i| *i < headers.len()))
                .ok_or_else(|| Error::config(format!("class column `{name}` not found in {}", path.display())))?,
        ),
    };

    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                record.len(),
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == class_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => return Err(parse_err(line, c + 1, format!("`{cell}` is not a finite number"))),
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config(format!("{} contains no data rows", path.display())));
    }

    let mut names = headers.clone();
    let classes = class_idx.map(|ci| {
        names.remove(ci);
        let mut labels = raw_labels.clone();
        labels.sort();
        labels.dedup();
        let targets = raw_labels
            .iter()
            .map(|l| labels.binary_search(l).expect("label present"))
            .collect();
        ClassInfo {
            column_name: headers[ci].clone(),
            labels,
            targets,
        }
    });
    Dataset::new(names, rows, classes)
}

/// Writes features (shortest round-trip decimals) followed by the class
/// label column, if any.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = ds.column_names.clone();
    if let Some(c) = &ds.classes {
        header.push(c.column_name.clone());
    }
    writer.write_record(&header)?;
    for (i, row) in ds.rows.iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(c) = &ds.classes {
            record.push(c.labels[c.targets[i]].clone());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at 1e-9.
    pub std: Vec<f64>,
}

pub fn column_stats(ds: &Dataset) -> ColumnStats {
    column_stats_of(&ds.rows)
}

/// Welford mean and population standard deviation per column.
pub fn column_stats_of(rows: &[Vec<f64>]) -> ColumnStats {
    let width = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; width];
    let mut m2 = vec![0.0; width];
    for (n, row) in rows.iter().enumerate() {
        let n = (n + 1) as f64;
        for ((m, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }
    let n = rows.len().max(1) as f64;
    let std = m2.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    ColumnStats { mean, std }
}

/// Appends one 0/1 indicator column per class label.
pub fn one_hot(ds: &Dataset) -> Result<Dataset> {
    let classes = ds
        .classes
        .as_ref()
        .ok_or_else(|| Error::config("one-hot encoding needs a class column"))?;
    let mut names = ds.column_names.clone();
    names.extend(classes.labels.iter().map(|l| format!("{}={l}", classes.column_name)));
    let rows = ds
        .rows
        .iter()
        .zip(&classes.targets)
        .map(|(row, &t)| {
            let mut out = row.clone();
            out.extend((0..classes.labels.len()).map(|k| if k == t { 1.0 } else { 0.0 }));
            out
        })
        .collect();
    Dataset::new(names, rows, ds.classes.clone())
}

/// Fold assignment for k-fold cross-validation.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub folds: usize,
    pub seed: u64,
    /// Fold of each row.
    pub assignment: Vec<usize>,
    /// Seeded permutation of all rows; train/test lists follow this order.
    pub order: Vec<usize>,
}

impl FoldPlan {
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.order.iter().copied().filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.order.iter().copied().filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles rows under `seed` and deals them round-robin into folds, class
/// by class when the dataset has a class column. Fold sizes differ by at
/// most one, and so do per-fold counts of any class.
pub fn stratified_kfold(ds: &Dataset, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > ds.len() {
        return Err(Error::config(format!("{folds} folds for {} rows", ds.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);

    let groups: Vec<Vec<usize>> = match &ds.classes {
        Some(c) => (0..c.labels.len())
            .map(|k| order.iter().copied().filter(|&i| c.targets[i] == k).collect())
            .collect(),
        None => vec![order.clone()],
    };
    let mut assignment = vec![0; ds.len()];
    for (pos, i) in groups.iter().flatten().enumerate() {
        assignment[*i] = pos % folds;
    }
    Ok(FoldPlan {
        folds,
        seed,
        assignment,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn iris() -> Dataset {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/iris.csv");
        load_csv(&path, Some("species")).unwrap()
    }

    #[test]
    fn load_small_numeric() {
        let f = write("a,b\n1,2\n3.5,-4e-1\n");
        let ds = load_csv(f.path(), None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.width(), 2);
        assert_eq!(ds.rows[1], vec![3.5, -0.4]);
    }

    #[test]
    fn load_iris() {
        let ds = iris();
        assert_eq!((ds.len(), ds.width(), ds.class_count()), (150, 4, 3));
        assert_eq!(ds.classes.as_ref().unwrap().targets[0], 0);
        assert_eq!(ds.classes.as_ref().unwrap().targets[149], 2);
    }

    #[test]
    fn nan_cell_is_rejected() {
        let f = write("a,b\n1,2\n3,NaN\n");
        match load_csv(f.path(), None) {
            Err(Error::Parse { row, column, message, .. }) => {
                assert_eq!((row, column), (3, 2));
                assert!(message.contains("NaN"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_rejected() {
        let f = write("a,b\n1,2\n3\n");
        assert!(matches!(load_csv(f.path(), None), Err(Error::Parse { row: 3, .. })));
    }

    #[test]
    fn class_column_by_index_and_missing() {
        let f = write("x,label\n1,b\n2,a\n");
        let ds = load_csv(f.path(), Some("1")).unwrap();
        assert_eq!(ds.classes.unwrap().labels, vec!["a", "b"]);
        assert!(load_csv(f.path(), Some("nope")).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect()).collect();
        let ds = Dataset::new(vec!["a".into(), "b".into(), "c".into()], rows, None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_csv(&ds, out.path()).unwrap();
        assert_eq!(load_csv(out.path(), None).unwrap(), ds);

        let ds = iris();
        save_csv(&ds, out.path()).unwrap();
        assert_eq!(load_csv(out.path(), Some("species")).unwrap(), ds);
    }

    #[test]
    fn stats_cases() {
        let ds = Dataset::new(vec!["c".into(), "k".into()], vec![vec![0.0, 7.0], vec![2.0, 7.0]], None).unwrap();
        let s = column_stats(&ds);
        assert_eq!(s.mean, vec![1.0, 7.0]);
        assert_eq!(s.std, vec![1.0, STD_FLOOR]);
    }

    #[test]
    fn stats_match_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.gen::<f64>() * 10.0 + 1e3]).collect();
        let s = column_stats_of(&rows);
        let mean = rows.iter().map(|r| r[0]).sum::<f64>() / 500.0;
        let var = rows.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / 500.0;
        assert!(((s.mean[0] - mean) / mean).abs() < 1e-12);
        assert!(((s.std[0] - var.sqrt()) / var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_encoding() {
        let ds = iris();
        let enc = one_hot(&ds).unwrap();
        assert_eq!(enc.width(), 4 + 3);
        let classes = enc.classes.as_ref().unwrap();
        for (row, &t) in enc.rows.iter().zip(&classes.targets) {
            let block = &row[4..];
            assert_eq!(block.iter().sum::<f64>(), 1.0);
            assert_eq!(crate::inference::argmax(block), t);
        }
        assert_eq!(enc.rows[60][4..], [0.0, 1.0, 0.0]);
        let plain = Dataset::new(vec!["a".into()], vec![vec![1.0]], None).unwrap();
        assert!(one_hot(&plain).is_err());
    }

    #[test]
    fn kfold_sizes_and_determinism() {
        let ds = iris();
        let plan = stratified_kfold(&ds, 10, 42).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 15));
        assert_eq!(plan, stratified_kfold(&ds, 10, 42).unwrap());
        assert_ne!(plan.order, stratified_kfold(&ds, 10, 43).unwrap().order);
        assert_eq!(plan.train_indices(3).len(), 135);
        assert!(stratified_kfold(&ds, 1, 0).is_err());
        assert!(stratified_kfold(&ds, 151, 0).is_err());
    }

    #[test]
    fn kfold_is_stratified() {
        // unbalanced classes: counting oracle per fold
        let targets: Vec<usize> = (0..97).map(|i| if i % 7 == 0 { 2 } else { i % 2 }).collect();
        let ds = Dataset::new(
            vec!["x".into()],
            (0..97).map(|i| vec![i as f64]).collect(),
            Some(ClassInfo {
                column_name: "y".into(),
                labels: vec!["a".into(), "b".into(), "c".into()],
                targets: targets.clone(),
            }),
        )
        .unwrap();
        for folds in [2, 5, 10] {
            let plan = stratified_kfold(&ds, folds, 9).unwrap();
            let sizes = plan.fold_sizes();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for k in 0..3 {
                let global = targets.iter().filter(|&&t| t == k).count() as f64;
                for (f, size) in sizes.iter().enumerate() {
                    let count = plan.test_indices(f).iter().filter(|&&i| targets[i] == k).count() as f64;
                    let expected = global * *size as f64 / 97.0;
                    assert!((count - expected).abs() <= 1.0, "fold {f} class {k}");
                }
            }
        }
    }
}
