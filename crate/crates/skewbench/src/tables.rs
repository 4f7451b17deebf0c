//! CSV files: datasets, exported features and training traces.
//!
//! Reals are written in Rust's shortest round-trip notation, so every file
//! reads back to the exact in-memory values.

use std::path::{Path, PathBuf};

use skewbench_core::data::{Dataset, Split};
use skewbench_core::model::Model;
use skewbench_core::optim::{EpochStats, TrainTrace};

use crate::error::{Error, ParseError, Result};
use crate::fsio::{read_bytes, write_atomic};
use crate::labels::remap_labels;

pub fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

/// A parsed CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let bytes = read_bytes(path)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let header = reader
            .headers()
            .map_err(|e| Error::malformed(path, e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(|c| c.trim().to_string()).collect())
                    .map_err(|e| Error::malformed(path, e.to_string()))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::malformed(path, e.to_string());
        w.write_record(header).map_err(to_err)?;
        for row in rows {
            w.write_record(row).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::malformed(path, e.to_string()))?;
        write_atomic(path, &bytes)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&self.path, ParseError::MissingColumn(name.to_string())))
    }

    /// Index of the first column of the numbered run `prefix0, prefix1, ...`
    /// and its length.
    pub fn numbered(&self, prefix: &str) -> (Option<usize>, usize) {
        let first = self.header.iter().position(|h| *h == format!("{prefix}0"));
        let len = first.map_or(0, |s| {
            (0..)
                .take_while(|&i| self.header.get(s + i) == Some(&format!("{prefix}{i}")))
                .count()
        });
        (first, len)
    }

    fn non_numeric(&self, row: usize, col: usize) -> Error {
        Error::parse(
            &self.path,
            ParseError::NonNumeric {
                line: row + 2,
                column: self.header[col].clone(),
                value: self.rows[row][col].clone(),
            },
        )
    }

    pub fn real(&self, row: usize, col: usize) -> Result<f64> {
        self.rows[row][col].parse().map_err(|_| self.non_numeric(row, col))
    }

    pub fn int(&self, row: usize, col: usize) -> Result<i64> {
        self.rows[row][col].parse().map_err(|_| self.non_numeric(row, col))
    }

    pub fn count(&self, row: usize, col: usize) -> Result<usize> {
        self.rows[row][col].parse().map_err(|_| self.non_numeric(row, col))
    }

    pub fn text(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }
}

struct RawSamples {
    inputs: Vec<f64>,
    labels: Vec<i64>,
    dim: usize,
}

fn read_samples(path: &Path) -> Result<RawSamples> {
    let t = Table::read(path)?;
    let label = t.column("label")?;
    let feature_cols: Vec<usize> = (0..t.header.len()).filter(|&c| c != label).collect();
    let mut inputs = Vec::with_capacity(t.rows.len() * feature_cols.len());
    let mut labels = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        for &c in &feature_cols {
            inputs.push(t.real(r, c)?);
        }
        labels.push(t.int(r, label)?);
    }
    Ok(RawSamples {
        inputs,
        labels,
        dim: feature_cols.len(),
    })
}

/// Loads a CSV with a header row, a `label` column and numeric feature
/// columns. Labels are remapped to `0..K` in ascending order.
pub fn load_csv(path: &Path, split: Split) -> Result<Dataset> {
    let raw = read_samples(path)?;
    let (mapped, k) = remap_labels(&[&raw.labels]);
    let labels = mapped.into_iter().next().unwrap_or_default();
    Ok(Dataset::new(raw.inputs, labels, raw.dim, k, split)?)
}

/// Loads a train and a test CSV with one shared label map.
pub fn load_csv_splits(train: &Path, test: &Path) -> Result<(Dataset, Dataset)> {
    let a = read_samples(train)?;
    let b = read_samples(test)?;
    if a.dim != b.dim {
        return Err(Error::Mismatch(format!(
            "{} has {} feature columns, {} has {}",
            train.display(),
            a.dim,
            test.display(),
            b.dim
        )));
    }
    let (mut mapped, k) = remap_labels(&[&a.labels, &b.labels]);
    let test_labels = mapped.pop().unwrap_or_default();
    let train_labels = mapped.pop().unwrap_or_default();
    Ok((
        Dataset::new(a.inputs, train_labels, a.dim, k, Split::Train)?,
        Dataset::new(b.inputs, test_labels, b.dim, k, Split::Test)?,
    ))
}

/// Writes `d` as `label,x0,...` with zero-based labels.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    let mut header = vec!["label".to_string()];
    header.extend((0..d.input_dim()).map(|i| format!("x{i}")));
    let rows: Vec<Vec<String>> = d
        .iter()
        .map(|(x, y)| {
            let mut row = vec![y.to_string()];
            row.extend(x.iter().map(|&v| fmt_real(v)));
            row
        })
        .collect();
    Table::write(path, &header, &rows)
}

/// One row of an exported feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub feature: Vec<f64>,
    pub label: usize,
    pub split: Split,
}

/// Writes `f0..f{d-1},label,split` for every sample of every dataset.
pub fn export_features(model: &Model, datasets: &[&Dataset], path: &Path) -> Result<()> {
    let d = model.feature_dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("split".into());
    let mut rows = Vec::new();
    for ds in datasets {
        for (x, y) in ds.iter() {
            let mut row: Vec<String> = model.features(x)?.iter().map(|&v| fmt_real(v)).collect();
            row.push(y.to_string());
            row.push(ds.split().as_str().to_string());
            rows.push(row);
        }
    }
    Table::write(path, &header, &rows)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let t = Table::read(path)?;
    let (first, d) = t.numbered("f");
    let label = t.column("label")?;
    let split = t.column("split")?;
    (0..t.rows.len())
        .map(|r| {
            let feature = match first {
                Some(s) => (s..s + d).map(|c| t.real(r, c)).collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let split = match t.text(r, split) {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::malformed(path, format!("unknown split `{other}`"))),
            };
            Ok(FeatureRow {
                feature,
                label: t.count(r, label)?,
                split,
            })
        })
        .collect()
}

/// `epoch,lr,train_loss,train_acc,norm_0,...`
pub fn write_trace(path: &Path, trace: &TrainTrace, num_classes: usize) -> Result<()> {
    let mut header: Vec<String> = ["epoch", "lr", "train_loss", "train_acc"].map(String::from).to_vec();
    header.extend((0..num_classes).map(|k| format!("norm_{k}")));
    let rows: Vec<Vec<String>> = trace
        .epochs
        .iter()
        .map(|e| {
            let mut row = vec![e.epoch.to_string(), fmt_real(e.lr), fmt_real(e.train_loss), fmt_real(e.train_acc)];
            row.extend(e.weight_norms.iter().map(|&n| fmt_real(n)));
            row
        })
        .collect();
    Table::write(path, &header, &rows)
}

pub fn read_trace(path: &Path) -> Result<TrainTrace> {
    let t = Table::read(path)?;
    let epoch = t.column("epoch")?;
    let lr = t.column("lr")?;
    let loss = t.column("train_loss")?;
    let acc = t.column("train_acc")?;
    let (first, k) = t.numbered("norm_");
    let epochs = (0..t.rows.len())
        .map(|r| {
            Ok(EpochStats {
                epoch: t.count(r, epoch)?,
                lr: t.real(r, lr)?,
                train_loss: t.real(r, loss)?,
                train_acc: t.real(r, acc)?,
                weight_norms: match first {
                    Some(s) => (s..s + k).map(|c| t.real(r, c)).collect::<Result<_>>()?,
                    None => Vec::new(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainTrace { epochs })
}
