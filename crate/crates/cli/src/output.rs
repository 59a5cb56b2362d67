//! File writers. Floats use Rust's shortest round-trip formatting, so output is
//! byte-stable for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dsbm::link_predict::RocCurve;
use dsbm::net_data::vec_index;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Output { path, source })
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, text)
    }
}

/// `prefix_a_b` column names in row-major block order.
pub fn block_header(prefix: &str, k: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            cols.push(format!("{prefix}_{a}_{b}"));
        }
    }
    cols
}

/// Column-stacked state vector to row-major order.
pub fn row_major(vectorized: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            out.push(vectorized[vec_index(a, b, k)]);
        }
    }
    out
}

pub fn rows_of(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    values.chunks(k).map(<[f64]>::to_vec).collect()
}

/// Incrementally built CSV text; fields never contain separators.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut csv = Self {
            text: String::new(),
        };
        csv.row(header.iter().map(|s| s.as_ref().to_string()));
        csv
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{f}").expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut csv = Csv::new(&["threshold", "fpr", "tpr"]);
    for p in &roc.points {
        csv.row([p.threshold, p.fpr, p.tpr]);
    }
    csv.finish()
}

/// Per-step filtered estimates shared by `track`/`fit` and read by `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesFile {
    pub node_count: usize,
    pub k: usize,
    pub source: String,
    pub steps: Vec<EstimateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    /// 1-based snapshot index the estimate conditions on (inclusive).
    pub time: usize,
    /// Row-major `k x k` block probabilities.
    pub theta: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}
