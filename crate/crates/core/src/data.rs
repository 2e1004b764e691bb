//! The circle-area classification task, accuracy metrics and CSV I/O.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Squared radius of the centred circle of area 2.
pub const CIRCLE_RADIUS_SQ: f64 = 2.0 / std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<u8>,
    dim: usize,
    pub split: Split,
}

/// 1 iff the point lies in the closed disc of area 2 centred at the origin.
pub fn circle_label(x1: f64, x2: f64) -> u8 {
    u8::from(x1 * x1 + x2 * x2 <= CIRCLE_RADIUS_SQ)
}

/// `m` points drawn uniformly from `[-1, 1]²`, labelled by [`circle_label`].
pub fn gen_circle<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Dataset {
    let mut inputs = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let x1 = rng.random_range(-1.0..=1.0);
        let x2 = rng.random_range(-1.0..=1.0);
        labels.push(circle_label(x1, x2));
        inputs.push(vec![x1, x2]);
    }
    Dataset {
        inputs,
        labels,
        dim: 2,
        split: Split::Train,
    }
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::ShapeMismatch("inputs have different lengths".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::ShapeMismatch("labels must be 0 or 1".into()));
        }
        Ok(Self {
            inputs,
            labels,
            dim,
            split: Split::Train,
        })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            inputs: Vec::new(),
            labels: Vec::new(),
            dim,
            split: Split::Train,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().map(|&y| f64::from(y)).sum::<f64>() / self.len().max(1) as f64
    }

    /// Writes `x1,x2,…,label` with round-trip float formatting.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn import_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols == 0 || (cols == 1 && header[0].trim().is_empty()) {
            return Err(Error::EmptyDataset);
        }
        if cols < 2 || header.get(cols - 1) != Some("label") {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header x1,…,label, found {:?}", header.iter().collect::<Vec<_>>()),
            });
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != cols {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {cols} columns, found {}", rec.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Csv {
                    line,
                    message: format!("bad number {s:?}: {e}"),
                })
            };
            let x = (0..cols - 1).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
            let y = match rec[cols - 1].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Csv {
                        line,
                        message: format!("label must be 0 or 1, found {other:?}"),
                    })
                }
            };
            inputs.push(x);
            labels.push(y);
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Dataset::new(inputs, labels)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::Io(io),
            _ => unreachable!(),
        }
    }
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Percentage of samples misclassified when thresholding the output at 0.5.
pub fn error_rate(net: &Network, ds: &Dataset) -> Result<f64> {
    error_rate_by(ds, |x| Ok(net.predict(x)?[0]))
}

pub(crate) fn error_rate_by(ds: &Dataset, mut predict: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut wrong = 0usize;
    for (x, &y) in ds.inputs().iter().zip(ds.labels()) {
        let predicted = u8::from(predict(x)? >= 0.5);
        if predicted != y {
            wrong += 1;
        }
    }
    Ok(100.0 * wrong as f64 / ds.len() as f64)
}
