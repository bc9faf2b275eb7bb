//! Cosine similarity of learned head vectors and labelled matrix export.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Tensor,
}

/// `S_ij = (w_i · w_j) / (|w_i| |w_j|)`; any pair involving a zero row is 0.
pub fn cosine_similarity_matrix(w: &Tensor, labels: &[String]) -> Result<SimilarityMatrix> {
    let n = w.rows();
    if labels.len() != n {
        return Err(Error::shape("similarity labels", w.shape(), (labels.len(), 1)));
    }
    let rows = w.to_rows();
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    for (i, &nv) in norms.iter().enumerate() {
        if nv == 0.0 {
            log::warn!("head vector '{}' is zero; its similarities are set to 0", labels[i]);
        }
    }
    let mut s = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else if i == j {
                1.0
            } else {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(SimilarityMatrix {
        labels: labels.to_vec(),
        values: s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    /// Guessed from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => MatrixFormat::Json,
            _ => MatrixFormat::Csv,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "json" => Ok(MatrixFormat::Json),
            other => Err(Error::Usage(format!("unknown matrix format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// CSV text: a header of labels, then one line per row.
pub fn matrix_to_csv(m: &Tensor, labels: &[String]) -> Result<String> {
    if labels.len() != m.cols() {
        return Err(Error::shape("export labels", m.shape(), (labels.len(), 1)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(labels).map_err(io)?;
    for r in 0..m.rows() {
        w.write_record(m.row_slice(r).iter().map(|v| v.to_string())).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_matrix(m: &Tensor, labels: &[String], path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        MatrixFormat::Csv => matrix_to_csv(m, labels)?,
        MatrixFormat::Json => {
            if labels.len() != m.cols() {
                return Err(Error::shape("export labels", m.shape(), (labels.len(), 1)));
            }
            let doc = MatrixDoc {
                labels: labels.to_vec(),
                values: m.to_rows(),
            };
            serde_json::to_string_pretty(&doc).expect("matrix serializes") + "\n"
        }
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`export_matrix`].
pub fn read_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<(Tensor, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (labels, rows) = match format {
        MatrixFormat::Json => {
            let doc: MatrixDoc = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.into(),
                source: e,
            })?;
            (doc.labels, doc.values)
        }
        MatrixFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let labels: Vec<String> = rdr
                .headers()
                .map_err(|e| Error::Parse {
                    line: 1,
                    msg: e.to_string(),
                })?
                .iter()
                .map(String::from)
                .collect();
            let mut rows = Vec::new();
            for (k, rec) in rdr.records().enumerate() {
                let line = k + 2;
                let rec = rec.map_err(|e| Error::Parse {
                    line,
                    msg: e.to_string(),
                })?;
                let row = rec
                    .iter()
                    .map(|f| {
                        f.trim().parse::<f64>().map_err(|e| Error::Parse {
                            line,
                            msg: format!("'{f}': {e}"),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
            (labels, rows)
        }
    };
    Ok((Tensor::from_rows(&rows)?, labels))
}
