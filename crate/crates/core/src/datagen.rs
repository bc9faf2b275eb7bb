//! Seeded synthetic affect data and CSV ingestion.
//!
//! Each class has a (valence, arousal) centroid; samples draw their VA values
//! around it and their features from a fixed random mixing of the one-hot
//! class and the VA values, plus noise. Features therefore carry signal for
//! both tasks, and the VA annotations correlate with the class indicators
//! the way the affect graph expects.

use std::fs::{self, File};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adjacency::{AnnotationTable, MultiLabelTable};
use crate::error::{Error, Result};
use crate::labels::{Expression, NODE_NAMES, NUM_CLASSES};
use crate::tensor::Tensor;

pub const DEFAULT_TRAIN_COUNTS: [usize; NUM_CLASSES] = [400, 300, 250, 200, 150, 120, 100];
pub const DEFAULT_VAL_PER_CLASS: usize = 70;

/// Placement of the classes in the valence-arousal plane: neutral at the
/// origin, happy at positive valence, surprise and fear at high arousal,
/// the negative emotions at negative valence.
pub const DEFAULT_CENTROIDS: [[f64; 2]; NUM_CLASSES] = [
    [0.0, 0.0],
    [0.75, 0.2],
    [-0.6, -0.3],
    [0.2, 0.7],
    [-0.3, 0.75],
    [-0.65, 0.35],
    [-0.55, 0.6],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_per_class: [usize; NUM_CLASSES],
    pub n_val_per_class: usize,
    pub class_va_means: [[f64; 2]; NUM_CLASSES],
    pub va_stddev: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_per_class: DEFAULT_TRAIN_COUNTS,
            n_val_per_class: DEFAULT_VAL_PER_CLASS,
            class_va_means: DEFAULT_CENTROIDS,
            va_stddev: 0.15,
            feature_dim: 12,
            feature_noise: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class.contains(&0) || self.n_val_per_class == 0 {
            return Err(Error::Config("every class needs at least one sample".into()));
        }
        if self
            .class_va_means
            .iter()
            .flatten()
            .any(|c| !(-1.0..=1.0).contains(c))
        {
            return Err(Error::Config("class centroids must lie in [-1, 1]".into()));
        }
        if !(self.va_stddev >= 0.0 && self.va_stddev.is_finite()) {
            return Err(Error::Config(format!("va_stddev must be >= 0, got {}", self.va_stddev)));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Config(format!(
                "feature_noise must be >= 0, got {}",
                self.feature_noise
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub expression: Vec<Expression>,
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: Dataset,
    pub val: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.expression.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expression.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.expression.iter().map(|e| e.index()).collect()
    }

    pub fn annotations(&self) -> Result<AnnotationTable> {
        AnnotationTable::new(self.expression.clone(), self.valence.clone(), self.arousal.clone())
    }

    /// Rows selected by index.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            features: self.features.gather_rows(indices)?,
            expression: indices.iter().map(|&i| self.expression[i]).collect(),
            valence: indices.iter().map(|&i| self.valence[i]).collect(),
            arousal: indices.iter().map(|&i| self.arousal[i]).collect(),
            split: self.split,
        })
    }
}

/// Mixing matrix `G` (F×9) shared by both splits of a seed.
fn mixing_matrix(cfg: &SyntheticConfig) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let data = (0..cfg.feature_dim * (NUM_CLASSES + 2))
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Tensor::new(cfg.feature_dim, NUM_CLASSES + 2, data).expect("positive dims")
}

/// Draws one split. The train split follows `n_per_class`; the val split is
/// balanced with `n_val_per_class` samples per class.
pub fn sample_dataset(cfg: &SyntheticConfig, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    let g = mixing_matrix(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(split.stream());

    let counts = match split {
        Split::Train => cfg.n_per_class,
        Split::Val => [cfg.n_val_per_class; NUM_CLASSES],
    };
    let n: usize = counts.iter().sum();
    let f = cfg.feature_dim;
    let mut features = Vec::with_capacity(n * f);
    let mut expression = Vec::with_capacity(n);
    let mut valence = Vec::with_capacity(n);
    let mut arousal = Vec::with_capacity(n);

    for (class, &count) in Expression::ALL.iter().zip(&counts) {
        let [cv, ca] = cfg.class_va_means[class.index()];
        for _ in 0..count {
            let zv: f64 = StandardNormal.sample(&mut rng);
            let za: f64 = StandardNormal.sample(&mut rng);
            let v = (cv + cfg.va_stddev * zv).clamp(-1.0, 1.0);
            let a = (ca + cfg.va_stddev * za).clamp(-1.0, 1.0);
            for r in 0..f {
                let row = g.row_slice(r);
                let signal = row[class.index()] + row[NUM_CLASSES] * v + row[NUM_CLASSES + 1] * a;
                let eps: f64 = StandardNormal.sample(&mut rng);
                features.push(signal + cfg.feature_noise * eps);
            }
            expression.push(*class);
            valence.push(v);
            arousal.push(a);
        }
    }
    Ok(Dataset {
        features: Tensor::new(n, f, features)?,
        expression,
        valence,
        arousal,
        split,
    })
}

pub fn sample_splits(cfg: &SyntheticConfig) -> Result<DatasetPair> {
    Ok(DatasetPair {
        train: sample_dataset(cfg, Split::Train)?,
        val: sample_dataset(cfg, Split::Val)?,
    })
}

pub fn class_counts(expression: &[Expression]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for e in expression {
        counts[e.index()] += 1;
    }
    counts
}

/// Expression pairs that co-occur in the synthetic multi-label table, with
/// the probability that a sample of the first class also carries the second.
pub const CO_OCCURRENCE: [(Expression, Expression, f64); 3] = [
    (Expression::Happy, Expression::Surprise, 0.25),
    (Expression::Fear, Expression::Sad, 0.2),
    (Expression::Disgust, Expression::Anger, 0.3),
];

/// Synthetic multi-label table: one primary class per sample (cycling
/// through the classes) plus the secondary labels of [`CO_OCCURRENCE`].
pub fn sample_multilabel(n: usize, seed: u64) -> Result<MultiLabelTable> {
    if n < NUM_CLASSES {
        return Err(Error::Config(format!(
            "multi-label table needs at least {NUM_CLASSES} samples, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let rows = (0..n)
        .map(|i| {
            let mut row = [false; NUM_CLASSES];
            let primary = Expression::ALL[i % NUM_CLASSES];
            row[primary.index()] = true;
            for &(from, to, prob) in &CO_OCCURRENCE {
                if from == primary && rng.random_bool(prob) {
                    row[to.index()] = true;
                }
            }
            row
        })
        .collect();
    MultiLabelTable::new(rows)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {name} column"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {name} value '{raw}'"),
    })
}

fn check_va(v: f64, line: usize, name: &str) -> Result<()> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::Validation(format!("line {line}: {name} {v} outside [-1, 1]")));
    }
    Ok(())
}

struct RawRows {
    expression: Vec<Expression>,
    valence: Vec<f64>,
    arousal: Vec<f64>,
    features: Vec<Vec<f64>>,
}

fn read_rows(path: &Path, with_features: bool) -> Result<RawRows> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let head: Vec<&str> = headers.iter().take(3).collect();
    if head != ["expression", "valence", "arousal"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header starting with expression,valence,arousal, got {head:?}"),
        });
    }
    let n_features = headers.len() - 3;
    let mut out = RawRows {
        expression: vec![],
        valence: vec![],
        arousal: vec![],
        features: vec![],
    };
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let expr: String = parse_field(record.get(0), line, "expression")?;
        let expr: Expression = expr.parse().map_err(|e: Error| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let v: f64 = parse_field(record.get(1), line, "valence")?;
        let a: f64 = parse_field(record.get(2), line, "arousal")?;
        check_va(v, line, "valence")?;
        check_va(a, line, "arousal")?;
        if with_features {
            let feats = (0..n_features)
                .map(|k| parse_field(record.get(3 + k), line, "feature"))
                .collect::<Result<Vec<f64>>>()?;
            out.features.push(feats);
        }
        out.expression.push(expr);
        out.valence.push(v);
        out.arousal.push(a);
    }
    Ok(out)
}

/// Reads `expression,valence,arousal` rows; trailing columns are ignored.
pub fn load_annotations_csv(path: impl AsRef<Path>) -> Result<AnnotationTable> {
    let rows = read_rows(path.as_ref(), false)?;
    AnnotationTable::new(rows.expression, rows.valence, rows.arousal)
}

pub fn write_annotations_csv(table: &AnnotationTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["expression", "valence", "arousal"]).map_err(io)?;
    for i in 0..table.len() {
        w.write_record([
            table.expression()[i].index().to_string(),
            table.valence()[i].to_string(),
            table.arousal()[i].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `expression,valence,arousal,f1..fF`.
pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut header = vec!["expression".to_string(), "valence".into(), "arousal".into()];
    header.extend((1..=ds.feature_dim()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(io)?;
    for i in 0..ds.len() {
        let mut rec = vec![
            ds.expression[i].index().to_string(),
            ds.valence[i].to_string(),
            ds.arousal[i].to_string(),
        ];
        rec.extend(ds.features.row_slice(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset_csv(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = read_rows(path, true)?;
    if rows.features.first().is_none_or(|f| f.is_empty()) {
        return Err(Error::Validation(format!(
            "{}: dataset needs at least one row and one feature column",
            path.display()
        )));
    }
    Ok(Dataset {
        features: Tensor::from_rows(&rows.features)?,
        expression: rows.expression,
        valence: rows.valence,
        arousal: rows.arousal,
        split,
    })
}

/// Reads a 0/1 table whose header names the seven classes (any order, any case).
pub fn load_multilabel_csv(path: impl AsRef<Path>) -> Result<MultiLabelTable> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut column_class = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let class: Expression = h.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("unknown class column '{h}'"),
        })?;
        column_class.push(class);
    }
    let mut sorted = column_class.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != NUM_CLASSES || column_class.len() != NUM_CLASSES {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must name each of {} exactly once", NODE_NAMES[..NUM_CLASSES].join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut row = [0u8; NUM_CLASSES];
        for (k, class) in column_class.iter().enumerate() {
            let v: u8 = parse_field(record.get(k), line, class.name())?;
            if v > 1 {
                return Err(Error::Validation(format!("line {line}: label value {v} is not 0 or 1")));
            }
            row[class.index()] = v;
        }
        rows.push(row);
    }
    MultiLabelTable::from_indicators(&rows)
}

pub fn write_multilabel_csv(table: &MultiLabelTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(&NODE_NAMES[..NUM_CLASSES]).map_err(io)?;
    for row in table.rows() {
        w.write_record(row.iter().map(|&b| if b { "1" } else { "0" })).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
