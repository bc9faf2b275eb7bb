//! Correlation graphs over the nine affect nodes.
//!
//! The raw matrix `A` holds absolute Spearman correlations between each
//! expression's one-hot indicator and each continuous dimension, plus
//! (optionally) conditional co-occurrence probabilities between expressions.
//! It is then binarized at `tau` (`A'`), re-weighted so that a node keeps
//! `1 - p` of the mass and spreads `p` over its neighbours (`A''`), and
//! finally row-normalized (`Â`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{node_names, Expression, NODE_NAMES, NUM_CLASSES, NUM_NODES, AROUSAL, VALENCE};
use crate::tensor::Tensor;

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_P: f64 = 0.7;
/// Re-weighting used for the intra-category variant.
pub const DEFAULT_INTRA_P: f64 = 0.5;

/// Categorical and dimensional annotations of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    expression: Vec<Expression>,
    valence: Vec<f64>,
    arousal: Vec<f64>,
}

impl AnnotationTable {
    pub fn new(expression: Vec<Expression>, valence: Vec<f64>, arousal: Vec<f64>) -> Result<Self> {
        let n = expression.len();
        if valence.len() != n || arousal.len() != n {
            return Err(Error::Validation(format!(
                "column lengths differ: expression {n}, valence {}, arousal {}",
                valence.len(),
                arousal.len()
            )));
        }
        if n < 2 {
            return Err(Error::Validation(format!(
                "annotation table needs at least 2 samples, got {n}"
            )));
        }
        for (row, (&v, &a)) in valence.iter().zip(&arousal).enumerate() {
            for (name, x) in [("valence", v), ("arousal", a)] {
                if !(-1.0..=1.0).contains(&x) {
                    return Err(Error::Validation(format!(
                        "row {row}: {name} {x} outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(AnnotationTable {
            expression,
            valence,
            arousal,
        })
    }

    pub fn len(&self) -> usize {
        self.expression.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expression.is_empty()
    }

    pub fn expression(&self) -> &[Expression] {
        &self.expression
    }

    pub fn valence(&self) -> &[f64] {
        &self.valence
    }

    pub fn arousal(&self) -> &[f64] {
        &self.arousal
    }

    /// 1.0 where the sample is labelled `class`, 0.0 elsewhere.
    pub fn indicator(&self, class: Expression) -> Vec<f64> {
        self.expression
            .iter()
            .map(|&e| if e == class { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Binary multi-label annotations over the seven expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelTable {
    labels: Vec<[bool; NUM_CLASSES]>,
}

impl MultiLabelTable {
    pub fn new(labels: Vec<[bool; NUM_CLASSES]>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Validation("multi-label table is empty".into()));
        }
        Ok(MultiLabelTable { labels })
    }

    pub fn from_indicators(rows: &[[u8; NUM_CLASSES]]) -> Result<Self> {
        let mut labels = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let mut out = [false; NUM_CLASSES];
            for (k, &v) in row.iter().enumerate() {
                out[k] = match v {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::Validation(format!(
                            "row {i}: label value {other} is not 0 or 1"
                        )))
                    }
                };
            }
            labels.push(out);
        }
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> &[[bool; NUM_CLASSES]] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphVariant {
    CrossOnly,
    WithIntra,
}

/// How the asymmetric conditional-probability block enters `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraSymmetrize {
    /// `max(P(i|j), P(j|i))`: an edge exists if either direction clears `tau`.
    #[default]
    Max,
    /// `P(i|j)` used as-is for entry `(i, j)`.
    PerDirection,
}

/// The nine-node affect graph with every construction stage retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectGraph {
    pub node_names: Vec<String>,
    pub a_raw: Tensor,
    pub a_binary: Tensor,
    pub a_reweighted: Tensor,
    pub a_normalized: Tensor,
    pub tau: f64,
    pub p: f64,
    pub variant: GraphVariant,
}

impl AffectGraph {
    /// Runs threshold, re-weighting and normalization on a raw matrix.
    pub fn from_raw(a_raw: Tensor, tau: f64, p: f64, variant: GraphVariant) -> Result<Self> {
        if a_raw.shape() != (NUM_NODES, NUM_NODES) {
            return Err(Error::shape("affect graph", a_raw.shape(), (NUM_NODES, NUM_NODES)));
        }
        let a_binary = threshold(&a_raw, tau)?;
        let a_reweighted = reweight(&a_binary, p)?;
        let a_normalized = row_normalize(&a_reweighted)?;
        Ok(AffectGraph {
            node_names: node_names(),
            a_raw,
            a_binary,
            a_reweighted,
            a_normalized,
            tau,
            p,
            variant,
        })
    }

    /// Graph with only categorical-dimensional edges.
    pub fn cross_only(table: &AnnotationTable, tau: f64, p: f64) -> Result<Self> {
        Self::from_raw(build_cross_adjacency(table)?, tau, p, GraphVariant::CrossOnly)
    }
}

/// Average ranks (1-based, ties share the mean of their positions), centered
/// on zero by subtracting `(n + 1) / 2`.
pub fn rank_transform(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Domain(format!("rank transform needs n >= 2, got {n}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("cannot rank non-finite value {v}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    let center = (n + 1) as f64 / 2.0;
    Ok(ranks.into_iter().map(|r| r - center).collect())
}

fn correlate_centered(rx: &[f64], x_name: &str, ry: &[f64], y_name: &str) -> Result<f64> {
    let sxx: f64 = rx.iter().map(|v| v * v).sum();
    let syy: f64 = ry.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate(format!("{x_name} has zero rank variance")));
    }
    if syy == 0.0 {
        return Err(Error::Degenerate(format!("{y_name} has zero rank variance")));
    }
    let sxy: f64 = rx.iter().zip(ry).map(|(a, b)| a * b).sum();
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    spearman_named(x, "x", y, "y")
}

pub fn spearman_named(x: &[f64], x_name: &str, y: &[f64], y_name: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("spearman", (x.len(), 1), (y.len(), 1)));
    }
    let rx = rank_transform(x)?;
    let ry = rank_transform(y)?;
    correlate_centered(&rx, x_name, &ry, y_name)
}

/// Raw cross-model matrix `A`: unit diagonal, `|spearman|` between each
/// expression indicator and each dimension, zero everywhere else.
pub fn build_cross_adjacency(table: &AnnotationTable) -> Result<Tensor> {
    let rv = rank_transform(table.valence())?;
    let ra = rank_transform(table.arousal())?;
    let mut a = Tensor::identity(NUM_NODES);
    for class in Expression::ALL {
        let indicator = table.indicator(class);
        let present = indicator.iter().filter(|&&v| v == 1.0).count();
        if present == 0 {
            return Err(Error::Degenerate(format!(
                "expression {class} does not occur in the annotation table"
            )));
        }
        if present == indicator.len() {
            return Err(Error::Degenerate(format!(
                "expression {class} labels every sample; its indicator is constant"
            )));
        }
        let ri = rank_transform(&indicator)?;
        let i = class.index();
        for (dim, ranks, name) in [(VALENCE, &rv, "valence"), (AROUSAL, &ra, "arousal")] {
            let c = correlate_centered(&ri, class.name(), ranks, name)?.abs();
            a.set(i, dim, c);
            a.set(dim, i, c);
        }
    }
    Ok(a)
}

/// `A'`: 1 where `a >= tau`, 0 otherwise.
pub fn threshold(a: &Tensor, tau: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if let Some(v) = a.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!(
            "correlation entries must lie in [0, 1], found {v}"
        )));
    }
    Ok(a.map(|v| if v >= tau { 1.0 } else { 0.0 }))
}

/// `A''`: diagonal `1 - p`; the off-diagonal ones of each row share `p`.
///
/// The last neighbour of a row absorbs the rounding residue so that the
/// off-diagonal entries, summed in column order, equal `p` exactly. A node
/// without neighbours keeps only its `1 - p` self-loop.
pub fn reweight(a_binary: &Tensor, p: f64) -> Result<Tensor> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("p must lie in (0, 1), got {p}")));
    }
    let (n, m) = a_binary.shape();
    if n != m {
        return Err(Error::shape("reweight", (n, m), (n, n)));
    }
    if a_binary.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain("reweight expects a 0/1 matrix".into()));
    }
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        if a_binary.get(i, i) != 1.0 {
            return Err(Error::Domain(format!("node {i} is missing its self-loop")));
        }
        out.set(i, i, 1.0 - p);
        let neighbours: Vec<usize> = (0..n).filter(|&j| j != i && a_binary.get(i, j) == 1.0).collect();
        let Some((&last, rest)) = neighbours.split_last() else {
            continue;
        };
        let w = p / neighbours.len() as f64;
        let mut acc = 0.0;
        for &j in rest {
            out.set(i, j, w);
            acc += w;
        }
        out.set(i, last, p - acc);
    }
    Ok(out)
}

/// `Â`: each row divided by its sum.
pub fn row_normalize(a: &Tensor) -> Result<Tensor> {
    let mut out = a.clone();
    for (i, s) in a.row_sums().into_iter().enumerate() {
        if !(s > 0.0) {
            let name = NODE_NAMES.get(i).copied().unwrap_or("?");
            return Err(Error::Degenerate(format!(
                "row {i} ({name}) sums to {s}; cannot normalize"
            )));
        }
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j) / s);
        }
    }
    Ok(out)
}

/// `P[i][j] = count(i and j) / count(j)`, the probability of label `i` given
/// label `j`.
pub fn conditional_probability_matrix(table: &MultiLabelTable) -> Result<Tensor> {
    let mut co = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for row in table.rows() {
        for i in 0..NUM_CLASSES {
            if !row[i] {
                continue;
            }
            for j in 0..NUM_CLASSES {
                if row[j] {
                    co[i][j] += 1;
                }
            }
        }
    }
    let mut p = Tensor::zeros(NUM_CLASSES, NUM_CLASSES);
    for j in 0..NUM_CLASSES {
        let count_j = co[j][j];
        if count_j == 0 {
            return Err(Error::Degenerate(format!(
                "label {} has no positive samples",
                NODE_NAMES[j]
            )));
        }
        for i in 0..NUM_CLASSES {
            p.set(i, j, co[i][j] as f64 / count_j as f64);
        }
    }
    Ok(p)
}

/// Graph whose expression block is filled from conditional co-occurrence.
pub fn build_intra_adjacency(
    annotations: &AnnotationTable,
    multilabel: &MultiLabelTable,
    tau: f64,
    p: f64,
    symmetrize: IntraSymmetrize,
) -> Result<AffectGraph> {
    let mut a = build_cross_adjacency(annotations)?;
    let cond = conditional_probability_matrix(multilabel)?;
    for i in 0..NUM_CLASSES {
        for j in 0..NUM_CLASSES {
            if i == j {
                continue;
            }
            let v = match symmetrize {
                IntraSymmetrize::Max => cond.get(i, j).max(cond.get(j, i)),
                IntraSymmetrize::PerDirection => cond.get(i, j),
            };
            a.set(i, j, v);
        }
    }
    AffectGraph::from_raw(a, tau, p, GraphVariant::WithIntra)
}
