//! Node embeddings `Z` (9×d) from a GloVe text file or a seeded generator.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{node_words, NUM_NODES};
use crate::tensor::Tensor;

pub const DEFAULT_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    GloveFile { path: PathBuf },
    SeededRandom { dim: usize, seed: u64 },
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::SeededRandom {
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

impl EmbeddingSource {
    pub fn load(&self) -> Result<Tensor> {
        match self {
            EmbeddingSource::GloveFile { path } => load_glove_text(path),
            EmbeddingSource::SeededRandom { dim, seed } => seeded_embeddings(*seed, *dim),
        }
    }
}

pub fn load_glove_text(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_glove(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads `word v1 ... vd` lines and returns the node rows in graph order.
///
/// Every line must have the same number of values; words outside the node
/// vocabulary are skipped after that check.
pub fn read_glove<R: BufRead>(reader: R) -> Result<Tensor> {
    let words = node_words();
    let mut found: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut dim: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<glove>", e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("'{s}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None if values.is_empty() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("word '{word}' has no vector"),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {d} values, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        let lower = word.to_lowercase();
        if let Some(w) = words.iter().find(|w| **w == lower) {
            found.entry(w.as_str()).or_insert(values);
        }
    }

    let missing: Vec<String> = words
        .iter()
        .filter(|w| !found.contains_key(w.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Lookup(missing));
    }
    let rows: Vec<Vec<f64>> = words.iter().map(|w| found.remove(w.as_str()).unwrap()).collect();
    Tensor::from_rows(&rows)
}

pub fn write_glove<W: Write>(z: &Tensor, mut out: W) -> std::io::Result<()> {
    for (word, r) in node_words().iter().zip(0..z.rows()) {
        write!(out, "{word}")?;
        for v in z.row_slice(r) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Deterministic uniform entries in `[-1, 1]`.
pub fn seeded_embeddings(seed: u64, dim: usize) -> Result<Tensor> {
    if dim < 2 {
        return Err(Error::Config(format!("embedding dim must be >= 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Tensor::uniform(NUM_NODES, dim, 1.0, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dim: usize, skip: Option<&str>) -> String {
        let mut s = format!("the{}\n", " 0.5".repeat(dim));
        for (k, w) in node_words().iter().enumerate() {
            if Some(w.as_str()) == skip {
                continue;
            }
            s.push_str(w);
            for j in 0..dim {
                s.push_str(&format!(" {}", k as f64 + j as f64 / 100.0));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn parses_in_node_order() {
        let z = read_glove(fixture(4, None).as_bytes()).unwrap();
        assert_eq!(z.shape(), (9, 4));
        assert_eq!(z.row_vec(8), vec![8.0, 8.01, 8.02, 8.03]);
        let z = read_glove(fixture(300, None).as_bytes()).unwrap();
        assert_eq!(z.shape(), (9, 300));
    }

    #[test]
    fn missing_word_is_named() {
        let err = read_glove(fixture(4, Some("arousal")).as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Lookup(w) if w == &vec!["arousal".to_string()]));
        assert!(err.to_string().contains("arousal"));
    }

    #[test]
    fn inconsistent_dim_reports_line() {
        let text = "happy 1 2 3\nsad 1 2\n";
        let err = read_glove(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn uppercase_words_match() {
        let text = fixture(3, None).replace("happy", "HAPPY");
        assert!(read_glove(text.as_bytes()).is_ok());
    }

    #[test]
    fn serialization_round_trip() {
        let z = seeded_embeddings(7, 5).unwrap();
        let mut buf = Vec::new();
        write_glove(&z, &mut buf).unwrap();
        let back = read_glove(buf.as_slice()).unwrap();
        assert!(back.max_abs_diff(&z) <= 1e-12);
    }

    #[test]
    fn seeded_is_deterministic_and_distinct() {
        assert_eq!(seeded_embeddings(42, 8).unwrap(), seeded_embeddings(42, 8).unwrap());
        assert_ne!(seeded_embeddings(1, 8).unwrap(), seeded_embeddings(2, 8).unwrap());
        for seed in 0..20 {
            let z = seeded_embeddings(seed, 2).unwrap();
            for i in 0..NUM_NODES {
                assert!(z.row_slice(i).iter().all(|v| (-1.0..=1.0).contains(v)));
                for j in i + 1..NUM_NODES {
                    assert_ne!(z.row_slice(i), z.row_slice(j));
                }
            }
        }
        assert!(seeded_embeddings(0, 1).is_err());
    }
}
