use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::datagen::SyntheticConfig;
use crate::error::{Error, Result};
use crate::trainer::{TrainConfig, Variant};

/// Grid swept by `ablate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// GCN depths to sweep; empty keeps `train.gcn_hidden`.
    pub layers: Vec<usize>,
    /// Thresholds to sweep; empty keeps `train.tau`.
    pub taus: Vec<f64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            variants: vec![
                Variant::SingleTaskCls,
                Variant::MultitaskMse,
                Variant::MultitaskCcc,
                Variant::EmotionGcn,
            ],
            seeds: vec![1, 2, 3, 4, 5],
            layers: Vec::new(),
            taus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    pub ablate: AblateConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: SyntheticConfig::default(),
            train: TrainConfig::default(),
            ablate: AblateConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Keys whose value is an object but is set as a unit.
const OBJECT_KEYS: [&str; 1] = ["train.embeddings"];

/// Defaults carried over from the published training setup.
const REFERENCE_KEYS: [&str; 6] = [
    "train.tau",
    "train.p",
    "train.lr",
    "train.epochs",
    "train.batch_size",
    "train.momentum",
];

fn flatten_into(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) if !OBJECT_KEYS.contains(&prefix) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("intermediate keys are objects");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

impl RunConfig {
    /// Every config key with its current value, in document order.
    pub fn flat(&self) -> Map<String, Value> {
        let mut out = Map::new();
        flatten_into("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    /// Overlays dotted `key -> value` pairs; unknown keys are rejected.
    pub fn with_overrides<I>(&self, pairs: I) -> Result<RunConfig>
    where
        I: IntoIterator<Item = (String, Value)>,
    {
        let mut flat = self.flat();
        for (key, v) in pairs {
            match flat.get_mut(&key) {
                Some(slot) => *slot = v,
                None => return Err(Error::Config(format!("unknown config key '{key}'"))),
            }
        }
        let cfg: RunConfig = serde_json::from_value(unflatten(&flat))
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a flat dotted-key JSON document over the defaults.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let doc: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not a JSON object: {e}")))?;
        RunConfig::default().with_overrides(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.ablate.seeds.is_empty() {
            return Err(Error::Config("ablate.seeds needs at least one seed".into()));
        }
        if self.ablate.variants.is_empty() {
            return Err(Error::Config("ablate.variants needs at least one variant".into()));
        }
        if self.ablate.layers.contains(&0) {
            return Err(Error::Config("ablate.layers entries must be >= 1".into()));
        }
        Ok(())
    }

    /// Flat JSON document with every key, the format read by `--config`.
    pub fn to_flat_json(&self) -> String {
        serde_json::to_string_pretty(&Value::Object(self.flat())).expect("config serializes")
    }

    /// First 8 hex digits of the SHA-256 of the data and training sections.
    pub fn hash8(&self) -> String {
        let doc = serde_json::json!({ "data": self.data, "train": self.train });
        let digest = Sha256::digest(doc.to_string().as_bytes());
        hex::encode(digest)[..8].to_string()
    }
}

/// Parses `key=value`; the value is JSON when it parses, else a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("expected key=value, got '{s}'")))?;
    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), v))
}

/// The key table appended to `--help`.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (flat JSON document for --config, or --set key=value):\n");
    for (k, v) in RunConfig::default().flat() {
        let note = if REFERENCE_KEYS.contains(&k.as_str()) {
            "  [reference training setup]"
        } else {
            ""
        };
        s += &format!("  {k:<26} {v}{note}\n");
    }
    s += "  train.p = null selects 0.7 for emotion_gcn and 0.5 for intra_gcn.\n";
    s
}
