//! Node order of the affect graph.
//!
//! The seven expression classes come first, followed by the two continuous
//! dimensions. Every matrix indexed by node (adjacency, embeddings, GCN
//! output, similarity) uses this order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const NUM_CLASSES: usize = 7;
pub const NUM_DIMS: usize = 2;
pub const NUM_NODES: usize = NUM_CLASSES + NUM_DIMS;

pub const VALENCE: usize = 7;
pub const AROUSAL: usize = 8;

pub const NODE_NAMES: [&str; NUM_NODES] = [
    "Neutral", "Happy", "Sad", "Surprise", "Fear", "Disgust", "Anger", "Valence", "Arousal",
];

pub fn node_names() -> Vec<String> {
    NODE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Lowercase node words used for embedding lookup.
pub fn node_words() -> [String; NUM_NODES] {
    NODE_NAMES.map(|s| s.to_ascii_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Neutral = 0,
    Happy = 1,
    Sad = 2,
    Surprise = 3,
    Fear = 4,
    Disgust = 5,
    Anger = 6,
}

impl Expression {
    pub const ALL: [Expression; NUM_CLASSES] = [
        Expression::Neutral,
        Expression::Happy,
        Expression::Sad,
        Expression::Surprise,
        Expression::Fear,
        Expression::Disgust,
        Expression::Anger,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        NODE_NAMES[self.index()]
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    /// Accepts an integer id `0..=6` or a class name in any case.
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if let Ok(id) = s.parse::<usize>() {
            return Self::from_index(id)
                .ok_or_else(|| Error::Validation(format!("expression id {id} out of range 0..=6")));
        }
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown expression '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_by_id_and_name() {
        assert_eq!("3".parse::<Expression>().unwrap(), Expression::Surprise);
        assert_eq!("hAPPY".parse::<Expression>().unwrap(), Expression::Happy);
        assert!("7".parse::<Expression>().is_err());
        assert!("contempt".parse::<Expression>().is_err());
    }

    #[test]
    fn node_order_is_fixed() {
        assert_eq!(NODE_NAMES[VALENCE], "Valence");
        assert_eq!(NODE_NAMES[AROUSAL], "Arousal");
        for e in Expression::ALL {
            assert_eq!(Expression::from_index(e.index()), Some(e));
        }
        assert_eq!(node_words()[0], "neutral");
    }
}
