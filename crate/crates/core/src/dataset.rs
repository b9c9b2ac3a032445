//! Labeled dataset generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::qsim::{LabeledString, MAX_DATA_WIRES};
use crate::rng::{stream_rng, Stream};

/// Labeling rule for generated strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    /// Product of the entries: +1 for an even number of -1 entries.
    Parity,
    /// Sign of the entry sum; ties resolve to +1.
    Majority,
    /// Always +1.
    Constant,
}

impl LabelRule {
    pub fn label(self, z: &[i8]) -> i8 {
        match self {
            LabelRule::Parity => z.iter().map(|&b| i32::from(b)).product::<i32>() as i8,
            LabelRule::Majority => {
                if z.iter().map(|&b| i32::from(b)).sum::<i32>() >= 0 {
                    1
                } else {
                    -1
                }
            }
            LabelRule::Constant => 1,
        }
    }
}

/// Dataset over strings of one fixed width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub n: usize,
    pub items: Vec<LabeledString>,
}

impl Dataset {
    pub fn new(n: usize, items: Vec<LabeledString>) -> Result<Dataset> {
        if n == 0 || n > MAX_DATA_WIRES {
            return Err(CoreError::InvalidInput(format!(
                "data wire count {n} outside 1..={MAX_DATA_WIRES}"
            )));
        }
        if items.is_empty() {
            return Err(CoreError::InvalidInput("dataset must not be empty".into()));
        }
        for (i, item) in items.iter().enumerate() {
            if item.z.len() != n {
                return Err(CoreError::DimensionMismatch(format!(
                    "item {i} has width {}, dataset is for n = {n}",
                    item.z.len()
                )));
            }
        }
        Ok(Dataset { n, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Item used in round `r` (1-based): rounds cycle through the dataset.
    pub fn item_for_round(&self, r: usize) -> &LabeledString {
        &self.items[(r - 1) % self.items.len()]
    }
}

/// Draws `count` uniform strings and labels them by `rule`. Uses the
/// dataset random stream exclusively, so generation is reproducible and
/// independent of measurement sampling.
pub fn gen_data(n: usize, count: usize, rule: LabelRule, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(CoreError::InvalidInput("dataset size must be >= 1".into()));
    }
    if n == 0 || n > MAX_DATA_WIRES {
        return Err(CoreError::InvalidInput(format!(
            "data wire count {n} outside 1..={MAX_DATA_WIRES}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Dataset);
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let z: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let label = rule.label(&z);
        items.push(LabeledString::new(z, label)?);
    }
    Dataset::new(n, items)
}

/// Every string of width `n` once, labeled by `rule`; handy for exact
/// full-batch experiments on small registers.
pub fn full_dataset(n: usize, rule: LabelRule) -> Result<Dataset> {
    if n == 0 || n > 16 {
        return Err(CoreError::InvalidInput(format!(
            "full enumeration supported for n in 1..=16, got {n}"
        )));
    }
    let items = (0..1usize << n)
        .map(|bits| {
            let z: Vec<i8> = (0..n)
                .map(|w| if bits >> (n - 1 - w) & 1 == 1 { -1 } else { 1 })
                .collect();
            let label = rule.label(&z);
            LabeledString::new(z, label)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(n, items)
}
