use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest per-feature arity; category sets are stored as `u64` masks.
pub const MAX_ARITY: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("row {row} has {got} features, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("row {row}, feature {feature}: code {code} out of range for arity {arity}")]
    CodeOutOfRange {
        row: usize,
        feature: usize,
        code: u16,
        arity: usize,
    },
    #[error("label {label} in row {row} is not binary")]
    NonBinaryLabel { row: usize, label: u8 },
    #[error("feature {feature} has arity {arity}, above the limit of {MAX_ARITY}")]
    ArityTooLarge { feature: usize, arity: usize },
    #[error("features and labels differ in length")]
    LengthMismatch,
}

/// Rows of small categorical codes with a binary label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    features: Vec<Vec<u16>>,
    labels: Vec<u8>,
    arity: Vec<usize>,
}

impl CategoricalDataset {
    /// Validates shape, code ranges and labels.
    pub fn new(
        features: Vec<Vec<u16>>,
        labels: Vec<u8>,
        arity: Vec<usize>,
    ) -> Result<Self, DatasetError> {
        if features.len() != labels.len() {
            return Err(DatasetError::LengthMismatch);
        }
        if let Some((feature, &a)) = arity.iter().enumerate().find(|(_, &a)| a > MAX_ARITY) {
            return Err(DatasetError::ArityTooLarge { feature, arity: a });
        }
        for (row, (x, &y)) in features.iter().zip(&labels).enumerate() {
            if x.len() != arity.len() {
                return Err(DatasetError::Ragged {
                    row,
                    expected: arity.len(),
                    got: x.len(),
                });
            }
            if let Some((feature, &code)) =
                x.iter().enumerate().find(|(f, &c)| usize::from(c) >= arity[*f])
            {
                return Err(DatasetError::CodeOutOfRange {
                    row,
                    feature,
                    code,
                    arity: arity[feature],
                });
            }
            if y > 1 {
                return Err(DatasetError::NonBinaryLabel { row, label: y });
            }
        }
        Ok(Self {
            features,
            labels,
            arity,
        })
    }

    /// Dataset with the arity of each feature inferred as `max code + 1`.
    pub fn with_inferred_arity(
        features: Vec<Vec<u16>>,
        labels: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        let width = features.first().map_or(0, Vec::len);
        let mut arity = vec![1; width];
        for x in &features {
            for (a, &c) in arity.iter_mut().zip(x) {
                *a = (*a).max(usize::from(c) + 1);
            }
        }
        Self::new(features, labels, arity)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.arity.len()
    }

    pub fn arity(&self) -> &[usize] {
        &self.arity
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.features[i]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u16]> {
        self.features.iter().map(Vec::as_slice)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// New dataset made of the given rows (repeats allowed), same arity.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            arity: self.arity.clone(),
        }
    }

    /// Row-wise concatenation; arities are widened to the larger of the two.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Self>) -> Self {
        let mut out = Self {
            features: Vec::new(),
            labels: Vec::new(),
            arity: Vec::new(),
        };
        for part in parts {
            if out.arity.is_empty() {
                out.arity = part.arity.clone();
            }
            for (a, &b) in out.arity.iter_mut().zip(&part.arity) {
                *a = (*a).max(b);
            }
            out.features.extend(part.features.iter().cloned());
            out.labels.extend_from_slice(&part.labels);
        }
        out
    }
}
