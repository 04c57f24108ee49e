use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Binary predictions of one classifier on a fixed, ordered set of rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredictionVector {
    words: Vec<u64>,
    len: usize,
}

impl PredictionVector {
    pub fn from_bits(bits: &[u8]) -> Self {
        bits.iter().map(|&b| b != 0).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range for {} predictions", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| u8::from(self.get(i))).collect()
    }

    /// Number of positions where the two vectors disagree.
    pub fn hamming(&self, other: &Self) -> Result<usize, ClassifierError> {
        if self.len != other.len {
            return Err(ClassifierError::LengthMismatch(self.len, other.len));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Fraction of positions disagreeing with `labels`.
    pub fn error_rate(&self, labels: &[u8]) -> f64 {
        assert_eq!(labels.len(), self.len, "label count must match predictions");
        if self.len == 0 {
            return 0.0;
        }
        let wrong = labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| self.get(i) != (y == 1))
            .count();
        wrong as f64 / self.len as f64
    }
}

impl FromIterator<bool> for PredictionVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in iter {
            if len % 64 == 0 {
                words.push(0);
            }
            if bit {
                words[len / 64] |= 1 << (len % 64);
            }
            len += 1;
        }
        Self { words, len }
    }
}

/// Exponents of the classifier kernel `K = (1 - hamming/n)^kernel_exponent`
/// and of the edge similarity `K^similarity_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kernel_exponent: i32,
    pub similarity_power: i32,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            kernel_exponent: 4,
            similarity_power: 3,
        }
    }
}

impl KernelParams {
    pub fn kernel(&self, a: &PredictionVector, b: &PredictionVector) -> Result<f64, ClassifierError> {
        if a.is_empty() && b.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let distance = a.hamming(b)?;
        let agreement = 1.0 - distance as f64 / a.len() as f64;
        Ok(agreement.powi(self.kernel_exponent))
    }

    pub fn similarity(&self, a: &PredictionVector, b: &PredictionVector) -> Result<f64, ClassifierError> {
        Ok(self.kernel(a, b)?.powi(self.similarity_power))
    }
}

/// `(1 - hamming(a, b) / n)^4`.
pub fn kernel(a: &PredictionVector, b: &PredictionVector) -> Result<f64, ClassifierError> {
    KernelParams::default().kernel(a, b)
}

/// `kernel(a, b)^3`, the relaxed agreement potential between neighbors.
pub fn edge_similarity(a: &PredictionVector, b: &PredictionVector) -> Result<f64, ClassifierError> {
    KernelParams::default().similarity(a, b)
}
