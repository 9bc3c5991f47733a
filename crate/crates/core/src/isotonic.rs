//! Weighted least-squares projection onto non-increasing sequences
//! (pool adjacent violators).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsotonicError {
    #[error("empty input")]
    Empty,
    #[error("{values} values but {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("weights must be positive and finite")]
    BadWeight,
}

struct Block {
    weighted_sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

/// Non-increasing sequence minimizing `sum_i w_i (v_i - f_i)^2`.
pub fn pava_decreasing(values: &[f64], weights: &[f64]) -> Result<Vec<f64>, IsotonicError> {
    if values.is_empty() {
        return Err(IsotonicError::Empty);
    }
    if values.len() != weights.len() {
        return Err(IsotonicError::LengthMismatch { values: values.len(), weights: weights.len() });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(IsotonicError::BadWeight);
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push(Block { weighted_sum: v * w, weight: w, len: 1 });
        while blocks.len() >= 2 && blocks[blocks.len() - 2].mean() < blocks[blocks.len() - 1].mean() {
            let last = blocks.pop().expect("len >= 2");
            let prev = blocks.last_mut().expect("len >= 1");
            prev.weighted_sum += last.weighted_sum;
            prev.weight += last.weight;
            prev.len += last.len;
        }
    }
    Ok(blocks.iter().flat_map(|b| std::iter::repeat(b.mean()).take(b.len)).collect())
}

/// Unit-weight convenience wrapper.
pub fn pava_decreasing_unweighted(values: &[f64]) -> Result<Vec<f64>, IsotonicError> {
    pava_decreasing(values, &vec![1.0; values.len()])
}
