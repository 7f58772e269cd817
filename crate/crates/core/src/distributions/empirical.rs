use rand::{Rng, RngExt};

use crate::error::{Error, Result};

/// Weighted discrete distribution on a finite set of sample values.
///
/// Values are held sorted; ties keep their original relative order. The
/// quantile is the left-continuous generalized inverse: the smallest value
/// whose cumulative weight reaches `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

// Cumulative sums are compared with a few ulps of slack so that a level
// such as 0.5 lands on the atom whose cumulative weight is 0.5 in exact
// arithmetic.
const CUMULATIVE_SLACK: f64 = 1e-12;

impl EmpiricalDistribution {
    pub fn new(values: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empirical distribution needs at least one value".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample value {bad}")));
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != values.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} values but {} weights",
                        values.len(),
                        w.len()
                    )));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
                }
                w
            }
            None => vec![1.0; values.len()],
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        let values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i] / total).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self { values, weights, cumulative })
    }

    /// Sorted support points.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Normalized weights aligned with [`values`](Self::values).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v <= y);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Generalized inverse for `u` in `[0, 1]`.
    pub fn quantile_closed(&self, u: f64) -> f64 {
        let threshold = u * (1.0 - CUMULATIVE_SLACK);
        let idx = self.cumulative.partition_point(|&c| c < threshold);
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().zip(&self.weights).map(|(v, w)| w * (v - m).powi(2)).sum()
    }

    /// `E[Y 1{Y <= y}]`.
    pub fn partial_expectation(&self, y: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v <= y);
        self.values[..idx].iter().zip(&self.weights[..idx]).map(|(v, w)| v * w).sum()
    }

    /// Mass sitting exactly at `y`.
    pub fn atom(&self, y: f64) -> f64 {
        let lo = self.values.partition_point(|&v| v < y);
        let hi = self.values.partition_point(|&v| v <= y);
        self.weights[lo..hi].iter().sum()
    }

    /// Reweight by `factor(value)` and renormalize.
    pub fn reweighted<F: Fn(f64) -> f64>(&self, factor: F) -> Result<Self> {
        let w: Vec<f64> = self.values.iter().zip(&self.weights).map(|(v, w)| w * factor(*v)).collect();
        Self::new(self.values.clone(), Some(w))
    }

    /// Interquartile range.
    pub fn iqr(&self) -> f64 {
        self.quantile_closed(0.75) - self.quantile_closed(0.25)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile_closed(u.max(f64::MIN_POSITIVE))
    }
}
