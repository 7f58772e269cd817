//! Conditioning a joint forecast on its total.
//!
//! Exact results for the multivariate normal and T families, and rejection
//! ABC for anything that can be sampled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{JointForecast, SampleMatrix};
use crate::error::{Error, Result};

/// Sign of the rank-one term in the conditional T dispersion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispersionConvention {
    /// `(V - cc'/q) v_F`, which removes the variance of the total.
    #[default]
    Conditional,
    /// `(V + cc'/q) v_F`.
    AsPrinted,
}

/// Location and dispersion of `y | 1'y = F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedNormal {
    pub mean_f: DVector<f64>,
    pub var_f: DMatrix<f64>,
    /// 1 for the normal; `v_F` for the T.
    pub scale_factor: f64,
}

struct TotalMoments {
    c: DVector<f64>,
    q: f64,
    big_m: f64,
}

fn total_moments(m: &[f64], v: &DMatrix<f64>) -> Result<TotalMoments> {
    let n = m.len();
    if n == 0 || v.nrows() != n || v.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {n} with a {}x{} covariance",
            v.nrows(),
            v.ncols()
        )));
    }
    if m.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite mean or covariance entry".into()));
    }
    let c = v.column_sum();
    let q = c.sum();
    if !(q > 0.0) {
        return Err(Error::DegenerateTotal(q));
    }
    Ok(TotalMoments { c, q, big_m: m.iter().sum() })
}

/// `y ~ N(m, V)` conditioned on `1'y = total`: mean `m + c (F - M)/q` and
/// singular variance `V - cc'/q`, with `c = V1`, `q = 1'V1`, `M = 1'm`.
pub fn condition_normal(m: &[f64], v: &DMatrix<f64>, total: f64) -> Result<ConditionedNormal> {
    let t = total_moments(m, v)?;
    let mean_f = DVector::from_column_slice(m) + &t.c * ((total - t.big_m) / t.q);
    let var_f = v - &t.c * t.c.transpose() / t.q;
    Ok(ConditionedNormal { mean_f, var_f: symmetrize(var_f), scale_factor: 1.0 })
}

/// Multivariate T with `k` degrees of freedom, location `m` and dispersion
/// `V`, conditioned on its total. The location matches the normal case and
/// the dispersion is scaled by `v_F = (k + (F - M)^2 / q) / (k + n)`.
pub fn condition_t(k: f64, m: &[f64], v: &DMatrix<f64>, total: f64) -> Result<ConditionedNormal> {
    condition_t_with(k, m, v, total, DispersionConvention::default())
}

pub fn condition_t_with(
    k: f64,
    m: &[f64],
    v: &DMatrix<f64>,
    total: f64,
    convention: DispersionConvention,
) -> Result<ConditionedNormal> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("degrees of freedom must be positive, got {k}")));
    }
    let t = total_moments(m, v)?;
    let n = m.len() as f64;
    let v_f = (k + (total - t.big_m).powi(2) / t.q) / (k + n);
    let mean_f = DVector::from_column_slice(m) + &t.c * ((total - t.big_m) / t.q);
    let cc = &t.c * t.c.transpose() / t.q;
    let base = match convention {
        DispersionConvention::Conditional => v - cc,
        DispersionConvention::AsPrinted => v + cc,
    };
    Ok(ConditionedNormal { mean_f, var_f: symmetrize(base * v_f), scale_factor: v_f })
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Binned counts over `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins spanning the range of `values`.
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0u64; bins];
        if values.is_empty() {
            return Self { lower: f64::NAN, upper: f64::NAN, counts };
        }
        let lower = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let upper = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (upper - lower) / bins as f64;
        for &x in values {
            let b = if width > 0.0 { ((x - lower) / width) as usize } else { 0 };
            counts[b.min(bins - 1)] += 1;
        }
        Self { lower, upper, counts }
    }

    pub fn edges(&self) -> Vec<f64> {
        let b = self.counts.len();
        (0..=b).map(|i| self.lower + (self.upper - self.lower) * i as f64 / b as f64).collect()
    }
}

#[derive(Debug, Clone)]
pub struct AbcResult {
    pub accepted: SampleMatrix,
    pub acceptance_rate: f64,
    pub tau_pct: f64,
    pub total: f64,
    /// Candidate draws examined.
    pub draws: usize,
    /// Per-dimension histograms of the accepted draws.
    pub histograms: Vec<Histogram>,
}

pub const DEFAULT_BINS: usize = 64;

/// Rejection ABC: keep draws with `100 |1'y - F| / F < tau_pct`.
///
/// Analytic joints draw `samples` candidates in parallel blocks with
/// per-block streams, so the result depends only on `seed`. An empirical
/// joint is screened row by row and `samples` is ignored.
pub fn abc_condition(joint: &JointForecast, total: f64, tau_pct: f64, samples: usize, seed: u64) -> Result<AbcResult> {
    abc_condition_with_bins(joint, total, tau_pct, samples, seed, DEFAULT_BINS)
}

pub fn abc_condition_with_bins(
    joint: &JointForecast,
    total: f64,
    tau_pct: f64,
    samples: usize,
    seed: u64,
    bins: usize,
) -> Result<AbcResult> {
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidParameter(format!("percent tolerance needs a positive total, got {total}")));
    }
    if !(tau_pct > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tau_pct}")));
    }
    let n = joint.dim();
    let keep = |row: &[f64]| 100.0 * (row.iter().sum::<f64>() - total).abs() / total < tau_pct;

    let (accepted, draws) = match joint {
        JointForecast::EmpiricalMatrix(s) => {
            let idx: Vec<usize> = (0..s.nrows()).filter(|&j| keep(s.row(j))).collect();
            let data: Vec<f64> = idx.iter().flat_map(|&j| s.row(j).iter().copied()).collect();
            let mut m = SampleMatrix::new(idx.len(), n, data)?.with_names(s.names().to_vec())?;
            if let Some(w) = s.weights() {
                if !idx.is_empty() {
                    m = m.with_weights(idx.iter().map(|&j| w[j]).collect())?;
                }
            }
            (m, s.nrows())
        }
        _ => {
            if samples == 0 {
                return Err(Error::InvalidParameter("need at least one draw".into()));
            }
            let parts = joint.map_blocks(samples, seed, |block| {
                block.chunks_exact(n).filter(|r| keep(r)).flatten().copied().collect::<Vec<f64>>()
            })?;
            let data = parts.concat();
            (SampleMatrix::new(data.len() / n, n, data)?, samples)
        }
    };
    let histograms = (0..n).map(|i| Histogram::from_values(&accepted.column(i), bins)).collect();
    Ok(AbcResult {
        acceptance_rate: accepted.nrows() as f64 / draws as f64,
        accepted,
        tau_pct,
        total,
        draws,
        histograms,
    })
}
