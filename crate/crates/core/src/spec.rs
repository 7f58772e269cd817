//! Serializable descriptions of distributions and losses, as read from
//! configuration files.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{JointForecast, MarginalDistribution, SampleMatrix};
use crate::error::{Error, Result};
use crate::fixtures::LognormalParameters;
use crate::losses::{LossFamily, LossKind};

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalSpec {
    Normal {
        m: f64,
        v: f64,
    },
    Lognormal {
        m: f64,
        v: f64,
    },
    Exponential {
        rate: f64,
    },
    #[serde(rename = "logt")]
    LogT {
        k: f64,
        m: f64,
        v: f64,
    },
    ZeroInflated {
        pi0: f64,
        positive: Box<MarginalSpec>,
    },
    Truncated {
        base: Box<MarginalSpec>,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    /// Inline values, or one column of a CSV file.
    Empirical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<ColumnRef>,
    },
}

impl MarginalSpec {
    /// Build the distribution; relative paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<MarginalDistribution> {
        match self {
            Self::Normal { m, v } => MarginalDistribution::normal(*m, *v),
            Self::Lognormal { m, v } => MarginalDistribution::lognormal(*m, *v),
            Self::Exponential { rate } => {
                if !(*rate > 0.0) {
                    return Err(Error::InvalidParameter(format!("exponential rate must be positive, got {rate}")));
                }
                MarginalDistribution::exponential_with_mean(1.0 / rate)
            }
            Self::LogT { k, m, v } => MarginalDistribution::log_t(*k, *m, *v),
            Self::ZeroInflated { pi0, positive } => MarginalDistribution::zero_inflated(*pi0, positive.resolve(base)?),
            Self::Truncated { base: b, lower, upper } => MarginalDistribution::truncated(
                b.resolve(base)?,
                lower.unwrap_or(f64::NEG_INFINITY),
                upper.unwrap_or(f64::INFINITY),
            ),
            Self::Empirical { values, weights, path, column } => match (values, path) {
                (Some(v), None) => MarginalDistribution::empirical(v.clone(), weights.clone()),
                (None, Some(p)) => {
                    let s = SampleMatrix::from_csv_path(&resolve_path(base, p))?;
                    let j = match column {
                        None | Some(ColumnRef::Index(0)) => 0,
                        Some(ColumnRef::Index(j)) => *j,
                        Some(ColumnRef::Name(name)) => s.names().iter().position(|c| c == name).ok_or_else(|| {
                            Error::InvalidParameter(format!("no column named {name:?} in {p}"))
                        })?,
                    };
                    if j >= s.ncols() {
                        return Err(Error::InvalidParameter(format!("column {j} out of range in {p}")));
                    }
                    let w = weights.clone().or_else(|| s.weights().map(<[f64]>::to_vec));
                    MarginalDistribution::empirical(s.column(j), w)
                }
                _ => Err(Error::InvalidParameter("empirical margin needs exactly one of values or path".into())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointSpec {
    /// Log-scale mean and covariance. Give `V`, or `v` with a common
    /// correlation `rho`, or a `path` to a JSON file with `m` and `V`.
    MvLognormal(GaussianSpec),
    MvNormal(GaussianSpec),
    /// CSV of joint draws, one column per dimension and an optional
    /// trailing `weight` column.
    Empirical { path: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(default, rename = "V", skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl GaussianSpec {
    fn parameters(&self, base: &Path) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (m, cov) = match (&self.path, &self.m) {
            (Some(p), None) => {
                let text = std::fs::read_to_string(resolve_path(base, p))?;
                let lp: LognormalParameters = serde_json::from_str(&text)?;
                (lp.m, Some(lp.v))
            }
            (None, Some(m)) => (m.clone(), self.cov.clone()),
            _ => return Err(Error::InvalidParameter("joint needs exactly one of m or path".into())),
        };
        let n = m.len();
        let cov = match (cov, &self.v, self.rho) {
            (Some(rows), None, None) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch(format!("V must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            (None, Some(v), rho) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} variances for {n} means", v.len())));
                }
                let rho = rho.unwrap_or(0.0);
                DMatrix::from_fn(n, n, |i, j| if i == j { v[i] } else { rho * (v[i] * v[j]).sqrt() })
            }
            _ => return Err(Error::InvalidParameter("joint needs either V, or v with an optional rho".into())),
        };
        Ok((m, cov))
    }
}

impl JointSpec {
    pub fn resolve(&self, base: &Path) -> Result<JointForecast> {
        match self {
            Self::MvLognormal(g) => {
                let (m, cov) = g.parameters(base)?;
                JointForecast::lognormal(m, cov)
            }
            Self::MvNormal(g) => {
                let (m, cov) = g.parameters(base)?;
                JointForecast::normal(m, cov)
            }
            Self::Empirical { path } => {
                Ok(JointForecast::EmpiricalMatrix(SampleMatrix::from_csv_path(&resolve_path(base, path))?))
            }
        }
    }

    /// Replace the common correlation of an equicorrelated spec.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        match self {
            Self::MvLognormal(g) | Self::MvNormal(g) if g.v.is_some() => {
                let g = GaussianSpec { rho: Some(rho), ..g.clone() };
                Ok(match self {
                    Self::MvLognormal(_) => Self::MvLognormal(g),
                    _ => Self::MvNormal(g),
                })
            }
            _ => Err(Error::Unsupported("a correlation grid needs a joint given by v and rho".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl LossSpec {
    /// Loss in `n` dimensions; weights default to ones.
    pub fn resolve(&self, n: usize) -> Result<LossFamily> {
        match &self.weights {
            Some(w) if w.len() != n => {
                Err(Error::DimensionMismatch(format!("{} loss weights for {n} dimensions", w.len())))
            }
            Some(w) => LossFamily::new(self.loss, w.clone()),
            None => Ok(LossFamily::uniform(self.loss, n)),
        }
    }
}
