//! Reference scenarios.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distributions::{JointForecast, MarginalDistribution};
use crate::error::Result;

/// Log-scale means of the bivariate reference forecast: medians 7 and 14.
pub fn bivariate_log_means() -> Vec<f64> {
    vec![7f64.ln(), 14f64.ln()]
}

pub const BIVARIATE_LOG_VARIANCES: [f64; 2] = [0.04, 0.09];

/// Bivariate lognormal with log-correlation `rho`.
pub fn bivariate_lognormal(rho: f64) -> Result<JointForecast> {
    JointForecast::lognormal_equicorrelated(bivariate_log_means(), &BIVARIATE_LOG_VARIANCES, rho)
}

pub fn bivariate_margins() -> Result<Vec<MarginalDistribution>> {
    bivariate_log_means()
        .into_iter()
        .zip(BIVARIATE_LOG_VARIANCES)
        .map(|(m, v)| MarginalDistribution::lognormal(m, v))
        .collect()
}

/// Totals and correlations of the bivariate scenario grid.
pub const BIVARIATE_TOTALS: [f64; 3] = [14.7, 21.4, 24.15];
pub const BIVARIATE_RHOS: [f64; 3] = [-0.7, 0.0, 0.7];

/// Log-scale parameters of a multivariate lognormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalParameters {
    pub m: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
}

impl LognormalParameters {
    pub fn joint(&self) -> Result<JointForecast> {
        let n = self.m.len();
        let cov = DMatrix::from_fn(n, n, |i, j| self.v.get(i).and_then(|r| r.get(j)).copied().unwrap_or(f64::NAN));
        JointForecast::lognormal(self.m.clone(), cov)
    }
}

pub const SYNTHETIC_SEED: u64 = 20_180_417;
pub const SYNTHETIC_DIM: usize = 100;
/// Constraint total for the synthetic scenario, below the sum of medians.
pub const SYNTHETIC_TOTAL: f64 = 4281.0;

/// The synthetic 100-dimensional lognormal forecast.
///
/// Log-means scatter around `ln 47` with sd 0.15, log-variances are uniform
/// on `[0.02, 0.12]`, and log-correlations come from three factors: a
/// common factor with loadings in `(0.3, 0.8)` and two mixed-sign factors
/// with sd 0.3 loadings.
pub fn synthetic_n100() -> LognormalParameters {
    let n = SYNTHETIC_DIM;
    let mut rng = ChaCha8Rng::seed_from_u64(SYNTHETIC_SEED);
    let spread = Normal::new(0.0, 0.15).expect("valid normal");
    let side = Normal::new(0.0, 0.3).expect("valid normal");
    let m: Vec<f64> = (0..n).map(|_| 47f64.ln() + spread.sample(&mut rng)).collect();
    let v: Vec<f64> = (0..n).map(|_| 0.02 + 0.10 * rng.random::<f64>()).collect();
    let mut loadings = DMatrix::zeros(n, 3);
    for i in 0..n {
        loadings[(i, 0)] = 0.3 + 0.5 * rng.random::<f64>();
        loadings[(i, 1)] = side.sample(&mut rng);
        loadings[(i, 2)] = side.sample(&mut rng);
        let communality: f64 = loadings.row(i).iter().map(|l| l * l).sum();
        if communality > 0.95 {
            let shrink = (0.95 / communality).sqrt();
            for k in 0..3 {
                loadings[(i, k)] *= shrink;
            }
        }
    }
    let r = &loadings * loadings.transpose();
    let cov = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let rho = if i == j { 1.0 } else { r[(i, j)] };
                    rho * (v[i] * v[j]).sqrt()
                })
                .collect()
        })
        .collect();
    LognormalParameters { m, v: cov }
}
