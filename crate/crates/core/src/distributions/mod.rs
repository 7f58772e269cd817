//! Univariate and joint predictive distributions.

mod empirical;
mod joint;
mod marginal;
mod size_weighted;

pub use empirical::EmpiricalDistribution;
pub use joint::{GaussianSampler, JointForecast, SampleMatrix};
pub use marginal::{logt_pdf, MarginalDistribution};
pub use size_weighted::{size_weighted, size_weighted_quadrature, SizeWeightedDistribution};

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;

pub(crate) fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("standard normal"))
}

pub(crate) fn phi(z: f64) -> f64 {
    std_normal().pdf(z)
}

pub(crate) fn norm_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub(crate) fn norm_quantile(u: f64) -> f64 {
    std_normal().inverse_cdf(u)
}

pub(crate) fn check_probability(u: f64) -> crate::Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!("probability {u} not in (0, 1)")))
    }
}
