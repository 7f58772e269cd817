use super::empirical::EmpiricalDistribution;
use super::marginal::{integrate_range, MarginalDistribution};
use crate::error::{Error, Result};
use crate::numeric;

/// The size-weighted law `G` with density `g(y) = k p(y) / y` on `y > 0`.
///
/// `G` carries the percent-error risk of its base: the expected absolute
/// percent error under `P` is the expected absolute error under `G`
/// divided by `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeWeightedDistribution {
    base: MarginalDistribution,
    law: WeightedLaw,
    normalizer: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum WeightedLaw {
    /// `G` is itself a member of a closed family.
    Closed(MarginalDistribution),
    /// `G` defined through its density; CDF by quadrature, quantile by
    /// root finding on `[lower, upper]`.
    Numeric { lower: f64, upper: f64 },
}

/// Size-weighting of `d`, using closed forms where they exist.
pub fn size_weighted(d: &MarginalDistribution) -> Result<SizeWeightedDistribution> {
    use MarginalDistribution::*;
    match d {
        Lognormal { m, v } => Ok(SizeWeightedDistribution {
            base: d.clone(),
            law: WeightedLaw::Closed(Lognormal { m: m - v, v: *v }),
            normalizer: (m - v / 2.0).exp(),
        }),
        Empirical(e) => {
            if let Some(bad) = e.values().iter().find(|y| **y <= 0.0) {
                return Err(Error::NonIntegrable(format!(
                    "empirical sample contains non-positive value {bad}; 1/y weighting is undefined"
                )));
            }
            let inv_mean: f64 = e.values().iter().zip(e.weights()).map(|(y, w)| w / y).sum();
            let law = e.reweighted(|y| 1.0 / y)?;
            Ok(SizeWeightedDistribution {
                base: d.clone(),
                law: WeightedLaw::Closed(Empirical(law)),
                normalizer: 1.0 / inv_mean,
            })
        }
        Truncated { base, lower, .. } if *lower > 0.0 || matches!(**base, Lognormal { .. }) => size_weighted_quadrature(d),
        Truncated { .. } => Err(Error::NonIntegrable(
            "p(y)/y is not integrable near zero; truncate away from zero".into(),
        )),
        Normal { .. } => Err(Error::NonIntegrable("normal support is not restricted to y > 0".into())),
        Exponential { .. } => Err(Error::NonIntegrable(
            "exponential density is positive at zero, so p(y)/y is not integrable".into(),
        )),
        LogT { .. } => Err(Error::NonIntegrable(
            "log-T density has a pole at zero, so p(y)/y is not integrable".into(),
        )),
        ZeroInflated { .. } => Err(Error::NonIntegrable(
            "point mass at zero; size-weight the positive part instead".into(),
        )),
    }
}

/// Size-weighting by numerical integration of `p(y)/y`, for any continuous
/// base with support in `[0, inf)` whose weighted density is integrable.
pub fn size_weighted_quadrature(d: &MarginalDistribution) -> Result<SizeWeightedDistribution> {
    if !d.is_continuous() {
        return Err(Error::Unsupported("quadrature size-weighting needs a continuous law".into()));
    }
    let (lower, upper) = d.support();
    if lower < 0.0 {
        return Err(Error::NonIntegrable("support extends below zero".into()));
    }
    let inv_mean = integrate_range(|y| if y > 0.0 { d.pdf(y).unwrap_or(0.0) / y } else { 0.0 }, lower, upper);
    if !(inv_mean.is_finite() && inv_mean > 0.0) {
        return Err(Error::NonIntegrable(format!("integral of p(y)/y evaluated to {inv_mean}")));
    }
    Ok(SizeWeightedDistribution {
        base: d.clone(),
        law: WeightedLaw::Numeric { lower, upper },
        normalizer: 1.0 / inv_mean,
    })
}

impl SizeWeightedDistribution {
    /// The distribution being reweighted.
    pub fn base(&self) -> &MarginalDistribution {
        &self.base
    }

    /// The normalizer `k = 1 / E[1/Y]`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `G` as a closed-form law when one is available.
    pub fn closed_form(&self) -> Option<&MarginalDistribution> {
        match &self.law {
            WeightedLaw::Closed(d) => Some(d),
            WeightedLaw::Numeric { .. } => None,
        }
    }

    pub fn pdf(&self, y: f64) -> Option<f64> {
        match &self.law {
            WeightedLaw::Closed(d) => d.pdf(y),
            WeightedLaw::Numeric { .. } => {
                if y <= 0.0 {
                    Some(0.0)
                } else {
                    Some(self.normalizer * self.base.pdf(y)? / y)
                }
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match &self.law {
            WeightedLaw::Closed(d) => d.cdf(y),
            WeightedLaw::Numeric { lower, upper } => {
                if y <= *lower {
                    return 0.0;
                }
                if y >= *upper {
                    return 1.0;
                }
                let g = |t: f64| if t > 0.0 { self.base.pdf(t).unwrap_or(0.0) / t } else { 0.0 };
                (self.normalizer * integrate_range(g, *lower, y)).clamp(0.0, 1.0)
            }
        }
    }

    /// Generalized inverse on `[0, 1]`.
    pub fn quantile_closed(&self, u: f64) -> f64 {
        match &self.law {
            WeightedLaw::Closed(d) => d.quantile_closed(u),
            WeightedLaw::Numeric { lower, upper } => {
                let u = u.clamp(0.0, 1.0);
                if u == 0.0 {
                    return *lower;
                }
                if u == 1.0 {
                    return *upper;
                }
                // bracket on the base's quantile scale, then solve G(y) = u
                let mut lo = if *lower > 0.0 { *lower } else { self.base.quantile_closed(1e-300_f64.max(u * 1e-6)) };
                while self.cdf(lo) > u && lo > 0.0 {
                    lo *= 0.5;
                }
                let mut hi = if upper.is_finite() { *upper } else { self.base.quantile_closed(1.0 - (1.0 - u) * 1e-6) };
                while self.cdf(hi) < u && hi.is_finite() {
                    hi *= 2.0;
                }
                numeric::monotone_root(|y| self.cdf(y), |y| self.pdf(y), u, lo, hi, 1e-15)
            }
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        super::check_probability(u)?;
        Ok(self.quantile_closed(u))
    }

    pub fn median(&self) -> f64 {
        self.quantile_closed(0.5)
    }

    /// `E_G[|Y - f|] = f (2 G(f) - 1) + k - 2 k P(f)`, using
    /// `E_G[Y 1{Y <= f}] = k P(f)`.
    pub fn mean_absolute_deviation(&self, f: f64) -> f64 {
        let k = self.normalizer;
        f * (2.0 * self.cdf(f) - 1.0) + k - 2.0 * k * self.base.cdf(f)
    }

    /// Empirical weighted law, when `G` is discrete.
    pub fn empirical(&self) -> Option<&EmpiricalDistribution> {
        match &self.law {
            WeightedLaw::Closed(MarginalDistribution::Empirical(e)) => Some(e),
            _ => None,
        }
    }

    pub(crate) fn from_parts(base: MarginalDistribution, law: MarginalDistribution, normalizer: f64) -> Self {
        Self { base, law: WeightedLaw::Closed(law), normalizer }
    }
}
