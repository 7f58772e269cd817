use rand::{Rng, RngExt};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use super::empirical::EmpiricalDistribution;
use super::{check_probability, norm_cdf, norm_quantile, phi};
use crate::error::{Error, Result};
use crate::numeric;

/// A univariate predictive distribution.
///
/// `Lognormal` and `LogT` are parameterized on the log scale: `m` is the
/// location and `v` the squared scale of `log(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalDistribution {
    Normal { m: f64, v: f64 },
    Lognormal { m: f64, v: f64 },
    Exponential { rate: f64 },
    LogT { k: f64, m: f64, v: f64 },
    /// Point mass `pi0` at zero plus a strictly positive continuous or
    /// discrete part.
    ZeroInflated { pi0: f64, positive: Box<MarginalDistribution> },
    /// A continuous family restricted to `[lower, upper]` and renormalized.
    Truncated { base: Box<MarginalDistribution>, lower: f64, upper: f64 },
    Empirical(EmpiricalDistribution),
}

use MarginalDistribution::*;

fn student(k: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, k).expect("validated degrees of freedom")
}

/// Normalized log-T density at `y > 0`.
///
/// `log(y)` is Student-T with `k` degrees of freedom, location `m` and
/// scale `sqrt(v)`. The density has a pole at zero.
pub fn logt_pdf(k: f64, m: f64, v: f64, y: f64) -> Result<f64> {
    if !(k > 0.0 && v > 0.0) {
        return Err(Error::InvalidParameter(format!("log-T needs k > 0 and v > 0, got k={k}, v={v}")));
    }
    if !(y > 0.0) {
        return Err(Error::Domain(format!("log-T density needs y > 0, got {y}")));
    }
    let s = v.sqrt();
    Ok(student(k).pdf((y.ln() - m) / s) / (s * y))
}

impl MarginalDistribution {
    pub fn normal(m: f64, v: f64) -> Result<Self> {
        Normal { m, v }.validated()
    }

    pub fn lognormal(m: f64, v: f64) -> Result<Self> {
        Lognormal { m, v }.validated()
    }

    /// Exponential with the given mean.
    pub fn exponential_with_mean(mean: f64) -> Result<Self> {
        Exponential { rate: 1.0 / mean }.validated()
    }

    pub fn log_t(k: f64, m: f64, v: f64) -> Result<Self> {
        LogT { k, m, v }.validated()
    }

    pub fn zero_inflated(pi0: f64, positive: MarginalDistribution) -> Result<Self> {
        ZeroInflated { pi0, positive: Box::new(positive) }.validated()
    }

    pub fn truncated(base: MarginalDistribution, lower: f64, upper: f64) -> Result<Self> {
        Truncated { base: Box::new(base), lower, upper }.validated()
    }

    pub fn empirical(values: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        Ok(Empirical(EmpiricalDistribution::new(values, weights)?))
    }

    /// Check parameter constraints, returning `self` on success.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Normal { m, v } | Lognormal { m, v } => {
                if !m.is_finite() || !(*v > 0.0 && v.is_finite()) {
                    return bad(format!("need finite m and v > 0, got m={m}, v={v}"));
                }
            }
            Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            LogT { k, m, v } => {
                if !(*k > 0.0) || !m.is_finite() || !(*v > 0.0 && v.is_finite()) {
                    return bad(format!("log-T needs k > 0, finite m, v > 0; got k={k}, m={m}, v={v}"));
                }
            }
            ZeroInflated { pi0, positive } => {
                if !(*pi0 >= 0.0 && *pi0 < 1.0) {
                    return bad(format!("pi0 must lie in [0, 1), got {pi0}"));
                }
                positive.validate()?;
                if matches!(**positive, ZeroInflated { .. }) {
                    return bad("nested zero inflation".into());
                }
                let (lo, _) = positive.support();
                if lo < 0.0 || positive.cdf(0.0) > 0.0 {
                    return bad("positive part must have support y > 0".into());
                }
            }
            Truncated { base, lower, upper } => {
                base.validate()?;
                if matches!(**base, Empirical(_) | ZeroInflated { .. } | Truncated { .. }) {
                    return bad("only continuous families can be truncated".into());
                }
                if !(lower < upper) || lower.is_nan() || upper.is_nan() {
                    return bad(format!("truncation needs lower < upper, got [{lower}, {upper}]"));
                }
                if base.cdf(*upper) - base.cdf(*lower) <= 0.0 {
                    return bad("truncation interval carries no probability".into());
                }
            }
            Empirical(_) => {}
        }
        Ok(())
    }

    /// Whether moments of all orders used here (mean, variance) exist.
    pub fn finite_moments(&self) -> bool {
        match self {
            LogT { .. } => false,
            ZeroInflated { positive, .. } => positive.finite_moments(),
            Truncated { base, lower, upper } => base.finite_moments() || (lower.is_finite() && upper.is_finite()),
            _ => true,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Empirical(_) | ZeroInflated { .. })
    }

    /// Closure of the support as `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Lognormal { .. } | Exponential { .. } | LogT { .. } => (0.0, f64::INFINITY),
            ZeroInflated { positive, .. } => (0.0, positive.support().1),
            Truncated { base, lower, upper } => {
                let (a, b) = base.support();
                (a.max(*lower), b.min(*upper))
            }
            Empirical(e) => (e.values()[0], *e.values().last().expect("non-empty")),
        }
    }

    /// Probability mass exactly at zero.
    pub fn point_mass_at_zero(&self) -> f64 {
        match self {
            ZeroInflated { pi0, .. } => *pi0,
            Empirical(e) => e.atom(0.0),
            _ => 0.0,
        }
    }

    /// Density of the absolutely continuous part; `None` for purely
    /// discrete laws.
    pub fn pdf(&self, y: f64) -> Option<f64> {
        Some(match self {
            Normal { m, v } => {
                let s = v.sqrt();
                phi((y - m) / s) / s
            }
            Lognormal { m, v } => {
                if y <= 0.0 {
                    return Some(0.0);
                }
                let s = v.sqrt();
                phi((y.ln() - m) / s) / (s * y)
            }
            Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
            LogT { k, m, v } => {
                if y <= 0.0 {
                    return Some(0.0);
                }
                logt_pdf(*k, *m, *v, y).expect("validated")
            }
            ZeroInflated { pi0, positive } => {
                if y <= 0.0 {
                    return Some(0.0);
                }
                (1.0 - pi0) * positive.pdf(y)?
            }
            Truncated { base, lower, upper } => {
                if y < *lower || y > *upper {
                    return Some(0.0);
                }
                base.pdf(y)? / self.truncated_mass()
            }
            Empirical(_) => return None,
        })
    }

    fn truncated_mass(&self) -> f64 {
        match self {
            Truncated { base, lower, upper } => base.cdf(*upper) - base.cdf(*lower),
            _ => 1.0,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            Normal { m, v } => norm_cdf((y - m) / v.sqrt()),
            Lognormal { m, v } => {
                if y <= 0.0 {
                    0.0
                } else {
                    norm_cdf((y.ln() - m) / v.sqrt())
                }
            }
            Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            LogT { k, m, v } => {
                if y <= 0.0 {
                    0.0
                } else {
                    student(*k).cdf((y.ln() - m) / v.sqrt())
                }
            }
            ZeroInflated { pi0, positive } => {
                if y < 0.0 {
                    0.0
                } else {
                    pi0 + (1.0 - pi0) * positive.cdf(y)
                }
            }
            Truncated { base, lower, upper } => {
                if y < *lower {
                    0.0
                } else if y >= *upper {
                    1.0
                } else {
                    let lo = base.cdf(*lower);
                    ((base.cdf(y) - lo) / (base.cdf(*upper) - lo)).clamp(0.0, 1.0)
                }
            }
            Empirical(e) => e.cdf(y),
        }
    }

    /// Generalized inverse CDF for `u` in the open unit interval.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_probability(u)?;
        Ok(self.quantile_closed(u))
    }

    /// Generalized inverse on the closed unit interval; the end points map
    /// to the support limits (possibly infinite).
    pub fn quantile_closed(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (lo, hi) = self.support();
        if let Empirical(e) = self {
            return e.quantile_closed(u);
        }
        if u == 0.0 {
            return lo;
        }
        if u == 1.0 {
            return hi;
        }
        match self {
            Normal { m, v } => m + v.sqrt() * norm_quantile(u),
            Lognormal { m, v } => (m + v.sqrt() * norm_quantile(u)).exp(),
            Exponential { rate } => -(-u).ln_1p() / rate,
            LogT { k, m, v } => (m + v.sqrt() * student(*k).inverse_cdf(u)).exp(),
            ZeroInflated { pi0, positive } => {
                if u <= *pi0 {
                    0.0
                } else {
                    positive.quantile_closed((u - pi0) / (1.0 - pi0))
                }
            }
            Truncated { base, lower, upper } => {
                let a = base.cdf(*lower);
                let b = base.cdf(*upper);
                let x = base.quantile_closed(a + u * (b - a));
                x.clamp(*lower, *upper)
            }
            Empirical(_) => unreachable!(),
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile_closed(0.5)
    }

    /// Mode for the unimodal parametric families.
    pub fn mode(&self) -> Option<f64> {
        match self {
            Normal { m, .. } => Some(*m),
            Lognormal { m, v } => Some((m - v).exp()),
            Exponential { .. } => Some(0.0),
            _ => None,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            Normal { m, .. } => Ok(*m),
            Lognormal { m, v } => Ok((m + v / 2.0).exp()),
            Exponential { rate } => Ok(1.0 / rate),
            LogT { .. } => Err(undefined_moment()),
            ZeroInflated { pi0, positive } => Ok((1.0 - pi0) * positive.mean()?),
            Truncated { .. } => self.truncated_moment(|y| y),
            Empirical(e) => Ok(e.mean()),
        }
    }

    pub fn variance(&self) -> Result<f64> {
        match self {
            Normal { v, .. } => Ok(*v),
            Lognormal { m, v } => Ok(v.exp_m1() * (2.0 * m + v).exp()),
            Exponential { rate } => Ok(1.0 / (rate * rate)),
            LogT { .. } => Err(undefined_moment()),
            ZeroInflated { pi0, positive } => {
                let mp = positive.mean()?;
                let second = positive.variance()? + mp * mp;
                let mean = (1.0 - pi0) * mp;
                Ok((1.0 - pi0) * second - mean * mean)
            }
            Truncated { .. } => {
                let mean = self.mean()?;
                self.truncated_moment(|y| (y - mean) * (y - mean))
            }
            Empirical(e) => Ok(e.variance()),
        }
    }

    /// `E[Y 1{Y <= y}]`.
    pub fn partial_expectation(&self, y: f64) -> Result<f64> {
        match self {
            Normal { m, v } => {
                let s = v.sqrt();
                let z = (y - m) / s;
                Ok(m * norm_cdf(z) - s * phi(z))
            }
            Lognormal { m, v } => {
                if y <= 0.0 {
                    return Ok(0.0);
                }
                Ok((m + v / 2.0).exp() * norm_cdf((y.ln() - m - v) / v.sqrt()))
            }
            Exponential { rate } => {
                if y <= 0.0 {
                    return Ok(0.0);
                }
                let ry = rate * y;
                Ok((1.0 - (-ry).exp() * (1.0 + ry)) / rate)
            }
            LogT { .. } => Err(undefined_moment()),
            ZeroInflated { pi0, positive } => {
                if y < 0.0 {
                    return Ok(0.0);
                }
                Ok((1.0 - pi0) * positive.partial_expectation(y)?)
            }
            Truncated { base, lower, upper } => {
                if y <= *lower {
                    return Ok(0.0);
                }
                let top = y.min(*upper);
                if base.finite_moments() {
                    Ok((base.partial_expectation(top)? - base.partial_expectation(*lower)?) / self.truncated_mass())
                } else {
                    let mass = self.truncated_mass();
                    Ok(numeric::integrate(|t| t * base.pdf(t).unwrap_or(0.0), *lower, top, 1e-10, 0.0) / mass)
                }
            }
            Empirical(e) => Ok(e.partial_expectation(y)),
        }
    }

    fn truncated_moment<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let Truncated { base, .. } = self else {
            unreachable!("truncated_moment on a non-truncated law")
        };
        if !self.finite_moments() {
            return Err(undefined_moment());
        }
        let mass = self.truncated_mass();
        let f = |t: f64| g(t) * base.pdf(t).unwrap_or(0.0) / mass;
        let (a, b) = self.support();
        Ok(integrate_range(f, a, b))
    }

    /// One draw by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Empirical(e) => e.sample(rng),
            _ => {
                let u: f64 = rng.random();
                self.quantile_closed(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
            }
        }
    }

    /// Interquartile range.
    pub fn iqr(&self) -> f64 {
        self.quantile_closed(0.75) - self.quantile_closed(0.25)
    }
}

fn undefined_moment() -> Error {
    Error::UndefinedMoment("log-T distributions have no finite moments".into())
}

/// Integral of `f` over `[a, b]` where either end may be infinite.
pub(crate) fn integrate_range<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const RT: f64 = 1e-10;
    match (a.is_finite(), b.is_finite()) {
        (true, true) => numeric::integrate(f, a, b, RT, 0.0),
        (true, false) => numeric::integrate_to_infinity(f, a, RT, 0.0),
        (false, true) => numeric::integrate_to_infinity(|t| f(-t), -b, RT, 0.0),
        (false, false) => {
            numeric::integrate_to_infinity(&f, 0.0, RT, 0.0) + numeric::integrate_to_infinity(|t| f(-t), 0.0, RT, 0.0)
        }
    }
}
