//! Loss families, their componentwise Lagrangian minimizers and risks.
//!
//! For an additive loss `L(y, f) = sum_i L_i(y_i, f_i)` and multiplier
//! `lambda`, the penalized risk `R(f) - lambda 1'f` separates, and each
//! component minimizer `f_i(lambda)` has a closed form:
//!
//! | loss | `L_i(y, f)` | `f_i(lambda)` |
//! |------|-------------|---------------|
//! | SE   | `(y - f)^2 / c` | `m_i + lambda c_i / 2` |
//! | AD   | `|y - f| / c` | `P_i^-((1 + lambda c_i) / 2)` |
//! | APE  | `|y - f| / (y c)` | `G_i^-((1 + lambda c_i k_i) / 2)` |
//! | ZAPE | APE for `y > 0`, `f / c` at `y = 0` | `0` if `u_i <= 0`, else `G_i^-(u_i)` |
//! | WAPE | `sum_i |y_i - f_i| / c_i` over `1'y` | APE form under `1/(1'y)` reweighting |
//!
//! where `G_i` is the size-weighted law of [`size_weighted`] with
//! normalizer `k_i`, and for ZAPE
//! `u_i(lambda) = (1 + k_i (lambda c_i - pi_i0) / (1 - pi_i0)) / 2`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distributions::{size_weighted, EmpiricalDistribution, MarginalDistribution, SampleMatrix, SizeWeightedDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Squared error.
    #[serde(rename = "SE")]
    SquaredError,
    /// Absolute deviation.
    #[serde(rename = "AD")]
    AbsoluteDeviation,
    /// Absolute percent error.
    #[serde(rename = "APE")]
    AbsolutePercent,
    /// Zero-adjusted absolute percent error with the default penalty
    /// `w(f) = f / c` at a zero outcome.
    #[serde(rename = "ZAPE")]
    ZeroAdjustedPercent,
    /// Weighted average percent error: total absolute error over the
    /// outcome total.
    #[serde(rename = "WAPE")]
    WeightedAveragePercent,
}

impl LossKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::SquaredError => "SE",
            Self::AbsoluteDeviation => "AD",
            Self::AbsolutePercent => "APE",
            Self::ZeroAdjustedPercent => "ZAPE",
            Self::WeightedAveragePercent => "WAPE",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A loss kind with per-dimension weights `c_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossFamily {
    kind: LossKind,
    weights: Vec<f64>,
}

impl LossFamily {
    pub fn new(kind: LossKind, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("loss needs at least one weight".into()));
        }
        if let Some(c) = weights.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!("loss weights must be positive, got {c}")));
        }
        Ok(Self { kind, weights })
    }

    /// Unit weights in `n` dimensions.
    pub fn uniform(kind: LossKind, n: usize) -> Self {
        Self { kind, weights: vec![1.0; n] }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Realized loss `L(y, f)`.
    pub fn pointwise(&self, y: &[f64], f: &[f64]) -> Result<f64> {
        let n = self.dim();
        if y.len() != n || f.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "loss of dimension {n} evaluated at y of length {} and f of length {}",
                y.len(),
                f.len()
            )));
        }
        let c = &self.weights;
        let mut total = 0.0;
        match self.kind {
            LossKind::SquaredError => {
                for i in 0..n {
                    total += (y[i] - f[i]).powi(2) / c[i];
                }
            }
            LossKind::AbsoluteDeviation => {
                for i in 0..n {
                    total += (y[i] - f[i]).abs() / c[i];
                }
            }
            LossKind::AbsolutePercent => {
                for i in 0..n {
                    if !(y[i] > 0.0) {
                        return Err(Error::PointwiseLoss {
                            dimension: i,
                            reason: format!("percent error needs y > 0, got {}", y[i]),
                        });
                    }
                    total += (y[i] - f[i]).abs() / (y[i] * c[i]);
                }
            }
            LossKind::ZeroAdjustedPercent => {
                for i in 0..n {
                    if y[i] > 0.0 {
                        total += (y[i] - f[i]).abs() / (y[i] * c[i]);
                    } else if y[i] == 0.0 {
                        total += f[i] / c[i];
                    } else {
                        return Err(Error::PointwiseLoss {
                            dimension: i,
                            reason: format!("zero-adjusted percent error needs y >= 0, got {}", y[i]),
                        });
                    }
                }
            }
            LossKind::WeightedAveragePercent => {
                let t: f64 = y.iter().sum();
                if !(t > 0.0) {
                    return Err(Error::NonIntegrable(format!("outcome total {t} is not positive")));
                }
                for i in 0..n {
                    total += (y[i] - f[i]).abs() / c[i];
                }
                total /= t;
            }
        }
        Ok(total)
    }
}

/// Admissible interval for a Lagrange multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl LambdaBounds {
    pub fn unbounded() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY, lower_closed: false, upper_closed: false }
    }

    /// `[lower, upper)`.
    pub fn half_open(lower: f64, upper: f64) -> Self {
        Self { lower, upper, lower_closed: true, upper_closed: false }
    }

    pub fn contains(&self, lambda: f64) -> bool {
        let above = if self.lower_closed { lambda >= self.lower } else { lambda > self.lower };
        let below = if self.upper_closed { lambda <= self.upper } else { lambda < self.upper };
        above && below
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl fmt::Display for LambdaBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lower_closed { '[' } else { '(' },
            self.lower,
            self.upper,
            if self.upper_closed { ']' } else { ')' }
        )
    }
}

#[derive(Debug, Clone)]
enum Component {
    /// SE: shifted mean.
    Mean(f64),
    /// AD: quantile of the margin.
    Quantile(MarginalDistribution),
    /// APE and WAPE: quantile of the size-weighted law.
    Weighted(SizeWeightedDistribution),
    /// ZAPE: zero below the kink, weighted quantile above it.
    ZeroAdjusted { pi0: f64, g: SizeWeightedDistribution },
}

/// Per-component domain of the effective multiplier.
#[derive(Debug, Clone, Copy)]
struct Domain {
    bounds: LambdaBounds,
    /// Minimizer is identically zero below `bounds.lower`, which is then a
    /// kink rather than a hard limit.
    flat_below: bool,
}

impl Component {
    fn domain(&self, c: f64) -> Domain {
        let hard = |b| Domain { bounds: b, flat_below: false };
        match self {
            Component::Mean(_) => hard(LambdaBounds::unbounded()),
            Component::Quantile(_) => hard(LambdaBounds::half_open(-1.0 / c, 1.0 / c)),
            Component::Weighted(g) => {
                let r = 1.0 / (c * g.normalizer());
                hard(LambdaBounds::half_open(-r, r))
            }
            Component::ZeroAdjusted { pi0, g } => {
                let k = g.normalizer();
                Domain {
                    bounds: LambdaBounds::half_open(((k + 1.0) * pi0 - 1.0) / (c * k), ((k - 1.0) * pi0 + 1.0) / (c * k)),
                    flat_below: true,
                }
            }
        }
    }

    /// Quantile level at `lambda` (meaningless for SE).
    fn level(&self, lambda: f64, c: f64) -> f64 {
        match self {
            Component::Mean(_) => f64::NAN,
            Component::Quantile(_) => 0.5 * (1.0 + lambda * c),
            Component::Weighted(g) => 0.5 * (1.0 + lambda * c * g.normalizer()),
            Component::ZeroAdjusted { pi0, g } => 0.5 * (1.0 + g.normalizer() * (lambda * c - pi0) / (1.0 - pi0)),
        }
    }

    fn value(&self, lambda: f64, c: f64) -> f64 {
        let u = self.level(lambda, c);
        match self {
            Component::Mean(m) => m + lambda * c / 2.0,
            Component::Quantile(d) => d.quantile_closed(u),
            Component::Weighted(g) => g.quantile_closed(u),
            Component::ZeroAdjusted { g, .. } => {
                if u <= 0.0 {
                    0.0
                } else {
                    g.quantile_closed(u)
                }
            }
        }
    }

    /// `d f / d lambda` from the density at the minimizer, when one exists.
    fn slope(&self, lambda: f64, c: f64, f: f64) -> Option<f64> {
        let from_density = |num: f64, p: Option<f64>| p.filter(|p| *p > 0.0 && p.is_finite()).map(|p| num / (2.0 * p));
        match self {
            Component::Mean(_) => Some(c / 2.0),
            Component::Quantile(d) => {
                if f == 0.0 && d.point_mass_at_zero() > 0.0 && self.level(lambda, c) <= d.point_mass_at_zero() {
                    return Some(0.0);
                }
                from_density(c, d.pdf(f))
            }
            Component::Weighted(g) => from_density(c * g.normalizer(), g.pdf(f)),
            Component::ZeroAdjusted { pi0, g } => {
                if self.level(lambda, c) <= 0.0 {
                    Some(0.0)
                } else {
                    from_density(c * g.normalizer() / (1.0 - pi0), g.pdf(f))
                }
            }
        }
    }
}

/// The map `lambda -> f(lambda)` of componentwise Lagrangian minimizers for
/// one loss family over fixed margins.
#[derive(Debug, Clone)]
pub struct MinimizerPath {
    kind: LossKind,
    weights: Vec<f64>,
    components: Vec<Component>,
}

impl MinimizerPath {
    /// Build the path for an additive loss over marginal distributions.
    pub fn for_margins(loss: &LossFamily, margins: &[MarginalDistribution]) -> Result<Self> {
        if margins.len() != loss.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} loss weights for {} margins",
                loss.dim(),
                margins.len()
            )));
        }
        let components = margins
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let with_dim = |e: Error| match e {
                    Error::NonIntegrable(msg) => Error::NonIntegrable(format!("dimension {i}: {msg}")),
                    Error::UndefinedRisk(msg) => Error::UndefinedRisk(format!("dimension {i}: {msg}")),
                    other => other,
                };
                component_for(loss.kind(), d).map_err(with_dim)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: loss.kind(), weights: loss.weights().to_vec(), components })
    }

    /// WAPE path from a joint sample matrix: each column is reweighted by
    /// `1 / (1'y)` and the common normalizer is `1 / E[1/(1'y)]`.
    pub fn wape(samples: &SampleMatrix, weights: &[f64]) -> Result<Self> {
        let n = samples.ncols();
        if weights.len() != n {
            return Err(Error::DimensionMismatch(format!("{} weights for {n} columns", weights.len())));
        }
        LossFamily::new(LossKind::WeightedAveragePercent, weights.to_vec())?;
        let totals = samples.totals();
        if let Some((j, t)) = totals.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
            return Err(Error::NonIntegrable(format!("sample {j} has total {t}; WAPE needs positive totals")));
        }
        let base_w: Vec<f64> = (0..samples.nrows()).map(|j| samples.weight(j)).collect();
        let wsum: f64 = base_w.iter().sum();
        let inv_mean: f64 = base_w.iter().zip(&totals).map(|(w, t)| w / (wsum * t)).sum();
        let k = 1.0 / inv_mean;
        let g_w: Vec<f64> = base_w.iter().zip(&totals).map(|(w, t)| w / t).collect();
        let components = (0..n)
            .map(|i| {
                let col = samples.column(i);
                let base = MarginalDistribution::empirical(col.clone(), Some(base_w.clone()))?;
                let law = MarginalDistribution::Empirical(EmpiricalDistribution::new(col, Some(g_w.clone()))?);
                Ok(Component::Weighted(SizeWeightedDistribution::from_parts(base, law, k)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: LossKind::WeightedAveragePercent, weights: weights.to_vec(), components })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Unconstrained SE optima, when this is an SE path.
    pub fn means(&self) -> Option<Vec<f64>> {
        self.components
            .iter()
            .map(|c| match c {
                Component::Mean(m) => Some(*m),
                _ => None,
            })
            .collect()
    }

    /// Normalizers `k_i` of the size-weighted laws (percent-error losses).
    pub fn normalizers(&self) -> Option<Vec<f64>> {
        self.components
            .iter()
            .map(|c| match c {
                Component::Weighted(g) | Component::ZeroAdjusted { g, .. } => Some(g.normalizer()),
                _ => None,
            })
            .collect()
    }

    fn domain(&self, i: usize) -> Domain {
        self.components[i].domain(self.weights[i])
    }

    /// Admissible interval for the effective multiplier of component `i`.
    pub fn component_bounds(&self, i: usize) -> LambdaBounds {
        let d = self.domain(i);
        if d.flat_below {
            LambdaBounds { lower: f64::NEG_INFINITY, lower_closed: false, ..d.bounds }
        } else {
            d.bounds
        }
    }

    /// Admissible interval for a common multiplier on a total constraint.
    ///
    /// Hard limits intersect. Components that go flat at zero below their
    /// kink contribute their kink as a lower limit only through the
    /// smallest kink, below which every component is zero.
    pub fn bounds(&self) -> LambdaBounds {
        let mut upper = f64::INFINITY;
        let mut hard_lower = f64::NEG_INFINITY;
        let mut lowest_kink = f64::INFINITY;
        let mut any_flat = false;
        for i in 0..self.dim() {
            let d = self.domain(i);
            upper = upper.min(d.bounds.upper);
            if d.flat_below {
                any_flat = true;
                lowest_kink = lowest_kink.min(d.bounds.lower);
            } else {
                hard_lower = hard_lower.max(d.bounds.lower);
            }
        }
        let lower = if any_flat { hard_lower.max(lowest_kink) } else { hard_lower };
        LambdaBounds {
            lower,
            upper,
            lower_closed: lower.is_finite(),
            upper_closed: false,
        }
    }

    /// Multipliers below which some component is identically zero, sorted.
    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = (0..self.dim())
            .map(|i| self.domain(i))
            .filter(|d| d.flat_below)
            .map(|d| d.bounds.lower)
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Minimizer of component `i` at effective multiplier `lambda`.
    pub fn component_value(&self, i: usize, lambda: f64) -> Result<f64> {
        let b = self.component_bounds(i);
        if !b.contains(lambda) {
            return Err(Error::InfeasibleMultiplier { lambda, bounds: format!("{b} (dimension {i})") });
        }
        Ok(self.components[i].value(lambda, self.weights[i]))
    }

    /// Limit of component `i` as its multiplier approaches `lambda` from
    /// inside the domain (used at open bounds).
    pub fn component_limit(&self, i: usize, lambda: f64) -> f64 {
        let b = self.component_bounds(i);
        let l = lambda.clamp(b.lower, b.upper);
        if l == b.upper && b.upper.is_finite() {
            return match &self.components[i] {
                Component::Quantile(d) => d.quantile_closed(1.0),
                Component::Weighted(g) | Component::ZeroAdjusted { g, .. } => g.quantile_closed(1.0),
                Component::Mean(_) => f64::INFINITY,
            };
        }
        if l == f64::NEG_INFINITY {
            return match &self.components[i] {
                Component::Mean(_) => f64::NEG_INFINITY,
                _ => 0.0,
            };
        }
        self.components[i].value(l, self.weights[i])
    }

    /// `f(lambda)` for a common multiplier.
    pub fn minimizer(&self, lambda: f64) -> Result<Vec<f64>> {
        let b = self.bounds();
        if !b.contains(lambda) {
            return Err(Error::InfeasibleMultiplier { lambda, bounds: b.to_string() });
        }
        Ok((0..self.dim()).map(|i| self.components[i].value(lambda, self.weights[i])).collect())
    }

    /// `f_i(lambda_i)` for per-component effective multipliers.
    pub fn minimizer_at(&self, effective: &[f64]) -> Result<Vec<f64>> {
        effective.iter().enumerate().map(|(i, &l)| self.component_value(i, l)).collect()
    }

    /// Analytic `d f_i / d lambda` at effective multiplier `lambda`;
    /// `None` for discrete laws.
    pub fn component_slope(&self, i: usize, lambda: f64) -> Option<f64> {
        let c = self.weights[i];
        let comp = &self.components[i];
        comp.slope(lambda, c, comp.value(lambda, c))
    }

    /// Slope with a central-difference fallback for discrete laws. The
    /// step is `1e-4` of the multiplier range spanning the interquartile
    /// levels of the component.
    pub fn component_slope_or_secant(&self, i: usize, lambda: f64) -> f64 {
        if let Some(s) = self.component_slope(i, lambda) {
            return s;
        }
        let d = self.domain(i).bounds;
        let h = if d.is_bounded() { 1e-4 * d.width() / 2.0 } else { 1e-4 };
        let lo_bound = if self.domain(i).flat_below { f64::NEG_INFINITY } else { d.lower };
        let a = (lambda - h).max(lo_bound);
        let b = (lambda + h).min(d.upper - h * 1e-3);
        if b <= a {
            return 0.0;
        }
        let c = self.weights[i];
        let comp = &self.components[i];
        (comp.value(b, c) - comp.value(a, c)) / (b - a)
    }

    /// `d (1'f) / d lambda` for a common multiplier.
    pub fn total_slope(&self, lambda: f64) -> f64 {
        (0..self.dim()).map(|i| self.component_slope_or_secant(i, lambda)).sum()
    }

    /// Whether every component has an analytic slope at `lambda`.
    pub fn has_analytic_slope(&self, lambda: f64) -> bool {
        (0..self.dim()).all(|i| self.component_slope(i, lambda).is_some())
    }
}

fn component_for(kind: LossKind, d: &MarginalDistribution) -> Result<Component> {
    match kind {
        LossKind::SquaredError => {
            if !d.finite_moments() {
                return Err(Error::UndefinedRisk("squared error needs finite second moments".into()));
            }
            Ok(Component::Mean(d.mean()?))
        }
        LossKind::AbsoluteDeviation => Ok(Component::Quantile(d.clone())),
        LossKind::AbsolutePercent => Ok(Component::Weighted(size_weighted(d)?)),
        LossKind::ZeroAdjustedPercent => {
            let (pi0, positive) = split_zero(d)?;
            Ok(Component::ZeroAdjusted { pi0, g: size_weighted(&positive)? })
        }
        LossKind::WeightedAveragePercent => Err(Error::Unsupported(
            "WAPE couples dimensions through the outcome total; build it from a joint sample".into(),
        )),
    }
}

/// Split a non-negative law into its zero atom and renormalized positive
/// part.
pub fn split_zero(d: &MarginalDistribution) -> Result<(f64, MarginalDistribution)> {
    match d {
        MarginalDistribution::ZeroInflated { pi0, positive } => Ok((*pi0, (**positive).clone())),
        MarginalDistribution::Empirical(e) => {
            if let Some(bad) = e.values().iter().find(|v| **v < 0.0) {
                return Err(Error::InvalidParameter(format!("negative outcome {bad} under a percent loss")));
            }
            let pi0 = e.atom(0.0);
            if pi0 >= 1.0 {
                return Err(Error::InvalidParameter("all mass at zero".into()));
            }
            let (vals, ws): (Vec<f64>, Vec<f64>) =
                e.values().iter().zip(e.weights()).filter(|(v, _)| **v > 0.0).map(|(v, w)| (*v, *w)).unzip();
            Ok((pi0, MarginalDistribution::empirical(vals, Some(ws))?))
        }
        _ => {
            if d.support().0 < 0.0 {
                return Err(Error::InvalidParameter("zero-adjusted percent error needs y >= 0".into()));
            }
            Ok((0.0, d.clone()))
        }
    }
}

/// `f(lambda)` for an additive loss over `margins`.
pub fn componentwise_minimizer(loss: &LossFamily, margins: &[MarginalDistribution], lambda: f64) -> Result<Vec<f64>> {
    MinimizerPath::for_margins(loss, margins)?.minimizer(lambda)
}

/// Admissible multiplier interval for `loss` over `margins`.
pub fn lambda_bounds(loss: &LossFamily, margins: &[MarginalDistribution]) -> Result<LambdaBounds> {
    Ok(MinimizerPath::for_margins(loss, margins)?.bounds())
}

/// WAPE minimizer at `lambda` from joint samples.
pub fn wape_minimizer(samples: &SampleMatrix, lambda: f64, weights: &[f64]) -> Result<Vec<f64>> {
    MinimizerPath::wape(samples, weights)?.minimizer(lambda)
}

/// Expected loss `R_i(f) = E[L_i(y_i, f)]` for one component with weight
/// `c`.
///
/// Closed forms are used throughout (absolute-error risks go through the
/// partial expectation `E[Y 1{Y <= f}]`). When no closed form applies and
/// `mc_samples` are supplied, their average loss is returned instead.
pub fn per_component_risk(
    kind: LossKind,
    c: f64,
    margin: &MarginalDistribution,
    f: f64,
    mc_samples: Option<&[f64]>,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("loss weight must be positive, got {c}")));
    }
    if !margin.finite_moments() {
        return Err(Error::UndefinedRisk(
            "predictive law has no finite moments, so expected loss does not exist".into(),
        ));
    }
    match analytic_risk(kind, c, margin, f) {
        Err(Error::Unsupported(msg)) => match mc_samples {
            Some(s) => Ok(monte_carlo_component_risk(kind, c, s, f)?.0),
            None => Err(Error::Unsupported(msg)),
        },
        other => other,
    }
}

fn analytic_risk(kind: LossKind, c: f64, d: &MarginalDistribution, f: f64) -> Result<f64> {
    match kind {
        LossKind::SquaredError => {
            let m = d.mean()?;
            Ok(((m - f).powi(2) + d.variance()?) / c)
        }
        LossKind::AbsoluteDeviation => Ok(mean_absolute_deviation(d, f)? / c),
        LossKind::AbsolutePercent => {
            let g = size_weighted(d)?;
            Ok(g.mean_absolute_deviation(f) / (g.normalizer() * c))
        }
        LossKind::ZeroAdjustedPercent => {
            let (pi0, positive) = split_zero(d)?;
            let g = size_weighted(&positive)?;
            Ok((pi0 * f + (1.0 - pi0) * g.mean_absolute_deviation(f) / g.normalizer()) / c)
        }
        LossKind::WeightedAveragePercent => Err(Error::Unsupported("WAPE risk depends on the joint law".into())),
    }
}

/// `E|Y - f| = f (2 P(f) - 1) + E[Y] - 2 E[Y 1{Y <= f}]`.
pub fn mean_absolute_deviation(d: &MarginalDistribution, f: f64) -> Result<f64> {
    Ok(f * (2.0 * d.cdf(f) - 1.0) + d.mean()? - 2.0 * d.partial_expectation(f)?)
}

/// Sample-average risk for one component and its standard error.
pub fn monte_carlo_component_risk(kind: LossKind, c: f64, samples: &[f64], f: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no Monte Carlo samples".into()));
    }
    let loss = LossFamily::new(kind, vec![c])?;
    let vals = samples.iter().map(|y| loss.pointwise(&[*y], &[f])).collect::<Result<Vec<_>>>()?;
    Ok(mean_and_se(&vals))
}

pub(crate) fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bivariate() -> Vec<MarginalDistribution> {
        vec![
            MarginalDistribution::lognormal(7f64.ln(), 0.04).unwrap(),
            MarginalDistribution::lognormal(14f64.ln(), 0.09).unwrap(),
        ]
    }

    #[test]
    fn ad_at_zero_gives_medians() {
        let f = componentwise_minimizer(&LossFamily::uniform(LossKind::AbsoluteDeviation, 2), &bivariate(), 0.0).unwrap();
        assert_relative_eq!(f[0], 7.0, max_relative = 1e-14);
        assert_relative_eq!(f[1], 14.0, max_relative = 1e-14);
    }

    #[test]
    fn ape_at_zero_gives_modes() {
        let f = componentwise_minimizer(&LossFamily::uniform(LossKind::AbsolutePercent, 2), &bivariate(), 0.0).unwrap();
        assert_relative_eq!(f[0], (7f64.ln() - 0.04).exp(), max_relative = 1e-14);
        assert_relative_eq!(f[1], (14f64.ln() - 0.09).exp(), max_relative = 1e-14);
        assert!((f[0] - 6.73).abs() < 0.005 && (f[1] - 12.80).abs() < 0.005);
    }

    #[test]
    fn se_at_zero_gives_means() {
        let ms = bivariate();
        let f = componentwise_minimizer(&LossFamily::uniform(LossKind::SquaredError, 2), &ms, 0.0).unwrap();
        for (fi, d) in f.iter().zip(&ms) {
            assert_relative_eq!(*fi, d.mean().unwrap());
        }
    }

    #[test]
    fn bounds_examples() {
        let ms = bivariate();
        let ad = lambda_bounds(&LossFamily::uniform(LossKind::AbsoluteDeviation, 2), &ms).unwrap();
        assert_eq!(ad, LambdaBounds::half_open(-1.0, 1.0));
        let ad2 = lambda_bounds(&LossFamily::new(LossKind::AbsoluteDeviation, vec![1.0, 2.0]).unwrap(), &ms).unwrap();
        assert_eq!(ad2, LambdaBounds::half_open(-0.5, 0.5));
        let se = lambda_bounds(&LossFamily::uniform(LossKind::SquaredError, 2), &ms).unwrap();
        assert!(!se.is_bounded() && se.contains(1e300));
    }

    #[test]
    fn zape_bounds_with_no_zero_mass() {
        // equal normalizers k for every component: exp(m - v/2) = k
        let k: f64 = 5.0;
        let v = 0.1;
        let m = k.ln() + v / 2.0;
        let ms = vec![MarginalDistribution::lognormal(m, v).unwrap(); 3];
        let b = lambda_bounds(&LossFamily::uniform(LossKind::ZeroAdjustedPercent, 3), &ms).unwrap();
        assert_relative_eq!(b.lower, -1.0 / k, max_relative = 1e-14);
        assert_relative_eq!(b.upper, 1.0 / k, max_relative = 1e-14);
        assert!(b.lower_closed && !b.upper_closed);
    }

    #[test]
    fn open_upper_bound_is_an_error() {
        let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
        let e = componentwise_minimizer(&loss, &bivariate(), 1.0).unwrap_err();
        assert!(matches!(e, Error::InfeasibleMultiplier { .. }));
        assert!(componentwise_minimizer(&loss, &bivariate(), -1.0).is_ok());
        assert!(componentwise_minimizer(&loss, &bivariate(), -1.0000001).is_err());
    }

    #[test]
    fn se_on_logt_is_undefined() {
        let ms = vec![MarginalDistribution::log_t(5.0, 1.0, 0.1).unwrap()];
        let e = componentwise_minimizer(&LossFamily::uniform(LossKind::SquaredError, 1), &ms, 0.0).unwrap_err();
        assert!(matches!(e, Error::UndefinedRisk(_)));
    }

    #[test]
    fn zape_zero_region_is_exact() {
        let pos = MarginalDistribution::lognormal(1.0, 0.2).unwrap();
        let d = MarginalDistribution::zero_inflated(0.6, pos).unwrap();
        let path = MinimizerPath::for_margins(&LossFamily::uniform(LossKind::ZeroAdjustedPercent, 1), &[d]).unwrap();
        let kink = path.domain(0).bounds.lower;
        assert_eq!(path.component_value(0, kink).unwrap(), 0.0);
        assert_eq!(path.component_value(0, kink - 0.5).unwrap(), 0.0);
        assert!(path.component_value(0, kink + 1e-9).unwrap() > 0.0);
        assert_eq!(path.component_slope(0, kink - 0.1), Some(0.0));
    }

    #[test]
    fn wape_hand_example() {
        // rows (y1, y2) with totals 2, 4, 8 -> weights 1/2, 1/4, 1/8
        let s = SampleMatrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 1.0], vec![2.0, 6.0]]).unwrap();
        let f = wape_minimizer(&s, 0.0, &[1.0, 1.0]).unwrap();
        // normalized weights 4/7, 2/7, 1/7 on rows 0, 1, 2
        // y1 sorted: 1 (4/7), 2 (1/7), 3 (2/7): cumulative 4/7 >= 1/2 -> 1
        // y2 sorted: 1 (4/7), 1 (2/7), 6 (1/7): -> 1
        assert_eq!(f, vec![1.0, 1.0]);
        let k = 1.0 / ((0.5 + 0.25 + 0.125) / 3.0);
        let near_top = (1.0 / k) * (1.0 - 1e-9);
        assert_eq!(wape_minimizer(&s, near_top, &[1.0, 1.0]).unwrap(), vec![3.0, 6.0]);
    }

    #[test]
    fn wape_zero_total_rejected() {
        let s = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(wape_minimizer(&s, 0.0, &[1.0, 1.0]), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn pointwise_errors_name_dimension() {
        let loss = LossFamily::uniform(LossKind::AbsolutePercent, 3);
        match loss.pointwise(&[1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]) {
            Err(Error::PointwiseLoss { dimension, .. }) => assert_eq!(dimension, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn risk_examples() {
        let n01 = MarginalDistribution::normal(0.0, 1.0).unwrap();
        assert_relative_eq!(per_component_risk(LossKind::SquaredError, 1.0, &n01, 0.0, None).unwrap(), 1.0);
        let e1 = MarginalDistribution::exponential_with_mean(1.0).unwrap();
        let f = 2f64.ln();
        let r = per_component_risk(LossKind::AbsoluteDeviation, 1.0, &e1, f, None).unwrap();
        assert_relative_eq!(r, 2.0 * (-f).exp() + f - 1.0, max_relative = 1e-14);
        assert_relative_eq!(r, 2f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn logt_risk_undefined_for_every_family() {
        let d = MarginalDistribution::log_t(3.0, 1.0, 0.1).unwrap();
        for k in [LossKind::SquaredError, LossKind::AbsoluteDeviation, LossKind::AbsolutePercent, LossKind::ZeroAdjustedPercent] {
            assert!(matches!(per_component_risk(k, 1.0, &d, 2.0, Some(&[1.0, 2.0])), Err(Error::UndefinedRisk(_))));
        }
    }
}
