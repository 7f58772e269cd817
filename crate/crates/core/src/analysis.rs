//! The predictive distribution of realized loss and constraint
//! sensitivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{JointForecast, MarginalDistribution};
use crate::error::{Error, Result};
use crate::losses::{mean_and_se, LossFamily, MinimizerPath};
use crate::solver::{solve_path, SolveStatus, SolverOptions};

/// Left-continuous empirical quantile of sorted data: entry `ceil(uN) - 1`.
pub fn sorted_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let i = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[i]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    /// Monte Carlo standard error of the mean.
    pub std_error: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleSummary {
    /// Summary of `values`, which is sorted in place.
    pub fn from_values(values: &mut [f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("no samples to summarize".into()));
        }
        let (mean, std_error) = mean_and_se(values);
        values.sort_unstable_by(f64::total_cmp);
        let q = |u| sorted_quantile(values, u);
        Ok(Self {
            mean,
            std_error,
            median: q(0.5),
            q05: q(0.05),
            q25: q(0.25),
            q75: q(0.75),
            q95: q(0.95),
            min: values[0],
            max: values[values.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    /// `q95 - q05`.
    pub fn spread(&self) -> f64 {
        self.q95 - self.q05
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossDistributionSummary {
    /// Loss divided by the dimension.
    pub per_dimension_scale: bool,
    pub samples: usize,
    pub loss: SampleSummary,
    /// Summary of the outcome total `1'y`.
    pub total: SampleSummary,
    /// `(1'y, L(y, f))` per draw, in draw order.
    #[serde(skip)]
    pub pairs: Vec<(f64, f64)>,
}

impl LossDistributionSummary {
    /// Fraction of draws with loss strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        self.pairs.iter().filter(|(_, l)| *l < x).count() as f64 / self.pairs.len() as f64
    }
}

/// Monte Carlo distribution of `(1'y, L(y, f))` under `joint`.
pub fn loss_distribution(
    joint: &JointForecast,
    loss: &LossFamily,
    f: &[f64],
    samples: usize,
    seed: u64,
    per_dimension: bool,
) -> Result<LossDistributionSummary> {
    let n = joint.dim();
    if loss.dim() != n || f.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "joint of dimension {n}, loss of dimension {}, forecast of length {}",
            loss.dim(),
            f.len()
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let scale = if per_dimension { 1.0 / n as f64 } else { 1.0 };
    let blocks = joint.map_blocks(samples, seed, |block| {
        block
            .chunks_exact(n)
            .map(|y| Ok((y.iter().sum::<f64>(), loss.pointwise(y, f)? * scale)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut pairs = Vec::with_capacity(samples);
    for b in blocks {
        pairs.extend(b?);
    }
    let mut losses: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut totals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    Ok(LossDistributionSummary {
        per_dimension_scale: per_dimension,
        samples,
        loss: SampleSummary::from_values(&mut losses)?,
        total: SampleSummary::from_values(&mut totals)?,
        pairs,
    })
}

/// Loss distributions at the same `f` under `joint` and under the same
/// margins with dependence removed. Both runs share their standard normal
/// draws.
pub fn dependence_contrast(
    joint: &JointForecast,
    loss: &LossFamily,
    f: &[f64],
    samples: usize,
    seed: u64,
    per_dimension: bool,
) -> Result<(LossDistributionSummary, LossDistributionSummary)> {
    let independent = joint.without_dependence()?;
    Ok((
        loss_distribution(joint, loss, f, samples, seed, per_dimension)?,
        loss_distribution(&independent, loss, f, samples, seed, per_dimension)?,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub nominal_total: f64,
    pub nominal_lambda: f64,
    pub nominal_f: Vec<f64>,
    /// `d(1'f)/d lambda` at the nominal solution.
    pub q_dot: f64,
    pub epsilon_grid: Vec<f64>,
    /// `F (1 + epsilon)` per grid point.
    pub totals: Vec<f64>,
    pub status: Vec<SolveStatus>,
    pub lambda_exact: Vec<f64>,
    pub lambda_approx: Vec<f64>,
    pub exact_f: Vec<Vec<f64>>,
    /// `f` at the first-order multiplier `lambda* + epsilon F / q_dot`;
    /// NaN where that multiplier leaves the admissible interval.
    pub approx_f: Vec<Vec<f64>>,
    /// Componentwise minimum of converged exact solutions.
    pub envelope_min: Vec<f64>,
    pub envelope_max: Vec<f64>,
}

/// Re-solve at `F (1 + epsilon)` over `epsilon_grid` and compare with the
/// first-order multiplier update.
pub fn sensitivity(
    loss: &LossFamily,
    margins: &[MarginalDistribution],
    nominal_total: f64,
    epsilon_grid: &[f64],
    opts: &SolverOptions,
) -> Result<SensitivityResult> {
    let path = MinimizerPath::for_margins(loss, margins)?;
    let nominal = solve_path(&path, nominal_total, opts)?;
    if !nominal.is_converged() {
        return Err(Error::InvalidParameter(format!(
            "nominal total {nominal_total} is not solvable: {}",
            nominal.message.unwrap_or_default()
        )));
    }
    let lambda_star = nominal.lambda();
    let q_dot = nominal.q_dot.unwrap_or(f64::NAN);
    let bounds = path.bounds();
    let n = path.dim();

    let points = epsilon_grid
        .par_iter()
        .map(|&eps| {
            let total = nominal_total * (1.0 + eps);
            let exact = solve_path(&path, total, opts)?;
            let approx_lambda = lambda_star + eps * nominal_total / q_dot;
            let approx_f = if bounds.contains(approx_lambda) {
                path.minimizer(approx_lambda)?
            } else {
                vec![f64::NAN; n]
            };
            Ok((total, exact, approx_lambda, approx_f))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut envelope_min = vec![f64::INFINITY; n];
    let mut envelope_max = vec![f64::NEG_INFINITY; n];
    let mut out = SensitivityResult {
        nominal_total,
        nominal_lambda: lambda_star,
        nominal_f: nominal.f_star,
        q_dot,
        epsilon_grid: epsilon_grid.to_vec(),
        totals: Vec::new(),
        status: Vec::new(),
        lambda_exact: Vec::new(),
        lambda_approx: Vec::new(),
        exact_f: Vec::new(),
        approx_f: Vec::new(),
        envelope_min: Vec::new(),
        envelope_max: Vec::new(),
    };
    for (total, exact, approx_lambda, approx_f) in points {
        if exact.is_converged() {
            for i in 0..n {
                envelope_min[i] = envelope_min[i].min(exact.f_star[i]);
                envelope_max[i] = envelope_max[i].max(exact.f_star[i]);
            }
        }
        out.totals.push(total);
        out.status.push(exact.status);
        out.lambda_exact.push(exact.lambda());
        out.lambda_approx.push(approx_lambda);
        out.exact_f.push(exact.f_star);
        out.approx_f.push(approx_f);
    }
    out.envelope_min = envelope_min;
    out.envelope_max = envelope_max;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SampleMatrix;
    use crate::losses::LossKind;

    #[test]
    fn quantile_convention() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&v, 0.5), 2.0);
        assert_eq!(sorted_quantile(&v, 0.51), 3.0);
        assert_eq!(sorted_quantile(&v, 0.0), 1.0);
        assert_eq!(sorted_quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn perfect_forecast_has_zero_loss() {
        let s = SampleMatrix::from_rows(&[vec![2.0, 3.0]]).unwrap();
        let j = JointForecast::EmpiricalMatrix(s);
        let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
        let r = loss_distribution(&j, &loss, &[2.0, 3.0], 1000, 1, true).unwrap();
        for x in [r.loss.mean, r.loss.median, r.loss.q05, r.loss.q95, r.loss.min, r.loss.max] {
            assert_eq!(x, 0.0);
        }
        assert_eq!(r.total.median, 5.0);
    }

    #[test]
    fn ape_zero_draw_names_dimension() {
        let s = SampleMatrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let loss = LossFamily::uniform(LossKind::AbsolutePercent, 2);
        match loss_distribution(&JointForecast::EmpiricalMatrix(s), &loss, &[1.0, 1.0], 10, 0, false) {
            Err(Error::PointwiseLoss { dimension, .. }) => assert_eq!(dimension, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empirical_contrast_unsupported() {
        let s = SampleMatrix::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
        assert!(matches!(
            dependence_contrast(&JointForecast::EmpiricalMatrix(s), &loss, &[1.0, 1.0], 10, 0, false),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn se_shortcut_is_exact() {
        let ms = vec![
            MarginalDistribution::lognormal(7f64.ln(), 0.04).unwrap(),
            MarginalDistribution::lognormal(14f64.ln(), 0.09).unwrap(),
        ];
        let loss = LossFamily::uniform(LossKind::SquaredError, 2);
        let r = sensitivity(&loss, &ms, 14.7, &[-0.1, 0.0, 0.05, 0.1], &SolverOptions::default()).unwrap();
        for (a, b) in r.exact_f.iter().flatten().zip(r.approx_f.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
