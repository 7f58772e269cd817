//! Constrained optimal point forecasts.
//!
//! The total constraint `1'f = F` reduces to the monotone scalar equation
//! `q(lambda) = 1'f(lambda) - F = 0`. Newton-Raphson runs in a
//! reparametrized variable `z` with `lambda = lb + (ub - lb) Phi(z)` when
//! the multiplier domain is bounded, on the residual `ln(F^t / F)` where
//! both are positive. A sign bracket on `z` catches steps that leave it and
//! falls back to bisection, so iterates never leave the domain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{norm_cdf, norm_quantile, phi, MarginalDistribution};
use crate::error::{Error, Result};
use crate::losses::{LambdaBounds, LossFamily, LossKind, MinimizerPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative tolerance on the constraint residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting multiplier; defaults to 0, or the domain midpoint when 0 is
    /// not admissible.
    pub lambda0: Option<f64>,
    /// Tolerance on the predicted Newton step in `lambda`.
    pub lambda_tol: f64,
    /// Run Newton for squared error instead of the closed form.
    pub force_newton: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, lambda0: None, lambda_tol: 1e-10, force_newton: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    HitLowerBound,
    HitUpperBound,
    MaxIterations,
    InfeasibleConstraint,
}

/// One evaluation of the minimizer path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub lambda: Vec<f64>,
    /// `1'f` (total) or `A'f` (linear).
    pub value: Vec<f64>,
    /// Max-norm constraint residual.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub f_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub status: SolveStatus,
    /// Newton updates taken before the convergence test passed.
    pub newton_steps: usize,
    pub iterations: Vec<Iterate>,
    /// `d(1'f)/d lambda` at the solution (total constraint only).
    pub q_dot: Option<f64>,
    /// Limits of `1'f(lambda)` over the multiplier domain (total constraint
    /// only); infinite limits serialize as null.
    pub attainable: Option<(f64, f64)>,
    pub target: Vec<f64>,
    pub message: Option<String>,
}

impl SolveResult {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Scalar multiplier (first entry for linear constraints).
    pub fn lambda(&self) -> f64 {
        self.lambda_star[0]
    }

    pub fn total(&self) -> f64 {
        self.f_star.iter().sum()
    }
}

/// The constraint on `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    Total(f64),
    /// `A'f = F` with `A` of shape `n x k` and full column rank.
    Linear { a: DMatrix<f64>, totals: Vec<f64> },
}

impl ConstraintSpec {
    pub fn linear(a: DMatrix<f64>, totals: Vec<f64>) -> Result<Self> {
        check_linear(&a, &totals, a.nrows())?;
        Ok(Self::Linear { a, totals })
    }
}

/// Solve `min R(f)` subject to `constraint`.
pub fn solve(
    loss: &LossFamily,
    margins: &[MarginalDistribution],
    constraint: &ConstraintSpec,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    match constraint {
        ConstraintSpec::Total(total) => solve_total(loss, margins, *total, opts),
        ConstraintSpec::Linear { a, totals } => solve_linear(loss, margins, a, totals, opts),
    }
}

/// Optimal `f` under `1'f = total`.
pub fn solve_total(
    loss: &LossFamily,
    margins: &[MarginalDistribution],
    total: f64,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    solve_path(&MinimizerPath::for_margins(loss, margins)?, total, opts)
}

/// Limits of `1'f(lambda)` as `lambda` runs over its domain.
pub fn attainable_range(loss: &LossFamily, margins: &[MarginalDistribution]) -> Result<(f64, f64)> {
    Ok(path_attainable(&MinimizerPath::for_margins(loss, margins)?))
}

pub(crate) fn path_attainable(path: &MinimizerPath) -> (f64, f64) {
    let b = path.bounds();
    if path.kind() == LossKind::SquaredError {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let lo = (0..path.dim()).map(|i| path.component_limit(i, b.lower)).sum();
    let hi = (0..path.dim()).map(|i| path.component_limit(i, b.upper)).sum();
    (lo, hi)
}

fn check_options(opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) || !(opts.lambda_tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(format!("bad solver options {opts:?}")));
    }
    Ok(())
}

/// Largest Newton move in the probit variable; the chart covers the
/// multiplier domain to double precision within about 8 units of zero.
const MAX_Z_STEP: f64 = 4.0;

/// Maps between the Newton variable `z` and `lambda`.
#[derive(Debug, Clone, Copy)]
enum Chart {
    Identity,
    Probit { lower: f64, upper: f64 },
}

impl Chart {
    fn lambda(&self, z: f64) -> f64 {
        match *self {
            Chart::Identity => z,
            Chart::Probit { lower, upper } => {
                let w = upper - lower;
                if z <= 0.0 {
                    lower + w * norm_cdf(z)
                } else {
                    upper - w * norm_cdf(-z)
                }
            }
        }
    }

    fn dlambda_dz(&self, z: f64) -> f64 {
        match *self {
            Chart::Identity => 1.0,
            Chart::Probit { lower, upper } => (upper - lower) * phi(z),
        }
    }

    fn z(&self, lambda: f64) -> f64 {
        match *self {
            Chart::Identity => lambda,
            Chart::Probit { lower, upper } => {
                let w = upper - lower;
                let mid = lower + w / 2.0;
                if lambda <= mid {
                    norm_quantile(((lambda - lower) / w).max(f64::MIN_POSITIVE))
                } else {
                    -norm_quantile(((upper - lambda) / w).max(f64::MIN_POSITIVE))
                }
            }
        }
    }
}

struct Point {
    z: f64,
    lambda: f64,
    f: Vec<f64>,
    total: f64,
}

fn evaluate(path: &MinimizerPath, bounds: &LambdaBounds, chart: &Chart, z: f64) -> Point {
    let lambda = chart.lambda(z);
    let f: Vec<f64> = if bounds.contains(lambda) {
        path.minimizer(lambda).expect("lambda inside bounds")
    } else {
        (0..path.dim()).map(|i| path.component_limit(i, lambda)).collect()
    };
    let total = f.iter().sum();
    Point { z, lambda, f, total }
}

/// Scaled residual, increasing in `lambda`.
fn residual(total: f64, target: f64) -> f64 {
    if total > 0.0 && target > 0.0 {
        (total / target).ln()
    } else {
        (total - target) / target.abs().max(1.0)
    }
}

fn residual_slope(total: f64, target: f64, dtotal_dz: f64) -> f64 {
    if total > 0.0 && target > 0.0 {
        dtotal_dz / total
    } else {
        dtotal_dz / target.abs().max(1.0)
    }
}

/// Optimal `f` under `1'f = total` for a prebuilt minimizer path.
pub fn solve_path(path: &MinimizerPath, total: f64, opts: &SolverOptions) -> Result<SolveResult> {
    check_options(opts)?;
    if !total.is_finite() {
        return Err(Error::InvalidParameter(format!("constraint total {total} is not finite")));
    }
    if path.kind() == LossKind::SquaredError && !opts.force_newton {
        return Ok(squared_error_closed_form(path, total));
    }
    let bounds = path.bounds();
    let attainable = path_attainable(path);
    let scale = total.abs().max(1.0);

    let infeasible = |lambda: f64, side: &str| {
        let f: Vec<f64> = (0..path.dim()).map(|i| path.component_limit(i, lambda)).collect();
        SolveResult {
            iterations: vec![Iterate { lambda: vec![lambda], value: vec![f.iter().sum()], residual: f64::NAN }],
            f_star: f,
            lambda_star: vec![lambda],
            status: SolveStatus::InfeasibleConstraint,
            newton_steps: 0,
            q_dot: None,
            attainable: Some(attainable),
            target: vec![total],
            message: Some(format!(
                "total {total} is {side} the attainable range ({}, {}) of multipliers in {bounds}",
                attainable.0, attainable.1
            )),
        }
    };
    if total < attainable.0 && (attainable.0 - total) > opts.tol * scale {
        return Ok(infeasible(bounds.lower, "below"));
    }
    if total > attainable.1 && (total - attainable.1) > opts.tol * scale {
        return Ok(infeasible(bounds.upper, "above"));
    }

    let mut iterations = Vec::new();
    let record = |iterations: &mut Vec<Iterate>, p: &Point| {
        iterations.push(Iterate { lambda: vec![p.lambda], value: vec![p.total], residual: (p.total - total).abs() });
    };

    // Between consecutive kinks the set of active components is fixed and
    // the path is smooth; find the piece that contains the root.
    let mut segment = (bounds.lower, bounds.upper);
    for kink in path.kinks().into_iter().filter(|k| *k > bounds.lower && *k < bounds.upper) {
        let at = evaluate(path, &bounds, &Chart::Identity, kink);
        record(&mut iterations, &at);
        if (at.total - total).abs() <= opts.tol * scale {
            return Ok(SolveResult {
                q_dot: Some(path.total_slope(kink)),
                f_star: at.f,
                lambda_star: vec![kink],
                status: SolveStatus::Converged,
                newton_steps: 0,
                iterations,
                attainable: Some(attainable),
                target: vec![total],
                message: None,
            });
        }
        if at.total > total {
            segment.1 = kink;
            break;
        }
        segment.0 = kink;
    }
    let chart = if segment.0.is_finite() && segment.1.is_finite() {
        Chart::Probit { lower: segment.0, upper: segment.1 }
    } else {
        Chart::Identity
    };
    let in_segment = |l: f64| bounds.contains(l) && l >= segment.0 && l <= segment.1;
    let lambda0 = match opts.lambda0 {
        Some(l) if bounds.contains(l) => {
            if in_segment(l) {
                l
            } else {
                segment.0 + (segment.1 - segment.0) / 2.0
            }
        }
        Some(l) => {
            return Err(Error::InfeasibleMultiplier { lambda: l, bounds: bounds.to_string() });
        }
        None if in_segment(0.0) => 0.0,
        None => segment.0 + (segment.1 - segment.0) / 2.0,
    };

    let near = |a: f64, b: f64| b.is_finite() && (a - b).abs() <= 1e-12 * b.abs().max(1.0);

    // bracket on z: residual < 0 at lo, > 0 at hi
    let mut lo: Option<Point> = None;
    let mut hi: Option<Point> = None;
    let mut expand = 2.0;
    let mut bound_hits = (0usize, 0usize);
    let mut p = evaluate(path, &bounds, &chart, chart.z(lambda0));
    record(&mut iterations, &p);
    let mut steps = 0usize;
    let mut status = SolveStatus::MaxIterations;
    let mut q_dot = None;
    let mut message = None;

    for _ in 0..opts.max_iter {
        let q = p.total - total;
        let slope = path.total_slope(p.lambda);
        let analytic = path.has_analytic_slope(p.lambda);
        let small_q = q.abs() <= opts.tol * scale;
        if small_q && (!(slope > 0.0) || !slope.is_finite() || q.abs() / slope <= opts.lambda_tol || !analytic) {
            status = SolveStatus::Converged;
            q_dot = Some(slope);
            // one last Newton correction in lambda when it stays admissible
            if analytic && slope > 0.0 && slope.is_finite() && q != 0.0 {
                let lam = p.lambda - q / slope;
                if bounds.contains(lam) {
                    let polished = evaluate(path, &bounds, &Chart::Identity, lam);
                    if (polished.total - total).abs() <= q.abs() {
                        p = Point { z: chart.z(lam), ..polished };
                        record(&mut iterations, &p);
                    }
                }
            }
            break;
        }

        let r = residual(p.total, total);
        // pinned at a bound while the residual still pushes outward
        if near(p.lambda, bounds.lower) && r > 0.0 {
            bound_hits = (bound_hits.0 + 1, 0);
        } else if near(p.lambda, bounds.upper) && r < 0.0 {
            bound_hits = (0, bound_hits.1 + 1);
        } else {
            bound_hits = (0, 0);
        }
        if bound_hits.0 >= 2 || bound_hits.1 >= 2 {
            status = if bound_hits.0 >= 2 { SolveStatus::HitLowerBound } else { SolveStatus::HitUpperBound };
            message = Some(format!("iterates pinned at the multiplier bound; total {total} is not attainable"));
            break;
        }

        let z = p.z;
        if r > 0.0 {
            if hi.as_ref().is_none_or(|h| z < h.z) {
                hi = Some(Point { f: p.f.clone(), ..p });
            }
        } else if lo.as_ref().is_none_or(|l| z > l.z) {
            lo = Some(Point { f: p.f.clone(), ..p });
        }

        // a collapsed bracket around a jump of a step-function path
        if let (Some(l), Some(h)) = (&lo, &hi) {
            if h.lambda - l.lambda <= 1e-13 * bounds.width().max(1.0) || h.z - l.z <= 1e-15 * (1.0 + l.z.abs()) {
                if !h.total.is_finite() || !l.total.is_finite() {
                    // the path diverges within one representable multiplier
                    // step of the bound
                    status = if h.total.is_finite() { SolveStatus::HitLowerBound } else { SolveStatus::HitUpperBound };
                    p = if h.total.is_finite() { Point { f: h.f.clone(), ..*h } } else { Point { f: l.f.clone(), ..*l } };
                    message = Some(format!(
                        "total {total} lies beyond the largest total representable below the multiplier bound"
                    ));
                    break;
                }
                let theta = ((total - l.total) / (h.total - l.total)).clamp(0.0, 1.0);
                let f: Vec<f64> = l.f.iter().zip(&h.f).map(|(a, b)| a + theta * (b - a)).collect();
                let lam = l.lambda + theta * (h.lambda - l.lambda);
                p = Point { z: chart.z(lam), lambda: lam, total: f.iter().sum(), f };
                record(&mut iterations, &p);
                status = SolveStatus::Converged;
                q_dot = Some(path.total_slope(lam));
                message = Some("constraint met by blending the two sides of a jump in the minimizer path".into());
                break;
            }
        }

        let drdz = residual_slope(p.total, total, slope * chart.dlambda_dz(z));
        let mut newton = z - r / drdz;
        if matches!(chart, Chart::Probit { .. }) {
            newton = newton.clamp(z - MAX_Z_STEP, z + MAX_Z_STEP);
        }
        let inside = |x: f64| lo.as_ref().is_none_or(|l| x > l.z) && hi.as_ref().is_none_or(|h| x < h.z);
        let next = if newton.is_finite() && drdz > 0.0 && inside(newton) {
            newton
        } else {
            match (&lo, &hi) {
                (Some(l), Some(h)) => 0.5 * (l.z + h.z),
                _ => {
                    let s = if r > 0.0 { -expand } else { expand };
                    expand *= 2.0;
                    z + s
                }
            }
        };
        p = evaluate(path, &bounds, &chart, next);
        record(&mut iterations, &p);
        steps += 1;
    }

    if status == SolveStatus::MaxIterations {
        message = Some(format!("no convergence in {} iterations", opts.max_iter));
    }
    Ok(SolveResult {
        f_star: p.f,
        lambda_star: vec![p.lambda],
        status,
        newton_steps: steps,
        iterations,
        q_dot,
        attainable: Some(attainable),
        target: vec![total],
        message,
    })
}

fn squared_error_closed_form(path: &MinimizerPath, total: f64) -> SolveResult {
    let m = path.means().expect("squared error path has means");
    let c = path.weights();
    let big_m: f64 = m.iter().sum();
    let big_c: f64 = c.iter().sum();
    let lambda = 2.0 * (total - big_m) / big_c;
    let f: Vec<f64> = m.iter().zip(c).map(|(mi, ci)| mi + lambda * ci / 2.0).collect();
    let sum: f64 = f.iter().sum();
    SolveResult {
        iterations: vec![Iterate { lambda: vec![lambda], value: vec![sum], residual: (sum - total).abs() }],
        f_star: f,
        lambda_star: vec![lambda],
        status: SolveStatus::Converged,
        newton_steps: 0,
        q_dot: Some(big_c / 2.0),
        attainable: Some((f64::NEG_INFINITY, f64::INFINITY)),
        target: vec![total],
        message: None,
    }
}

fn check_linear(a: &DMatrix<f64>, totals: &[f64], n: usize) -> Result<()> {
    let k = a.ncols();
    if a.nrows() != n || totals.len() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "constraint matrix is {}x{} with {} totals for {n} components",
            a.nrows(),
            k,
            totals.len()
        )));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("{k} constraints on {n} components")));
    }
    if a.iter().chain(totals).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("constraint has non-finite entries".into()));
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.max();
    let rank = sv.iter().filter(|s| **s > top * 1e-12 * n as f64).count();
    if rank < k {
        return Err(Error::InvalidParameter(format!("constraint matrix has rank {rank} < {k}")));
    }
    Ok(())
}

/// Optimal `f` under `A'f = totals`.
///
/// Component `i` is evaluated at the effective multiplier `(A lambda)_i`;
/// the Jacobian of `A'f(A lambda)` is `A' Q A` with `Q` the diagonal of
/// componentwise sensitivities. Steps are damped until they stay inside
/// every component domain and reduce the residual norm.
pub fn solve_linear(
    loss: &LossFamily,
    margins: &[MarginalDistribution],
    a: &DMatrix<f64>,
    totals: &[f64],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    solve_linear_path(&MinimizerPath::for_margins(loss, margins)?, a, totals, opts)
}

pub fn solve_linear_path(
    path: &MinimizerPath,
    a: &DMatrix<f64>,
    totals: &[f64],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    check_options(opts)?;
    let n = path.dim();
    check_linear(a, totals, n)?;
    let k = a.ncols();
    let target = DVector::from_column_slice(totals);
    let scale = target.amax().max(1.0);
    let domains: Vec<LambdaBounds> = (0..n).map(|i| path.component_bounds(i)).collect();
    let admissible = |eff: &DVector<f64>| eff.iter().zip(&domains).all(|(l, b)| b.contains(*l));

    let mut lambda = DVector::from_element(k, opts.lambda0.unwrap_or(0.0));
    if !admissible(&(a * &lambda)) {
        lambda.fill(0.0);
    }
    let eval = |lambda: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let eff = a * lambda;
        let f = DVector::from_vec(path.minimizer_at(eff.as_slice())?);
        let q = a.transpose() * &f - &target;
        Ok((eff, f, q))
    };
    let (mut eff, mut f, mut q) = eval(&lambda)?;
    let mut iterations = Vec::new();
    let mut record = |lambda: &DVector<f64>, q: &DVector<f64>| {
        iterations.push(Iterate {
            lambda: lambda.as_slice().to_vec(),
            value: (q + &target).as_slice().to_vec(),
            residual: q.amax(),
        });
    };
    record(&lambda, &q);

    let mut status = SolveStatus::MaxIterations;
    let mut message = None;
    let mut steps = 0;
    for _ in 0..opts.max_iter {
        let analytic = (0..n).all(|i| path.component_slope(i, eff[i]).is_some());
        let mut s: Vec<f64> = (0..n).map(|i| path.component_slope_or_secant(i, eff[i])).collect();
        let mut jac = jacobian(a, &s);
        let mut delta = jac.clone().lu().solve(&(-&q));
        if delta.as_ref().is_none_or(|d| d.iter().any(|x| !x.is_finite())) {
            let floor = 1e-8 * s.iter().cloned().fold(0.0, f64::max).max(1e-12);
            for si in &mut s {
                *si = si.max(floor);
            }
            jac = jacobian(a, &s);
            delta = jac.lu().solve(&(-&q));
        }
        let Some(delta) = delta.filter(|d| d.iter().all(|x| x.is_finite())) else {
            message = Some("singular Jacobian after regularization".into());
            break;
        };

        if q.amax() <= opts.tol * scale && (delta.amax() <= opts.lambda_tol || !analytic) {
            status = SolveStatus::Converged;
            if analytic && delta.amax() > 0.0 {
                let cand = &lambda + &delta;
                if admissible(&(a * &cand)) {
                    let (e2, f2, q2) = eval(&cand)?;
                    if q2.norm() <= q.norm() {
                        (lambda, eff, f, q) = (cand, e2, f2, q2);
                        record(&lambda, &q);
                    }
                }
            }
            break;
        }

        let norm = q.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=40 {
            let cand = &lambda + &delta * alpha;
            if admissible(&(a * &cand)) {
                let (e2, f2, q2) = eval(&cand)?;
                if q2.norm() < norm {
                    accepted = Some((cand, e2, f2, q2));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((l2, e2, f2, q2)) = accepted else {
            message = Some("damped Newton step failed to reduce the residual".into());
            break;
        };
        (lambda, eff, f, q) = (l2, e2, f2, q2);
        record(&lambda, &q);
        steps += 1;
    }
    if status == SolveStatus::MaxIterations && message.is_none() {
        message = Some(format!("no convergence in {} iterations", opts.max_iter));
    }
    let _ = eff;
    Ok(SolveResult {
        f_star: f.as_slice().to_vec(),
        lambda_star: lambda.as_slice().to_vec(),
        status,
        newton_steps: steps,
        iterations,
        q_dot: None,
        attainable: None,
        target: totals.to_vec(),
        message,
    })
}

fn jacobian(a: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(s));
    a.transpose() * q * a
}
