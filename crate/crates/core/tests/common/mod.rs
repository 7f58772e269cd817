#![allow(dead_code)]

use confor_core::losses::per_component_risk;
use confor_core::{LossKind, MarginalDistribution};

/// Total risk `sum_i R_i(f_i)` with unit weights.
pub fn risk(kind: LossKind, margins: &[MarginalDistribution], f: &[f64]) -> f64 {
    margins
        .iter()
        .zip(f)
        .map(|(d, fi)| per_component_risk(kind, 1.0, d, *fi, None).unwrap())
        .sum()
}

/// Center and scale used to place oracle grids: the median and the
/// interquartile range over 1.349.
pub fn location_scale(d: &MarginalDistribution) -> (f64, f64) {
    (d.median(), d.iqr() / 1.349)
}

/// Minimize `R_1(f_1) + R_2(F - f_1)` over an evenly spaced grid of
/// `points` values of `f_1`, keeping both components within six scale
/// units (the larger of the two margins' scales) of their centers.
/// Returns the minimizing `f_1` and the grid step.
pub fn grid_oracle_pair(kind: LossKind, margins: &[MarginalDistribution], total: f64, points: usize) -> (f64, f64) {
    let (c1, s1) = location_scale(&margins[0]);
    let (c2, s2) = location_scale(&margins[1]);
    let (s1, s2) = (s1.max(s2), s1.max(s2));
    let mut lo = (c1 - 6.0 * s1).max(total - (c2 + 6.0 * s2));
    let mut hi = (c1 + 6.0 * s1).min(total - (c2 - 6.0 * s2));
    if matches!(kind, LossKind::AbsolutePercent | LossKind::ZeroAdjustedPercent) {
        lo = lo.max(0.0);
        hi = hi.min(total);
    }
    assert!(hi > lo, "empty oracle grid");
    grid_min(lo, hi, points, |f1| risk(kind, margins, &[f1, total - f1]))
}

/// Grid minimizer of `g` on `[lo, hi]` and the step.
pub fn grid_min<G: Fn(f64) -> f64>(lo: f64, hi: f64, points: usize, g: G) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (f64::INFINITY, lo);
    for j in 0..points {
        let x = lo + step * j as f64;
        let v = g(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    (best.1, step)
}

/// Random lognormal margins from a uniform stream in `[0, 1)`.
pub fn lognormal_margins(u: &[(f64, f64)]) -> Vec<MarginalDistribution> {
    u.iter()
        .map(|(a, b)| MarginalDistribution::lognormal(4.0 * a - 1.0, 0.01 + 0.3 * b).unwrap())
        .collect()
}
