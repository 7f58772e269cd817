mod common;

use common::risk;
use confor_core::fixtures::{bivariate_lognormal, bivariate_margins, BIVARIATE_RHOS, BIVARIATE_TOTALS};
use confor_core::{
    dependence_contrast, loss_distribution, sensitivity, solve_total, JointForecast, LossFamily, LossKind,
    SolveStatus, SolverOptions,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solve(kind: LossKind, total: f64) -> Vec<f64> {
    solve_total(&LossFamily::uniform(kind, 2), &bivariate_margins().unwrap(), total, &SolverOptions::default())
        .unwrap()
        .f_star
}

#[test]
fn monte_carlo_mean_estimates_risk() {
    let joint = bivariate_lognormal(0.7).unwrap();
    let margins = bivariate_margins().unwrap();
    for kind in [LossKind::AbsoluteDeviation, LossKind::AbsolutePercent, LossKind::SquaredError] {
        let f = solve(kind, 14.7);
        let exact = risk(kind, &margins, &f);
        for (count, seed) in [(100_000, 1), (1_000_000, 2)] {
            let s = loss_distribution(&joint, &LossFamily::uniform(kind, 2), &f, count, seed, false).unwrap();
            assert!(
                (s.loss.mean - exact).abs() < 3.0 * s.loss.std_error,
                "{kind} at N={count}: {} +- {} vs {exact}",
                s.loss.mean,
                s.loss.std_error
            );
        }
    }
}

#[test]
fn optimum_beats_feasible_perturbations_in_sample() {
    let joint = bivariate_lognormal(0.0).unwrap();
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    let f = solve(LossKind::AbsoluteDeviation, 14.7);
    let (count, seed) = (1_000_000, 77);
    let base = loss_distribution(&joint, &loss, &f, count, seed, false).unwrap().loss.mean;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        // in two dimensions the feasible direction is (1, -1) up to scale
        let t = (0.25 + 0.25 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let g = [f[0] + t, f[1] - t];
        let other = loss_distribution(&joint, &loss, &g, count, seed, false).unwrap().loss.mean;
        assert!(base <= other, "t = {t}: {base} vs {other}");
    }
}

#[test]
fn upside_mass_on_every_instance() {
    let margins = bivariate_margins().unwrap();
    for rho in BIVARIATE_RHOS {
        let joint = bivariate_lognormal(rho).unwrap();
        for total in BIVARIATE_TOTALS {
            let f = solve(LossKind::AbsoluteDeviation, total);
            let r = risk(LossKind::AbsoluteDeviation, &margins, &f);
            let s = loss_distribution(&joint, &LossFamily::uniform(LossKind::AbsoluteDeviation, 2), &f, 100_000, 5, false)
                .unwrap();
            assert!(s.fraction_below(r) > 0.0);
        }
    }
}

#[test]
fn optimum_ignores_dependence() {
    for kind in [LossKind::AbsoluteDeviation, LossKind::AbsolutePercent, LossKind::SquaredError] {
        let results: Vec<Vec<f64>> = BIVARIATE_RHOS
            .iter()
            .map(|rho| {
                let margins = bivariate_lognormal(*rho).unwrap().marginals().unwrap();
                solve_total(&LossFamily::uniform(kind, 2), &margins, 14.7, &SolverOptions::default()).unwrap().f_star
            })
            .collect();
        assert_eq!(results[0], results[1]);
        assert_eq!(results[1], results[2]);
    }
}

#[test]
fn per_dimension_scaling_divides_by_n() {
    let joint = bivariate_lognormal(0.3).unwrap();
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    let a = loss_distribution(&joint, &loss, &[7.0, 14.0], 20_000, 3, false).unwrap();
    let b = loss_distribution(&joint, &loss, &[7.0, 14.0], 20_000, 3, true).unwrap();
    assert!((a.loss.median / 2.0 - b.loss.median).abs() < 1e-12);
    assert!((a.loss.mean / 2.0 - b.loss.mean).abs() < 1e-12);
}

#[test]
fn summary_ordering() {
    let joint = bivariate_lognormal(-0.7).unwrap();
    let loss = LossFamily::uniform(LossKind::AbsolutePercent, 2);
    let s = loss_distribution(&joint, &loss, &solve(LossKind::AbsolutePercent, 21.4), 50_000, 8, true).unwrap();
    let l = s.loss;
    assert!(l.min <= l.q05 && l.q05 <= l.median && l.median <= l.q95 && l.q95 <= l.max);
    assert_eq!(s.pairs.len(), 50_000);
}

#[test]
fn dependence_widens_loss_distribution() {
    let f = solve(LossKind::AbsoluteDeviation, 14.7);
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    let (dep, ind) = dependence_contrast(&bivariate_lognormal(0.7).unwrap(), &loss, &f, 1_000_000, 6, true).unwrap();
    assert!(dep.loss.q95 > ind.loss.q95, "{} vs {}", dep.loss.q95, ind.loss.q95);
}

#[test]
fn diagonal_contrast_is_identical() {
    let joint = bivariate_lognormal(0.0).unwrap();
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    let (a, b) = dependence_contrast(&joint, &loss, &[7.0, 14.0], 30_000, 6, false).unwrap();
    assert_eq!(a.pairs, b.pairs);
}

#[test]
fn sensitivity_shortcut_and_envelopes() {
    let margins = bivariate_margins().unwrap();
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    let grid: Vec<f64> = (-10..=10).map(|i| i as f64 / 100.0).collect();
    let r = sensitivity(&loss, &margins, 14.7, &grid, &SolverOptions::default()).unwrap();
    assert!(r.status.iter().all(|s| *s == SolveStatus::Converged));
    for (j, eps) in grid.iter().enumerate() {
        let exact_change = r.lambda_exact[j] - r.nominal_lambda;
        let gap = (r.lambda_approx[j] - r.lambda_exact[j]).abs();
        if *eps == 0.0 {
            assert!(gap < 1e-10);
            for (a, b) in r.exact_f[j].iter().zip(&r.approx_f[j]) {
                assert!((a - b).abs() < 1e-8);
            }
        } else if eps.abs() <= 0.02 + 1e-12 {
            assert!(gap < 0.1 * exact_change.abs(), "eps {eps}: gap {gap}, change {exact_change}");
        }
        if j > 0 {
            for i in 0..2 {
                assert!(r.exact_f[j][i] > r.exact_f[j - 1][i]);
            }
        }
    }
    for i in 0..2 {
        assert!(r.envelope_max[i] > r.envelope_min[i]);
    }
}

#[test]
fn infeasible_perturbations_are_reported_per_point() {
    let margins = vec![
        confor_core::MarginalDistribution::truncated(confor_core::MarginalDistribution::normal(5.0, 1.0).unwrap(), 0.0, 6.0)
            .unwrap(),
        confor_core::MarginalDistribution::truncated(confor_core::MarginalDistribution::normal(5.0, 1.0).unwrap(), 0.0, 6.0)
            .unwrap(),
    ];
    let r = sensitivity(&LossFamily::uniform(LossKind::AbsoluteDeviation, 2), &margins, 11.0, &[0.0, 0.05, 0.2], &SolverOptions::default())
        .unwrap();
    assert_eq!(r.status[0], SolveStatus::Converged);
    assert_eq!(r.status[2], SolveStatus::InfeasibleConstraint);
}

#[test]
fn contrast_rejects_empirical_joint() {
    let s = confor_core::SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let loss = LossFamily::uniform(LossKind::AbsoluteDeviation, 2);
    assert!(dependence_contrast(&JointForecast::EmpiricalMatrix(s), &loss, &[1.0, 2.0], 10, 0, false).is_err());
}
