use confor_core::conditioning::{condition_t_with, DispersionConvention};
use confor_core::{abc_condition, condition_normal, condition_t, JointForecast, SampleMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn psd(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    &b * b.transpose() + DMatrix::identity(n, n) * 0.01
}

proptest! {
    #[test]
    fn conditional_mean_is_linear_in_total(
        n in 2usize..6,
        entries in prop::collection::vec(-1.0f64..1.0, 36),
        m in prop::collection::vec(-5.0f64..5.0, 6),
        f1 in -50.0f64..50.0,
        f2 in -50.0f64..50.0,
    ) {
        let v = psd(n, &entries);
        let m = &m[..n];
        let a = condition_normal(m, &v, f1).unwrap().mean_f;
        let b = condition_normal(m, &v, f2).unwrap().mean_f;
        let mid = condition_normal(m, &v, (f1 + f2) / 2.0).unwrap().mean_f;
        let gap = (&a + &b - &mid * 2.0).amax();
        prop_assert!(gap <= 1e-12 * (1.0 + f1.abs() + f2.abs()), "{gap}");
        prop_assert!((a.sum() - f1).abs() <= 1e-12 * (1.0 + f1.abs() + m.iter().map(|x| x.abs()).sum::<f64>()));
    }

    #[test]
    fn total_has_no_conditional_variance(n in 2usize..8, entries in prop::collection::vec(-1.0f64..1.0, 64)) {
        let v = psd(n, &entries);
        let r = condition_normal(&vec![1.0; n], &v, 3.0).unwrap();
        let ones = DVector::from_element(n, 1.0);
        prop_assert!((&r.var_f * &ones).amax() <= 1e-12 * v.amax());
        let t = condition_t(5.0, &vec![1.0; n], &v, 3.0).unwrap();
        prop_assert!((&t.var_f * &ones).amax() <= 1e-12 * v.amax());
    }

    #[test]
    fn t_scale_grows_with_discordance(k in 0.5f64..50.0, n in 2usize..6, d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
        let v = DMatrix::identity(n, n);
        let m = vec![1.0; n];
        let big_m = n as f64;
        let s = |d: f64| condition_t(k, &m, &v, big_m + d).unwrap().scale_factor;
        prop_assert!(s(0.0) >= k / (k + n as f64) - 1e-15);
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        prop_assert!(s(lo) <= s(hi));
        prop_assert!((s(-hi) - s(hi)).abs() < 1e-12);
    }
}

#[test]
fn large_dof_t_approaches_normal() {
    let v = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
    let m = [1.0, 2.0, 3.0];
    let total = 7.5;
    let normal = condition_normal(&m, &v, total).unwrap();
    let t = condition_t(1e6, &m, &v, total).unwrap();
    assert!((t.scale_factor - 1.0).abs() < 1e-4);
    assert!((&t.mean_f - &normal.mean_f).amax() <= 1e-12);
    let rel = (&t.var_f - &normal.var_f).amax() / normal.var_f.amax();
    assert!(rel < 1e-4, "{rel}");
    let printed = condition_t_with(1e6, &m, &v, total, DispersionConvention::AsPrinted).unwrap();
    assert!((&printed.var_f - &normal.var_f).amax() / normal.var_f.amax() > 0.1);
}

#[test]
fn abc_matches_normal_conditioning() {
    let m = vec![10.0, 20.0];
    let v = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
    let total = 33.0;
    let exact = condition_normal(&m, &v, total).unwrap();
    let joint = JointForecast::normal(m, v).unwrap();
    let r = abc_condition(&joint, total, 0.1, 10_000_000, 2024).unwrap();
    let n = r.accepted.nrows() as f64;
    assert!(n > 10_000.0);
    for i in 0..2 {
        let col = r.accepted.column(i);
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        assert!((mean - exact.mean_f[i]).abs() < 3.0 * se, "dim {i}: {mean} vs {} (se {se})", exact.mean_f[i]);
    }
}

#[test]
fn abc_acceptance_falls_with_dimension() {
    let mut rates = Vec::new();
    for n in [2usize, 5, 10] {
        let v = 0.1;
        let joint = JointForecast::lognormal(vec![0.0; n], DMatrix::identity(n, n) * v).unwrap();
        let total = 0.75 * n as f64 * (v / 2.0f64).exp();
        rates.push(abc_condition(&joint, total, 5.0, 200_000, 17).unwrap().acceptance_rate);
    }
    assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
}

#[test]
fn abc_rows_meet_the_tolerance_and_match_sequential_filtering() {
    let joint = JointForecast::lognormal_equicorrelated(vec![7f64.ln(), 14f64.ln()], &[0.04, 0.09], 0.7).unwrap();
    let (total, tau, count, seed) = (21.0, 2.0, 100_000, 9);
    let r = abc_condition(&joint, total, tau, count, seed).unwrap();
    for row in r.accepted.rows() {
        assert!(100.0 * (row.iter().sum::<f64>() - total).abs() / total < tau);
    }
    let all = joint.sample(count, seed).unwrap();
    let sequential: Vec<f64> = all
        .rows()
        .filter(|row| 100.0 * (row.iter().sum::<f64>() - total).abs() / total < tau)
        .flatten()
        .copied()
        .collect();
    assert_eq!(r.accepted.as_slice(), sequential.as_slice());
    let again = abc_condition(&joint, total, tau, count, seed).unwrap();
    assert_eq!(r.accepted.as_slice(), again.accepted.as_slice());
    assert_eq!(r.histograms.len(), 2);
    assert_eq!(r.histograms[0].counts.iter().sum::<u64>() as usize, r.accepted.nrows());
}

#[test]
fn abc_degenerate_joint_accepts_everything() {
    let s = SampleMatrix::from_rows(&[vec![4.0, 6.0]]).unwrap();
    let r = abc_condition(&JointForecast::EmpiricalMatrix(s), 10.0, 1e-9, 1, 0).unwrap();
    assert_eq!(r.acceptance_rate, 1.0);
}

#[test]
fn abc_zero_acceptances_is_empty_not_an_error() {
    let joint = JointForecast::lognormal(vec![0.0, 0.0], DMatrix::identity(2, 2) * 0.01).unwrap();
    let r = abc_condition(&joint, 1000.0, 0.1, 10_000, 1).unwrap();
    assert_eq!(r.acceptance_rate, 0.0);
    assert_eq!(r.accepted.nrows(), 0);
}
