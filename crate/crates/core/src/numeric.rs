//! Small numerical kernels: adaptive quadrature, bracketed root finding and
//! a pivoted Cholesky factor for positive semi-definite matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let (v, e) = gauss_kronrod(&f, lo, hi);
    let mut pieces = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    let mut evals = 1usize;
    while err > abs_tol.max(rel_tol * total.abs()) && evals < 4000 {
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty partition");
        let (a0, b0, v0, e0) = pieces.swap_remove(idx);
        let mid = 0.5 * (a0 + b0);
        if mid <= a0 || mid >= b0 {
            pieces.push((a0, b0, v0, e0));
            break;
        }
        let (vl, el) = gauss_kronrod(&f, a0, mid);
        let (vr, er) = gauss_kronrod(&f, mid, b0);
        total += vl + vr - v0;
        err += el + er - e0;
        pieces.push((a0, mid, vl, el));
        pieces.push((mid, b0, vr, er));
        evals += 2;
    }
    // re-sum to shed accumulated cancellation error
    sign * pieces.iter().map(|p| p.2).sum::<f64>()
}

/// Integral over `[a, inf)` via the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, rel_tol, abs_tol)
}

/// Root of a nondecreasing function on a bracket `[lo, hi]` with
/// `f(lo) <= target <= f(hi)`. Newton steps where a derivative is supplied,
/// bisection whenever the step leaves the bracket.
pub fn monotone_root<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64, x_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> Option<f64>,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = f(x) - target;
        if r == 0.0 {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= x_tol * (1.0 + x.abs()) {
            break;
        }
        let newton = df(x).filter(|d| *d > 0.0 && d.is_finite()).map(|d| x - r / d);
        x = match newton {
            Some(n) if n > lo && n < hi => n,
            _ => 0.5 * (lo + hi),
        };
    }
    x
}

/// Lower-triangular `L` with `L L' = V` for symmetric positive semi-definite
/// `V`.
///
/// Plain Cholesky is tried first; on failure a diagonally pivoted
/// factorization is used so that singular (rank-deficient) matrices are
/// accepted. In the pivoted case `L` is returned in the original ordering,
/// so it is a valid square root but not necessarily triangular.
pub fn psd_sqrt(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    if v.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square, got {}x{}",
            n,
            v.ncols()
        )));
    }
    let scale = v.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    for i in 0..n {
        for j in 0..i {
            if (v[(i, j)] - v[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Decomposition("covariance matrix is not symmetric".into()));
            }
        }
    }
    if let Some(ch) = v.clone().cholesky() {
        return Ok(ch.l());
    }
    pivoted_cholesky(v, scale)
}

fn pivoted_cholesky(v: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    let tol = 1e-12 * scale * n as f64;
    let mut a = v.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let (p, &pivot) = (k..n)
            .map(|i| (i, &a[(i, i)]))
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty");
        if pivot < -tol {
            return Err(Error::Decomposition(format!(
                "matrix is not positive semi-definite (pivot {pivot:e})"
            )));
        }
        if pivot <= tol {
            break;
        }
        a.swap_rows(k, p);
        a.swap_columns(k, p);
        l.swap_rows(k, p);
        perm.swap(k, p);
        let d = pivot.sqrt();
        l[(k, k)] = d;
        for i in k + 1..n {
            l[(i, k)] = a[(i, k)] / d;
        }
        for j in k + 1..n {
            for i in j..n {
                let upd = l[(i, k)] * l[(j, k)];
                a[(i, j)] -= upd;
                a[(j, i)] = a[(i, j)];
            }
        }
    }
    // undo the permutation: row perm[k] of the result is row k of l
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &orig) in perm.iter().enumerate() {
        out.set_row(orig, &l.row(k));
    }
    Ok(out)
}
