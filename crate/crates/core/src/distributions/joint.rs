use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::marginal::MarginalDistribution;
use crate::error::{Error, Result};
use crate::numeric::psd_sqrt;
use crate::rng::{block_rng, blocks};

/// Dense row-major sample matrix, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    weights: Option<Vec<f64>>,
    names: Vec<String>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let names = (1..=cols).map(|i| format!("y{i}")).collect();
        Ok(Self { rows, cols, data, weights: None, names })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged sample rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.rows {
            return Err(Error::DimensionMismatch(format!("{} weights for {} rows", weights.len(), self.rows)));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter("sample weights must be non-negative with positive sum".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::DimensionMismatch(format!("{} names for {} columns", names.len(), self.cols)));
        }
        self.names = names;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of row `i`, 1 when unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Read a CSV with a header of series names and an optional trailing
    /// `weight` column.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let weighted = header.last().is_some_and(|h| h.eq_ignore_ascii_case("weight"));
        let cols = header.len() - usize::from(weighted);
        if cols == 0 {
            return Err(Error::InvalidParameter("sample CSV has no series columns".into()));
        }
        let mut data = Vec::new();
        let mut weights = Vec::new();
        let mut rows = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let x: f64 = field.parse().map_err(|_| {
                    Error::InvalidParameter(format!("row {}: column '{}' is not a number: '{field}'", line + 2, header[j]))
                })?;
                if j < cols {
                    data.push(x);
                } else {
                    weights.push(x);
                }
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::InvalidParameter("sample CSV has no rows".into()));
        }
        let m = Self::new(rows, cols, data)?.with_names(header[..cols].to_vec())?;
        if weighted {
            m.with_weights(weights)
        } else {
            Ok(m)
        }
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        if self.weights.is_some() {
            header.push("weight".into());
        }
        w.write_record(&header)?;
        for i in 0..self.rows {
            let mut rec: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            if let Some(ws) = &self.weights {
                rec.push(ws[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Joint predictive distribution of the outcome vector.
#[derive(Debug, Clone, PartialEq)]
pub enum JointForecast {
    /// `log(y) ~ N(mean, cov)`.
    MultivariateLognormal { mean: DVector<f64>, cov: DMatrix<f64> },
    MultivariateNormal { mean: DVector<f64>, cov: DMatrix<f64> },
    EmpiricalMatrix(SampleMatrix),
}

impl JointForecast {
    pub fn lognormal(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_gaussian(&mean, &cov)?;
        Ok(Self::MultivariateLognormal { mean: DVector::from_vec(mean), cov })
    }

    pub fn normal(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_gaussian(&mean, &cov)?;
        Ok(Self::MultivariateNormal { mean: DVector::from_vec(mean), cov })
    }

    /// Log-scale variances `v`, common correlation `rho` between every pair.
    pub fn lognormal_equicorrelated(mean: Vec<f64>, v: &[f64], rho: f64) -> Result<Self> {
        let n = v.len();
        let cov = DMatrix::from_fn(n, n, |i, j| if i == j { v[i] } else { rho * (v[i] * v[j]).sqrt() });
        Self::lognormal(mean, cov)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::MultivariateLognormal { mean, .. } | Self::MultivariateNormal { mean, .. } => mean.len(),
            Self::EmpiricalMatrix(s) => s.ncols(),
        }
    }

    pub fn marginal(&self, i: usize) -> Result<MarginalDistribution> {
        if i >= self.dim() {
            return Err(Error::DimensionMismatch(format!("dimension {i} of {}", self.dim())));
        }
        match self {
            Self::MultivariateLognormal { mean, cov } => MarginalDistribution::lognormal(mean[i], cov[(i, i)]),
            Self::MultivariateNormal { mean, cov } => MarginalDistribution::normal(mean[i], cov[(i, i)]),
            Self::EmpiricalMatrix(s) => MarginalDistribution::empirical(s.column(i), s.weights().map(<[f64]>::to_vec)),
        }
    }

    pub fn marginals(&self) -> Result<Vec<MarginalDistribution>> {
        (0..self.dim()).map(|i| self.marginal(i)).collect()
    }

    /// Same margins with all dependence removed.
    pub fn without_dependence(&self) -> Result<Self> {
        match self {
            Self::MultivariateLognormal { mean, cov } => Ok(Self::MultivariateLognormal {
                mean: mean.clone(),
                cov: DMatrix::from_diagonal(&cov.diagonal()),
            }),
            Self::MultivariateNormal { mean, cov } => Ok(Self::MultivariateNormal {
                mean: mean.clone(),
                cov: DMatrix::from_diagonal(&cov.diagonal()),
            }),
            Self::EmpiricalMatrix(_) => Err(Error::Unsupported(
                "an empirical joint has no parametric dependence to remove".into(),
            )),
        }
    }

    /// Sampler for the analytic families.
    pub fn sampler(&self) -> Result<GaussianSampler> {
        match self {
            Self::MultivariateLognormal { mean, cov } => GaussianSampler::new(mean.clone(), cov, true),
            Self::MultivariateNormal { mean, cov } => GaussianSampler::new(mean.clone(), cov, false),
            Self::EmpiricalMatrix(_) => Err(Error::Unsupported("empirical joints are used as given".into())),
        }
    }

    /// `count` draws, deterministic in `seed`. An empirical joint is
    /// resampled by row with probability proportional to its weights.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        match self {
            Self::EmpiricalMatrix(s) => {
                let idx = MarginalDistribution::empirical(
                    (0..s.nrows()).map(|i| i as f64).collect(),
                    s.weights().map(<[f64]>::to_vec),
                )?;
                let mut data = Vec::with_capacity(count * s.ncols());
                for (b, _, len) in blocks(count) {
                    let mut rng = block_rng(seed, b);
                    for _ in 0..len {
                        data.extend_from_slice(s.row(idx.sample(&mut rng) as usize));
                    }
                }
                SampleMatrix::new(count, s.ncols(), data)?.with_names(s.names().to_vec())
            }
            _ => self.sampler()?.sample(count, seed),
        }
    }

    /// Map each block of `count` draws through `f` in parallel, in block
    /// order. Empirical joints are resampled by row weight.
    pub fn map_blocks<T, F>(&self, count: usize, seed: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        match self {
            Self::EmpiricalMatrix(s) => {
                let idx = MarginalDistribution::empirical(
                    (0..s.nrows()).map(|i| i as f64).collect(),
                    s.weights().map(<[f64]>::to_vec),
                )?;
                let spans: Vec<_> = blocks(count).collect();
                Ok(spans
                    .par_iter()
                    .map(|&(b, _, len)| {
                        let mut rng = block_rng(seed, b);
                        let mut buf = Vec::with_capacity(len * s.ncols());
                        for _ in 0..len {
                            buf.extend_from_slice(s.row(idx.sample(&mut rng) as usize));
                        }
                        f(&buf)
                    })
                    .collect())
            }
            _ => Ok(self.sampler()?.map_blocks(count, seed, f)),
        }
    }

    /// Log density at `y` for the analytic families with non-singular
    /// covariance.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        let (mean, cov, log_scale) = match self {
            Self::MultivariateLognormal { mean, cov } => (mean, cov, true),
            Self::MultivariateNormal { mean, cov } => (mean, cov, false),
            Self::EmpiricalMatrix(_) => return Err(Error::Unsupported("empirical joints have no density".into())),
        };
        if y.len() != mean.len() {
            return Err(Error::DimensionMismatch(format!("point of length {} for dimension {}", y.len(), mean.len())));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Decomposition("covariance is singular; no density".into()))?;
        if log_scale && y.iter().any(|v| *v <= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let x = DVector::from_iterator(y.len(), y.iter().map(|v| if log_scale { v.ln() } else { *v }));
        let r = &x - mean;
        let sol = chol.l().solve_lower_triangular(&r).expect("non-singular factor");
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let n = y.len() as f64;
        let mut lp = -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + sol.norm_squared());
        if log_scale {
            lp -= x.iter().sum::<f64>();
        }
        Ok(lp)
    }
}

fn check_gaussian(mean: &[f64], cov: &DMatrix<f64>) -> Result<()> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {} with {}x{} covariance",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if mean.is_empty() {
        return Err(Error::InvalidParameter("joint forecast needs at least one dimension".into()));
    }
    if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite mean or covariance entry".into()));
    }
    psd_sqrt(cov).map(|_| ())
}

/// Draws `mean + S z` (optionally exponentiated) with `S S' = V`.
///
/// Two samplers with different square roots but the same seed consume the
/// same standard normal draws, which is what common random numbers across
/// scenarios rely on.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    sqrt: DMatrix<f64>,
    exponentiate: bool,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>, exponentiate: bool) -> Result<Self> {
        let sqrt = psd_sqrt(cov)?;
        Ok(Self { mean, sqrt, exponentiate })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fill `out` (row-major, `len` rows) with block `block` of the stream.
    pub fn fill_block(&self, seed: u64, block: u64, len: usize, out: &mut Vec<f64>) {
        let n = self.dim();
        let mut rng = block_rng(seed, block);
        let mut z = vec![0.0; n];
        out.clear();
        out.reserve(len * n);
        for _ in 0..len {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..n {
                let row = self.sqrt.row(i);
                let mut x = self.mean[i];
                for (j, zj) in z.iter().enumerate() {
                    x += row[j] * zj;
                }
                out.push(if self.exponentiate { x.exp() } else { x });
            }
        }
    }

    /// Map each block of draws through `f` in parallel; results come back
    /// in block order.
    pub fn map_blocks<T, F>(&self, count: usize, seed: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let spans: Vec<_> = blocks(count).collect();
        spans
            .par_iter()
            .map_init(Vec::new, |buf, &(b, _, len)| {
                self.fill_block(seed, b, len, buf);
                f(buf)
            })
            .collect()
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        let parts = self.map_blocks(count, seed, <[f64]>::to_vec);
        SampleMatrix::new(count, self.dim(), parts.concat())
    }
}
