//! Sample covariance matrices, their eigenvalues and the spectral sums
//! (`Σℓ`, `Σℓ²`, `Σlog ℓ`) that every sphericity statistic is built from.
//!
//! Statistics that only need traces go through [`SpectralMoments`], which can
//! be filled without an eigendecomposition: `tr S` and `tr S²` come straight
//! from the entries of `S` (or from the `n × n` Gram matrix when `p > n`) and
//! `log det S` from a Cholesky factorization.

use nalgebra::{Complex, ComplexField, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SphericityError};
use crate::numerics::compensated_sum;

/// Relative threshold below which an eigenvalue (or Cholesky pivot) is
/// treated as zero.
pub const EIGEN_CLAMP_RELATIVE: f64 = 1e-10;

/// Scalar types accepted as observations: real or complex doubles.
pub trait Entry: ComplexField<RealField = f64> + Copy {}
impl Entry for f64 {}
impl Entry for Complex<f64> {}

/// Whether the population mean is known (and zero) or has to be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanConvention {
    /// `S = n⁻¹ Σ YᵢYᵢ*`.
    Known,
    /// `S* = (n-1)⁻¹ Σ (Yᵢ-Ȳ)(Yᵢ-Ȳ)*`.
    Unknown,
}

impl MeanConvention {
    pub fn from_known(mean_known: bool) -> Self {
        if mean_known {
            Self::Known
        } else {
            Self::Unknown
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, Self::Known)
    }

    /// Number of degrees of freedom carried by `n` observations.
    pub fn effective_n(self, n: usize) -> usize {
        match self {
            Self::Known => n,
            Self::Unknown => n.saturating_sub(1),
        }
    }
}

/// A `p × n` table of observations, one observation per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T: Entry = f64> {
    entries: DMatrix<T>,
}

impl<T: Entry> DataMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(domain("data matrix must have p >= 1 rows and n >= 1 columns"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(domain("data matrix contains non-finite entries"));
        }
        Ok(Self { entries })
    }

    /// Builds the `p × n` matrix from `n` observations of length `p`
    /// (observations as rows, as in a CSV file).
    pub fn from_observations(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(domain("observations have differing lengths"));
        }
        Self::new(DMatrix::from_fn(p, n, |i, j| rows[j][i]))
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    /// Copy with every row shifted to zero sample mean.
    pub fn centered(&self) -> DMatrix<T> {
        let mut x = self.entries.clone();
        let n = T::from_real(self.n() as f64);
        for mut row in x.row_iter_mut() {
            let mean = row.iter().fold(T::zero(), |acc, &v| acc + v) / n;
            for v in row.iter_mut() {
                *v -= mean;
            }
        }
        x
    }

    fn prepared(&self, convention: MeanConvention) -> Result<(DMatrix<T>, f64)> {
        let n = self.n();
        let divisor = convention.effective_n(n);
        match convention {
            MeanConvention::Known => Ok((self.entries.clone(), divisor as f64)),
            MeanConvention::Unknown => {
                if n < 2 {
                    return Err(SphericityError::InsufficientData { needed: 2, got: n });
                }
                Ok((self.centered(), divisor as f64))
            }
        }
    }
}

/// A sample covariance matrix together with the divisor convention that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix<T: Entry = f64> {
    matrix: DMatrix<T>,
    n: usize,
    convention: MeanConvention,
}

impl<T: Entry> CovarianceMatrix<T> {
    /// Wraps an externally computed matrix; it must be square and Hermitian.
    pub fn from_matrix(matrix: DMatrix<T>, n: usize, convention: MeanConvention) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(domain("covariance matrix must be square and non-empty"));
        }
        let scale = matrix.iter().map(|v| v.modulus()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let p = matrix.nrows();
        for i in 0..p {
            for j in i..p {
                let gap = (matrix[(i, j)] - matrix[(j, i)].conjugate()).modulus();
                if gap > 1e-12 * scale {
                    return Err(domain(format!("covariance matrix is not Hermitian at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix, n, convention })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convention(&self) -> MeanConvention {
        self.convention
    }

    pub fn trace(&self) -> f64 {
        compensated_sum(self.matrix.diagonal().iter().map(|v| v.real()))
    }

    /// `tr S² = ‖S‖_F²` for Hermitian `S`.
    pub fn trace_of_square(&self) -> f64 {
        compensated_sum(self.matrix.iter().map(|v| v.modulus_squared()))
    }

    /// `log det S` through a Cholesky factorization.
    pub fn log_det(&self) -> Result<f64> {
        log_det_cholesky(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Result<EigenSpectrum> {
        eigenvalues(self)
    }

    /// Trace moments without an eigendecomposition. `log det` is only
    /// attempted when `with_log` is set.
    pub fn moments(&self, with_log: bool) -> Result<SpectralMoments> {
        let sum_log = if with_log { self.log_det().ok() } else { None };
        Ok(SpectralMoments {
            p: self.p(),
            n: self.n,
            convention: self.convention,
            sum: self.trace(),
            sum_sq: self.trace_of_square(),
            sum_log,
        })
    }
}

/// `S = N⁻¹ X X*` with `N = n` (known mean) or `N = n - 1` after centering
/// each coordinate (unknown mean).
pub fn sample_covariance<T: Entry>(
    data: &DataMatrix<T>,
    convention: MeanConvention,
) -> Result<CovarianceMatrix<T>> {
    let (x, divisor) = data.prepared(convention)?;
    let mut s = &x * x.adjoint();
    s.unscale_mut(divisor);
    // Exact symmetry, so downstream factorizations see a Hermitian matrix.
    let p = s.nrows();
    for i in 0..p {
        s[(i, i)] = T::from_real(s[(i, i)].real());
        for j in (i + 1)..p {
            let v = s[(i, j)];
            s[(j, i)] = v.conjugate();
        }
    }
    Ok(CovarianceMatrix { matrix: s, n: data.n(), convention })
}

fn log_det_cholesky<T: Entry>(s: &DMatrix<T>) -> Result<f64> {
    let max_diag = s.diagonal().iter().map(|v| v.real()).fold(0.0, f64::max);
    let chol = nalgebra::linalg::Cholesky::new(s.clone()).ok_or_else(|| {
        SphericityError::DegenerateSpectrum(
            "covariance matrix is not positive definite (p >= n or rank deficient)".into(),
        )
    })?;
    let l = chol.l_dirty();
    let mut logs = Vec::with_capacity(s.nrows());
    for i in 0..s.nrows() {
        let d = l[(i, i)].real();
        if !(d * d > EIGEN_CLAMP_RELATIVE * max_diag) {
            return Err(SphericityError::DegenerateSpectrum(format!(
                "Cholesky pivot {i} is numerically zero (p >= n or rank deficient)"
            )));
        }
        logs.push(2.0 * d.ln());
    }
    Ok(compensated_sum(logs))
}

/// Sorted (nondecreasing) sample-covariance eigenvalues with their `(p, n)`
/// metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    values: Vec<f64>,
    n: usize,
    convention: MeanConvention,
}

impl EigenSpectrum {
    /// Sorts the values and clamps anything below `1e-10 · max` to zero.
    /// Values more negative than that are rejected.
    pub fn new(mut values: Vec<f64>, n: usize, convention: MeanConvention) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("spectrum must contain at least one eigenvalue"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("spectrum contains non-finite values"));
        }
        if n == 0 {
            return Err(domain("sample size n must be positive"));
        }
        let max = values.iter().cloned().fold(0.0, f64::max);
        let eps = EIGEN_CLAMP_RELATIVE * max;
        for v in values.iter_mut() {
            if *v < -eps {
                return Err(domain(format!("eigenvalue {v} is negative")));
            }
            if *v < eps {
                *v = 0.0;
            }
        }
        values.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { values, n, convention })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convention(&self) -> MeanConvention {
        self.convention
    }

    /// Multiplies every eigenvalue by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(domain("scale factor must be positive"));
        }
        Self::new(self.values.iter().map(|v| v * c).collect(), self.n, self.convention)
    }

    /// `(Σℓ, Σℓ², Σlog ℓ)`; fails when any eigenvalue is zero.
    pub fn spectral_sums(&self) -> Result<(f64, f64, f64)> {
        spectral_sums(self)
    }

    pub fn moments(&self) -> SpectralMoments {
        SpectralMoments::from(self)
    }
}

/// Eigenvalues of a Hermitian covariance matrix.
pub fn eigenvalues<T: Entry>(s: &CovarianceMatrix<T>) -> Result<EigenSpectrum> {
    let eig = s
        .matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| {
            SphericityError::Numerical(format!(
                "symmetric eigensolver did not converge for a {0}x{0} matrix",
                s.p()
            ))
        })?;
    EigenSpectrum::new(eig.eigenvalues.iter().copied().collect(), s.n, s.convention)
}

/// `(Σℓ, Σℓ², Σlog ℓ)` with compensated accumulation.
pub fn spectral_sums(spectrum: &EigenSpectrum) -> Result<(f64, f64, f64)> {
    let m = spectrum.moments();
    let log = m.require_log()?;
    Ok((m.sum, m.sum_sq, log))
}

/// The three power sums of a spectrum, with enough metadata to calibrate any
/// of the tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMoments {
    pub p: usize,
    pub n: usize,
    pub convention: MeanConvention,
    /// `Σℓᵢ = tr S`.
    pub sum: f64,
    /// `Σℓᵢ² = tr S²`.
    pub sum_sq: f64,
    /// `Σlog ℓᵢ = log det S`; `None` when the spectrum has zeros or it was
    /// not requested.
    pub sum_log: Option<f64>,
}

impl SpectralMoments {
    /// Trace moments straight from the data. When `p` exceeds the number of
    /// observations the `n × n` Gram matrix is used instead of `S`.
    pub fn from_data<T: Entry>(
        data: &DataMatrix<T>,
        convention: MeanConvention,
        with_log: bool,
    ) -> Result<Self> {
        let p = data.p();
        let n = data.n();
        let (x, divisor) = data.prepared(convention)?;
        if with_log || p <= n {
            let mut s = &x * x.adjoint();
            s.unscale_mut(divisor);
            let sum = compensated_sum(s.diagonal().iter().map(|v| v.real()));
            let sum_sq = compensated_sum(s.iter().map(|v| v.modulus_squared()));
            let sum_log = if with_log && p <= convention.effective_n(n) {
                log_det_cholesky(&s).ok()
            } else {
                None
            };
            return Ok(Self { p, n, convention, sum, sum_sq, sum_log });
        }
        let g = x.adjoint() * &x;
        let sum = compensated_sum(g.diagonal().iter().map(|v| v.real())) / divisor;
        let sum_sq = compensated_sum(g.iter().map(|v| v.modulus_squared())) / (divisor * divisor);
        Ok(Self { p, n, convention, sum, sum_sq, sum_log: None })
    }

    pub fn effective_n(&self) -> usize {
        self.convention.effective_n(self.n)
    }

    /// Mean eigenvalue `ℓ̄ = p⁻¹ Σℓᵢ`.
    pub fn mean(&self) -> f64 {
        self.sum / self.p as f64
    }

    pub fn require_log(&self) -> Result<f64> {
        self.sum_log.ok_or_else(|| {
            SphericityError::DegenerateSpectrum(format!(
                "log-determinant unavailable: spectrum has zero eigenvalues (p = {}, effective n = {})",
                self.p,
                self.effective_n()
            ))
        })
    }

    pub fn require_positive_mean(&self) -> Result<f64> {
        let m = self.mean();
        if !(m > 0.0) {
            return Err(SphericityError::DegenerateSpectrum(
                "mean eigenvalue is zero (all observations constant)".into(),
            ));
        }
        Ok(m)
    }
}

impl From<&EigenSpectrum> for SpectralMoments {
    fn from(s: &EigenSpectrum) -> Self {
        let values = s.values();
        let sum_log = if values.iter().all(|&v| v > 0.0) {
            Some(compensated_sum(values.iter().map(|v| v.ln())))
        } else {
            None
        };
        Self {
            p: s.p(),
            n: s.n,
            convention: s.convention,
            sum: compensated_sum(values.iter().copied()),
            sum_sq: compensated_sum(values.iter().map(|v| v * v)),
            sum_log,
        }
    }
}
