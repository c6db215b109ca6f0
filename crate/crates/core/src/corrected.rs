//! Large-dimensional corrections of the likelihood-ratio test (CLRT) and of
//! John's test (CJ), valid for any population with finite fourth moment.
//!
//! Both calibrations come from the CLT for linear spectral statistics of the
//! sample covariance matrix:
//!
//! ```text
//! CLRT:  𝓛_n + (p - N) log(1 - p/N) - p  ⇒  N(-(κ-1)/2 log(1-y) + βy/2,  -κ log(1-y) - κy)
//! CJ:    n U - p                         ⇒  N(κ + β - 1,  2κ)
//! ```
//!
//! with `N = n` when the mean is known and `N = n - 1` otherwise (the CJ
//! centering becomes `np/(n-1)`). `κ` is 2 for real and 1 for complex data and
//! `β = E|x|⁴ - 1 - κ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::classical::{john_statistic, lrt_statistic};
use crate::error::{domain, Result, SphericityError};
use crate::numerics::{normal_sf, Probability};
use crate::outcome::{OutcomeNote, OutcomeParams, TestId, TestOutcome};
use crate::spectra::{DataMatrix, Entry, MeanConvention, SpectralMoments};

/// Ratios above this still run CLRT but carry [`OutcomeNote::RatioNearOne`].
pub const CLRT_FRAGILE_RATIO: f64 = 0.98;

/// Field indicator `κ` and kurtosis offset `β` of the standardized entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    kappa: u8,
    beta: f64,
}

impl MomentProfile {
    /// Real Gaussian entries: `κ = 2`, `β = 0`.
    pub const REAL_GAUSSIAN: Self = Self { kappa: 2, beta: 0.0 };
    /// Complex Gaussian entries: `κ = 1`, `β = 0`.
    pub const COMPLEX_GAUSSIAN: Self = Self { kappa: 1, beta: 0.0 };

    pub fn new(kappa: u8, beta: f64) -> Result<Self> {
        if kappa != 1 && kappa != 2 {
            return Err(domain(format!("kappa must be 1 (complex) or 2 (real), got {kappa}")));
        }
        if !beta.is_finite() || beta < -(kappa as f64) {
            return Err(domain(format!("beta must be finite and >= -kappa, got {beta}")));
        }
        Ok(Self { kappa, beta })
    }

    pub fn real(beta: f64) -> Result<Self> {
        Self::new(2, beta)
    }

    pub fn kappa(self) -> u8 {
        self.kappa
    }

    pub fn kappa_f64(self) -> f64 {
        self.kappa as f64
    }

    pub fn beta(self) -> f64 {
        self.beta
    }
}

/// `(p, n)` together with the mean convention; `y_n = p / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRatio {
    pub p: usize,
    pub n: usize,
    pub convention: MeanConvention,
}

impl DimensionRatio {
    pub fn new(p: usize, n: usize, convention: MeanConvention) -> Result<Self> {
        if p == 0 || convention.effective_n(n) == 0 {
            return Err(domain(format!("dimension ratio needs p >= 1 and an effective n >= 1 (p={p}, n={n})")));
        }
        Ok(Self { p, n, convention })
    }

    pub fn known_mean(p: usize, n: usize) -> Result<Self> {
        Self::new(p, n, MeanConvention::Known)
    }

    pub fn effective_n(&self) -> usize {
        self.convention.effective_n(self.n)
    }

    pub fn y(&self) -> f64 {
        self.p as f64 / self.effective_n() as f64
    }

    pub fn h(&self) -> f64 {
        self.y().sqrt()
    }
}

impl From<&SpectralMoments> for DimensionRatio {
    fn from(m: &SpectralMoments) -> Self {
        Self { p: m.p, n: m.n, convention: m.convention }
    }
}

/// A univariate normal limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    pub mean: f64,
    pub variance: f64,
}

impl NormalLaw {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd()
    }
}

/// Limiting law of the centered CLRT statistic at `y = y_n`.
pub fn clrt_limit_law(ratio: DimensionRatio, m: MomentProfile) -> Result<NormalLaw> {
    let y = ratio.y();
    clrt_limit_law_at(y, m)
}

pub(crate) fn clrt_limit_law_at(y: f64, m: MomentProfile) -> Result<NormalLaw> {
    if !(y > 0.0 && y < 1.0) {
        return Err(SphericityError::UnsupportedRegime(format!(
            "CLRT needs 0 < p/n < 1, got {y}"
        )));
    }
    let k = m.kappa_f64();
    let l = (-y).ln_1p();
    Ok(NormalLaw {
        mean: -(k - 1.0) / 2.0 * l + 0.5 * m.beta * y,
        variance: -k * l - k * y,
    })
}

/// `(p - N) log(1 - p/N) - p`, the deterministic part added to `𝓛_n`.
pub fn clrt_centering(ratio: DimensionRatio) -> f64 {
    let p = ratio.p as f64;
    let big_n = ratio.effective_n() as f64;
    (p - big_n) * (-p / big_n).ln_1p() - p
}

/// Corrected likelihood-ratio test.
pub fn clrt_test(s: &SpectralMoments, m: MomentProfile) -> Result<TestOutcome> {
    let ratio = DimensionRatio::from(s);
    if s.p >= ratio.effective_n() {
        return Err(SphericityError::UnsupportedRegime(format!(
            "CLRT needs p < n (p = {}, effective n = {})",
            s.p,
            ratio.effective_n()
        )));
    }
    let law = clrt_limit_law(ratio, m)?;
    let stat = lrt_statistic(s)?;
    let z = law.standardize(stat.scaled + clrt_centering(ratio));
    let mut notes = Vec::new();
    if ratio.y() > CLRT_FRAGILE_RATIO {
        notes.push(OutcomeNote::RatioNearOne);
    }
    Ok(TestOutcome {
        test_id: TestId::Clrt,
        statistic: stat.scaled,
        reference_value: z,
        p_value: Probability::clamped(normal_sf(z)?)?,
        params: corrected_params(s, m),
        notes,
    })
}

/// Limiting law of `nU - p`; independent of `y`.
pub fn cj_limit_law(m: MomentProfile) -> NormalLaw {
    let k = m.kappa_f64();
    NormalLaw { mean: k + m.beta - 1.0, variance: 2.0 * k }
}

/// `p` for known mean, `np/(n-1)` otherwise.
pub fn cj_centering(p: usize, n: usize, convention: MeanConvention) -> f64 {
    let (p, nf) = (p as f64, n as f64);
    match convention {
        MeanConvention::Known => p,
        MeanConvention::Unknown => nf * p / (nf - 1.0),
    }
}

/// Corrected John's test. Valid for any `p/n`, including `p > n`.
pub fn cj_test(s: &SpectralMoments, m: MomentProfile) -> Result<TestOutcome> {
    let mut out = cj_like(s, m)?;
    out.test_id = TestId::Cj;
    Ok(out)
}

/// John's test with the Gaussian calibration `nU - p ⇒ N(1, 4)`.
pub fn lw_test(s: &SpectralMoments) -> Result<TestOutcome> {
    let mut out = cj_like(s, MomentProfile::REAL_GAUSSIAN)?;
    out.test_id = TestId::Lw;
    Ok(out)
}

fn cj_like(s: &SpectralMoments, m: MomentProfile) -> Result<TestOutcome> {
    if s.convention == MeanConvention::Unknown && s.n < 2 {
        return Err(SphericityError::InsufficientData { needed: 2, got: s.n });
    }
    let stat = john_statistic(s)?;
    let law = cj_limit_law(m);
    let z = law.standardize(s.n as f64 * stat.u - cj_centering(s.p, s.n, s.convention));
    Ok(TestOutcome {
        test_id: TestId::Cj,
        statistic: stat.u,
        reference_value: z,
        p_value: Probability::clamped(normal_sf(z)?)?,
        params: corrected_params(s, m),
        notes: Vec::new(),
    })
}

fn corrected_params(s: &SpectralMoments, m: MomentProfile) -> OutcomeParams {
    OutcomeParams {
        p: s.p,
        n: s.n,
        effective_n: s.effective_n(),
        mean_known: s.convention.is_known(),
        kappa: Some(m.kappa),
        beta: Some(m.beta),
    }
}

/// Fourth-moment estimate `β̂ = mean|y|⁴ / (mean|y|²)² - κ - 1`.
///
/// Entries are standardized by the global second moment first, so the
/// estimate does not depend on the unknown scale `σ²`. Assumes a known
/// (zero) mean; see [`estimate_beta_centered`].
pub fn estimate_beta<T: Entry>(data: &DataMatrix<T>, kappa: u8) -> Result<f64> {
    beta_from_entries(data.entries(), kappa)
}

/// As [`estimate_beta`], after removing each coordinate's sample mean.
pub fn estimate_beta_centered<T: Entry>(data: &DataMatrix<T>, kappa: u8) -> Result<f64> {
    beta_from_entries(&data.centered(), kappa)
}

fn beta_from_entries<T: Entry>(x: &DMatrix<T>, kappa: u8) -> Result<f64> {
    MomentProfile::new(kappa, 0.0)?;
    let count = x.len() as f64;
    let (mut m2, mut m4) = (0.0f64, 0.0f64);
    for v in x.iter() {
        let a = v.modulus_squared();
        m2 += a;
        m4 += a * a;
    }
    m2 /= count;
    m4 /= count;
    if !(m2 > 0.0) {
        return Err(SphericityError::DegenerateSpectrum(
            "cannot estimate beta from data with zero variance".into(),
        ));
    }
    Ok((m4 / (m2 * m2) - kappa as f64 - 1.0).max(-(kappa as f64)))
}
