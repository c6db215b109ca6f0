//! Fixed-dimension calibrations: the likelihood-ratio test with its
//! chi-square limit and Box–Bartlett correction, and John's test with its
//! chi-square limit and Nagao's `O(n⁻¹)` expansion.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SphericityError};
use crate::numerics::{chisq_cdf, chisq_sf, DegreesOfFreedom, Probability};
use crate::outcome::{OutcomeNote, OutcomeParams, TestId, TestOutcome};
use crate::spectra::SpectralMoments;

/// `𝓛_n = p log ℓ̄ - Σ log ℓᵢ` and `-2 log L_n = N 𝓛_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtStatistic {
    pub scaled: f64,
    pub minus_two_log_l: f64,
}

pub fn lrt_statistic(m: &SpectralMoments) -> Result<LrtStatistic> {
    let sum_log = m.require_log()?;
    let mean = m.require_positive_mean()?;
    let p = m.p as f64;
    // AM ≥ GM; tiny negative values are round-off.
    let scaled = (p * mean.ln() - sum_log).max(0.0);
    Ok(LrtStatistic { scaled, minus_two_log_l: m.effective_n() as f64 * scaled })
}

/// John's statistic and its normalized form `U = 2(np)⁻¹ T₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JohnStatistic {
    pub t2: f64,
    pub u: f64,
}

pub fn john_statistic(m: &SpectralMoments) -> Result<JohnStatistic> {
    let mean = m.require_positive_mean()?;
    let p = m.p as f64;
    let u = ((m.sum_sq / p) / (mean * mean) - 1.0).max(0.0);
    Ok(JohnStatistic { t2: 0.5 * m.effective_n() as f64 * p * u, u })
}

/// Box–Bartlett constants for `-2ρ log L_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BblrtCoefficients {
    pub rho: f64,
    pub omega2: f64,
    pub f: DegreesOfFreedom,
}

impl BblrtCoefficients {
    pub fn new(p: usize, n: usize) -> Result<Self> {
        if p < 2 || n == 0 {
            return Err(domain("Box–Bartlett correction needs p >= 2 and n >= 1"));
        }
        let pf = p as f64;
        let nf = n as f64;
        let rho = 1.0 - (2.0 * pf * pf + pf + 2.0) / (6.0 * pf * nf);
        let omega2 = (pf + 2.0) * (pf - 1.0) * (pf - 2.0) * (2.0 * pf.powi(3) + 6.0 * pf * pf + 3.0 * pf + 2.0)
            / (288.0 * pf * pf * nf * nf * rho * rho);
        Ok(Self { rho, omega2, f: DegreesOfFreedom::sphericity(p)? })
    }

    /// `P_f(x) + ω₂ (P_{f+4}(x) - P_f(x))`, not clamped.
    pub fn expansion_cdf(&self, x: f64) -> Result<f64> {
        let pf = chisq_cdf(x, self.f)?;
        Ok(pf + self.omega2 * (chisq_cdf(x, self.f.shifted(4.0))? - pf))
    }
}

/// Coefficients of the `n⁻¹` term in Nagao's expansion of `P(T₂ ≤ x)`.
///
/// They sum to zero identically in `p`, so the expansion tends to one as
/// `x → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NagaoCoefficients {
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    pub d_p: f64,
    pub f: DegreesOfFreedom,
}

impl NagaoCoefficients {
    pub fn new(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(domain("Nagao's expansion needs p >= 2"));
        }
        let p_ = p as f64;
        let (p2, p3, inv) = (p_ * p_, p_ * p_ * p_, 1.0 / p_);
        Ok(Self {
            a_p: (p3 + 3.0 * p2 - 8.0 * p_ - 12.0 - 200.0 * inv) / 12.0,
            b_p: (-2.0 * p3 - 5.0 * p2 + 7.0 * p_ + 12.0 + 420.0 * inv) / 8.0,
            c_p: (p3 + 2.0 * p2 - p_ - 2.0 - 216.0 * inv) / 4.0,
            d_p: (-2.0 * p3 - 3.0 * p2 + p_ + 436.0 * inv) / 24.0,
            f: DegreesOfFreedom::sphericity(p)?,
        })
    }

    /// `P_f + n⁻¹ (a P_{f+6} + b P_{f+4} + c P_{f+2} + d P_f)`, not clamped.
    pub fn expansion_cdf(&self, x: f64, n: usize) -> Result<f64> {
        let f = self.f;
        let pf = chisq_cdf(x, f)?;
        let correction = self.a_p * chisq_cdf(x, f.shifted(6.0))?
            + self.b_p * chisq_cdf(x, f.shifted(4.0))?
            + self.c_p * chisq_cdf(x, f.shifted(2.0))?
            + self.d_p * pf;
        Ok(pf + correction / n as f64)
    }
}

fn params(m: &SpectralMoments) -> OutcomeParams {
    OutcomeParams {
        p: m.p,
        n: m.n,
        effective_n: m.effective_n(),
        mean_known: m.convention.is_known(),
        kappa: None,
        beta: None,
    }
}

fn check_classical(m: &SpectralMoments, needs_log: bool) -> Result<()> {
    if m.p < 2 {
        return Err(domain("classical sphericity tests need p >= 2"));
    }
    if needs_log && m.p > m.effective_n() {
        return Err(SphericityError::UnsupportedRegime(format!(
            "likelihood-ratio statistics need p <= n (p = {}, effective n = {})",
            m.p,
            m.effective_n()
        )));
    }
    Ok(())
}

/// Upper-tail p-value from an expansion "CDF", clamped into [0, 1].
fn expansion_p_value(cdf: f64, notes: &mut Vec<OutcomeNote>) -> Result<Probability> {
    if !(0.0..=1.0).contains(&cdf) {
        notes.push(OutcomeNote::ExpansionClamped);
    }
    Probability::clamped(1.0 - cdf)
}

/// `-2 log L_n` against `χ²_f`.
pub fn lrt_test(m: &SpectralMoments) -> Result<TestOutcome> {
    check_classical(m, true)?;
    let stat = lrt_statistic(m)?;
    let f = DegreesOfFreedom::sphericity(m.p)?;
    Ok(TestOutcome {
        test_id: TestId::Lrt,
        statistic: stat.minus_two_log_l,
        reference_value: stat.minus_two_log_l,
        p_value: Probability::clamped(chisq_sf(stat.minus_two_log_l, f)?)?,
        params: params(m),
        notes: Vec::new(),
    })
}

/// Box–Bartlett corrected likelihood-ratio test.
pub fn bblrt_test(m: &SpectralMoments) -> Result<TestOutcome> {
    check_classical(m, true)?;
    let stat = lrt_statistic(m)?;
    let coef = BblrtCoefficients::new(m.p, m.effective_n())?;
    let x = coef.rho * stat.minus_two_log_l;
    let mut notes = Vec::new();
    let p_value = expansion_p_value(coef.expansion_cdf(x)?, &mut notes)?;
    Ok(TestOutcome {
        test_id: TestId::Bblrt,
        statistic: stat.minus_two_log_l,
        reference_value: x,
        p_value,
        params: params(m),
        notes,
    })
}

/// John's test with the `χ²_f` limit of `T₂`.
pub fn john_chisq_test(m: &SpectralMoments) -> Result<TestOutcome> {
    check_classical(m, false)?;
    let stat = john_statistic(m)?;
    let f = DegreesOfFreedom::sphericity(m.p)?;
    Ok(TestOutcome {
        test_id: TestId::John,
        statistic: stat.t2,
        reference_value: stat.t2,
        p_value: Probability::clamped(chisq_sf(stat.t2, f)?)?,
        params: params(m),
        notes: Vec::new(),
    })
}

/// John's statistic calibrated with Nagao's expansion.
pub fn nagao_test(m: &SpectralMoments) -> Result<TestOutcome> {
    check_classical(m, false)?;
    let stat = john_statistic(m)?;
    let coef = NagaoCoefficients::new(m.p)?;
    let mut notes = Vec::new();
    let p_value = expansion_p_value(coef.expansion_cdf(stat.t2, m.effective_n())?, &mut notes)?;
    Ok(TestOutcome {
        test_id: TestId::Nagao,
        statistic: stat.t2,
        reference_value: stat.t2,
        p_value,
        params: params(m),
        notes,
    })
}
