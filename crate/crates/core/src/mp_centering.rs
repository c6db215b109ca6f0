//! Marčenko–Pastur functionals used as centering terms.
//!
//! Under the null the population spectrum is `δ₁` and the centering terms are
//! integrals against the MP law `F^y`. Under a spiked alternative a finite
//! number of population eigenvalues `a_i ≠ 1` (with multiplicities `n_i`)
//! shift these terms by `O(1/p)`; remainders of order `p⁻²` are dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corrected::DimensionRatio;
use crate::error::{domain, Result, SphericityError};

/// One population spike: eigenvalue `a` repeated `multiplicity` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub a: f64,
    pub multiplicity: usize,
}

impl Spike {
    pub fn new(a: f64, multiplicity: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(domain(format!("spike value must be positive and finite, got {a}")));
        }
        if multiplicity == 0 {
            return Err(domain("spike multiplicity must be at least 1"));
        }
        Ok(Self { a, multiplicity })
    }
}

/// Parses `a:n`, or just `a` for a simple spike.
impl FromStr for Spike {
    type Err = SphericityError;
    fn from_str(s: &str) -> Result<Self> {
        let (a, n) = match s.split_once(':') {
            Some((a, n)) => (a, n),
            None => (s, "1"),
        };
        let a: f64 = a.trim().parse().map_err(|_| domain(format!("bad spike value in '{s}'")))?;
        let n: usize = n.trim().parse().map_err(|_| domain(format!("bad spike multiplicity in '{s}'")))?;
        Spike::new(a, n)
    }
}

impl fmt::Display for Spike {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.a, self.multiplicity)
    }
}

/// Population covariance `diag(a_1 I_{n_1}, ..., a_k I_{n_k}, I_{p-M})`.
/// An empty model is the null hypothesis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    spikes: Vec<Spike>,
}

impl SpikedModel {
    pub fn null() -> Self {
        Self::default()
    }

    pub fn new(spikes: Vec<Spike>) -> Self {
        Self { spikes }
    }

    pub fn single(a: f64) -> Result<Self> {
        Ok(Self { spikes: vec![Spike::new(a, 1)?] })
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    /// Total multiplicity `M = Σ n_i`.
    pub fn total_multiplicity(&self) -> usize {
        self.spikes.iter().map(|s| s.multiplicity).sum()
    }

    pub fn count(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_null(&self) -> bool {
        self.spikes.iter().all(|s| s.a == 1.0)
    }

    /// `Σ n_i φ(a_i)`.
    pub fn weighted_sum(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.spikes.iter().map(|s| s.multiplicity as f64 * phi(s.a)).sum()
    }

    /// Population eigenvalues for dimension `p`, spikes first.
    pub fn population_spectrum(&self, p: usize) -> Result<Vec<f64>> {
        let m = self.total_multiplicity();
        if m > p {
            return Err(domain(format!("spike multiplicities ({m}) exceed p = {p}")));
        }
        let mut out = Vec::with_capacity(p);
        for s in &self.spikes {
            out.extend(std::iter::repeat(s.a).take(s.multiplicity));
        }
        out.resize(p, 1.0);
        Ok(out)
    }
}

impl FromStr for SpikedModel {
    type Err = SphericityError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::null());
        }
        s.split(',').map(str::parse).collect::<Result<Vec<Spike>>>().map(Self::new)
    }
}

/// `∫ log x dF^y(x) = ((y-1)/y) log(1-y) - 1` for `0 < y < 1`.
pub fn mp_integral_log(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(domain(format!("log integral against the MP law needs 0 < y < 1, got {y}")));
    }
    Ok((y - 1.0) / y * (-y).ln_1p() - 1.0)
}

/// `∫ x dF^y(x) = 1` for every `y > 0`.
pub fn mp_integral_identity(_y: f64) -> f64 {
    1.0
}

/// `∫ x² dF^y(x) = 1 + y`.
pub fn mp_integral_square(y: f64) -> f64 {
    1.0 + y
}

fn check_spikes_fit(ratio: &DimensionRatio, s: &SpikedModel) -> Result<()> {
    if s.total_multiplicity() > ratio.p {
        return Err(domain(format!(
            "spike multiplicities ({}) exceed p = {}",
            s.total_multiplicity(),
            ratio.p
        )));
    }
    Ok(())
}

/// Centering of `p⁻¹ Σ log ℓ_i` under a spiked population:
/// `p⁻¹ Σ n_i log a_i - 1 + (1 - 1/y_n) log(1 - y_n)`.
pub fn spiked_centering_log(ratio: DimensionRatio, s: &SpikedModel) -> Result<f64> {
    check_spikes_fit(&ratio, s)?;
    let y = ratio.y();
    if y >= 1.0 {
        return Err(domain(format!("log centering needs y_n < 1, got {y}")));
    }
    Ok(s.weighted_sum(f64::ln) / ratio.p as f64 + mp_integral_log(y)?)
}

/// Centering of `p⁻¹ Σ ℓ_i`: `1 + p⁻¹ Σ n_i a_i - M/p`.
pub fn spiked_centering_x(ratio: DimensionRatio, s: &SpikedModel) -> Result<f64> {
    check_spikes_fit(&ratio, s)?;
    let p = ratio.p as f64;
    Ok(1.0 + s.weighted_sum(|a| a - 1.0) / p)
}

/// Centering of `p⁻¹ Σ ℓ_i²`:
/// `(2/n) Σ n_i a_i - 2M/n + 1 + y_n - M/p + p⁻¹ Σ n_i a_i²`.
pub fn spiked_centering_x2(ratio: DimensionRatio, s: &SpikedModel) -> Result<f64> {
    check_spikes_fit(&ratio, s)?;
    let p = ratio.p as f64;
    let n = ratio.effective_n() as f64;
    Ok(2.0 / n * s.weighted_sum(|a| a - 1.0) + mp_integral_square(ratio.y()) + s.weighted_sum(|a| a * a - 1.0) / p)
}
