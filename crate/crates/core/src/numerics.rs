//! Special functions shared by every calibration: the standard normal
//! distribution and the chi-square CDF through the regularized lower
//! incomplete gamma function.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SphericityError};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const GAMMA_MAX_ITER: usize = 10_000;
const GAMMA_EPS: f64 = 1e-16;

/// A probability in `[0, 1]` (significance levels, p-values, powers).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(domain(format!("probability must lie in [0, 1], got {value}")));
        }
        Ok(Self(value))
    }

    /// Clamps into `[0, 1]`; NaN is still rejected.
    pub fn clamped(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(domain("probability is NaN"));
        }
        Ok(Self(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = SphericityError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Chi-square degrees of freedom (strictly positive, not necessarily integral).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DegreesOfFreedom(f64);

impl DegreesOfFreedom {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(domain(format!("degrees of freedom must be positive, got {value}")));
        }
        Ok(Self(value))
    }

    /// `f = p(p+1)/2 - 1`, the number of free parameters of a covariance
    /// matrix modulo scale.
    pub fn sphericity(p: usize) -> Result<Self> {
        let p = p as f64;
        Self::new(0.5 * p * (p + 1.0) - 1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `f + k`, used by the Bartlett/Nagao expansions.
    pub fn shifted(self, k: f64) -> Self {
        Self(self.0 + k)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `Φ(x) = erfc(-x/√2) / 2`.
pub fn normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("normal_cdf needs a finite argument, got {x}")));
    }
    Ok(0.5 * libm::erfc(-x / SQRT_2))
}

/// Upper tail `1 - Φ(x)` without cancellation for large `x`.
pub fn normal_sf(x: f64) -> Result<f64> {
    normal_cdf(-x)
}

/// Inverse of the standard normal CDF.
///
/// Starts from Acklam's rational approximation (relative error ~1e-9) and
/// polishes with Halley steps against [`normal_cdf`].
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("normal_quantile needs q in (0, 1), got {q}")));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    let mut x = acklam(q);
    for _ in 0..3 {
        let e = normal_cdf(x)? - q;
        let d = normal_pdf(x);
        if d == 0.0 {
            break;
        }
        let u = e / d;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

fn acklam(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const LOW: f64 = 0.024_25;

    let tail = |t: f64| {
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    if q < LOW {
        tail((-2.0 * q.ln()).sqrt())
    } else if q > 1.0 - LOW {
        -tail((-2.0 * (1.0 - q).ln()).sqrt())
    } else {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
///
/// Power series for `x < a + 1`, modified-Lentz continued fraction for the
/// upper function otherwise.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pq(a, x)?.0)
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    Ok(gamma_pq(a, x)?.1)
}

fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && a > 0.0) {
        return Err(domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if x.is_nan() {
        return Err(domain("incomplete gamma argument is NaN"));
    }
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = -x + a * x.ln() - libm::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                let p = (log_prefactor + sum.ln()).exp().min(1.0);
                return Ok((p, 1.0 - p));
            }
        }
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                let q = (log_prefactor + h.ln()).exp().min(1.0);
                return Ok((1.0 - q, q));
            }
        }
    }
    Err(SphericityError::Numerical(format!(
        "incomplete gamma did not converge for a={a}, x={x}"
    )))
}

/// `P(χ²_f ≤ x)`; zero for `x ≤ 0`.
pub fn chisq_cdf(x: f64, f: DegreesOfFreedom) -> Result<f64> {
    regularized_gamma_p(0.5 * f.value(), 0.5 * x)
}

/// `P(χ²_f > x)`, computed directly from the upper function.
pub fn chisq_sf(x: f64, f: DegreesOfFreedom) -> Result<f64> {
    regularized_gamma_q(0.5 * f.value(), 0.5 * x)
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
