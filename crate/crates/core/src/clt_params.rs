//! Mean and covariance of the Gaussian limit of linear spectral statistics.
//!
//! For integrands `f, g` analytic near the MP support, with `h = √y`,
//!
//! ```text
//! E[X_f]        = (κ - 1) I₁(f) + β I₂(f)
//! Cov(X_f, X_g) = κ J₁(f, g) + β J₂(f, g)
//! ```
//!
//! where the four integrals are contour integrals over `|ξ| = 1` of
//! `f(|1 + hξ|²)` against simple kernels. On the unit circle
//! `|1 + hξ|² = 1 + h² + h(ξ + 1/ξ)`, so with `c_k` the Laurent coefficients of
//! `ξ ↦ f(|1 + hξ|²)` (and `d_k` those of `g`) the integrals reduce to
//!
//! ```text
//! I₁(f, r) = Σ_{m≥1} c_{2m} r^{-2m}      I₂(f)    = c₂
//! J₁(f,g,r) = Σ_{k≥1} k c_k d_k r^{-k-1}  J₂(f, g) = c₁ d₁
//! ```
//!
//! and the `r ↓ 1` limits are the sums at `r = 1`. The numeric oracle computes
//! `c_k` by FFT and cross-checks against direct trapezoidal quadrature of the
//! original contour integrals at each `r` of [`ContourSpec::r_sequence`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::corrected::MomentProfile;
use crate::error::{domain, Result, SphericityError};

/// Integrands of a linear spectral statistic `Σ f(ℓ_i)`.
#[derive(Clone)]
pub enum IntegrandId {
    /// `log x`
    Log,
    /// `x`
    Id,
    /// `x²`
    Square,
    /// Any function finite on `[(1 - √y)², (1 + √y)²]`. Must be callable from
    /// several threads.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl IntegrandId {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        IntegrandId::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            IntegrandId::Log => x.ln(),
            IntegrandId::Id => x,
            IntegrandId::Square => x * x,
            IntegrandId::Custom(f) => f(x),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self, IntegrandId::Custom(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            IntegrandId::Log => "log",
            IntegrandId::Id => "id",
            IntegrandId::Square => "square",
            IntegrandId::Custom(_) => "custom",
        }
    }
}

impl fmt::Debug for IntegrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Quadrature settings for the numeric oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourSpec {
    /// Radii `> 1` at which the series is checked against direct quadrature.
    pub r_sequence: Vec<f64>,
    /// Points on the unit circle; a power of two, at least 256.
    pub quadrature_points: usize,
    /// Bound on the imaginary residual and the truncated series tail.
    pub tolerance: f64,
    /// Bound on the disagreement between series and direct quadrature,
    /// relative to `max(1, |value|)`.
    pub cross_check_tolerance: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self {
            r_sequence: vec![1.1, 1.05, 1.025, 1.0125],
            quadrature_points: 2048,
            tolerance: 1e-8,
            cross_check_tolerance: 1e-6,
        }
    }
}

impl ContourSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.quadrature_points;
        if n < 256 || !n.is_power_of_two() {
            return Err(SphericityError::Configuration(format!(
                "quadrature points must be a power of two >= 256, got {n}"
            )));
        }
        if let Some(r) = self.r_sequence.iter().find(|&&r| !(r > 1.0 && r.is_finite())) {
            return Err(SphericityError::Configuration(format!("contour radii must exceed 1, got {r}")));
        }
        if !(self.tolerance > 0.0 && self.cross_check_tolerance > 0.0) {
            return Err(SphericityError::Configuration("tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn check_closed(f: &IntegrandId) -> Result<()> {
    if f.has_closed_form() {
        Ok(())
    } else {
        Err(domain("no closed form for a custom integrand; use numeric_contour_params"))
    }
}

fn check_y_r(y: f64, r: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(domain(format!("y must be positive, got {y}")));
    }
    if !(r >= 1.0 && r.is_finite()) {
        return Err(domain(format!("contour radius must be >= 1, got {r}")));
    }
    Ok(y.sqrt())
}

fn log_needs_small_y(y: f64, r: f64) -> Result<()> {
    if y >= r {
        return Err(domain(format!("log integrand needs y < r (y = {y}, r = {r})")));
    }
    Ok(())
}

/// `I₁(f, r)`; `r = 1` gives the limit `I₁(f)`.
pub fn closed_i1(f: &IntegrandId, y: f64, r: f64) -> Result<f64> {
    check_closed(f)?;
    let h = check_y_r(y, r)?;
    let h2r2 = h * h / (r * r);
    Ok(match f {
        IntegrandId::Log => {
            log_needs_small_y(y, r * r)?;
            0.5 * (-h2r2).ln_1p()
        }
        IntegrandId::Id => 0.0,
        IntegrandId::Square => h2r2,
        IntegrandId::Custom(_) => unreachable!(),
    })
}

pub fn closed_i2(f: &IntegrandId, y: f64) -> Result<f64> {
    check_closed(f)?;
    let h = check_y_r(y, 1.0)?;
    Ok(match f {
        IntegrandId::Log => -0.5 * h * h,
        IntegrandId::Id => 0.0,
        IntegrandId::Square => h * h,
        IntegrandId::Custom(_) => unreachable!(),
    })
}

/// `J₁(f, g, r)`; `r = 1` gives the limit `J₁(f, g)`. Symmetric in `(f, g)`.
pub fn closed_j1(f: &IntegrandId, g: &IntegrandId, y: f64, r: f64) -> Result<f64> {
    use IntegrandId::*;
    check_closed(f)?;
    check_closed(g)?;
    let h = check_y_r(y, r)?;
    let (h2, h4) = (h * h, h.powi(4));
    let r2 = r * r;
    let r3 = r2 * r;
    Ok(match (f, g) {
        (Log, Log) => {
            log_needs_small_y(y, r)?;
            -(-h2 / r).ln_1p() / r
        }
        (Log, Id) | (Id, Log) | (Id, Id) => h2 / r2,
        (Square, Id) | (Id, Square) => (2.0 * h2 + 2.0 * h4) / r2,
        (Square, Square) => (2.0 * h4 + (2.0 * h + 2.0 * h * h2).powi(2) * r) / r3,
        (Log, Square) | (Square, Log) => 2.0 * h2 * (1.0 + h2) / r2 - h4 / r3,
        _ => unreachable!(),
    })
}

/// `J₂(f, g) = s_f s_g` with `s_Log = h`, `s_Id = h`, `s_Square = 2h + 2h³`.
pub fn closed_j2(f: &IntegrandId, g: &IntegrandId, y: f64) -> Result<f64> {
    Ok(closed_single_factor(f, y)? * closed_single_factor(g, y)?)
}

/// The single-contour factor `s_f = (1/2πi) ∮ f(|1+hξ|²) ξ⁻² dξ`.
pub fn closed_single_factor(f: &IntegrandId, y: f64) -> Result<f64> {
    check_closed(f)?;
    let h = check_y_r(y, 1.0)?;
    Ok(match f {
        IntegrandId::Log | IntegrandId::Id => h,
        IntegrandId::Square => 2.0 * h + 2.0 * h.powi(3),
        IntegrandId::Custom(_) => unreachable!(),
    })
}

/// Output of [`numeric_contour_params`]. `i1` and `i2` refer to `f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourEstimate {
    pub i1: f64,
    pub i2: f64,
    pub j1: f64,
    pub j2: f64,
    /// `I₁(f, r)` and `J₁(f, g, r)` along the radius sequence.
    pub along_r: Vec<(f64, f64, f64)>,
    /// Largest imaginary part (or asymmetry) among the Laurent coefficients.
    pub imaginary_residual: f64,
    /// Largest coefficient magnitude in the upper half of the retained band.
    pub truncation_residual: f64,
    /// Largest relative series-vs-direct-quadrature discrepancy along the radii.
    pub cross_check_residual: f64,
}

/// Laurent coefficients `c_0..c_{N/2}` of `ξ ↦ f(|1 + hξ|²)` on the unit circle.
struct Laurent {
    coeffs: Vec<f64>,
    samples: Vec<f64>,
    imaginary_residual: f64,
    truncation_residual: f64,
}

fn unit_circle(n: usize) -> Vec<Complex<f64>> {
    (0..n).map(|j| Complex::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).collect()
}

fn laurent(f: &IntegrandId, h: f64, circle: &[Complex<f64>], planner: &mut FftPlanner<f64>) -> Result<Laurent> {
    let n = circle.len();
    let samples: Vec<f64> = circle.iter().map(|xi| f.eval(1.0 + h * h + 2.0 * h * xi.re)).collect();
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(domain(format!("{} integrand is not finite on the contour ({bad})", f.name())));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let half = n / 2;
    let mut imaginary_residual = 0.0f64;
    let mut coeffs = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let ck = buf[k] * scale;
        let cmk = buf[(n - k) % n] * scale;
        imaginary_residual = imaginary_residual.max(ck.im.abs()).max((ck - cmk).norm());
        coeffs.push(ck.re);
    }
    let truncation_residual = coeffs[half / 2..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    Ok(Laurent { coeffs, samples, imaginary_residual, truncation_residual })
}

fn series_i1(c: &[f64], r: f64) -> f64 {
    let q = 1.0 / (r * r);
    let mut w = 1.0;
    let mut acc = 0.0;
    for m in 1..c.len().div_ceil(2) {
        w *= q;
        acc += c[2 * m] * w;
    }
    acc
}

fn series_j1(c: &[f64], d: &[f64], r: f64) -> f64 {
    let mut w = 1.0 / r;
    let mut acc = 0.0;
    for k in 1..c.len().min(d.len()) {
        w /= r;
        acc += k as f64 * c[k] * d[k] * w;
    }
    acc
}

/// `(1/2πi) ∮ F(ξ) [ξ/(ξ² - r⁻²) - 1/ξ] dξ` by the trapezoid rule in θ.
fn direct_i1(samples: &[f64], circle: &[Complex<f64>], r: f64) -> Complex<f64> {
    let r2inv = 1.0 / (r * r);
    let acc: Complex<f64> = samples
        .iter()
        .zip(circle)
        .map(|(&fv, &xi)| fv * (xi * xi / (xi * xi - r2inv) - 1.0))
        .sum();
    acc / samples.len() as f64
}

/// `-(1/4π²) ∮∮ F(ξ₁) G(ξ₂) / (ξ₁ - rξ₂)² dξ₁ dξ₂` on an `N × N` grid.
fn direct_j1(fs: &[f64], gs: &[f64], circle: &[Complex<f64>], r: f64) -> Complex<f64> {
    let n = circle.len();
    // The kernel ξ_j ξ_l / (ξ_j - r ξ_l)² depends only on j - l (mod N).
    let kernel: Vec<Complex<f64>> = circle
        .iter()
        .map(|&w| {
            let d = w - r;
            w / (d * d)
        })
        .collect();
    let mut acc = Complex::new(0.0, 0.0);
    for (l, &g) in gs.iter().enumerate() {
        let mut inner = Complex::new(0.0, 0.0);
        for (j, &f) in fs.iter().enumerate() {
            inner += f * kernel[(j + n - l) % n];
        }
        acc += g * inner;
    }
    acc / (n * n) as f64
}

/// Numeric `I₁(f)`, `I₂(f)`, `J₁(f, g)`, `J₂(f, g)` for arbitrary integrands.
///
/// Fails with [`SphericityError::Accuracy`] when the imaginary residual or the
/// series tail exceeds `spec.tolerance`, or when the series and the direct
/// quadrature disagree at some radius by more than `spec.cross_check_tolerance`.
pub fn numeric_contour_params(f: &IntegrandId, g: &IntegrandId, y: f64, spec: &ContourSpec) -> Result<ContourEstimate> {
    spec.validate()?;
    let h = check_y_r(y, 1.0)?;
    let circle = unit_circle(spec.quadrature_points);
    let mut planner = FftPlanner::new();
    let lf = laurent(f, h, &circle, &mut planner)?;
    let lg = laurent(g, h, &circle, &mut planner)?;
    let imaginary_residual = lf.imaginary_residual.max(lg.imaginary_residual);
    let truncation_residual = lf.truncation_residual.max(lg.truncation_residual);
    for (residual, what) in [(imaginary_residual, "imaginary part"), (truncation_residual, "series tail")] {
        if residual > spec.tolerance {
            return Err(SphericityError::Accuracy {
                residual,
                detail: format!("{what} too large for ({:?}, {:?}) at y = {y}", f, g),
            });
        }
    }

    let (c, d) = (&lf.coeffs, &lg.coeffs);
    let mut along_r = Vec::with_capacity(spec.r_sequence.len());
    let mut cross_check_residual = 0.0f64;
    for &r in &spec.r_sequence {
        let (i1, j1) = (series_i1(c, r), series_j1(c, d, r));
        let di1 = direct_i1(&lf.samples, &circle, r);
        let dj1 = direct_j1(&lf.samples, &lg.samples, &circle, r);
        let rel = |x: Complex<f64>, want: f64| (x - want).norm() / want.abs().max(1.0);
        cross_check_residual = cross_check_residual.max(rel(di1, i1)).max(rel(dj1, j1));
        along_r.push((r, i1, j1));
    }
    if cross_check_residual > spec.cross_check_tolerance {
        return Err(SphericityError::Accuracy {
            residual: cross_check_residual,
            detail: format!("series and direct quadrature disagree for ({:?}, {:?}) at y = {y}", f, g),
        });
    }

    Ok(ContourEstimate {
        i1: series_i1(c, 1.0),
        i2: c[2],
        j1: series_j1(c, d, 1.0),
        j2: c[1] * d[1],
        along_r,
        imaginary_residual,
        truncation_residual,
        cross_check_residual,
    })
}

/// Joint Gaussian limit of `(X_{f_1}, ..., X_{f_k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Mean vector and covariance matrix for the integrands `fs` at ratio `y`.
/// Closed forms are used when available, the numeric oracle otherwise.
pub fn assemble_limit_law(fs: &[IntegrandId], y: f64, m: MomentProfile) -> Result<LimitLaw> {
    let k = fs.len();
    let (kappa, beta) = (m.kappa_f64(), m.beta());
    let spec = ContourSpec::default();
    let mut mean = DVector::zeros(k);
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (i1, i2, j1, j2) = if fs[a].has_closed_form() && fs[b].has_closed_form() {
                (
                    closed_i1(&fs[a], y, 1.0)?,
                    closed_i2(&fs[a], y)?,
                    closed_j1(&fs[a], &fs[b], y, 1.0)?,
                    closed_j2(&fs[a], &fs[b], y)?,
                )
            } else {
                let e = numeric_contour_params(&fs[a], &fs[b], y, &spec)?;
                (e.i1, e.i2, e.j1, e.j2)
            };
            if a == b {
                mean[a] = (kappa - 1.0) * i1 + beta * i2;
            }
            let v = kappa * j1 + beta * j2;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(LimitLaw { mean, cov })
}
