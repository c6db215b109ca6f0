//! Asymptotic power of CLRT and CJ against spiked alternatives.
//!
//! Under a spiked population the limiting laws keep their variance and move
//! their mean. With `δ` the shift in standard-deviation units the power is
//! `1 - Φ(z_{1-α} - δ)`, where
//!
//! ```text
//! CLRT:  δ = Σ n_i (a_i - log a_i - 1) / sqrt(-κ log(1-y) - κy)
//! CJ:    δ = (1/y) Σ n_i (a_i - 1)² / sqrt(2κ)
//! ```
//!
//! Both are minimized (power `α`) when every `a_i = 1`, and decrease in `y`.

use serde::{Deserialize, Serialize};

use crate::corrected::{clrt_limit_law_at, cj_limit_law, DimensionRatio, MomentProfile};
use crate::error::{domain, Result};
use crate::mp_centering::SpikedModel;
use crate::numerics::{normal_quantile, normal_sf, Probability};
use crate::outcome::TestId;

fn upper_quantile(alpha: Probability) -> Result<f64> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {a}")));
    }
    Ok(-normal_quantile(a)?)
}

fn power_from_shift(alpha: Probability, delta: f64) -> Result<Probability> {
    Probability::clamped(normal_sf(upper_quantile(alpha)? - delta)?)
}

fn clrt_delta(s: &SpikedModel, y: f64, m: MomentProfile) -> Result<f64> {
    let law = clrt_limit_law_at(y, m)?;
    Ok(s.weighted_sum(|a| a - a.ln() - 1.0) / law.sd())
}

fn cj_delta(s: &SpikedModel, inv_y: f64, m: MomentProfile) -> f64 {
    inv_y * s.weighted_sum(|a| (a - 1.0).powi(2)) / cj_limit_law(m).sd()
}

/// Asymptotic CLRT power at ratio `y ∈ (0, 1)`.
pub fn clrt_power(alpha: Probability, s: &SpikedModel, y: f64, m: MomentProfile) -> Result<Probability> {
    if !(y > 0.0 && y < 1.0) {
        return Err(domain(format!("CLRT power needs 0 < y < 1, got {y}")));
    }
    power_from_shift(alpha, clrt_delta(s, y, m)?)
}

/// Asymptotic CJ power at ratio `y > 0`.
pub fn cj_power(alpha: Probability, s: &SpikedModel, y: f64, m: MomentProfile) -> Result<Probability> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(domain(format!("CJ power needs y > 0, got {y}")));
    }
    power_from_shift(alpha, cj_delta(s, 1.0 / y, m))
}

/// CLRT power predicted at a finite `(p, n)`, using `y_n`.
pub fn clrt_power_finite(alpha: Probability, s: &SpikedModel, ratio: DimensionRatio, m: MomentProfile) -> Result<Probability> {
    clrt_power(alpha, s, ratio.y(), m)
}

/// CJ power predicted at a finite `(p, n)`, with the literal factor `n/p`.
pub fn cj_power_finite(alpha: Probability, s: &SpikedModel, ratio: DimensionRatio, m: MomentProfile) -> Result<Probability> {
    let inv_y = ratio.effective_n() as f64 / ratio.p as f64;
    power_from_shift(alpha, cj_delta(s, inv_y, m))
}

/// Mean shifts of the two null laws under a spiked population.
///
/// Under the alternative, `𝓛_n + (p - N) log(1 - p/N) - p + clrt_shift` and
/// `nU - p - cj_shift` have the null limiting laws. The same shifts apply
/// with an unknown mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedNullLaws {
    pub clrt_shift: f64,
    pub cj_shift: f64,
}

pub fn shifted_null_laws(ratio: DimensionRatio, s: &SpikedModel, m: MomentProfile) -> Result<ShiftedNullLaws> {
    // Validates the profile even though the shifts do not depend on it.
    MomentProfile::new(m.kappa(), m.beta())?;
    s.population_spectrum(ratio.p)?;
    Ok(ShiftedNullLaws {
        clrt_shift: s.weighted_sum(|a| a.ln() - a + 1.0),
        cj_shift: ratio.effective_n() as f64 / ratio.p as f64 * s.weighted_sum(|a| (a - 1.0).powi(2)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    pub y: f64,
    pub alpha: Probability,
    pub power: Probability,
    pub test_id: TestId,
}

/// Power of CLRT or CJ along a grid of ratios.
pub fn power_curve(
    test_id: TestId,
    alpha: Probability,
    s: &SpikedModel,
    m: MomentProfile,
    y_grid: &[f64],
) -> Result<Vec<PowerCurvePoint>> {
    let f = match test_id {
        TestId::Clrt => clrt_power,
        TestId::Cj => cj_power,
        other => return Err(domain(format!("no power formula for {other}; use clrt or cj"))),
    };
    y_grid
        .iter()
        .map(|&y| Ok(PowerCurvePoint { y, alpha, power: f(alpha, s, y, m)?, test_id }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp_centering::Spike;
    use crate::spectra::MeanConvention;
    use proptest::prelude::*;

    fn alpha() -> Probability {
        Probability::new(0.05).unwrap()
    }

    const G: MomentProfile = MomentProfile::REAL_GAUSSIAN;

    #[test]
    fn single_spike_examples() {
        let s = SpikedModel::single(2.5).unwrap();
        // Independent evaluation: δ = (1.5 - ln 2.5) / sqrt(2 ln 2 - 1) and δ = 2.25 / 2 / 0.5.
        let d1 = (1.5 - 2.5f64.ln()) / (2.0 * 2f64.ln() - 1.0).sqrt();
        assert!((d1 - 0.939_155).abs() < 1e-6);
        let p1 = clrt_power(alpha(), &s, 0.5, G).unwrap().value();
        assert!((p1 - 0.240).abs() < 1e-3, "{p1}");
        assert!((p1 - 0.240_188).abs() < 1e-6, "{p1}");
        let p2 = cj_power(alpha(), &s, 0.5, G).unwrap().value();
        assert!((p2 - 0.727).abs() < 1e-3, "{p2}");
        assert!((p2 - 0.727_459).abs() < 1e-6, "{p2}");
    }

    #[test]
    fn null_and_limits() {
        let unit = SpikedModel::new(vec![Spike::new(1.0, 3).unwrap()]);
        for y in [0.1, 0.5, 0.9] {
            assert!((clrt_power(alpha(), &unit, y, G).unwrap().value() - 0.05).abs() <= 1e-12);
            assert!((cj_power(alpha(), &SpikedModel::null(), y, G).unwrap().value() - 0.05).abs() <= 1e-12);
        }
        let s = SpikedModel::single(2.5).unwrap();
        assert!((clrt_power(alpha(), &s, 1.0 - 1e-12, G).unwrap().value() - 0.05) < 0.02);
        assert!((cj_power(alpha(), &s, 1e9, G).unwrap().value() - 0.05).abs() < 1e-6);
        assert!(clrt_power(alpha(), &s, 1e-4, G).unwrap().value() > 1.0 - 1e-9);
        assert!(cj_power(alpha(), &s, 1e-4, G).unwrap().value() > 1.0 - 1e-9);
        assert!(clrt_power(alpha(), &s, 1.0, G).is_err());
        assert!(cj_power(alpha(), &s, 0.0, G).is_err());
    }

    #[test]
    fn curves_decrease_in_y() {
        let s = SpikedModel::single(2.5).unwrap();
        let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let c = power_curve(TestId::Clrt, alpha(), &s, G, &grid).unwrap();
        assert!(c.windows(2).all(|w| w[1].power.value() < w[0].power.value()));
        let c = power_curve(TestId::Cj, alpha(), &s, G, &[0.5, 1.0, 2.0, 5.0]).unwrap();
        assert!(c.windows(2).all(|w| w[1].power.value() < w[0].power.value()));
        assert!(power_curve(TestId::John, alpha(), &s, G, &grid).is_err());
    }

    #[test]
    fn shift_examples() {
        let r = DimensionRatio::known_mean(32, 64).unwrap();
        let z = shifted_null_laws(r, &SpikedModel::null(), G).unwrap();
        assert_eq!((z.clrt_shift, z.cj_shift), (0.0, 0.0));
        let z = shifted_null_laws(r, &SpikedModel::single(2.5).unwrap(), G).unwrap();
        assert!((z.clrt_shift - (2.5f64.ln() - 1.5)).abs() < 1e-15);
        assert!((z.clrt_shift + 0.58371).abs() < 1e-5);
        assert!((z.cj_shift - 4.5).abs() < 1e-15);
        let unit = SpikedModel::new(vec![Spike::new(1.0, 2).unwrap()]);
        let z = shifted_null_laws(r, &unit, G).unwrap();
        assert_eq!((z.clrt_shift, z.cj_shift), (0.0, 0.0));
    }

    #[test]
    fn unknown_mean_reuses_shifts() {
        let s = SpikedModel::single(2.5).unwrap();
        let known = shifted_null_laws(DimensionRatio::known_mean(32, 64).unwrap(), &s, G).unwrap();
        let unknown =
            shifted_null_laws(DimensionRatio::new(32, 65, MeanConvention::Unknown).unwrap(), &s, G).unwrap();
        assert_eq!(known, unknown);
    }

    #[test]
    fn finite_and_theoretical_agree_at_matching_ratio() {
        let s = SpikedModel::single(2.5).unwrap();
        let r = DimensionRatio::known_mean(256, 512).unwrap();
        assert_eq!(clrt_power_finite(alpha(), &s, r, G).unwrap(), clrt_power(alpha(), &s, 0.5, G).unwrap());
        assert_eq!(cj_power_finite(alpha(), &s, r, G).unwrap(), cj_power(alpha(), &s, 0.5, G).unwrap());
    }

    proptest! {
        #[test]
        fn power_grows_as_spike_leaves_one(y in 0.05f64..0.95, a in 1.0f64..6.0, step in 0.0f64..2.0) {
            let near = SpikedModel::single(a).unwrap();
            let far = SpikedModel::single(a + step).unwrap();
            prop_assert!(clrt_power(alpha(), &far, y, G).unwrap().value() >= clrt_power(alpha(), &near, y, G).unwrap().value());
            prop_assert!(cj_power(alpha(), &far, y, G).unwrap().value() >= cj_power(alpha(), &near, y, G).unwrap().value());
            let lo_near = SpikedModel::single(1.0 / a).unwrap();
            let lo_far = SpikedModel::single(1.0 / (a + step)).unwrap();
            prop_assert!(clrt_power(alpha(), &lo_far, y, G).unwrap().value() >= clrt_power(alpha(), &lo_near, y, G).unwrap().value());
            prop_assert!(cj_power(alpha(), &lo_far, y, G).unwrap().value() >= cj_power(alpha(), &lo_near, y, G).unwrap().value());
        }

        #[test]
        fn power_is_a_probability(y in 0.01f64..0.99, a in 0.01f64..50.0, mult in 1usize..5) {
            let s = SpikedModel::new(vec![Spike::new(a, mult).unwrap()]);
            for p in [clrt_power(alpha(), &s, y, G).unwrap(), cj_power(alpha(), &s, y, G).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&p.value()));
                prop_assert!(p.value() >= 0.05 - 1e-12);
            }
        }
    }
}
