//! Sphericity tests for high-dimensional covariance matrices.
//!
//! The classical likelihood-ratio and John tests with their chi-square
//! calibrations, plus corrected versions whose normal calibrations hold when
//! `p` grows with `n` and the data are not Gaussian.

pub mod classical;
pub mod clt_params;
pub mod corrected;
pub mod error;
pub mod numerics;
pub mod montecarlo;
pub mod mp_centering;
pub mod outcome;
pub mod power;
pub mod spectra;

pub use error::{Result, SphericityError};
pub use outcome::{OutcomeNote, OutcomeParams, TestId, TestOutcome};

use corrected::MomentProfile;
use spectra::SpectralMoments;

/// Runs `test` on precomputed spectral moments. `profile` is used by CLRT and
/// CJ only.
pub fn run_test(test: TestId, moments: &SpectralMoments, profile: MomentProfile) -> Result<TestOutcome> {
    match test {
        TestId::Lrt => classical::lrt_test(moments),
        TestId::Bblrt => classical::bblrt_test(moments),
        TestId::John => classical::john_chisq_test(moments),
        TestId::Nagao => classical::nagao_test(moments),
        TestId::Clrt => corrected::clrt_test(moments, profile),
        TestId::Cj => corrected::cj_test(moments, profile),
        TestId::Lw => corrected::lw_test(moments),
    }
}
