use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, SphericityError};
use crate::numerics::Probability;

/// The seven sphericity tests provided by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestId {
    Lrt,
    Bblrt,
    John,
    Nagao,
    Clrt,
    Cj,
    Lw,
}

impl TestId {
    pub const ALL: [TestId; 7] = [
        TestId::Lrt,
        TestId::Bblrt,
        TestId::John,
        TestId::Nagao,
        TestId::Clrt,
        TestId::Cj,
        TestId::Lw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::Lrt => "lrt",
            TestId::Bblrt => "bblrt",
            TestId::John => "john",
            TestId::Nagao => "nagao",
            TestId::Clrt => "clrt",
            TestId::Cj => "cj",
            TestId::Lw => "lw",
        }
    }

    /// Whether the statistic involves `log det S` (and hence needs `p < n`).
    pub fn needs_log_det(self) -> bool {
        matches!(self, TestId::Lrt | TestId::Bblrt | TestId::Clrt)
    }

    /// Whether the calibration depends on the fourth-moment profile.
    pub fn uses_moments(self) -> bool {
        matches!(self, TestId::Clrt | TestId::Cj)
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = SphericityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| domain(format!("unknown test '{s}'")))
    }
}

/// Conditions attached to an outcome that a caller may want to surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeNote {
    /// An asymptotic expansion left [0, 1] and was clamped.
    ExpansionClamped,
    /// `p / n` is in (0.98, 1): the CLRT calibration is finite-sample fragile.
    RatioNearOne,
}

/// The calibration inputs recorded with every outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub p: usize,
    pub n: usize,
    pub effective_n: usize,
    pub mean_known: bool,
    pub kappa: Option<u8>,
    pub beta: Option<f64>,
}

/// Result of one sphericity test.
///
/// `statistic` is the raw test statistic (`-2 log L_n`, `T₂`, `𝓛_n` or `U`);
/// `reference_value` is the quantity compared with the reference law: a
/// chi-square value for the classical tests, a standardized z for the
/// corrected ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: TestId,
    pub statistic: f64,
    pub reference_value: f64,
    pub p_value: Probability,
    pub params: OutcomeParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<OutcomeNote>,
}

impl TestOutcome {
    /// Upper-tail decision at level `alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value.value() < alpha
    }
}
