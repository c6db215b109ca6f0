//! Monte-Carlo estimation of empirical size and power.
//!
//! One experiment is a cell `(scenario, design, p, n)` evaluated for one or
//! more tests on the same draws. Replication `i` of a cell draws from a
//! ChaCha8 stream keyed by `(master_seed, cell tag)` with stream number `i`,
//! so results do not depend on scheduling or on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrected::{estimate_beta, estimate_beta_centered, MomentProfile};
use crate::error::{domain, Result, SphericityError};
use crate::mp_centering::SpikedModel;
use crate::numerics::Probability;
use crate::outcome::TestId;
use crate::run_test;
use crate::spectra::{DataMatrix, MeanConvention, SpectralMoments};

/// Entry distribution of the simulated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `N(0, 1)`: `κ = 2`, `β = 0`.
    StandardNormal,
    /// Gamma with shape 4 and rate 2, shifted by -2: mean 0, variance 1,
    /// fourth moment 4.5, so `β = 1.5`.
    Gamma42Shifted,
}

impl Scenario {
    pub fn moment_profile(self) -> MomentProfile {
        match self {
            Scenario::StandardNormal => MomentProfile::REAL_GAUSSIAN,
            Scenario::Gamma42Shifted => MomentProfile::real(1.5).expect("valid profile"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::StandardNormal => "normal",
            Scenario::Gamma42Shifted => "gamma",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = SphericityError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Scenario::StandardNormal),
            "gamma" => Ok(Scenario::Gamma42Shifted),
            _ => Err(domain(format!("unknown scenario '{s}' (expected normal or gamma)"))),
        }
    }
}

enum Sampler {
    Normal,
    Gamma(Gamma<f64>),
}

impl Sampler {
    fn new(s: Scenario) -> Self {
        match s {
            Scenario::StandardNormal => Sampler::Normal,
            Scenario::Gamma42Shifted => Sampler::Gamma(Gamma::new(4.0, 0.5).expect("valid gamma")),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal => StandardNormal.sample(rng),
            Sampler::Gamma(g) => g.sample(rng) - 2.0,
        }
    }
}

/// Population covariance `Σ_p`, always diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternativeDesign {
    Null,
    /// First `⌊p/2⌋` diagonal entries 0.5, the rest 1.
    HalfHalf,
    /// First `⌊p/4⌋` diagonal entries 0.5, the rest 1.
    Quarter,
    Spiked(SpikedModel),
}

impl AlternativeDesign {
    pub fn diagonal(&self, p: usize) -> Result<Vec<f64>> {
        let lowered = |k: usize| (0..p).map(|i| if i < k { 0.5 } else { 1.0 }).collect();
        match self {
            AlternativeDesign::Null => Ok(vec![1.0; p]),
            AlternativeDesign::HalfHalf => Ok(lowered(p / 2)),
            AlternativeDesign::Quarter => Ok(lowered(p / 4)),
            AlternativeDesign::Spiked(s) => s.population_spectrum(p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AlternativeDesign::Null => "null".into(),
            AlternativeDesign::HalfHalf => "half_half".into(),
            AlternativeDesign::Quarter => "quarter".into(),
            AlternativeDesign::Spiked(s) => {
                let parts: Vec<String> = s.spikes().iter().map(|x| x.to_string()).collect();
                format!("spiked[{}]", parts.join(","))
            }
        }
    }
}

impl fmt::Display for AlternativeDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts `null`, `half_half` (or `power1`), `quarter` (or `power2`) and
/// `spiked:a:n,...`.
impl FromStr for AlternativeDesign {
    type Err = SphericityError;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('-', "_");
        match lower.as_str() {
            "null" | "size" => Ok(AlternativeDesign::Null),
            "half_half" | "half" | "power1" => Ok(AlternativeDesign::HalfHalf),
            "quarter" | "power2" => Ok(AlternativeDesign::Quarter),
            _ => match lower.strip_prefix("spiked:") {
                Some(rest) => Ok(AlternativeDesign::Spiked(rest.parse()?)),
                None => Err(domain(format!(
                    "unknown design '{s}' (expected null, half_half, quarter or spiked:a:n,...)"
                ))),
            },
        }
    }
}

/// Where CLRT and CJ get their `β` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSource {
    /// The scenario's population `β` (0 for normal, 1.5 for gamma).
    #[default]
    True,
    /// `β̂` recomputed from each replication's data.
    Estimated,
}

/// Draws a `p × n` data matrix: iid scenario entries, row `i` scaled by the
/// square root of the `i`-th diagonal entry of the design.
pub fn sample_data<R: Rng + ?Sized>(
    scenario: Scenario,
    design: &AlternativeDesign,
    p: usize,
    n: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    let scale: Vec<f64> = design.diagonal(p)?.into_iter().map(f64::sqrt).collect();
    let sampler = Sampler::new(scenario);
    DataMatrix::new(DMatrix::from_fn(p, n, |i, _| scale[i] * sampler.draw(rng)))
}

/// The generator for replication `rep` of a cell.
pub fn replication_rng(master_seed: u64, cell_tag: u64, rep: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&cell_tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(rep);
    rng
}

/// FNV-1a of the canonical cell description.
fn cell_tag(scenario: Scenario, design: &AlternativeDesign, p: usize, n: usize, mean_known: bool) -> u64 {
    let key = format!("{scenario}|{design}|{p}|{n}|{mean_known}");
    key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// One Monte-Carlo cell, possibly evaluated for several tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub tests: Vec<TestId>,
    pub scenario: Scenario,
    pub design: AlternativeDesign,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub mean_known: bool,
    #[serde(default)]
    pub beta_source: BetaSource,
}

impl Experiment {
    pub fn new(tests: Vec<TestId>, scenario: Scenario, design: AlternativeDesign, p: usize, n: usize) -> Self {
        Self {
            tests,
            scenario,
            design,
            p,
            n,
            reps: 10_000,
            alpha: 0.05,
            master_seed: 0,
            mean_known: true,
            beta_source: BetaSource::True,
        }
    }

    pub fn reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn convention(&self) -> MeanConvention {
        MeanConvention::from_known(self.mean_known)
    }

    /// Checks everything that can fail before sampling.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(SphericityError::Configuration(m));
        if self.reps == 0 {
            return cfg("reps must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return cfg(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.tests.is_empty() {
            return cfg("no tests requested".into());
        }
        if self.p < 2 || self.n < 2 {
            return cfg(format!("need p >= 2 and n >= 2, got p = {}, n = {}", self.p, self.n));
        }
        self.design.diagonal(self.p).map_err(|e| SphericityError::Configuration(e.to_string()))?;
        let big_n = self.convention().effective_n(self.n);
        for &t in &self.tests {
            if t == TestId::Clrt && self.p >= big_n {
                return cfg(format!("clrt needs p < n (p = {}, effective n = {big_n})", self.p));
            }
            if t.needs_log_det() && self.p > big_n {
                return cfg(format!("{t} needs p <= n (p = {}, effective n = {big_n})", self.p));
            }
        }
        Ok(())
    }
}

/// Empirical rejection rate of one test in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub test: TestId,
    pub scenario: Scenario,
    pub design: String,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub rejection_rate: Probability,
    /// `sqrt(r(1 - r) / reps)`.
    pub stderr: f64,
    pub master_seed: u64,
    pub mean_known: bool,
    pub beta_source: BetaSource,
}

fn replicate(e: &Experiment, tag: u64, rep: usize, estimate: bool, with_log: bool) -> Result<Vec<u64>> {
    let mut rng = replication_rng(e.master_seed, tag, rep as u64);
    let data = sample_data(e.scenario, &e.design, e.p, e.n, &mut rng)?;
    let convention = e.convention();
    let moments = SpectralMoments::from_data(&data, convention, with_log)?;
    let profile = if estimate {
        let beta = match convention {
            MeanConvention::Known => estimate_beta(&data, 2)?,
            MeanConvention::Unknown => estimate_beta_centered(&data, 2)?,
        };
        MomentProfile::real(beta)?
    } else {
        e.scenario.moment_profile()
    };
    e.tests
        .iter()
        .map(|&t| Ok(run_test(t, &moments, profile)?.rejects(e.alpha) as u64))
        .collect()
}

/// Runs every replication of `e` (in parallel on the current rayon pool) and
/// reports one rejection rate per requested test.
pub fn run_experiment(e: &Experiment) -> Result<Vec<ExperimentReport>> {
    e.validate()?;
    let tag = cell_tag(e.scenario, &e.design, e.p, e.n, e.mean_known);
    let estimate = e.beta_source == BetaSource::Estimated && e.tests.iter().any(|t| t.uses_moments());
    let with_log = e.tests.iter().any(|t| t.needs_log_det());
    let k = e.tests.len();
    let counts = (0..e.reps)
        .into_par_iter()
        .map(|rep| replicate(e, tag, rep, estimate, with_log))
        .try_reduce(
            || vec![0u64; k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let reps = e.reps as f64;
    e.tests
        .iter()
        .zip(counts)
        .map(|(&test, c)| {
            let r = c as f64 / reps;
            Ok(ExperimentReport {
                test,
                scenario: e.scenario,
                design: e.design.label(),
                p: e.p,
                n: e.n,
                reps: e.reps,
                alpha: e.alpha,
                rejection_rate: Probability::new(r)?,
                stderr: (r * (1.0 - r) / reps).sqrt(),
                master_seed: e.master_seed,
                mean_known: e.mean_known,
                beta_source: e.beta_source,
            })
        })
        .collect()
}

/// Single-test convenience wrapper around [`run_experiment`].
#[allow(clippy::too_many_arguments)]
pub fn empirical_rejection(
    test_id: TestId,
    scenario: Scenario,
    design: AlternativeDesign,
    p: usize,
    n: usize,
    reps: usize,
    alpha: f64,
    master_seed: u64,
    mean_known: bool,
) -> Result<ExperimentReport> {
    let mut e = Experiment::new(vec![test_id], scenario, design, p, n).reps(reps).alpha(alpha).seed(master_seed);
    e.mean_known = mean_known;
    Ok(run_experiment(&e)?.remove(0))
}

/// The four simulation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    /// Classical corrections (BBLRT, Nagao) under the null, `n = 64`.
    T1,
    /// Sizes of LW, CLRT and CJ.
    T2,
    /// Powers of LW, CLRT and CJ for `n ∈ {64, 128}`.
    T3,
    /// CJ with `p ≥ n`.
    T4,
}

impl TryFrom<u8> for TableId {
    type Error = SphericityError;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(TableId::T1),
            2 => Ok(TableId::T2),
            3 => Ok(TableId::T3),
            4 => Ok(TableId::T4),
            _ => Err(SphericityError::Configuration(format!("no table {v}; expected 1 to 4"))),
        }
    }
}

/// The `(p, n)` pairs of the size table.
pub const SIZE_TABLE_DIMENSIONS: [(usize, usize); 28] = [
    (4, 64),
    (8, 64),
    (16, 64),
    (32, 64),
    (48, 64),
    (56, 64),
    (60, 64),
    (8, 128),
    (16, 128),
    (32, 128),
    (64, 128),
    (96, 128),
    (112, 128),
    (120, 128),
    (16, 256),
    (32, 256),
    (64, 256),
    (128, 256),
    (192, 256),
    (224, 256),
    (240, 256),
    (32, 512),
    (64, 512),
    (128, 512),
    (256, 512),
    (384, 512),
    (448, 512),
    (480, 512),
];

const SCENARIOS: [Scenario; 2] = [Scenario::StandardNormal, Scenario::Gamma42Shifted];

/// Cells of a table, with default reps and seed.
pub fn table_cells(table: TableId) -> Vec<Experiment> {
    let corrected = vec![TestId::Lw, TestId::Clrt, TestId::Cj];
    match table {
        TableId::T1 => [4, 8, 16, 32, 48, 56, 60]
            .into_iter()
            .map(|p| {
                Experiment::new(
                    vec![TestId::Bblrt, TestId::Nagao],
                    Scenario::StandardNormal,
                    AlternativeDesign::Null,
                    p,
                    64,
                )
            })
            .collect(),
        TableId::T2 => SCENARIOS
            .iter()
            .flat_map(|&s| {
                SIZE_TABLE_DIMENSIONS
                    .iter()
                    .map(|&(p, n)| Experiment::new(corrected.clone(), s, AlternativeDesign::Null, p, n))
                    .collect::<Vec<_>>()
            })
            .collect(),
        TableId::T3 => {
            let mut out = Vec::new();
            for s in SCENARIOS {
                for design in [AlternativeDesign::HalfHalf, AlternativeDesign::Quarter] {
                    for &(p, n) in SIZE_TABLE_DIMENSIONS.iter().filter(|(_, n)| *n <= 128) {
                        out.push(Experiment::new(corrected.clone(), s, design.clone(), p, n));
                    }
                }
            }
            out
        }
        TableId::T4 => {
            let mut out = Vec::new();
            for p in [64, 320, 640, 960, 1280] {
                for design in [AlternativeDesign::Null, AlternativeDesign::HalfHalf, AlternativeDesign::Quarter] {
                    out.push(Experiment::new(vec![TestId::Cj], Scenario::Gamma42Shifted, design, p, 64));
                }
            }
            out
        }
    }
}

/// Runs a whole table. `reps` must be at least 100.
pub fn run_table(table: TableId, reps: usize, master_seed: u64) -> Result<Vec<ExperimentReport>> {
    if reps < 100 {
        return Err(SphericityError::Configuration(format!("tables need at least 100 reps, got {reps}")));
    }
    let mut out = Vec::new();
    for cell in table_cells(table) {
        out.extend(run_experiment(&cell.reps(reps).seed(master_seed))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp_centering::Spike;

    fn big_sample(s: Scenario, design: &AlternativeDesign, p: usize, n: usize) -> DMatrix<f64> {
        sample_data(s, design, p, n, &mut replication_rng(3, 9, 0)).unwrap().into_entries()
    }

    #[test]
    fn normal_sampler_has_unit_variance() {
        let x = big_sample(Scenario::StandardNormal, &AlternativeDesign::Null, 1000, 1000);
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / 1e6;
        // sd of the mean of x² is sqrt(2 / 1e6).
        assert!((m2 - 1.0).abs() <= 3.0 * (2.0f64 / 1e6).sqrt(), "{m2}");
    }

    #[test]
    fn gamma_sampler_moments() {
        let x = big_sample(Scenario::Gamma42Shifted, &AlternativeDesign::Null, 1000, 1000);
        let n = 1e6;
        let mean = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
        let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 / n.sqrt(), "{mean}");
        assert!((m2 - 1.0).abs() <= 0.01, "{m2}");
        assert!((m4 - 4.5).abs() <= 0.05, "{m4}");
    }

    #[test]
    fn half_half_rows() {
        let x = big_sample(Scenario::StandardNormal, &AlternativeDesign::HalfHalf, 4, 200_000);
        for (i, want) in [0.5, 0.5, 1.0, 1.0].into_iter().enumerate() {
            let v = x.row(i).iter().map(|v| v * v).sum::<f64>() / 200_000.0;
            assert!((v - want).abs() <= 4.0 * want * (2.0f64 / 200_000.0).sqrt(), "row {i}: {v}");
        }
        assert_eq!(AlternativeDesign::Quarter.diagonal(8).unwrap(), vec![0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(AlternativeDesign::HalfHalf.diagonal(5).unwrap()[..3], [0.5, 0.5, 1.0]);
    }

    #[test]
    fn design_parsing_round_trip() {
        let spiked = AlternativeDesign::Spiked(SpikedModel::new(vec![Spike::new(2.5, 1).unwrap()]));
        for d in [AlternativeDesign::Null, AlternativeDesign::HalfHalf, AlternativeDesign::Quarter] {
            assert_eq!(d.label().parse::<AlternativeDesign>().unwrap(), d);
        }
        assert_eq!("spiked:2.5:1".parse::<AlternativeDesign>().unwrap(), spiked);
        assert_eq!("power2".parse::<AlternativeDesign>().unwrap(), AlternativeDesign::Quarter);
        assert!("diagonal".parse::<AlternativeDesign>().is_err());
        assert_eq!("Gamma".parse::<Scenario>().unwrap(), Scenario::Gamma42Shifted);
    }

    #[test]
    fn replication_streams_differ() {
        let a: u64 = replication_rng(1, 2, 0).random();
        let b: u64 = replication_rng(1, 2, 1).random();
        let c: u64 = replication_rng(1, 3, 0).random();
        let d: u64 = replication_rng(2, 2, 0).random();
        let again: u64 = replication_rng(1, 2, 0).random();
        assert_eq!(a, again);
        assert!(a != b && a != c && a != d);
    }

    #[test]
    fn validation_happens_before_sampling() {
        let base = Experiment::new(vec![TestId::Clrt], Scenario::StandardNormal, AlternativeDesign::Null, 64, 64);
        assert!(matches!(run_experiment(&base), Err(SphericityError::Configuration(_))));
        assert!(run_experiment(&base.clone().reps(0)).is_err());
        let mut unknown = Experiment::new(vec![TestId::Bblrt], Scenario::StandardNormal, AlternativeDesign::Null, 64, 64);
        unknown.mean_known = false;
        assert!(run_experiment(&unknown).is_err());
        let cj = Experiment::new(vec![TestId::Cj], Scenario::StandardNormal, AlternativeDesign::Null, 64, 32).reps(20);
        assert_eq!(run_experiment(&cj).unwrap().len(), 1);
        let too_many = AlternativeDesign::Spiked(SpikedModel::new(vec![Spike::new(2.0, 9).unwrap()]));
        let e = Experiment::new(vec![TestId::Cj], Scenario::StandardNormal, too_many, 4, 32);
        assert!(run_experiment(&e).is_err());
        assert!(run_table(TableId::T1, 99, 0).is_err());
    }

    #[test]
    fn table_layouts() {
        let count = |t| table_cells(t).iter().map(|c| c.tests.len()).sum::<usize>();
        assert_eq!(count(TableId::T1), 14);
        assert_eq!(table_cells(TableId::T2).len(), 56);
        assert_eq!(count(TableId::T2), 28 * 3 * 2);
        assert_eq!(table_cells(TableId::T3).len(), 14 * 2 * 2);
        assert_eq!(count(TableId::T4), 15);
        for t in [TableId::T1, TableId::T2, TableId::T3, TableId::T4] {
            for c in table_cells(t) {
                c.validate().unwrap();
            }
        }
    }

    #[test]
    fn reports_carry_stderr() {
        let e = Experiment::new(vec![TestId::Cj, TestId::Lw], Scenario::Gamma42Shifted, AlternativeDesign::Null, 8, 32)
            .reps(400)
            .seed(5);
        let r = run_experiment(&e).unwrap();
        for rep in &r {
            let rate = rep.rejection_rate.value();
            assert_eq!(rep.stderr, (rate * (1.0 - rate) / 400.0).sqrt());
        }
        // Same draws: the single-test run reproduces the CJ count.
        let solo = empirical_rejection(TestId::Cj, Scenario::Gamma42Shifted, AlternativeDesign::Null, 8, 32, 400, 0.05, 5, true)
            .unwrap();
        assert_eq!(solo.rejection_rate, r[0].rejection_rate);
    }
}
