use serde::Serialize;
use sphericity::clt_params::{
    closed_i1, closed_i2, closed_j1, closed_j2, numeric_contour_params, ContourSpec, IntegrandId,
};
use sphericity::corrected::{estimate_beta, estimate_beta_centered, MomentProfile};
use sphericity::montecarlo::{run_experiment, table_cells, BetaSource, Experiment, ExperimentReport, TableId};
use sphericity::mp_centering::SpikedModel;
use sphericity::numerics::Probability;
use sphericity::power::power_curve;
use sphericity::spectra::{MeanConvention, SpectralMoments};
use sphericity::{run_test, SphericityError, TestId, TestOutcome};

use crate::data::load_data;
use crate::format::{parse_grid, sig6};
use crate::{sink, BetaArg, BetaSourceArg, CliError, OutputFormat, PowerArgs, SimulateArgs, TestArgs, VerifyArgs};

/// JSON record written by `test --json`.
#[derive(Debug, Serialize)]
pub struct TestReport {
    #[serde(flatten)]
    pub outcome: TestOutcome,
    pub alpha: f64,
    pub beta_estimated: bool,
    pub reject: bool,
}

pub fn test(a: &TestArgs) -> Result<u8, CliError> {
    let data = load_data(&a.input, a.transpose)?;
    let convention = MeanConvention::from_known(a.mean.is_known());
    let (beta, beta_estimated) = match a.beta {
        BetaArg::Value(b) => (b, false),
        BetaArg::Auto => {
            let b = match convention {
                MeanConvention::Known => estimate_beta(&data, a.kappa)?,
                MeanConvention::Unknown => estimate_beta_centered(&data, a.kappa)?,
            };
            (b, true)
        }
    };
    let profile = MomentProfile::new(a.kappa, beta)?;
    let moments = SpectralMoments::from_data(&data, convention, a.test.needs_log_det())?;
    let outcome = run_test(a.test, &moments, profile)?;
    let reject = outcome.rejects(a.alpha);
    let report = TestReport { outcome, alpha: a.alpha, beta_estimated, reject };

    let mut out = sink(a.output.as_deref())?;
    if a.json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
    } else {
        write_test_text(&mut out, &report)?;
    }
    out.flush()?;
    Ok(if reject && a.exit_on_reject { 2 } else { 0 })
}

fn write_test_text(out: &mut dyn std::io::Write, r: &TestReport) -> std::io::Result<()> {
    let o = &r.outcome;
    let reference = if o.test_id.uses_moments() || o.test_id == TestId::Lw { "z" } else { "chi-square" };
    writeln!(out, "test         {}", o.test_id)?;
    writeln!(out, "p            {}", o.params.p)?;
    writeln!(out, "n            {} (effective {})", o.params.n, o.params.effective_n)?;
    writeln!(out, "mean         {}", if o.params.mean_known { "known" } else { "unknown" })?;
    if let (Some(k), Some(b)) = (o.params.kappa, o.params.beta) {
        writeln!(out, "kappa        {k}")?;
        writeln!(out, "beta         {}{}", sig6(b), if r.beta_estimated { " (estimated)" } else { "" })?;
    }
    writeln!(out, "statistic    {}", sig6(o.statistic))?;
    writeln!(out, "{reference:<12} {}", sig6(o.reference_value))?;
    writeln!(out, "p-value      {}", sig6(o.p_value.value()))?;
    writeln!(out, "alpha        {}", sig6(r.alpha))?;
    writeln!(out, "decision     {}", if r.reject { "REJECT" } else { "NO-REJECT" })?;
    for note in &o.notes {
        writeln!(out, "note         {}", serde_json::to_value(note).unwrap_or_default().as_str().unwrap_or(""))?;
    }
    Ok(())
}

fn simulation_cells(a: &SimulateArgs) -> Result<Vec<Experiment>, CliError> {
    let cells = match a.table {
        Some(t) => table_cells(TableId::try_from(t)?),
        None => {
            let (p, n) = (a.p.unwrap_or_default(), a.n.unwrap_or_default());
            vec![Experiment::new(a.test.clone(), a.scenario, a.design.clone(), p, n)]
        }
    };
    let beta_source = match a.beta_source {
        BetaSourceArg::True => BetaSource::True,
        BetaSourceArg::Estimated => BetaSource::Estimated,
    };
    let cells: Vec<Experiment> = cells
        .into_iter()
        .map(|c| {
            let mut c = c.reps(a.reps).seed(a.seed).alpha(a.alpha);
            c.mean_known = a.mean.is_known();
            c.beta_source = beta_source;
            c
        })
        .collect();
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}

pub fn simulate(a: &SimulateArgs) -> Result<u8, CliError> {
    let cells = simulation_cells(a)?;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    for c in &cells {
        reports.extend(run_experiment(c)?);
    }
    let mut out = sink(a.output.as_deref())?;
    match a.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &reports)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["test", "scenario", "design", "p", "n", "reps", "rejection_rate", "stderr"])?;
            for r in &reports {
                w.write_record([
                    r.test.to_string(),
                    r.scenario.as_str().to_string(),
                    r.design.clone(),
                    r.p.to_string(),
                    r.n.to_string(),
                    r.reps.to_string(),
                    sig6(r.rejection_rate.value()),
                    sig6(r.stderr),
                ])?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(0)
}

pub fn power(a: &PowerArgs) -> Result<u8, CliError> {
    let spikes: SpikedModel = a.spikes.parse().map_err(|e: SphericityError| CliError::Parse(e.to_string()))?;
    let grid = parse_grid(&a.y_grid).map_err(CliError::Parse)?;
    let profile = MomentProfile::new(a.kappa, a.beta)?;
    let alpha = Probability::new(a.alpha)?;
    let curve = power_curve(a.test, alpha, &spikes, profile, &grid)?;
    let mut out = sink(a.output.as_deref())?;
    match a.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &curve)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            writeln!(out, "y,power")?;
            for pt in &curve {
                writeln!(out, "{},{}", sig6(pt.y), sig6(pt.power.value()))?;
            }
        }
    }
    out.flush()?;
    Ok(0)
}

/// One row of the `verify-clt` table.
#[derive(Debug, Serialize)]
pub struct ClosedVsNumeric {
    pub f: &'static str,
    pub g: &'static str,
    pub y: f64,
    /// `|closed - numeric|` for `I₁(f)`, `I₂(f)`, `J₁(f, g)`, `J₂(f, g)`.
    pub gaps: Option<[f64; 4]>,
    pub max_gap: Option<f64>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn compare(f: &IntegrandId, g: &IntegrandId, y: f64, spec: &ContourSpec) -> Result<[f64; 4], SphericityError> {
    let e = numeric_contour_params(f, g, y, spec)?;
    Ok([
        (e.i1 - closed_i1(f, y, 1.0)?).abs(),
        (e.i2 - closed_i2(f, y)?).abs(),
        (e.j1 - closed_j1(f, g, y, 1.0)?).abs(),
        (e.j2 - closed_j2(f, g, y)?).abs(),
    ])
}

pub fn verify_clt(a: &VerifyArgs) -> Result<u8, CliError> {
    let grid = parse_grid(&a.y_grid).map_err(CliError::Parse)?;
    if !(a.tol > 0.0) {
        return Err(CliError::Parse(format!("--tol must be positive, got {}", a.tol)));
    }
    let spec = ContourSpec::default();
    let fs = [IntegrandId::Log, IntegrandId::Id, IntegrandId::Square];
    let mut rows = Vec::new();
    for &y in &grid {
        if !(y > 0.0 && y < 1.0) {
            return Err(SphericityError::Configuration(format!(
                "y = {y} is outside (0, 1), where the log integrand is defined"
            ))
            .into());
        }
        if y > 0.95 {
            eprintln!(
                "warning: y = {y} is close to 1, where the log integrand's contour touches its singularity; \
                 quadrature accuracy degrades"
            );
        }
        for f in &fs {
            for g in &fs {
                let row = match compare(f, g, y, &spec) {
                    Ok(gaps) => {
                        let max = gaps.iter().fold(0.0f64, |m, &d| m.max(d));
                        ClosedVsNumeric { f: f.name(), g: g.name(), y, gaps: Some(gaps), max_gap: Some(max), ok: max <= a.tol, error: None }
                    }
                    Err(e) => ClosedVsNumeric { f: f.name(), g: g.name(), y, gaps: None, max_gap: None, ok: false, error: Some(e.to_string()) },
                };
                rows.push(row);
            }
        }
    }

    let mut out = sink(a.output.as_deref())?;
    if a.json {
        serde_json::to_writer_pretty(&mut out, &rows)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{:<6} {:<6} {:>8} {:>12} {:>12} {:>12} {:>12}  status", "f", "g", "y", "I1", "I2", "J1", "J2")?;
        for r in &rows {
            match (&r.gaps, &r.error) {
                (Some(gaps), _) => {
                    let [a1, a2, a3, a4] = gaps.map(|d| format!("{d:.3e}"));
                    let status = if r.ok { "ok" } else { "FAIL" };
                    writeln!(out, "{:<6} {:<6} {:>8} {a1:>12} {a2:>12} {a3:>12} {a4:>12}  {status}", r.f, r.g, sig6(r.y))?;
                }
                (None, e) => {
                    writeln!(out, "{:<6} {:<6} {:>8}  FAIL: {}", r.f, r.g, sig6(r.y), e.as_deref().unwrap_or(""))?;
                }
            }
        }
    }
    out.flush()?;
    drop(out);

    let failures: Vec<&ClosedVsNumeric> = rows.iter().filter(|r| !r.ok).collect();
    if failures.is_empty() {
        return Ok(0);
    }
    let worst = rows
        .iter()
        .filter(|r| r.max_gap.is_some())
        .max_by(|x, y| x.max_gap.partial_cmp(&y.max_gap).unwrap_or(std::cmp::Ordering::Equal));
    eprintln!("{} of {} comparisons exceed tolerance {:e}", failures.len(), rows.len(), a.tol);
    if let Some(w) = worst {
        eprintln!("worst gap: {:e} for ({}, {}) at y = {}", w.max_gap.unwrap_or(f64::NAN), w.f, w.g, w.y);
    }
    for r in failures.iter().filter(|r| r.error.is_some()) {
        eprintln!("oracle failure for ({}, {}) at y = {}: {}", r.f, r.g, r.y, r.error.as_deref().unwrap_or(""));
    }
    Err(CliError::CheckFailed)
}
