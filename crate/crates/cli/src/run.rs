//! Binds parsed configs to the library and collects their artifacts.

use std::path::Path;

use modlab::estimates::{self, FitResult, Row};
use modlab::modspace::{self, ModNormSpec};
use modlab::propagator;
use modlab::solver::{self, LargeDataOptions, NLSProblem, PicardOptions, Solution};
use modlab::variation::{self, SampledPath, ValueNorm};
use modlab::{datagen, Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    DataSpec, DatagenConfig, Experiment, LargeDataConfig, Method, NormsConfig, SolveConfig, VariationConfig,
};
use crate::error::CliError;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub experiment: String,
    pub scale: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl CsvRow {
    fn new(experiment: &str, scale: f64, lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs != 0.0 { lhs / rhs } else { f64::NAN };
        CsvRow { experiment: experiment.into(), scale, lhs, rhs, ratio }
    }
}

/// Everything an experiment writes.
#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub rows: Vec<CsvRow>,
    /// Experiment-specific entries of `summary.json`.
    pub summary: serde_json::Map<String, Value>,
    /// Extra files as `(name, bytes)`.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(pass: bool, rows: Vec<CsvRow>, summary: Value) -> Self {
        let summary = match summary {
            Value::Object(m) => m,
            _ => unreachable!("summaries are objects"),
        };
        Outcome { pass, rows, summary, files: Vec::new() }
    }

    /// A run whose numerics failed one of its own checks.
    fn failed(err: &modlab::Error) -> Self {
        Outcome::new(false, Vec::new(), json!({ "error": err.to_string() }))
    }
}

fn fit_rows(fit: &FitResult) -> Vec<CsvRow> {
    fit.rows.iter().map(|r| CsvRow::new(&fit.experiment, r.scale, r.lhs, r.rhs)).collect()
}

fn fit_summary(fit: &FitResult) -> Value {
    json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "residual": fit.residual,
        "predicted": fit.predicted,
        "margin": fit.margin,
        "pass": fit.pass,
    })
}

fn single_fit(fit: FitResult) -> Outcome {
    Outcome::new(fit.pass, fit_rows(&fit), fit_summary(&fit))
}

/// Failures that are verdicts on the data rather than on the config.
fn is_verdict(e: &modlab::Error) -> bool {
    matches!(
        e,
        modlab::Error::Diverged { .. }
            | modlab::Error::Disagreement { .. }
            | modlab::Error::Certificate { .. }
            | modlab::Error::BlowUp { .. }
    )
}

fn check_scales(scales: &[f64], g: &Grid) -> Result<(), CliError> {
    if scales.len() < 3 {
        return Err(CliError::InvalidScales(format!("need at least 3 scales, got {}", scales.len())));
    }
    if scales.iter().any(|&s| !(s > 0.0) || s > g.xi_max()) {
        return Err(CliError::InvalidScales(format!("scales must lie in (0, {:.3}]", g.xi_max())));
    }
    if scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::InvalidScales("scales must be strictly increasing".into()));
    }
    Ok(())
}

fn build_data(spec: &DataSpec, g: &Grid, base: &Path) -> Result<Field, CliError> {
    Ok(match spec {
        DataSpec::Gaussian { amplitude, width } => datagen::gaussian(g, *amplitude, *width)?,
        DataSpec::RandomPhase { scale, seed } => datagen::random_phase_data(*scale, *seed, g)?,
        DataSpec::Focusing { scale } => datagen::focusing_data(*scale, g)?,
        DataSpec::SingleBump { scale } => datagen::single_bump_data(*scale, g)?,
        DataSpec::MollifiedIndicator { radius } => {
            let w = modspace::make_window(g)?;
            datagen::mollified_indicator(*radius, g, &w, datagen::DEFAULT_EPS)?.0
        }
        DataSpec::File { path } => {
            let path = base.join(path);
            let file = std::fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let f = datagen::read_field(std::io::BufReader::new(file))?;
            f.grid().check_same(g)?;
            f
        }
    })
}

fn norms(c: &NormsConfig) -> Result<Outcome, CliError> {
    let g = Grid::new(c.d, c.n, c.length)?;
    check_scales(&c.scales, &g)?;
    let w = modspace::make_window(&g)?;
    let spec = ModNormSpec::new(c.s, c.p, c.q)?;
    let mut rows = Vec::new();
    for &n in &c.scales {
        let f = c.family.generate(n, c.seed, &g)?;
        let m = modspace::modulation_norm(&f, &spec, &w)?;
        let l2 = modlab::grid::lp_norm(&f, 2.0)?;
        rows.push(Row::new(n, m, l2)?);
    }
    let predicted = c.expected_slope.unwrap_or(f64::NAN);
    let mut fit = FitResult::from_rows("norms", rows, predicted, c.margin)?;
    fit.pass = c.expected_slope.map_or(true, |e| (fit.slope - e).abs() <= c.margin);
    let mut out = single_fit(fit);
    if c.expected_slope.is_none() {
        out.summary.insert("predicted".into(), Value::Null);
    }
    Ok(out)
}

fn random_path(m: usize, g: Grid, rng: &mut ChaCha8Rng) -> Result<SampledPath, CliError> {
    let values = (0..m)
        .map(|_| {
            let v = (0..g.len())
                .map(|_| num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            Field::new(g, v)
        })
        .collect::<modlab::Result<Vec<_>>>()?;
    Ok(SampledPath::new((0..m).map(|j| j as f64).collect(), values, ValueNorm::L2)?)
}

fn variation_check(c: &VariationConfig) -> Result<Outcome, CliError> {
    if c.exponents.is_empty() || c.paths == 0 || !(2..=19).contains(&c.max_nodes) {
        return Err(CliError::Parse("variation needs paths > 0, exponents, and 2 <= max_nodes <= 19".into()));
    }
    let g = Grid::new(1, 8, 3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut rows = Vec::with_capacity(c.paths);
    let mut mismatches = 0usize;
    for i in 0..c.paths {
        let m = rng.gen_range(2..=c.max_nodes);
        let p = c.exponents[rng.gen_range(0..c.exponents.len())];
        let path = random_path(m, g, &mut rng)?;
        let dp = variation::vp_norm(&path, p)?;
        let brute = variation::vp_norm_brute(&path, p)?;
        mismatches += usize::from(dp != brute);
        rows.push(CsvRow::new("variation", i as f64, dp, brute));
    }
    Ok(Outcome::new(mismatches == 0, rows, json!({ "paths": c.paths, "mismatches": mismatches, "pass": mismatches == 0 })))
}

fn problem(c: &SolveConfig, base: &Path) -> Result<NLSProblem, CliError> {
    let g = Grid::new(c.d, c.n, c.length)?;
    let u0 = build_data(&c.data, &g, base)?;
    let p = match c.kappa {
        Some(k) => NLSProblem::new(u0, k, c.sign, c.horizon, c.nodes)?,
        None => NLSProblem::standard(u0, c.sign, c.horizon, c.nodes)?,
    };
    Ok(p.with_coupling(c.coupling))
}

fn residual_rows(report: &solver::SolverReport) -> Vec<CsvRow> {
    report.residuals.windows(2).enumerate().map(|(j, w)| CsvRow::new("picard", (j + 1) as f64, w[1], w[0])).collect()
}

fn mass_rows(sol: &Solution) -> (Vec<CsvRow>, f64) {
    let m0 = propagator::mass(&sol.path[0]);
    let mut drift = 0.0f64;
    let rows = sol
        .times
        .iter()
        .zip(&sol.path)
        .map(|(&t, f)| {
            let m = propagator::mass(f);
            drift = drift.max(if m0 > 0.0 { (m - m0).abs() / m0 } else { m });
            CsvRow::new("split-step-mass", t, m, m0)
        })
        .collect();
    (rows, drift)
}

fn solve(c: &SolveConfig, base: &Path) -> Result<Outcome, CliError> {
    let p = problem(c, base)?;
    let mut opts = PicardOptions::for_problem(&p);
    opts.max_iters = c.max_iters;
    opts.tol = c.tol;
    if let Some(norm) = c.norm {
        opts.norm = norm;
    }
    let dt = c.dt.unwrap_or(c.horizon / (c.nodes - 1) as f64);
    let result = match c.method {
        Method::Picard => solver::picard_solve(&p, &opts).map(|(_, report)| {
            Outcome::new(true, residual_rows(&report), json!({ "report": report, "pass": true }))
        }),
        Method::SplitStep => solver::splitstep_solve(&p, dt).map(|sol| {
            let (rows, drift) = mass_rows(&sol);
            let pass = drift <= c.mass_tolerance;
            Outcome::new(pass, rows, json!({ "dt": dt, "mass_drift": drift, "pass": pass }))
        }),
        Method::CrossValidate => solver::cross_validate(&p, &opts, c.tolerance).map(|cv| {
            let rows = residual_rows(&cv.picard);
            Outcome::new(true, rows, json!({ "cross_validation": cv, "pass": true }))
        }),
    };
    match result {
        Ok(out) => Ok(out),
        Err(e) if is_verdict(&e) => Ok(Outcome::failed(&e)),
        Err(e) => Err(e.into()),
    }
}

fn large_data(c: &LargeDataConfig, base: &Path) -> Result<Outcome, CliError> {
    let g = Grid::new(c.d, c.n, c.length)?;
    let u0 = build_data(&c.data, &g, base)?;
    let p = NLSProblem::standard(u0, c.sign, c.horizon, c.nodes)?;
    let opts: LargeDataOptions = c.options;
    match solver::large_data_protocol(&p, &opts) {
        Ok((_, report)) => {
            let cert = report.certificate.clone().expect("protocol attaches a certificate");
            let pass = cert.checks.iter().all(|k| k.norm <= 2.0 * cert.a && k.tail <= 2.0 * cert.delta);
            let rows = cert
                .checks
                .iter()
                .flat_map(|k| {
                    [
                        CsvRow::new("ball-norm", k.iterate as f64, k.norm, 2.0 * cert.a),
                        CsvRow::new("ball-tail", k.iterate as f64, k.tail, 2.0 * cert.delta),
                    ]
                })
                .collect();
            Ok(Outcome::new(pass, rows, json!({ "report": report, "pass": pass })))
        }
        Err(e) if is_verdict(&e) => Ok(Outcome::failed(&e)),
        Err(e) => Err(e.into()),
    }
}

fn generate(c: &DatagenConfig, base: &Path) -> Result<Outcome, CliError> {
    if c.file.is_empty() || c.file.contains(['/', '\\']) || c.file.starts_with('.') {
        return Err(CliError::Parse(format!("output file name `{}` must be a plain file name", c.file)));
    }
    let g = Grid::new(c.d, c.n, c.length)?;
    let w = modspace::make_window(&g)?;
    let f = build_data(&c.data, &g, base)?;
    let report = datagen::norm_report(&f, &w, c.eps)?;
    let mut bytes = Vec::new();
    datagen::write_field(&f, &mut bytes)?;
    let rows = vec![CsvRow::new("datagen", 0.0, report.modulation, report.l2)];
    let mut out = Outcome::new(true, rows, json!({ "file": c.file, "norms": report, "pass": true }));
    out.files.push((c.file.clone(), bytes));
    Ok(out)
}

pub fn execute(experiment: &Experiment, base: &Path) -> Result<Outcome, CliError> {
    match experiment {
        Experiment::Norms(c) => norms(c),
        Experiment::Smoothing(c) => Ok(single_fit(estimates::smoothing_ratio(c)?)),
        Experiment::Strichartz(c) => Ok(single_fit(estimates::strichartz_l4_ratio(c)?)),
        Experiment::Bilinear(c) => {
            let r = estimates::bilinear_ratio(c)?;
            let mut rows = fit_rows(&r.high);
            rows.extend(fit_rows(&r.low));
            let chains: Vec<_> = r.cells.iter().filter_map(|cell| cell.chain.clone()).collect();
            let summary = json!({
                "high": fit_summary(&r.high),
                "low": fit_summary(&r.low),
                "chains": chains,
                "pass": r.pass(),
            });
            Ok(Outcome::new(r.pass(), rows, summary))
        }
        Experiment::V2Bilinear(c) => Ok(single_fit(estimates::v2_bilinear_ratio(c)?)),
        Experiment::Decoupling(c) => Ok(single_fit(estimates::decoupling_ratio(c)?)),
        Experiment::Variation(c) => variation_check(c),
        Experiment::Solve(c) => solve(c, base),
        Experiment::LargeData(c) => large_data(c, base),
        Experiment::Datagen(c) => generate(c, base),
    }
}
