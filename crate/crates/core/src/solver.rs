//! Picard iteration for `i u_t + Delta u = sign |u|^kappa u` on sampled
//! time nodes, the frequency-cutoff protocol for large data, and a Strang
//! split-step solver used as an independent check.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, SpectralField};
use crate::modspace::{self, ModNormSpec, SumSpaceBound, Window};
use crate::propagator::{self, Sign, TimeGrid};
use crate::variation::{self, SampledPath, ValueNorm};

/// Divergence is declared after this many consecutive factors `>= 1`.
pub const DIVERGENCE_RUN: usize = 3;
/// Split-step runs abort once the sup norm exceeds this multiple of the
/// initial one.
pub const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct NLSProblem {
    pub u0: Field,
    pub kappa: f64,
    pub sign: Sign,
    pub horizon: f64,
    /// Number of time nodes on `[0, horizon]`.
    pub nodes: usize,
    /// Multiplies the nonlinearity; 0 gives the free equation.
    pub coupling: f64,
}

impl NLSProblem {
    pub fn new(u0: Field, kappa: f64, sign: Sign, horizon: f64, nodes: usize) -> Result<Self> {
        let d = u0.grid().dim();
        let allowed = match d {
            1 => kappa == 4.0,
            2 => kappa == 2.0,
            3 | 4 => kappa == propagator::critical_power(d)?,
            _ => false,
        };
        if !allowed {
            return Err(Error::InvalidExponent(format!("power kappa = {kappa} is not admissible in d = {d}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidTimes(format!("horizon {horizon} must be positive")));
        }
        if nodes < 16 {
            return Err(Error::InvalidTimes(format!("at least 16 time nodes required, got {nodes}")));
        }
        Ok(NLSProblem { u0, kappa, sign, horizon, nodes, coupling: 1.0 })
    }

    /// Quintic in `d = 1`, cubic in `d = 2`, energy-critical in `d = 3, 4`.
    pub fn standard(u0: Field, sign: Sign, horizon: f64, nodes: usize) -> Result<Self> {
        let kappa = match u0.grid().dim() {
            1 => 4.0,
            2 => 2.0,
            d => propagator::critical_power(d)?,
        };
        Self::new(u0, kappa, sign, horizon, nodes)
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidTimes(format!("horizon {horizon} must be positive")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn times(&self) -> Vec<f64> {
        TimeGrid::new(0.0, self.horizon, self.nodes).expect("validated").nodes()
    }

    pub fn dim(&self) -> usize {
        self.u0.grid().dim()
    }
}

/// `sign |f|^kappa f`.
pub fn nonlinearity(f: &Field, kappa: f64, sign: Sign) -> Field {
    let s = sign.value();
    let values = f.values().iter().map(|v| v * (s * v.norm().powf(kappa))).collect();
    Field::new(*f.grid(), values).expect("same grid")
}

/// Norm in which Picard iterates are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum IterationNorm {
    /// `sup_t ||u(t)||_{L^2}`.
    SupL2,
    /// `sup_t ||u(t)||_{L^2} + ||u||_{L^{kappa+2}_{t,x}}`.
    Strichartz,
    /// `sup_t ||u(t)||_{M^s_{4,2}}`.
    SupModulation { s: f64 },
    /// The `Y^s` proxy.
    Ys { s: f64 },
}

impl IterationNorm {
    /// Strichartz norm for `d <= 2`, `Y^{1.1}` otherwise.
    pub fn default_for(d: usize) -> Self {
        if d <= 2 {
            IterationNorm::Strichartz
        } else {
            IterationNorm::Ys { s: 1.1 }
        }
    }

    fn needs_window(&self) -> bool {
        matches!(self, IterationNorm::SupModulation { .. } | IterationNorm::Ys { .. })
    }

    fn evaluate(&self, times: &[f64], path: &[Field], kappa: f64, window: Option<&Window>) -> Result<f64> {
        let sup_l2 = || path.iter().map(|f| grid::lp_norm(f, 2.0).expect("valid p")).fold(0.0, f64::max);
        match *self {
            IterationNorm::SupL2 => Ok(sup_l2()),
            IterationNorm::Strichartz => {
                let r = kappa + 2.0;
                let slices: Vec<f64> = path.iter().map(|f| grid::lp_norm(f, r).expect("valid p").powf(r)).collect();
                Ok(sup_l2() + grid::spacetime_norm_from_slices(times, &slices, r)?)
            }
            IterationNorm::SupModulation { s } => {
                let w = window.expect("window prepared");
                let spec = ModNormSpec::new(s, 4.0, 2.0)?;
                let norms = path.par_iter().map(|f| modspace::modulation_norm(f, &spec, w)).collect::<Result<Vec<_>>>()?;
                Ok(norms.into_iter().fold(0.0, f64::max))
            }
            IterationNorm::Ys { s } => {
                let w = window.expect("window prepared");
                let p = SampledPath::new(times.to_vec(), path.to_vec(), ValueNorm::L2)?;
                Ok(variation::ys_norm(&p, s, w)?.value)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub max_iters: usize,
    /// Stop once `||u^{(j+1)} - u^{(j)}|| <= tol * ||u^{(0)}||`.
    pub tol: f64,
    pub norm: IterationNorm,
}

impl PicardOptions {
    pub fn for_problem(problem: &NLSProblem) -> Self {
        PicardOptions { max_iters: 50, tol: 1e-12, norm: IterationNorm::default_for(problem.dim()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub mass_initial: f64,
    pub mass_final: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
}

impl Conservation {
    fn of(problem: &NLSProblem, last: &Field) -> Self {
        Conservation {
            mass_initial: propagator::mass(&problem.u0),
            mass_final: propagator::mass(last),
            energy_initial: propagator::energy(&problem.u0, problem.kappa, problem.sign),
            energy_final: propagator::energy(last, problem.kappa, problem.sign),
        }
    }
}

/// Ball conditions at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCheck {
    pub iterate: usize,
    pub norm: f64,
    pub tail: f64,
}

/// Parameters of the frequency-cutoff argument and the ball conditions
/// `||u^{(j)}|| <= 2A`, `||P_{>N} u^{(j)}|| <= 2 delta` at every iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub s: f64,
    pub a: f64,
    pub delta: f64,
    pub cutoff: f64,
    pub horizon: f64,
    pub c0: f64,
    pub c1: f64,
    pub constant: f64,
    pub checks: Vec<BallCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Number of applications of the Picard map.
    pub iterates: usize,
    /// `||u^{(j+1)} - u^{(j)}||` for `j = 0, 1, ...`.
    pub residuals: Vec<f64>,
    /// `residuals[j] / residuals[j-1]`, `j >= 1`.
    pub factors: Vec<f64>,
    pub final_residual: f64,
    pub norm: IterationNorm,
    pub certificate: Option<Certificate>,
    pub conservation: Conservation,
}

/// A solution sampled at the problem's time nodes.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub path: Vec<Field>,
}

impl Solution {
    pub fn last(&self) -> &Field {
        self.path.last().expect("non-empty")
    }
}

fn picard_map(problem: &NLSProblem, times: &[f64], free: &[SpectralField], u: &[Field]) -> Vec<Field> {
    let forcing: Vec<SpectralField> = u
        .par_iter()
        .map(|f| nonlinearity(f, problem.kappa, problem.sign).scale_real(problem.coupling).to_spectrum())
        .collect();
    let integrals = propagator::duhamel_spectral(times, &forcing);
    free.par_iter()
        .zip(integrals.par_iter())
        .map(|(a, b)| {
            let c: Vec<Complex64> = a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| x - Complex64::i() * y).collect();
            SpectralField::new(*a.grid(), c).expect("finite").to_field()
        })
        .collect()
}

fn difference(a: &[Field], b: &[Field]) -> Vec<Field> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn prepare_window(problem: &NLSProblem, norm: &IterationNorm) -> Result<Option<Window>> {
    if norm.needs_window() {
        Ok(Some(modspace::make_window(problem.u0.grid())?))
    } else {
        Ok(None)
    }
}

type IterateHook<'a> = dyn FnMut(usize, &[Field]) -> Result<()> + 'a;

fn picard_from(problem: &NLSProblem, opts: &PicardOptions, initial: Option<Vec<Field>>, hook: &mut IterateHook) -> Result<(Solution, SolverReport)> {
    if opts.max_iters == 0 {
        return Err(Error::Degenerate("max_iters must be positive".into()));
    }
    let times = problem.times();
    let window = prepare_window(problem, &opts.norm)?;
    let base = problem.u0.to_spectrum();
    let norms = problem.u0.grid().frequency_norms_sq();
    let free: Vec<SpectralField> = times
        .iter()
        .map(|&t| {
            let mut s = base.clone();
            propagator::evolve_spectrum_with(s.coefficients_mut(), &norms, t);
            s
        })
        .collect();
    let free_path: Vec<Field> = free.par_iter().map(|s| s.to_field()).collect();
    let scale = opts.norm.evaluate(&times, &free_path, problem.kappa, window.as_ref())?;
    let mut u = initial.unwrap_or(free_path);
    hook(0, &u)?;
    let mut residuals = Vec::new();
    let mut factors: Vec<f64> = Vec::new();
    for j in 1..=opts.max_iters {
        let next = picard_map(problem, &times, &free, &u);
        let r = opts.norm.evaluate(&times, &difference(&next, &u), problem.kappa, window.as_ref())?;
        if !r.is_finite() {
            factors.push(f64::INFINITY);
            return Err(Error::Diverged { factors });
        }
        if let Some(&prev) = residuals.last() {
            factors.push(if prev > 0.0 { r / prev } else { 0.0 });
        }
        residuals.push(r);
        u = next;
        hook(j, &u)?;
        if r <= opts.tol * scale {
            break;
        }
        if factors.len() >= DIVERGENCE_RUN && factors[factors.len() - DIVERGENCE_RUN..].iter().all(|&f| f >= 1.0) {
            return Err(Error::Diverged { factors });
        }
    }
    let report = SolverReport {
        iterates: residuals.len(),
        final_residual: *residuals.last().expect("at least one iterate"),
        residuals,
        factors,
        norm: opts.norm,
        certificate: None,
        conservation: Conservation::of(problem, u.last().expect("nodes")),
    };
    Ok((Solution { times, path: u }, report))
}

/// Iterates `u^{(j+1)} = e^{it Delta} u_0 - i int_0^t e^{i(t-s) Delta} F(u^{(j)}(s)) ds`
/// from the free trajectory.
pub fn picard_solve(problem: &NLSProblem, opts: &PicardOptions) -> Result<(Solution, SolverReport)> {
    picard_from(problem, opts, None, &mut |_, _| Ok(()))
}

/// Maximum over nodes of the `L^2` distance between the solutions reached
/// from the free trajectory and from the zero path.
pub fn uniqueness_probe(problem: &NLSProblem, opts: &PicardOptions) -> Result<f64> {
    let (a, _) = picard_solve(problem, opts)?;
    let zero = vec![Field::zeros(*problem.u0.grid()); problem.nodes];
    let (b, _) = picard_from(problem, opts, Some(zero), &mut |_, _| Ok(()))?;
    Ok(a.path.iter().zip(&b.path).map(|(x, y)| grid::lp_norm(&(x - y), 2.0).expect("valid p")).fold(0.0, f64::max))
}

/// Strang splitting with step `dt`; returns the solution at every step.
pub fn splitstep_solve(problem: &NLSProblem, dt: f64) -> Result<Solution> {
    splitstep_solve_guarded(problem, dt, BLOW_UP_FACTOR)
}

/// [`splitstep_solve`] with a custom blow-up factor.
pub fn splitstep_solve_guarded(problem: &NLSProblem, dt: f64, guard: f64) -> Result<Solution> {
    let steps = (problem.horizon / dt).round();
    if !(dt > 0.0) || steps < 64.0 || (steps * dt - problem.horizon).abs() > 1e-9 * problem.horizon {
        return Err(Error::InvalidTimes(format!("dt = {dt} must divide T = {} into at least 64 steps", problem.horizon)));
    }
    let steps = steps as usize;
    let g = *problem.u0.grid();
    let norms = g.frequency_norms_sq();
    let rotate = |u: &mut Vec<Complex64>, tau: f64| {
        let c = -problem.sign.value() * problem.coupling * tau;
        if c != 0.0 {
            u.iter_mut().for_each(|v| *v *= Complex64::from_polar(1.0, c * v.norm().powf(problem.kappa)));
        }
    };
    let limit = guard * problem.u0.sup().max(f64::MIN_POSITIVE);
    let mut times = Vec::with_capacity(steps + 1);
    let mut path = Vec::with_capacity(steps + 1);
    times.push(0.0);
    path.push(problem.u0.clone());
    let mut u = problem.u0.values().to_vec();
    for k in 1..=steps {
        rotate(&mut u, 0.5 * dt);
        let mut s = Field::new(g, u)?.to_spectrum();
        propagator::evolve_spectrum_with(s.coefficients_mut(), &norms, dt);
        u = s.to_field().into_values();
        rotate(&mut u, 0.5 * dt);
        let f = Field::new(g, u.clone())?;
        let t = k as f64 * dt;
        let sup = f.sup();
        if !(sup <= limit) {
            return Err(Error::BlowUp { t, sup, limit });
        }
        times.push(t);
        path.push(f);
    }
    Ok(Solution { times, path })
}

/// Relative `L^2` defect of the split-step solution under a Galilean
/// transform: the run from `e^{ix.xi0} u0` is compared at `T` with
/// `e^{i x.xi0 - iT|xi0|^2} u(T, x - 2T xi0)`. The per-step shift `2 dt xi0`
/// must be a whole number of grid cells, which makes the identity exact for
/// the discrete scheme.
pub fn galilean_defect(problem: &NLSProblem, xi0: &[f64], dt: f64) -> Result<f64> {
    let g = *problem.u0.grid();
    if xi0.len() != g.dim() {
        return Err(Error::GridMismatch(format!("xi0 of dimension {} on a {}-d grid", xi0.len(), g.dim())));
    }
    let t = problem.horizon;
    let mut shift = Vec::with_capacity(g.dim());
    let steps = (t / dt).round();
    for &v in xi0 {
        let cells = 2.0 * dt * v / g.spacing();
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::InvalidTimes(format!("2 dt xi0 = {} is not a multiple of the spacing", 2.0 * dt * v)));
        }
        shift.push(cells.round() as i64 * steps as i64);
    }
    let base = splitstep_solve(problem, dt)?;
    let mut moved = problem.clone();
    moved.u0 = propagator::galilean_shift(&problem.u0, xi0)?;
    let run = splitstep_solve(&moved, dt)?;
    let r2: f64 = xi0.iter().map(|v| v * v).sum();
    let expected = propagator::galilean_shift(&propagator::translate(base.last(), &shift), xi0)?.scale(Complex64::from_polar(1.0, -t * r2));
    Ok(relative(run.last(), &expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `||u_picard(T) - u_split(T)||_{L^2} / ||u_split(T)||_{L^2}`.
    pub distance: f64,
    pub tolerance: f64,
    pub dt: f64,
    /// Relative change of the Picard endpoint when the node count is doubled.
    pub picard_refinement: f64,
    /// Relative change of the split-step endpoint when `dt` is halved.
    pub splitstep_refinement: f64,
    pub picard: SolverReport,
}

fn relative(a: &Field, b: &Field) -> f64 {
    let scale = grid::lp_norm(b, 2.0).expect("valid p");
    let d = grid::lp_norm(&(a - b), 2.0).expect("valid p");
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

/// Compares Picard and split-step endpoints with matched resolutions:
/// `dt` equal to the node spacing.
pub fn cross_validate(problem: &NLSProblem, opts: &PicardOptions, tolerance: f64) -> Result<CrossValidation> {
    let (sol, report) = picard_solve(problem, opts)?;
    let dt = problem.horizon / (problem.nodes - 1) as f64;
    let split = splitstep_solve(problem, dt)?;
    let distance = relative(sol.last(), split.last());

    let mut fine = problem.clone();
    fine.nodes = 2 * problem.nodes - 1;
    let (sol_fine, _) = picard_solve(&fine, opts)?;
    let split_fine = splitstep_solve(problem, dt / 2.0)?;
    let out = CrossValidation {
        distance,
        tolerance,
        dt,
        picard_refinement: relative(sol.last(), sol_fine.last()),
        splitstep_refinement: relative(split.last(), split_fine.last()),
        picard: report,
    };
    if !(distance <= tolerance) {
        return Err(Error::Disagreement { distance, tolerance });
    }
    Ok(out)
}

fn default_s() -> f64 {
    1.1
}
fn default_c() -> f64 {
    0.1
}
fn default_constant() -> f64 {
    1.0
}
fn default_iters() -> usize {
    30
}
fn default_tol() -> f64 {
    1e-10
}

/// Constants of the frequency-cutoff protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LargeDataOptions {
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_c")]
    pub c0: f64,
    #[serde(default = "default_c")]
    pub c1: f64,
    /// The absolute constant `C` in `delta = c0 A^{-(6-d)/(d-2)} / C`.
    #[serde(default = "default_constant")]
    pub constant: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for LargeDataOptions {
    fn default() -> Self {
        LargeDataOptions { s: default_s(), c0: default_c(), c1: default_c(), constant: default_constant(), max_iters: default_iters(), tol: default_tol() }
    }
}

/// Chooses `(A, delta, N, T)`, solves on `[0, T]` in the `Y^s` proxy and
/// checks the ball conditions at every iterate.
pub fn large_data_protocol(problem: &NLSProblem, opts: &LargeDataOptions) -> Result<(Solution, SolverReport)> {
    let d = problem.dim();
    if !(3..=4).contains(&d) {
        return Err(Error::Unsupported(format!("the frequency-cutoff protocol is for d in {{3, 4}}, got {d}")));
    }
    let g = *problem.u0.grid();
    let window = modspace::make_window(&g)?;
    let spec = ModNormSpec::new(opts.s, 4.0, 2.0)?;
    let a = modspace::modulation_norm(&problem.u0, &spec, &window)?;
    if !a.is_finite() {
        return Err(Error::Degenerate("data norm is not finite".into()));
    }
    let dd = d as f64;
    let (delta, cutoff, horizon) = if a == 0.0 {
        (0.0, 1.0, problem.horizon.min(1.0))
    } else {
        let delta = opts.c0 * a.powf(-(6.0 - dd) / (dd - 2.0)) / opts.constant;
        let mut cutoff = None;
        for n in modspace::dyadic_bands(&g).into_iter().chain(std::iter::once(f64::INFINITY)) {
            let tail = if n.is_finite() { modspace::modulation_norm(&modspace::high_project(&problem.u0, n), &spec, &window)? } else { 0.0 };
            if tail <= delta {
                cutoff = Some(n);
                break;
            }
        }
        let cutoff = cutoff.expect("the empty tail always qualifies");
        if !cutoff.is_finite() {
            return Err(Error::OutOfBand("no dyadic cutoff on the grid meets the tail condition".into()));
        }
        let power = a.powf(-4.0 / (dd - 2.0));
        let bound = opts.c1 * (cutoff.powf(-6.0 / (dd - 2.0)) * power).min(cutoff.powf(-2.0 * dd / (dd - 2.0)) * power);
        (delta, cutoff, problem.horizon.min(bound))
    };
    let local = problem.clone().with_horizon(horizon)?;
    let picard = PicardOptions { max_iters: opts.max_iters, tol: opts.tol, norm: IterationNorm::Ys { s: opts.s } };
    let mut checks = Vec::new();
    let times = local.times();
    let mut hook = |j: usize, u: &[Field]| -> Result<()> {
        let path = SampledPath::new(times.clone(), u.to_vec(), ValueNorm::L2)?;
        let norm = variation::ys_norm(&path, opts.s, &window)?.value;
        let tail_path = path.map(|_, f| modspace::high_project(f, cutoff));
        let tail = variation::ys_norm(&tail_path, opts.s, &window)?.value;
        checks.push(BallCheck { iterate: j, norm, tail });
        if !(norm <= 2.0 * a * (1.0 + 1e-12)) {
            return Err(Error::Certificate { iterate: j, inequality: format!("||u|| = {norm:.6e} > 2A = {:.6e}", 2.0 * a) });
        }
        if !(tail <= 2.0 * delta * (1.0 + 1e-12)) {
            return Err(Error::Certificate {
                iterate: j,
                inequality: format!("||P_>N u|| = {tail:.6e} > 2 delta = {:.6e}", 2.0 * delta),
            });
        }
        Ok(())
    };
    let (sol, mut report) = picard_from(&local, &picard, None, &mut hook)?;
    report.certificate = Some(Certificate {
        s: opts.s,
        a,
        delta,
        cutoff,
        horizon,
        c0: opts.c0,
        c1: opts.c1,
        constant: opts.constant,
        checks,
    });
    Ok((sol, report))
}

/// `||u_0||_{M^s_{p,2} + L^2}` bound with `p = kappa + 2`, the smallness
/// quantity for `d <= 2`.
pub fn sum_space_data_norm(problem: &NLSProblem, s: f64) -> Result<SumSpaceBound> {
    if problem.dim() > 2 {
        return Err(Error::Unsupported("the sum-space data norm is used for d <= 2".into()));
    }
    let window = modspace::make_window(problem.u0.grid())?;
    modspace::sum_space_norm_upper(&problem.u0, &ModNormSpec::new(s, problem.kappa + 2.0, 2.0)?, &window)
}
