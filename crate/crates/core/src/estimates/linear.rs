use num_complex::Complex64;
use rayon::prelude::*;

use super::{sdec, DataFamily, ExperimentConfig, FitResult, Row, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::modspace::{self, ModNormSpec, Window};
use crate::propagator;

/// `h^d sum |v|^p` with integer fast paths.
fn power_sum(values: &[Complex64], cell: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p as u32 % 2 == 0 && p <= 16.0 {
        let k = (p as i32) / 2;
        return values.iter().map(|v| v.norm_sqr().powi(k)).sum::<f64>() * cell;
    }
    values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * cell
}

/// `||e^{it Delta} f||_{L^p(times x torus)}`, trapezoid in time.
pub fn evolution_lp_norm(f: &Field, times: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("p = {p} must be finite and >= 1")));
    }
    grid::check_times(times)?;
    let base = f.to_spectrum();
    let norms = f.grid().frequency_norms_sq();
    let cell = f.grid().cell();
    let slices: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let mut s = base.clone();
            propagator::evolve_spectrum_with(s.coefficients_mut(), &norms, t);
            power_sum(s.to_field().values(), cell, p)
        })
        .collect();
    grid::spacetime_norm_from_slices(times, &slices, p)
}

fn linear_sweep(cfg: &ExperimentConfig, name: &str, p: f64, predicted: f64) -> Result<FitResult> {
    let g = cfg.validate()?;
    if cfg.family == DataFamily::Zero {
        return Err(Error::Degenerate("zero data has no ratio".into()));
    }
    let times = cfg.times()?;
    let window = modspace::make_window(&g)?;
    let spec = ModNormSpec::new(cfg.s, p, cfg.q)?;
    let rows = cfg
        .scales
        .iter()
        .map(|&n| {
            let u0 = cfg.family.generate(n, cfg.seed, &g)?;
            if u0.is_zero() {
                return Err(Error::Degenerate(format!("data vanishes at scale {n}")));
            }
            let lhs = evolution_lp_norm(&u0, &times, p)?;
            let rhs = modspace::modulation_norm(&u0, &spec, &window)?;
            Row::new(n, lhs, rhs)
        })
        .collect::<Result<Vec<_>>>()?;
    FitResult::from_rows(name, rows, predicted, cfg.margin_or(DEFAULT_MARGIN))
}

/// `||e^{it Delta} u0||_{L^p} / ||u0||_{M^s_{p,q}}` over the scale sweep;
/// the predicted slope is `2 s_dec(p, d)`.
pub fn smoothing_ratio(cfg: &ExperimentConfig) -> Result<FitResult> {
    let predicted = 2.0 * sdec(cfg.p, cfg.d)?;
    linear_sweep(cfg, "smoothing", cfg.p, predicted)
}

/// The `L^4` case for `d in {3, 4}`.
pub fn strichartz_l4_ratio(cfg: &ExperimentConfig) -> Result<FitResult> {
    if !(3..=4).contains(&cfg.d) {
        return Err(Error::Unsupported(format!("the L^4 Strichartz sweep is for d in {{3, 4}}, got {}", cfg.d)));
    }
    let predicted = 2.0 * sdec(4.0, cfg.d)?;
    linear_sweep(cfg, "strichartz", 4.0, predicted)
}

/// Ratios of `f` and of its modulation by the lattice frequency `xi0`.
pub fn galilean_ratio_pair(f: &Field, xi0: &[f64], times: &[f64], spec: &ModNormSpec, window: &Window) -> Result<(f64, f64)> {
    let g = propagator::galilean_shift(f, xi0)?;
    let ratio = |h: &Field| -> Result<f64> {
        let rhs = modspace::modulation_norm(h, spec, window)?;
        Ok(Row::new(0.0, evolution_lp_norm(h, times, spec.p)?, rhs)?.ratio)
    };
    Ok((ratio(f)?, ratio(&g)?))
}
