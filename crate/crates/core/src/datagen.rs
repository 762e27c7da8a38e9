//! Deterministic initial-data families and the flat binary field format.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpectralField};
use crate::modspace::{self, ModNormSpec, Window};
use crate::propagator;

/// Fields whose edge values exceed this fraction of the peak are flagged.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;

/// Default regularity excess in `M^{1+eps}_{4,2}` reports.
pub const DEFAULT_EPS: f64 = 0.1;

/// Edge-to-peak ratio of a generated field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    pub decay: f64,
    pub flagged: bool,
}

pub fn boundary_check(f: &Field) -> BoundaryCheck {
    let decay = f.boundary_decay();
    BoundaryCheck { decay, flagged: decay > BOUNDARY_TOLERANCE }
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Norms recorded for a generated field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub eps: f64,
    /// `||f||_{M^{1+eps}_{4,2}}`.
    pub modulation: f64,
    /// `(||f||^2_{L^2} + ||grad f||^2_{L^2})^{1/2}`.
    pub h1: f64,
    pub l2: f64,
    pub l4: f64,
    pub boundary: BoundaryCheck,
}

pub fn norm_report(f: &Field, window: &Window, eps: f64) -> Result<NormReport> {
    let l2 = grid::lp_norm(f, 2.0)?;
    Ok(NormReport {
        eps,
        modulation: modspace::modulation_norm(f, &ModNormSpec::new(1.0 + eps, 4.0, 2.0)?, window)?,
        h1: (l2 * l2 + propagator::gradient_sq(f)).sqrt(),
        l2,
        l4: grid::lp_norm(f, 4.0)?,
        boundary: boundary_check(f),
    })
}

/// `chi_1 * 1_{B(0, n)}` normalized to `||f||_{L^4} = 1`, with `chi_1` a
/// smooth bump of radius 1 and unit integral. The convolution is evaluated
/// as a discrete convolution on the grid.
pub fn mollified_indicator(n_radius: f64, g: &Grid, window: &Window, eps: f64) -> Result<(Field, NormReport)> {
    if !(n_radius > 0.0) {
        return Err(Error::Degenerate(format!("ball radius {n_radius} must be positive")));
    }
    if n_radius + 2.0 > g.length() / 2.0 {
        return Err(Error::InvalidGrid(format!(
            "ball of radius {n_radius} plus mollifier does not fit in half-length {}",
            g.length() / 2.0
        )));
    }
    window.grid().check_same(g)?;
    let r2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let chi = Field::from_fn(*g, |x| Complex64::new(bump(r2(x).sqrt()), 0.0))?;
    let mass: f64 = chi.values().iter().map(|v| v.re).sum::<f64>() * g.cell();
    let ball = Field::from_fn(*g, |x| Complex64::new(if r2(x) < n_radius * n_radius { 1.0 } else { 0.0 }, 0.0))?;
    // discrete convolution h^d sum_y chi(x - y) 1(y) via the DFT
    let (a, b) = (chi.to_spectrum(), ball.to_spectrum());
    let c = (2.0 * PI).powf(g.dim() as f64 / 2.0) / mass;
    let conv: Vec<Complex64> = a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| x * y * c).collect();
    let f = SpectralField::new(*g, conv)?.to_field();
    let f = Field::new(*g, f.values().iter().map(|v| Complex64::new(v.re, 0.0)).collect())?;
    let l4 = grid::lp_norm(&f, 4.0)?;
    let f = &f * (1.0 / l4);
    let report = norm_report(&f, window, eps)?;
    Ok((f, report))
}

fn check_band(n: f64, g: &Grid) -> Result<()> {
    if !(n > 0.0) || n > g.xi_max() {
        return Err(Error::OutOfBand(format!("scale {n} outside (0, {}]", g.xi_max())));
    }
    Ok(())
}

/// Unit-modulus random phases on every lattice frequency with `|xi| <= N`.
pub fn random_phase_data(n: f64, seed: u64, g: &Grid) -> Result<Field> {
    check_band(n, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norms = g.frequency_norms_sq();
    let coefficients = norms
        .iter()
        .map(|&r2| {
            // one draw per lattice point keeps the stream aligned across N
            let theta = rng.gen_range(0.0..2.0 * PI);
            if r2 <= n * n {
                Complex64::from_polar(1.0, theta)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(SpectralField::new(*g, coefficients)?.to_field())
}

/// `u0(x) = int_{[-N, N]^d} e^{i x . xi} d xi` as a lattice sum, so that
/// `u0(0) = dxi^d * #{lattice points in the box}`.
pub fn focusing_data(n: f64, g: &Grid) -> Result<Field> {
    if !(n > 0.0) || n > g.xi_max() / 4.0 {
        return Err(Error::OutOfBand(format!("focusing scale {n} outside (0, {}]", g.xi_max() / 4.0)));
    }
    let c = Complex64::new((2.0 * PI).powf(g.dim() as f64 / 2.0), 0.0);
    let tol = 1e-9 * g.dxi();
    let s = SpectralField::from_fn(*g, |xi| if xi.iter().all(|v| v.abs() <= n + tol) { c } else { Complex64::new(0.0, 0.0) })?;
    Ok(s.to_field())
}

/// Smooth spectral bump of radius `1/2` centred at `N e_1`.
pub fn single_bump_data(n: f64, g: &Grid) -> Result<Field> {
    check_band(n + 0.5, g)?;
    let s = SpectralField::from_fn(*g, |xi| {
        let r2: f64 = xi.iter().enumerate().map(|(a, v)| if a == 0 { (v - n).powi(2) } else { v * v }).sum();
        Complex64::new(bump(2.0 * r2.sqrt()), 0.0)
    })?;
    Ok(s.to_field())
}

/// `amplitude * exp(-|x|^2 / (2 width^2))`.
pub fn gaussian(g: &Grid, amplitude: f64, width: f64) -> Result<Field> {
    if !(width > 0.0) {
        return Err(Error::Degenerate(format!("Gaussian width {width} must be positive")));
    }
    Field::from_fn(*g, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new(amplitude * (-r2 / (2.0 * width * width)).exp(), 0.0)
    })
}

/// Writes `d, n` as little-endian u64, `L` as f64, then interleaved
/// real/imaginary f64 values in storage order.
pub fn write_field(f: &Field, mut out: impl Write) -> Result<()> {
    let g = f.grid();
    let io = |e: std::io::Error| Error::Format(e.to_string());
    out.write_all(&(g.dim() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&(g.n() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&g.length().to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(16 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)
}

pub fn read_field(mut input: impl Read) -> Result<Field> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::Format(e.to_string()))?;
    if bytes.len() < 24 {
        return Err(Error::Format("truncated header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().expect("8 bytes") };
    let d = u64::from_le_bytes(word(0));
    let n = u64::from_le_bytes(word(1));
    let length = f64::from_le_bytes(word(2));
    if d == 0 || d > grid::MAX_DIM as u64 || n > 1 << 20 {
        return Err(Error::Format(format!("implausible header d = {d}, n = {n}")));
    }
    let g = Grid::new(d as usize, n as usize, length)?;
    if bytes.len() != 24 + 16 * g.len() {
        return Err(Error::Format(format!("payload holds {} bytes, expected {}", bytes.len() - 24, 16 * g.len())));
    }
    let values = (0..g.len()).map(|j| Complex64::new(f64::from_le_bytes(word(3 + 2 * j)), f64::from_le_bytes(word(4 + 2 * j)))).collect();
    Field::new(g, values)
}
