//! Free Schrodinger evolution `e^{it Delta}` (multiplier `e^{-it|xi|^2}`,
//! solving `i u_t + Delta u = 0`), Galilean modulation, the Duhamel
//! integral, the paraboloid extension operator and conserved functionals.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, Field, SpectralField};

/// Uniform time nodes on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub m: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, m: usize) -> Result<Self> {
        if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidTimes(format!("need t0 < t1, got [{t0}, {t1}]")));
        }
        if m < 2 {
            return Err(Error::InvalidTimes(format!("need at least 2 nodes, got {m}")));
        }
        Ok(TimeGrid { t0, t1, m })
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.m - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dt = self.step();
        (0..self.m).map(|j| if j + 1 == self.m { self.t1 } else { self.t0 + j as f64 * dt }).collect()
    }
}

/// Nodes `t1 * (j/(m-1))^gamma`, clustering near 0 for `gamma > 1`.
pub fn graded_nodes(t1: f64, m: usize, gamma: f64) -> Result<Vec<f64>> {
    TimeGrid::new(0.0, t1, m)?;
    if !(gamma >= 1.0) {
        return Err(Error::InvalidTimes(format!("grading exponent {gamma} < 1")));
    }
    Ok((0..m).map(|j| t1 * (j as f64 / (m - 1) as f64).powf(gamma)).collect())
}

/// Sign of the nonlinearity in `i u_t + Delta u = sign |u|^kappa u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Defocusing,
    Focusing,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Defocusing => 1.0,
            Sign::Focusing => -1.0,
        }
    }
}

/// Applies `e^{-it|xi|^2}` in place.
pub fn evolve_spectrum(s: &mut SpectralField, t: f64) {
    if t == 0.0 {
        return;
    }
    let norms = s.grid().frequency_norms_sq();
    s.apply(|i| Complex64::from_polar(1.0, -t * norms[i]));
}

/// Evolves with a precomputed `|xi|^2` table.
pub(crate) fn evolve_spectrum_with(coefficients: &mut [Complex64], norms: &[f64], t: f64) {
    if t == 0.0 {
        return;
    }
    coefficients.iter_mut().zip(norms).for_each(|(c, &r2)| *c *= Complex64::from_polar(1.0, -t * r2));
}

/// `e^{it Delta} f`.
pub fn free_evolve(f: &Field, t: f64) -> Field {
    if t == 0.0 {
        return f.clone();
    }
    let mut s = f.to_spectrum();
    evolve_spectrum(&mut s, t);
    s.to_field()
}

/// Free trajectory `t_j -> e^{i t_j Delta} f`.
pub fn free_trajectory(f: &Field, times: &[f64]) -> Vec<Field> {
    let base = f.to_spectrum();
    let norms = f.grid().frequency_norms_sq();
    times
        .iter()
        .map(|&t| {
            let mut s = base.clone();
            evolve_spectrum_with(s.coefficients_mut(), &norms, t);
            s.to_field()
        })
        .collect()
}

/// `e^{i x . xi0} f(x)` for a lattice frequency `xi0`.
pub fn galilean_shift(f: &Field, xi0: &[f64]) -> Result<Field> {
    let g = *f.grid();
    let m0 = g
        .lattice_frequency(xi0)
        .ok_or_else(|| Error::OutOfBand(format!("xi0 = {xi0:?} is not on the frequency lattice")))?;
    Ok(modulate(f, &m0))
}

/// Multiplies by `e^{i x . m dxi}` using exact integer phases.
pub(crate) fn modulate(f: &Field, m0: &[i64]) -> Field {
    let g = *f.grid();
    let n = g.n() as i64;
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(lin, v)| {
            let idx = g.unravel(lin);
            let phase_index: i64 = (0..g.dim()).map(|a| g.signed(idx[a]) * m0[a]).sum::<i64>().rem_euclid(n);
            v * Complex64::from_polar(1.0, 2.0 * PI * phase_index as f64 / n as f64)
        })
        .collect();
    Field::from_vec_unchecked(g, values)
}

/// `f(x - shift * h)` for an integer lattice translation.
pub fn translate(f: &Field, shift: &[i64]) -> Field {
    let g = *f.grid();
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut m = [0i64; grid::MAX_DIM];
    for (lin, v) in f.values().iter().enumerate() {
        let idx = g.unravel(lin);
        for a in 0..g.dim() {
            m[a] = g.signed(idx[a]) + shift[a];
        }
        out[g.ravel_signed(&m[..g.dim()])] = *v;
    }
    Field::from_vec_unchecked(g, out)
}

fn check_forcing(forcing: &[(f64, Field)]) -> Result<()> {
    let times: Vec<f64> = forcing.iter().map(|(t, _)| *t).collect();
    grid::check_times(&times)?;
    let g = forcing[0].1.grid();
    forcing.iter().try_for_each(|(_, f)| f.grid().check_same(g))
}

/// `int_{t_0}^{t_j} e^{i(t_j - s) Delta} F(s) ds` at every node, composite
/// trapezoid in `s`.
pub fn duhamel_all(forcing: &[(f64, Field)]) -> Result<Vec<Field>> {
    check_forcing(forcing)?;
    let times: Vec<f64> = forcing.iter().map(|(t, _)| *t).collect();
    let spectra: Vec<SpectralField> = forcing.iter().map(|(_, f)| f.to_spectrum()).collect();
    Ok(duhamel_spectral(&times, &spectra).into_iter().map(|s| s.to_field()).collect())
}

/// Duhamel integrals in spectral form; input and output are spectra.
pub(crate) fn duhamel_spectral(times: &[f64], spectra: &[SpectralField]) -> Vec<SpectralField> {
    let g = *spectra[0].grid();
    let norms = g.frequency_norms_sq();
    // interaction picture: G(s) = e^{-i s Delta} F(s) relative to t0
    let t0 = times[0];
    let pulled: Vec<Vec<Complex64>> = spectra
        .iter()
        .zip(times)
        .map(|(s, &t)| {
            let mut c = s.coefficients().to_vec();
            evolve_spectrum_with(&mut c, &norms, -(t - t0));
            c
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut out = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        if j > 0 {
            let half = 0.5 * (times[j] - times[j - 1]);
            for ((a, p), q) in acc.iter_mut().zip(&pulled[j - 1]).zip(&pulled[j]) {
                *a += (p + q) * half;
            }
        }
        let mut c = acc.clone();
        evolve_spectrum_with(&mut c, &norms, times[j] - t0);
        out.push(SpectralField::new(g, c).expect("finite Duhamel coefficients"));
    }
    out
}

/// Duhamel integral at the node `t`.
pub fn duhamel(forcing: &[(f64, Field)], t: f64) -> Result<Field> {
    check_forcing(forcing)?;
    let j = forcing
        .iter()
        .position(|(s, _)| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
        .ok_or_else(|| Error::InvalidTimes(format!("t = {t} is not a node of the forcing grid")))?;
    if j == 0 {
        return Ok(Field::zeros(*forcing[0].1.grid()));
    }
    Ok(duhamel_all(&forcing[..=j])?.pop().expect("non-empty"))
}

/// A profile sampled at cell midpoints of a cubic mesh over `[-1,1]^d`,
/// restricted to the open unit ball.
#[derive(Debug, Clone)]
pub struct Profile {
    pub d: usize,
    /// Mesh cell width.
    pub delta: f64,
    /// Cells per axis across `[-1, 1]`.
    pub cells: usize,
    /// Per-axis cell indices and values of the retained cells.
    pub samples: Vec<(Vec<usize>, Complex64)>,
}

impl Profile {
    pub fn from_fn(d: usize, cells: usize, mut f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::Unsupported(format!("extension operator implemented for d in {{1, 2}}, got {d}")));
        }
        if cells < 2 {
            return Err(Error::InvalidGrid("profile mesh needs at least 2 cells".into()));
        }
        let delta = 2.0 / cells as f64;
        let mut samples = Vec::new();
        let total = cells.pow(d as u32);
        for mut lin in 0..total {
            let mut idx = vec![0usize; d];
            for a in (0..d).rev() {
                idx[a] = lin % cells;
                lin /= cells;
            }
            let xi: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * delta).collect();
            if xi.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                let v = f(&xi);
                if v != Complex64::new(0.0, 0.0) {
                    samples.push((idx, v));
                }
            }
        }
        Ok(Profile { d, delta, cells, samples })
    }

    pub fn frequency(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * self.delta).collect()
    }

    /// `f * 1_S` for a predicate on frequencies.
    pub fn restrict(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Profile {
        let samples = self.samples.iter().filter(|(idx, _)| keep(&self.frequency(idx))).cloned().collect();
        Profile { d: self.d, delta: self.delta, cells: self.cells, samples }
    }

    /// `sum delta^d |f|^2`.
    pub fn l2_sq(&self) -> f64 {
        self.samples.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>() * self.delta.powi(self.d as i32)
    }
}

/// Direct evaluation of `E f(t, x)` by the midpoint rule on the profile mesh.
pub fn extension_at(profile: &Profile, t: f64, x: &[f64]) -> Complex64 {
    let w = profile.delta.powi(profile.d as i32);
    profile
        .samples
        .iter()
        .map(|(idx, v)| {
            let xi = profile.frequency(idx);
            let phase: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + t * xi.iter().map(|a| a * a).sum::<f64>();
            v * Complex64::from_polar(w, phase)
        })
        .sum()
}

/// Space-time sampling of `E f` on the uniform mesh of spacing `h` inside
/// the ball `B_{d+1}(0, R)`.
///
/// Rows are evaluated by FFT over the profile mesh, which computes the same
/// midpoint sums as [`extension_at`] at the spatial nodes `x = l h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionMesh {
    /// Space-time sample spacing (same in t and x).
    pub h: f64,
    /// FFT length per spatial axis; `h * fft_len * delta = 2 pi`.
    pub fft_len: usize,
}

impl ExtensionMesh {
    /// Mesh for a profile and radius: spacing at most `h_max`, spatial period
    /// `2 pi / delta` at least `2R`.
    pub fn for_profile(profile: &Profile, radius: f64, h_max: f64) -> Result<Self> {
        let period = 2.0 * PI / profile.delta;
        if period < 2.0 * radius {
            return Err(Error::InvalidGrid(format!(
                "profile mesh too coarse: spatial period {period:.1} < 2R = {:.1}",
                2.0 * radius
            )));
        }
        let fft_len = ((period / h_max).ceil() as usize).next_power_of_two();
        Ok(ExtensionMesh { h: period / fft_len as f64, fft_len })
    }
}

/// Rows `t -> E f(t, .)` on the spatial nodes `x = l h`, `|l| < fft_len/2`,
/// FFT ordering.
fn extension_row(profile: &Profile, mesh: &ExtensionMesh, t: f64, buf: &mut [Complex64]) {
    let d = profile.d;
    let m = mesh.fft_len;
    buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let w = profile.delta.powi(d as i32);
    // x . xi_j = l h (-1 + (j + 1/2) delta) = l * 2pi j / m + l h (delta/2 - 1)
    for (idx, v) in &profile.samples {
        let xi = profile.frequency(idx);
        let r2: f64 = xi.iter().map(|a| a * a).sum();
        let lin = idx.iter().fold(0usize, |acc, &i| acc * m + i);
        buf[lin] += v * Complex64::from_polar(w, t * r2);
    }
    fft::inverse(buf, m, d);
    let offset = mesh.h * (profile.delta / 2.0 - 1.0);
    for (lin, val) in buf.iter_mut().enumerate() {
        let mut rem = lin;
        let mut phase = 0.0;
        for _ in 0..d {
            let j = rem % m;
            rem /= m;
            let l = if j < m / 2 { j as f64 } else { j as f64 - m as f64 };
            phase += l * offset;
        }
        *val *= Complex64::from_polar(1.0, phase);
    }
}

/// Samples of `E f` inside `B_{d+1}(0, R)`: `(t, x, value)` triples.
pub fn extension_operator(profile: &Profile, radius: f64, mesh: &ExtensionMesh) -> Result<Vec<(f64, Vec<f64>, Complex64)>> {
    check_extension(profile, radius, mesh)?;
    let mut out = Vec::new();
    visit_extension(profile, radius, mesh, |t, x, v| out.push((t, x.to_vec(), v)));
    Ok(out)
}

fn check_extension(profile: &Profile, radius: f64, mesh: &ExtensionMesh) -> Result<()> {
    if radius < 4.0 {
        return Err(Error::InvalidGrid(format!("extension region radius R = {radius} < 4")));
    }
    if profile.cells > mesh.fft_len {
        return Err(Error::InvalidGrid("FFT length shorter than the profile mesh".into()));
    }
    if (mesh.h * mesh.fft_len as f64 * profile.delta - 2.0 * PI).abs() > 1e-9 {
        return Err(Error::InvalidGrid("mesh is not matched to the profile".into()));
    }
    Ok(())
}

fn visit_extension(profile: &Profile, radius: f64, mesh: &ExtensionMesh, mut visit: impl FnMut(f64, &[f64], Complex64)) {
    let d = profile.d;
    let m = mesh.fft_len;
    let mut buf = vec![Complex64::new(0.0, 0.0); m.pow(d as u32)];
    let lmax = (radius / mesh.h).floor() as i64;
    let mut x = vec![0.0; d];
    for it in -lmax..=lmax {
        let t = it as f64 * mesh.h;
        let rx2 = radius * radius - t * t;
        if rx2 < 0.0 {
            continue;
        }
        extension_row(profile, mesh, t, &mut buf);
        for (lin, v) in buf.iter().enumerate() {
            let mut rem = lin;
            let mut r2 = 0.0;
            for a in (0..d).rev() {
                let j = rem % m;
                rem /= m;
                let l = if j < m / 2 { j as f64 } else { j as f64 - m as f64 };
                x[a] = l * mesh.h;
                r2 += x[a] * x[a];
            }
            if r2 <= rx2 {
                visit(t, &x, *v);
            }
        }
    }
}

/// `||E f||_{L^p(B_{d+1}(0, R))}` by the space-time Riemann sum.
pub fn extension_lp_norm(profile: &Profile, radius: f64, mesh: &ExtensionMesh, p: f64) -> Result<f64> {
    check_extension(profile, radius, mesh)?;
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("p = {p} must be finite and >= 1")));
    }
    let mut acc = 0.0;
    visit_extension(profile, radius, mesh, |_, _, v| acc += v.norm().powf(p));
    Ok((acc * mesh.h.powi(profile.d as i32 + 1)).powf(1.0 / p))
}

/// `||E f(0, .)||^2` over one full spatial period of the mesh.
pub fn extension_period_l2_sq(profile: &Profile, mesh: &ExtensionMesh) -> f64 {
    let mut buf = vec![Complex64::new(0.0, 0.0); mesh.fft_len.pow(profile.d as u32)];
    extension_row(profile, mesh, 0.0, &mut buf);
    buf.iter().map(|v| v.norm_sqr()).sum::<f64>() * mesh.h.powi(profile.d as i32)
}

/// `lambda^a f(lambda x)` for integer `lambda >= 1`, realized on the same
/// grid by evaluating the spectrum of `f` on the refined lattice
/// `dxi / lambda` and stretching it by `lambda`.
pub fn spectral_dilate(f: &Field, lambda: usize, a: f64) -> Result<Field> {
    if lambda == 0 {
        return Err(Error::Degenerate("dilation factor must be positive".into()));
    }
    let g = *f.grid();
    let d = g.dim();
    let l = lambda as i64;
    let scale = (lambda as f64).powf(a - d as f64);
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    let residues = lambda.pow(d as u32);
    for mut rlin in 0..residues {
        let mut r = [0i64; grid::MAX_DIM];
        for a in (0..d).rev() {
            r[a] = (rlin % lambda) as i64;
            rlin /= lambda;
        }
        // spectrum of f at m dxi + r dxi / lambda
        let shift: Vec<f64> = (0..d).map(|a| -(r[a] as f64) * g.dxi() / lambda as f64).collect();
        let shifted = Field::from_vec_unchecked(
            g,
            f.values()
                .iter()
                .enumerate()
                .map(|(lin, v)| {
                    let idx = g.unravel(lin);
                    let phase: f64 = (0..d).map(|a| g.signed(idx[a]) as f64 * g.spacing() * shift[a]).sum();
                    v * Complex64::from_polar(1.0, phase)
                })
                .collect(),
        );
        let spec = shifted.to_spectrum();
        let mut m = [0i64; grid::MAX_DIM];
        for (lin, o) in out.iter_mut().enumerate() {
            let idx = g.unravel(lin);
            let mut matches = true;
            for a in 0..d {
                let k = g.signed(idx[a]);
                if k.rem_euclid(l) != r[a] {
                    matches = false;
                    break;
                }
                m[a] = (k - r[a]) / l;
            }
            if matches {
                *o = spec.coefficients()[g.ravel_signed(&m[..d])] * scale;
            }
        }
    }
    Ok(SpectralField::new(g, out)?.to_field())
}

/// `||f||_{L^2}^2`.
pub fn mass(f: &Field) -> f64 {
    grid::lp_norm(f, 2.0).expect("p = 2 is valid").powi(2)
}

/// `||grad f||_{L^2}^2`, spectral gradient.
pub fn gradient_sq(f: &Field) -> f64 {
    let s = f.to_spectrum();
    let norms = f.grid().frequency_norms_sq();
    s.coefficients().iter().zip(&norms).map(|(c, r2)| c.norm_sqr() * r2).sum::<f64>() * f.grid().freq_cell()
}

/// Energy-critical power `4 / (d - 2)`.
pub fn critical_power(d: usize) -> Result<f64> {
    match d {
        3 | 4 => Ok(4.0 / (d as f64 - 2.0)),
        _ => Err(Error::Unsupported(format!("energy-critical power defined for d in {{3, 4}}, got {d}"))),
    }
}

/// `E[f] = int |grad f|^2 / 2 + sign |f|^{kappa+2} / (kappa + 2) dx`, the
/// functional conserved by `i u_t + Delta u = sign |u|^kappa u`. For
/// `kappa = 4/(d-2)` the potential weight is `(d-2)/(2d)`.
pub fn energy(f: &Field, kappa: f64, sign: Sign) -> f64 {
    let r = kappa + 2.0;
    let potential = grid::lp_norm(f, r).expect("r >= 2").powf(r) / r;
    0.5 * gradient_sq(f) + sign.value() * potential
}
