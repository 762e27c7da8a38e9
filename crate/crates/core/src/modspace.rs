//! Isometric frequency decomposition and modulation norms `M^s_{p,q}`,
//! Littlewood-Paley and ball projections.
//!
//! The window family is a *square* partition of unity,
//! `sum_k sigma_k(xi)^2 = 1`, built as a tensor product of one-dimensional
//! profiles. With this normalization `M_{2,2}` coincides with `L^2` exactly.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, Field, Grid, SpectralField, MAX_DIM};

/// Half-width of the one-dimensional profile support.
pub const PROFILE_RADIUS: f64 = 0.55;

fn bump(x: f64) -> f64 {
    let y = x / PROFILE_RADIUS;
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

/// Square-normalized one-dimensional window, `sum_j profile(x - j)^2 = 1`.
pub fn profile_1d(x: f64) -> f64 {
    let b = bump(x);
    if b == 0.0 {
        return 0.0;
    }
    let base = x.round();
    let mut den = 0.0;
    for j in -2..=2 {
        let v = bump(x - (base + j as f64));
        den += v * v;
    }
    b / den.sqrt()
}

#[derive(Debug, Clone)]
struct AxisWindow {
    /// First signed frequency index in the support.
    start: i64,
    values: Vec<f64>,
}

/// The family `sigma_k(xi) = sigma(xi - k)`, `|k|_inf <= kmax`, tabulated on
/// one grid.
#[derive(Debug, Clone)]
pub struct Window {
    grid: Grid,
    kmax: i64,
    axis: Vec<AxisWindow>,
    max_width: usize,
}

/// Exponents of a modulation norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModNormSpec {
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

impl ModNormSpec {
    pub fn new(s: f64, p: f64, q: f64) -> Result<Self> {
        if !(p >= 1.0) || !(q >= 1.0) {
            return Err(Error::InvalidExponent(format!("p = {p}, q = {q} must be >= 1")));
        }
        Ok(ModNormSpec { s, p, q })
    }

    /// `M_{p,q}`, zero regularity.
    pub fn plain(p: f64, q: f64) -> Self {
        ModNormSpec { s: 0.0, p, q }
    }

    pub fn dual_exponent(p: f64) -> f64 {
        if p == 1.0 {
            f64::INFINITY
        } else if p.is_infinite() {
            1.0
        } else {
            p / (p - 1.0)
        }
    }

    /// `M^{-s}_{p',q'}`, the space paired with this one by `int f conj(g)`.
    pub fn dual(&self) -> Self {
        ModNormSpec { s: -self.s, p: Self::dual_exponent(self.p), q: Self::dual_exponent(self.q) }
    }
}

/// Builds the window family for `grid`.
///
/// The lattice runs up to `kmax = ceil(xi_max)` so that every representable
/// frequency is covered and the square partition holds on the whole grid.
pub fn make_window(grid: &Grid) -> Result<Window> {
    let dk = grid.dxi();
    if dk > 0.25 {
        return Err(Error::WindowResolution(format!("frequency spacing {dk:.4} > 1/4")));
    }
    let kmax = grid.xi_max().ceil() as i64;
    if kmax < 2 {
        return Err(Error::WindowResolution(format!("kmax = {kmax} < 2")));
    }
    let half = (grid.n() / 2) as i64;
    let mut axis = Vec::with_capacity((2 * kmax + 1) as usize);
    let mut max_width = 0;
    for k in -kmax..=kmax {
        let lo = (((k as f64) - PROFILE_RADIUS) / dk).ceil() as i64;
        let hi = (((k as f64) + PROFILE_RADIUS) / dk).floor() as i64;
        let lo = lo.max(-half);
        let hi = hi.min(half - 1);
        let values: Vec<f64> = if hi >= lo { (lo..=hi).map(|m| profile_1d(m as f64 * dk - k as f64)).collect() } else { Vec::new() };
        max_width = max_width.max(values.len());
        axis.push(AxisWindow { start: lo, values });
    }
    Ok(Window { grid: *grid, kmax, axis, max_width })
}

impl Window {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kmax(&self) -> i64 {
        self.kmax
    }

    fn axis(&self, k: i64) -> &AxisWindow {
        &self.axis[(k + self.kmax) as usize]
    }

    /// `sigma_k(xi)` at an arbitrary frequency.
    pub fn eval(&self, k: &[i64], xi: &[f64]) -> f64 {
        k.iter().zip(xi).map(|(&ki, &x)| profile_1d(x - ki as f64)).product()
    }

    fn check_k(&self, k: &[i64]) -> Result<()> {
        if k.len() != self.grid.dim() || k.iter().any(|v| v.abs() > self.kmax) {
            return Err(Error::OutOfLattice(k.to_vec(), self.kmax));
        }
        Ok(())
    }

    /// Largest deviation of `sum_k sigma_k^2` from 1 over the grid.
    pub fn partition_defect(&self) -> f64 {
        let g = self.grid;
        let dk = g.dxi();
        let mut worst: f64 = 0.0;
        // the family is a tensor product, so the 1-d defect controls all axes
        for j in 0..g.n() {
            let m = g.signed(j);
            let xi = m as f64 * dk;
            let s: f64 = (-self.kmax..=self.kmax).map(|k| profile_1d(xi - k as f64).powi(2)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        let d = g.dim() as i32;
        // (1 + e)^d - 1 bound for the product
        (1.0 + worst).powi(d) - 1.0
    }

    /// Every lattice index `k`, row-major.
    pub fn lattice(&self) -> Vec<Vec<i64>> {
        let d = self.grid.dim();
        let side = (2 * self.kmax + 1) as usize;
        let total = side.pow(d as u32);
        (0..total)
            .map(|mut lin| {
                let mut k = vec![0i64; d];
                for a in (0..d).rev() {
                    k[a] = (lin % side) as i64 - self.kmax;
                    lin /= side;
                }
                k
            })
            .collect()
    }

    /// Per-axis support (start index, values) of `sigma_k`.
    fn support(&self, k: &[i64]) -> Vec<&AxisWindow> {
        k.iter().map(|&ki| self.axis(ki)).collect()
    }

    /// Sub-grid size on which `|sigma_k(D) f|^p` is integrated.
    ///
    /// For even integer `p` the sub-grid is large enough that `|piece|^p`
    /// does not alias onto the zero mode, so its Riemann sum equals the one on
    /// the full grid. Other exponents use 16x oversampling of the piece band.
    pub fn piece_grid_size(&self, p: f64) -> usize {
        let span = self.max_width.saturating_sub(1).max(1);
        let needed = if p.fract() == 0.0 && (p as u64) % 2 == 0 && p <= 16.0 {
            (p as usize / 2) * span + 1
        } else {
            16 * span + 1
        };
        needed.next_power_of_two().max(8).min(self.grid.n())
    }
}

/// `sigma_k(D) f` on the full grid.
pub fn iso_piece(f: &Field, k: &[i64], w: &Window) -> Result<Field> {
    f.grid().check_same(&w.grid)?;
    w.check_k(k)?;
    let g = w.grid;
    let spec = f.to_spectrum();
    let mut out = SpectralField::zeros(g);
    let support = w.support(k);
    for_each_block_index(&support, |m, weight| {
        let lin = g.ravel_signed(m);
        out.coefficients_mut()[lin] = spec.coefficients()[lin] * weight;
    });
    Ok(out.to_field())
}

/// Visits every signed index in the tensor block of `support` with its
/// window weight.
fn for_each_block_index(support: &[&AxisWindow], mut visit: impl FnMut(&[i64], f64)) {
    let d = support.len();
    if support.iter().any(|a| a.values.is_empty()) {
        return;
    }
    let mut pos = [0usize; MAX_DIM];
    let mut m = [0i64; MAX_DIM];
    loop {
        let mut weight = 1.0;
        for a in 0..d {
            m[a] = support[a].start + pos[a] as i64;
            weight *= support[a].values[pos[a]];
        }
        visit(&m[..d], weight);
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            pos[a] += 1;
            if pos[a] < support[a].values.len() {
                break;
            }
            pos[a] = 0;
        }
    }
}

/// Japanese bracket `(1 + |k|^2)^(1/2)`.
pub fn bracket(k: &[i64]) -> f64 {
    (1.0 + k.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt()
}

/// `L^p` norms of every non-vanishing piece, keyed by lattice index.
pub fn piece_norms(f: &Field, p: f64, w: &Window) -> Result<Vec<(Vec<i64>, f64)>> {
    f.grid().check_same(&w.grid)?;
    check_p(p)?;
    let spec = f.to_spectrum();
    piece_norms_of_spectrum(&spec, p, w)
}

pub(crate) fn piece_norms_of_spectrum(spec: &SpectralField, p: f64, w: &Window) -> Result<Vec<(Vec<i64>, f64)>> {
    let g = w.grid;
    let d = g.dim();
    let coarse = w.piece_grid_size(p);
    let coarse_len = coarse.pow(d as u32);
    let prefactor = g.freq_cell() / (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0);
    let coarse_cell = (g.length() / coarse as f64).powi(d as i32);
    let lattice = w.lattice();

    let norms: Vec<Option<(Vec<i64>, f64)>> = lattice
        .into_par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); coarse_len],
            |buf, k| {
                let support = w.support(&k);
                let mut energy = 0.0;
                for_each_block_index(&support, |m, weight| {
                    energy += (spec.coefficients()[g.ravel_signed(m)] * weight).norm_sqr();
                });
                if energy == 0.0 {
                    return None;
                }
                if p == 2.0 {
                    return Some((k, (energy * g.freq_cell()).sqrt()));
                }
                buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                let center: Vec<i64> = support.iter().map(|a| a.start + (a.values.len() as i64 - 1) / 2).collect();
                for_each_block_index(&support, |m, weight| {
                    let lin = m
                        .iter()
                        .zip(&center)
                        .fold(0usize, |acc, (&mi, &c)| acc * coarse + (mi - c).rem_euclid(coarse as i64) as usize);
                    buf[lin] = spec.coefficients()[g.ravel_signed(m)] * weight * prefactor;
                });
                fft::inverse(buf, coarse, d);
                let integral = grid::slice_power_integral(buf, coarse_cell, p);
                Some((k, grid::power_integral_to_norm(integral, p)))
            },
        )
        .collect();
    Ok(norms.into_iter().flatten().collect())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p} < 1")));
    }
    Ok(())
}

/// Window pieces of one field, sampled on the coarse piece grid. Pieces of
/// different fields on the same window are sampled consistently, so norms
/// of differences are computed piecewise without further transforms.
#[derive(Debug, Clone)]
pub struct PieceTable {
    p: f64,
    cell: f64,
    pieces: BTreeMap<Vec<i64>, Vec<Complex64>>,
}

impl PieceTable {
    pub fn new(f: &Field, p: f64, w: &Window) -> Result<Self> {
        w.grid.check_same(f.grid())?;
        Self::of_spectrum(&f.to_spectrum(), p, w)
    }

    pub(crate) fn of_spectrum(spec: &SpectralField, p: f64, w: &Window) -> Result<Self> {
        check_p(p)?;
        let g = w.grid;
        let d = g.dim();
        let coarse = w.piece_grid_size(p);
        let coarse_len = coarse.pow(d as u32);
        let prefactor = g.freq_cell() / (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0);
        let cell = (g.length() / coarse as f64).powi(d as i32);
        let pieces = w
            .lattice()
            .into_par_iter()
            .filter_map(|k| {
                let support = w.support(&k);
                let mut buf = vec![Complex64::new(0.0, 0.0); coarse_len];
                let center: Vec<i64> = support.iter().map(|a| a.start + (a.values.len() as i64 - 1) / 2).collect();
                let mut nonzero = false;
                for_each_block_index(&support, |m, weight| {
                    let c = spec.coefficients()[g.ravel_signed(m)] * weight;
                    nonzero |= c != Complex64::new(0.0, 0.0);
                    let lin = m
                        .iter()
                        .zip(&center)
                        .fold(0usize, |acc, (&mi, &c)| acc * coarse + (mi - c).rem_euclid(coarse as i64) as usize);
                    buf[lin] = c * prefactor;
                });
                if !nonzero {
                    return None;
                }
                fft::inverse(&mut buf, coarse, d);
                Some((k, buf))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        Ok(PieceTable { p, cell, pieces })
    }

    fn piece_norm(&self, v: &[Complex64]) -> f64 {
        grid::power_integral_to_norm(grid::slice_power_integral(v, self.cell, self.p), self.p)
    }

    fn check_spec(&self, spec: &ModNormSpec) -> Result<()> {
        if spec.p != self.p {
            return Err(Error::InvalidExponent(format!("table built for p = {}, asked for p = {}", self.p, spec.p)));
        }
        Ok(())
    }

    pub fn norm(&self, spec: &ModNormSpec) -> Result<f64> {
        self.check_spec(spec)?;
        Ok(lq_sum(self.pieces.iter().map(|(k, v)| bracket(k).powf(spec.s) * self.piece_norm(v)), spec.q))
    }

    /// Modulation norm of the difference of the two underlying fields.
    pub fn distance(&self, other: &PieceTable, spec: &ModNormSpec) -> Result<f64> {
        self.check_spec(spec)?;
        other.check_spec(spec)?;
        if self.cell != other.cell {
            return Err(Error::GridMismatch("piece tables built on different windows".into()));
        }
        let mut diff = Vec::new();
        let mut terms = Vec::with_capacity(self.pieces.len().max(other.pieces.len()));
        for (k, a) in &self.pieces {
            let v = match other.pieces.get(k) {
                Some(b) => {
                    diff.clear();
                    diff.extend(a.iter().zip(b).map(|(x, y)| x - y));
                    self.piece_norm(&diff)
                }
                None => self.piece_norm(a),
            };
            terms.push(bracket(k).powf(spec.s) * v);
        }
        for (k, b) in &other.pieces {
            if !self.pieces.contains_key(k) {
                terms.push(bracket(k).powf(spec.s) * self.piece_norm(b));
            }
        }
        Ok(lq_sum(terms.into_iter(), spec.q))
    }
}

fn lq_sum(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `|| ( <k>^s ||sigma_k(D) f||_{L^p} )_k ||_{l^q}`.
pub fn modulation_norm(f: &Field, spec: &ModNormSpec, w: &Window) -> Result<f64> {
    let pieces = piece_norms(f, spec.p, w)?;
    Ok(lq_sum(pieces.iter().map(|(k, v)| bracket(k).powf(spec.s) * v), spec.q))
}

pub(crate) fn modulation_norm_of_spectrum(s: &SpectralField, spec: &ModNormSpec, w: &Window) -> Result<f64> {
    let pieces = piece_norms_of_spectrum(s, spec.p, w)?;
    Ok(lq_sum(pieces.iter().map(|(k, v)| bracket(k).powf(spec.s) * v), spec.q))
}

/// Literal evaluation through full-grid pieces; slow, used to cross-check
/// [`modulation_norm`].
pub fn modulation_norm_reference(f: &Field, spec: &ModNormSpec, w: &Window) -> Result<f64> {
    let mut terms = Vec::new();
    for k in w.lattice() {
        let piece = iso_piece(f, &k, w)?;
        terms.push(bracket(&k).powf(spec.s) * grid::lp_norm(&piece, spec.p)?);
    }
    Ok(lq_sum(terms.into_iter(), spec.q))
}

/// Smooth radial cutoff: 1 on `[0, 1]`, 0 on `[2, inf)`, nonincreasing.
pub fn lp_cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let e = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let a = e(2.0 - r);
    a / (a + e(r - 1.0))
}

fn is_dyadic(n: f64) -> bool {
    n >= 1.0 && n.fract() == 0.0 && (n as u64).is_power_of_two()
}

/// Multiplier of `P_{<=m}`: `psi(|xi| / m)`.
pub fn low_pass_table(grid: &Grid, m: f64) -> Vec<f64> {
    grid.frequency_norms_sq().into_iter().map(|r2| lp_cutoff(r2.sqrt() / m)).collect()
}

/// Multiplier of `P_N`; `P_1` is the ball `|xi| <= 2`, `P_N` for `N >= 2`
/// the annulus `N/2 <= |xi| <= 2N`.
pub fn dyadic_table(grid: &Grid, n: f64) -> Vec<f64> {
    grid.frequency_norms_sq()
        .into_iter()
        .map(|r2| {
            let r = r2.sqrt();
            if n <= 1.0 {
                lp_cutoff(r)
            } else {
                lp_cutoff(r / n) - lp_cutoff(2.0 * r / n)
            }
        })
        .collect()
}

/// Dyadic scales whose projections are nonzero somewhere on the grid; their
/// sum is the identity on every representable frequency.
pub fn dyadic_bands(grid: &Grid) -> Vec<f64> {
    let top = grid.xi_max() * (grid.dim() as f64).sqrt();
    let mut out = vec![1.0];
    let mut n = 1.0;
    while n < top {
        n *= 2.0;
        out.push(n);
    }
    out
}

/// `P_N f`.
pub fn dyadic_project(f: &Field, n: f64) -> Result<Field> {
    if !is_dyadic(n) {
        return Err(Error::InvalidExponent(format!("N = {n} is not a dyadic number >= 1")));
    }
    let g = f.grid();
    if n > g.xi_max() {
        return Err(Error::OutOfBand(format!("N = {n} exceeds the Nyquist frequency {:.3}", g.xi_max())));
    }
    Ok(grid::apply_multiplier(f, &dyadic_table(g, n)))
}

#[cfg(test)]
fn band_project(f: &Field, n: f64) -> Field {
    grid::apply_multiplier(f, &dyadic_table(f.grid(), n))
}

/// `P_{>N} f = f - P_{<=N} f`.
pub fn high_project(f: &Field, n: f64) -> Field {
    let table: Vec<f64> = low_pass_table(f.grid(), n).into_iter().map(|v| 1.0 - v).collect();
    grid::apply_multiplier(f, &table)
}

/// `P_{<=N} f`.
pub fn low_project(f: &Field, n: f64) -> Field {
    grid::apply_multiplier(f, &low_pass_table(f.grid(), n))
}

/// Sharp projection onto the closed ball `B(center, radius)`.
pub fn box_project(f: &Field, center: &[f64], radius: f64) -> Result<Field> {
    let g = f.grid();
    if center.len() != g.dim() {
        return Err(Error::GridMismatch(format!("center of dimension {} on a {}-d grid", center.len(), g.dim())));
    }
    if !(radius >= 1.0) {
        return Err(Error::InvalidExponent(format!("ball radius K = {radius} < 1")));
    }
    let table = ball_table(g, center, radius);
    Ok(grid::apply_multiplier(f, &table))
}

pub(crate) fn ball_table(g: &Grid, center: &[f64], radius: f64) -> Vec<f64> {
    let r2 = radius * radius;
    g.map_frequencies(|xi| {
        let d2: f64 = xi.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 <= r2 * (1.0 + 1e-12) {
            1.0
        } else {
            0.0
        }
    })
}

/// Finitely overlapping family of balls of radius `K` covering the annulus
/// `N/2 <= |xi| <= 2N`.
#[derive(Debug, Clone, Serialize)]
pub struct Covering {
    pub radius: f64,
    /// Lattice spacing of the centers; 0 for the single-ball family.
    pub spacing: f64,
    pub centers: Vec<Vec<f64>>,
    /// Largest number of balls containing one grid frequency of the annulus.
    pub overlap: usize,
}

/// A priori overlap bound for balls of radius `K` centered on the lattice of
/// spacing `2K / sqrt(d)`.
pub fn covering_overlap_bound(d: usize) -> usize {
    ((d as f64).sqrt() + 1.0).powi(d as i32).floor() as usize
}

pub fn covering_family(grid: &Grid, n: f64, radius: f64) -> Result<Covering> {
    if !(radius >= 1.0) {
        return Err(Error::InvalidExponent(format!("ball radius K = {radius} < 1")));
    }
    let d = grid.dim();
    let (outer, inner) = if n <= 1.0 { (2.0, 0.0) } else { (2.0 * n, n / 2.0) };
    if radius >= outer {
        return Ok(Covering { radius, spacing: 0.0, centers: vec![vec![0.0; d]], overlap: 1 });
    }
    let a = 2.0 * radius / (d as f64).sqrt();
    let zmax = ((outer + radius) / a).ceil() as i64;
    let side = (2 * zmax + 1) as usize;
    let mut centers = Vec::new();
    for mut lin in 0..side.pow(d as u32) {
        let mut c = vec![0.0; d];
        for a_i in (0..d).rev() {
            c[a_i] = ((lin % side) as i64 - zmax) as f64 * a;
            lin /= side;
        }
        let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= outer + radius && r + radius >= inner {
            centers.push(c);
        }
    }
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut overlap = 0;
    for xi in grid.map_frequencies(|xi| xi.to_vec()) {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < inner || r > outer {
            continue;
        }
        let count = centers
            .iter()
            .filter(|c| c.iter().zip(&xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
            .count();
        overlap = overlap.max(count);
    }
    Ok(Covering { radius, spacing: a, centers, overlap })
}

/// Split bound `||P_{<=M} f||_{M^s_{p,q}} + ||P_{>M} f||_{L^2}` for one
/// threshold `M`; `None` puts everything in the `L^2` part.
pub fn sum_space_split(f: &Field, spec: &ModNormSpec, w: &Window, threshold: Option<f64>) -> Result<f64> {
    match threshold {
        None => grid::lp_norm(f, 2.0),
        Some(m) => {
            let low = low_project(f, m);
            let high = f - &low;
            Ok(modulation_norm(&low, spec, w)? + grid::lp_norm(&high, 2.0)?)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SumSpaceBound {
    pub value: f64,
    /// Minimizing threshold; `None` means the pure `L^2` split.
    pub threshold: Option<f64>,
    /// Every evaluated `(threshold, bound)` pair.
    pub sweep: Vec<(Option<f64>, f64)>,
}

/// Upper bound for the norm of `M^s_{p,q} + L^2` minimized over dyadic
/// splits, including both single-piece extremes.
pub fn sum_space_norm_upper(f: &Field, spec: &ModNormSpec, w: &Window) -> Result<SumSpaceBound> {
    let mut sweep = vec![(None, sum_space_split(f, spec, w, None)?)];
    let bands = dyadic_bands(f.grid());
    for &m in &bands {
        sweep.push((Some(m), sum_space_split(f, spec, w, Some(m))?));
    }
    // beyond the last band the whole field is in the modulation part
    sweep.push((Some(f64::INFINITY), modulation_norm(f, spec, w)?));
    let (threshold, value) = sweep.iter().copied().fold((None, f64::INFINITY), |acc, (t, v)| if v < acc.1 { (t, v) } else { acc });
    Ok(SumSpaceBound { value, threshold, sweep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        Field::new(grid, v).unwrap()
    }

    fn spectral_bump(grid: Grid, center: &[f64], radius: f64) -> Field {
        SpectralField::from_fn(grid, |xi| {
            let r2: f64 = xi.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            let y = r2 / (radius * radius);
            Complex64::new(if y < 1.0 { (-1.0 / (1.0 - y)).exp() } else { 0.0 }, 0.0)
        })
        .unwrap()
        .to_field()
    }

    #[test]
    fn window_is_a_square_partition() {
        let g = Grid::new(1, 256, 64.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        assert!(w.partition_defect() <= 1e-12);
        let at_zero: f64 = (-1..=1).map(|k| w.eval(&[k], &[0.0]).powi(2)).sum();
        assert!((at_zero - 1.0).abs() < 1e-12);
        let g3 = Grid::new(3, 16, 8.0 * PI).unwrap();
        let w3 = make_window(&g3).unwrap();
        assert!(w3.partition_defect() <= 1e-12);
    }

    #[test]
    fn window_rejects_coarse_grids() {
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        assert!(matches!(make_window(&g), Err(Error::WindowResolution(_))));
    }

    #[test]
    fn profile_support_is_inside_unit_ball_for_d_up_to_3() {
        assert!(PROFILE_RADIUS * 3f64.sqrt() < 1.0);
        assert_eq!(profile_1d(PROFILE_RADIUS), 0.0);
        assert!(profile_1d(0.5) > 0.0);
    }

    #[test]
    fn iso_piece_disjoint_support_and_pure_tone() {
        let g = Grid::new(1, 256, 32.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let f = spectral_bump(g, &[1.0], 0.25);
        let piece = iso_piece(&f, &[4], &w).unwrap();
        assert!(piece.sup() <= 1e-14 * f.sup());
        let tone_xi = 1.5;
        let tone = Field::from_fn(g, |x| Complex64::from_polar(1.0, x[0] * tone_xi)).unwrap();
        for k in [1i64, 2] {
            let piece = iso_piece(&tone, &[k], &w).unwrap();
            let factor = w.eval(&[k], &[tone_xi]);
            let err = (&piece - &tone.scale_real(factor)).sup();
            assert!(err < 1e-12, "k={k} err={err}");
        }
        assert!(matches!(iso_piece(&tone, &[w.kmax() + 1], &w), Err(Error::OutOfLattice(_, _))));
    }

    #[test]
    fn pieces_resolve_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Grid::new(2, 32, 8.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let f = random_field(g, &mut rng);
        let total: f64 = w.lattice().iter().map(|k| grid::lp_norm(&iso_piece(&f, k, &w).unwrap(), 2.0).unwrap().powi(2)).sum();
        let l2 = grid::lp_norm(&f, 2.0).unwrap().powi(2);
        assert!((total - l2).abs() <= 1e-10 * l2);
    }

    #[test]
    fn plancherel_for_m22() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (d, n) in [(1, 128), (2, 32), (3, 16)] {
            let g = Grid::new(d, n, 8.0 * PI).unwrap();
            let w = make_window(&g).unwrap();
            let f = random_field(g, &mut rng);
            let m = modulation_norm(&f, &ModNormSpec::plain(2.0, 2.0), &w).unwrap();
            let l2 = grid::lp_norm(&f, 2.0).unwrap();
            assert!((m - l2).abs() <= 1e-10 * l2);
            assert_eq!(modulation_norm(&Field::zeros(g), &ModNormSpec::plain(4.0, 2.0), &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn fast_pieces_match_full_grid_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = Grid::new(2, 64, 8.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let f = random_field(g, &mut rng);
        for (p, tol) in [(2.0, 1e-12), (4.0, 1e-11), (6.0, 1e-11), (3.0, 1e-6), (1.5, 1e-5)] {
            for (s, q) in [(0.0, 2.0), (1.1, 1.0), (-0.5, f64::INFINITY)] {
                let spec = ModNormSpec::new(s, p, q).unwrap();
                let fast = modulation_norm(&f, &spec, &w).unwrap();
                let slow = modulation_norm_reference(&f, &spec, &w).unwrap();
                assert!((fast - slow).abs() <= tol * slow, "p={p} s={s} q={q}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn separated_spectra_are_lq_additive() {
        let g = Grid::new(1, 512, 32.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let g1 = spectral_bump(g, &[0.0], 0.25);
        let g2 = spectral_bump(g, &[5.0], 0.25);
        let sum = &g1 + &g2;
        for q in [1.0, 2.0, 3.0] {
            let spec = ModNormSpec::new(0.7, 4.0, q).unwrap();
            let a = modulation_norm(&g1, &spec, &w).unwrap();
            let b = modulation_norm(&g2, &spec, &w).unwrap();
            let c = modulation_norm(&sum, &spec, &w).unwrap();
            assert!((c.powf(q) - a.powf(q) - b.powf(q)).abs() <= 1e-10 * c.powf(q));
        }
    }

    #[test]
    fn piece_table_distances_match_direct_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g = Grid::new(2, 64, 8.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let a = random_field(g, &mut rng);
        let b = random_field(g, &mut rng);
        for spec in [ModNormSpec::plain(4.0, 2.0), ModNormSpec::new(1.1, 4.0, 2.0).unwrap(), ModNormSpec::plain(2.0, 2.0)] {
            let ta = PieceTable::new(&a, spec.p, &w).unwrap();
            let tb = PieceTable::new(&b, spec.p, &w).unwrap();
            let na = modulation_norm(&a, &spec, &w).unwrap();
            assert!((ta.norm(&spec).unwrap() - na).abs() <= 1e-12 * na);
            let direct = modulation_norm(&(&a - &b), &spec, &w).unwrap();
            let via = ta.distance(&tb, &spec).unwrap();
            assert!((via - direct).abs() <= 1e-10 * direct, "{spec:?}: {via} vs {direct}");
        }
        let zero = PieceTable::new(&Field::zeros(g), 4.0, &w).unwrap();
        let ta = PieceTable::new(&a, 4.0, &w).unwrap();
        let spec = ModNormSpec::plain(4.0, 2.0);
        assert!((zero.distance(&ta, &spec).unwrap() - ta.norm(&spec).unwrap()).abs() < 1e-12);
        assert!(ta.norm(&ModNormSpec::plain(2.0, 2.0)).is_err());
    }

    #[test]
    fn lq_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Grid::new(1, 256, 16.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        for _ in 0..10 {
            let f = random_field(g, &mut rng);
            let mut prev = f64::INFINITY;
            for q in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
                let v = modulation_norm(&f, &ModNormSpec::plain(4.0, q), &w).unwrap();
                assert!(v <= prev * (1.0 + 1e-12));
                prev = v;
            }
        }
    }

    #[test]
    fn p_embedding_constant_is_uniform() {
        // ||.||_{M_{p2,q}} <= C ||.||_{M_{p1,q}} for p1 <= p2 with C independent of f
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::new(1, 256, 16.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = random_field(g, &mut rng);
            let lo = modulation_norm(&f, &ModNormSpec::plain(2.0, 2.0), &w).unwrap();
            let hi = modulation_norm(&f, &ModNormSpec::plain(4.0, 2.0), &w).unwrap();
            worst = worst.max(hi / lo);
        }
        // Bernstein on unit-width pieces: ||g||_4 <= ||g||_inf^{1/2} ||g||_2^{1/2} with ||g||_inf <= C ||g||_2
        assert!(worst < 2.0, "embedding constant {worst}");
    }

    #[test]
    fn dyadic_projections_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Grid::new(2, 64, 8.0 * PI).unwrap();
        let f = random_field(g, &mut rng);
        let mut total = Field::zeros(g);
        for n in dyadic_bands(&g) {
            total = &total + &band_project(&f, n);
        }
        let err = grid::lp_norm(&(&total - &f), 2.0).unwrap() / grid::lp_norm(&f, 2.0).unwrap();
        assert!(err <= 1e-10);
        assert!(dyadic_project(&Field::zeros(g), 2.0).unwrap().is_zero());
        assert!(dyadic_project(&f, 8.0).is_ok());
        assert!(matches!(dyadic_project(&f, 16.0), Err(Error::OutOfBand(_))));
        assert!(dyadic_project(&f, 3.0).is_err());
    }

    #[test]
    fn dyadic_tone_passes_and_lower_band_annihilates() {
        let g = Grid::new(1, 256, 8.0 * PI).unwrap();
        let n = 8.0;
        let tone = Field::from_fn(g, |x| Complex64::from_polar(1.0, n * x[0])).unwrap();
        let passed = dyadic_project(&tone, n).unwrap();
        let factor = grid::lp_norm(&passed, 2.0).unwrap() / grid::lp_norm(&tone, 2.0).unwrap();
        assert!(factor > 0.5 && factor <= 1.0 + 1e-12);
        assert!(dyadic_project(&tone, n / 4.0).unwrap().sup() < 1e-12);
    }

    #[test]
    fn ball_projection_and_covering() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = Grid::new(2, 64, 8.0 * PI).unwrap();
        let f = random_field(g, &mut rng);
        let pn = dyadic_project(&f, 4.0).unwrap();
        let base = grid::lp_norm(&pn, 2.0).unwrap().powi(2);
        let cover = covering_family(&g, 4.0, 1.0).unwrap();
        assert!(cover.overlap >= 1 && cover.overlap <= covering_overlap_bound(2));
        let sum: f64 = cover.centers.iter().map(|c| grid::lp_norm(&box_project(&pn, c, cover.radius).unwrap(), 2.0).unwrap().powi(2)).sum();
        assert!(sum >= base * (1.0 - 1e-12) && sum <= cover.overlap as f64 * base * (1.0 + 1e-12));

        let single = covering_family(&g, 2.0, 8.0).unwrap();
        assert_eq!(single.centers.len(), 1);
        let p2 = dyadic_project(&f, 2.0).unwrap();
        let rec = box_project(&p2, &single.centers[0], single.radius).unwrap();
        assert!(grid::lp_norm(&(&rec - &p2), 2.0).unwrap() <= 1e-12 * base.sqrt());

        let far = spectral_bump(g, &[0.0, 0.0], 0.5);
        assert!(box_project(&far, &[6.0, 6.0], 1.0).unwrap().sup() <= 1e-14 * far.sup());
    }

    #[test]
    fn sum_space_bound_is_below_both_extremes() {
        let g = Grid::new(1, 512, 32.0 * PI).unwrap();
        let w = make_window(&g).unwrap();
        let spec = ModNormSpec::new(0.5, 6.0, 2.0).unwrap();
        let low = spectral_bump(g, &[0.0], 0.9);
        let b = sum_space_norm_upper(&low, &spec, &w).unwrap();
        let m = modulation_norm(&low, &spec, &w).unwrap();
        let l2 = grid::lp_norm(&low, 2.0).unwrap();
        assert!(b.value <= m.min(l2) + 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tail = random_field(g, &mut rng).scale_real(0.05);
        let rough = &low + &high_project(&tail, 4.0);
        let b = sum_space_norm_upper(&rough, &spec, &w).unwrap();
        assert!(b.value <= modulation_norm(&rough, &spec, &w).unwrap() + 1e-12);
        assert!(b.value <= grid::lp_norm(&rough, 2.0).unwrap() + 1e-12);
        assert_eq!(sum_space_norm_upper(&Field::zeros(g), &spec, &w).unwrap().value, 0.0);
    }
}
