//! Periodic sampling of R^d: grids, physical and spectral fields, transforms
//! and Lebesgue-norm quadrature.
//!
//! Samples are stored row-major (axis 0 slowest) in FFT order on both sides:
//! index `j` along an axis stands for the signed integer `j` if `j < n/2` and
//! `j - n` otherwise. Position `x = j_signed * h`, frequency
//! `xi = j_signed * dxi`, so the origin sits at linear index 0.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} is not a power of two >= 8")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("period length {length} must be positive")));
        }
        Ok(Grid { d, n, length })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Spatial spacing `h = L / n`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Frequency spacing `2 pi / L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Nyquist frequency `pi n / L`.
    pub fn xi_max(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of the torus, `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.d as i32)
    }

    /// Riemann weight of one sample, `h^d`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Quadrature weight of one frequency sample, `dxi^d`.
    pub fn freq_cell(&self) -> f64 {
        self.dxi().powi(self.d as i32)
    }

    pub fn signed(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn unsigned(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    /// Signed integer lattice coordinates of every sample along one axis.
    pub fn axis_integers(&self) -> Vec<i64> {
        (0..self.n).map(|j| self.signed(j)).collect()
    }

    pub fn axis_positions(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|j| self.signed(j) as f64 * h).collect()
    }

    pub fn axis_frequencies(&self) -> Vec<f64> {
        let dk = self.dxi();
        (0..self.n).map(|j| self.signed(j) as f64 * dk).collect()
    }

    /// Per-axis indices of a linear index.
    pub fn unravel(&self, mut lin: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        for a in (0..self.d).rev() {
            idx[a] = lin % self.n;
            lin /= self.n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx[..self.d].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Linear index of a signed lattice point (wrapped periodically).
    pub fn ravel_signed(&self, m: &[i64]) -> usize {
        m[..self.d].iter().fold(0, |acc, &i| acc * self.n + self.unsigned(i))
    }

    /// Evaluates `f` on every lattice point, given per-axis coordinate tables.
    fn tabulate<T>(&self, axis: &[f64], mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        let mut coords = [0.0f64; MAX_DIM];
        for lin in 0..self.len() {
            let idx = self.unravel(lin);
            for a in 0..self.d {
                coords[a] = axis[idx[a]];
            }
            out.push(f(&coords[..self.d]));
        }
        out
    }

    pub fn map_positions<T>(&self, f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        self.tabulate(&self.axis_positions(), f)
    }

    pub fn map_frequencies<T>(&self, f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        self.tabulate(&self.axis_frequencies(), f)
    }

    /// `|xi|^2` for every frequency sample.
    pub fn frequency_norms_sq(&self) -> Vec<f64> {
        self.map_frequencies(|xi| xi.iter().map(|v| v * v).sum())
    }

    /// True when `xi` is an integer multiple of `dxi` on every axis, within
    /// the representable range.
    pub fn lattice_frequency(&self, xi: &[f64]) -> Option<Vec<i64>> {
        if xi.len() != self.d {
            return None;
        }
        let dk = self.dxi();
        let half = (self.n / 2) as i64;
        xi.iter()
            .map(|&v| {
                let m = (v / dk).round();
                let ok = (v - m * dk).abs() <= 1e-9 * dk.max(v.abs()) && (m as i64) >= -half && (m as i64) < half;
                ok.then_some(m as i64)
            })
            .collect()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Physical-space samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

/// Frequency-space coefficients on a [`Grid`], unitary normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coefficients: Vec<Complex64>,
}

fn check_samples(grid: &Grid, data: &[Complex64]) -> Result<()> {
    if data.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} samples for a grid of {} points", data.len(), grid.len())));
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    Ok(())
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        check_samples(&grid, &values)?;
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        Field::new(grid, grid.map_positions(f))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field::from_vec_unchecked(self.grid, self.values.iter().map(|v| v * c).collect())
    }

    pub fn scale_real(&self, c: f64) -> Field {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus on the torus boundary (any coordinate at `-L/2`)
    /// relative to the peak modulus; 0 for the zero field.
    pub fn boundary_decay(&self) -> f64 {
        let peak = self.sup();
        if peak == 0.0 {
            return 0.0;
        }
        let half = self.grid.n / 2;
        let edge = self
            .values
            .iter()
            .enumerate()
            .filter(|(lin, _)| {
                let idx = self.grid.unravel(*lin);
                idx[..self.grid.d].iter().any(|&i| i == half)
            })
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        edge / peak
    }

    pub fn to_spectrum(&self) -> SpectralField {
        let g = self.grid;
        let mut data = self.values.clone();
        fft::forward(&mut data, g.n, g.d);
        let c = g.cell() / (2.0 * PI).powf(g.d as f64 / 2.0);
        data.iter_mut().for_each(|v| *v *= c);
        SpectralField { grid: g, coefficients: data }
    }

    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell())
    }

    fn zip_with(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Field {
        assert_eq!(self.grid, other.grid, "grid mismatch in field arithmetic");
        Field::from_vec_unchecked(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    /// Pointwise product.
    pub fn product(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale_real(rhs)
    }
}

impl SpectralField {
    pub fn new(grid: Grid, coefficients: Vec<Complex64>) -> Result<Self> {
        check_samples(&grid, &coefficients)?;
        Ok(SpectralField { grid, coefficients })
    }

    pub fn zeros(grid: Grid) -> Self {
        SpectralField { grid, coefficients: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        SpectralField::new(grid, grid.map_frequencies(f))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Multiplies every coefficient by `m(index)`.
    pub fn apply(&mut self, mut m: impl FnMut(usize) -> Complex64) {
        self.coefficients.iter_mut().enumerate().for_each(|(i, c)| *c *= m(i));
    }

    /// Multiplies by a real table, one value per frequency sample.
    pub fn apply_table(&mut self, table: &[f64]) {
        debug_assert_eq!(table.len(), self.coefficients.len());
        self.coefficients.iter_mut().zip(table).for_each(|(c, &m)| *c *= m);
    }

    pub fn to_field(&self) -> Field {
        let g = self.grid;
        let mut data = self.coefficients.clone();
        fft::inverse(&mut data, g.n, g.d);
        let c = g.freq_cell() / (2.0 * PI).powf(g.d as f64 / 2.0);
        data.iter_mut().for_each(|v| *v *= c);
        Field { grid: g, values: data }
    }

    /// `dxi^d * sum |F|^2`.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.freq_cell()
    }
}

pub fn to_spectrum(f: &Field) -> SpectralField {
    f.to_spectrum()
}

pub fn from_spectrum(f: &SpectralField) -> Field {
    f.to_field()
}

/// Applies a real Fourier multiplier table to a field.
pub fn apply_multiplier(f: &Field, table: &[f64]) -> Field {
    let mut s = f.to_spectrum();
    s.apply_table(table);
    s.to_field()
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(format!("p = {p} < 1")));
    }
    Ok(())
}

/// `h^d * sum |f|^p`, or the sup for `p = inf`.
pub(crate) fn slice_power_integral(values: &[Complex64], cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    if p == 2.0 {
        return values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
    }
    if p == 4.0 {
        return values.iter().map(|v| v.norm_sqr() * v.norm_sqr()).sum::<f64>() * cell;
    }
    values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * cell
}

pub(crate) fn power_integral_to_norm(integral: f64, p: f64) -> f64 {
    if p.is_infinite() {
        integral
    } else {
        integral.powf(1.0 / p)
    }
}

/// Riemann-sum Lebesgue norm `(h^d sum |f|^p)^(1/p)`; `p = inf` is the max
/// modulus.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(power_integral_to_norm(slice_power_integral(&f.values, f.grid.cell(), p), p))
}

/// Space-time norm from per-slice integrals `int |u(t_j)|^p dx` (or per-slice
/// sups when `p = inf`), composite trapezoid in time.
pub fn spacetime_norm_from_slices(times: &[f64], slices: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    check_times(times)?;
    if times.len() != slices.len() {
        return Err(Error::InvalidTimes("one slice value per node required".into()));
    }
    if p.is_infinite() {
        return Ok(slices.iter().copied().fold(0.0, f64::max));
    }
    Ok(trapezoid(times, slices).powf(1.0 / p))
}

/// Space-time `L^p([t_0, t_{m-1}] x torus)` norm of a sampled trajectory.
pub fn spacetime_lp_norm(u: &[(f64, Field)], p: f64) -> Result<f64> {
    check_p(p)?;
    let times: Vec<f64> = u.iter().map(|(t, _)| *t).collect();
    let slices: Vec<f64> = u.iter().map(|(_, f)| slice_power_integral(&f.values, f.grid.cell(), p)).collect();
    spacetime_norm_from_slices(&times, &slices, p)
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidTimes("at least two time nodes required".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimes("time nodes must be strictly increasing".into()));
    }
    Ok(())
}

/// Composite trapezoid rule on arbitrary increasing nodes.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}
