use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_scales, DataFamily, FitResult, Row, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, Field, Grid, SpectralField};
use crate::modspace::{self, ModNormSpec, Window};
use crate::propagator;
use crate::variation::{self, SampledPath, ValueNorm};

/// Inverse transform of raw coefficients to sample values.
fn synthesize(g: &Grid, mut coefficients: Vec<Complex64>) -> Vec<Complex64> {
    fft::inverse(&mut coefficients, g.n(), g.dim());
    let c = g.freq_cell() / (2.0 * PI).powf(g.dim() as f64 / 2.0);
    coefficients.iter_mut().for_each(|v| *v *= c);
    coefficients
}

fn evolved(base: &[Complex64], norms: &[f64], t: f64) -> Vec<Complex64> {
    let mut c = base.to_vec();
    propagator::evolve_spectrum_with(&mut c, norms, t);
    c
}

fn check_pair(n: f64, k: f64, min_separation: f64) -> Result<()> {
    if !(k * min_separation <= n) {
        return Err(Error::Regime(format!("K = {k} and N = {n} violate K <= N / {min_separation}")));
    }
    Ok(())
}

/// `P_N` applied to data of the given family; random phases fill the ball of
/// radius `min(2N, xi_max)` so the band is populated.
fn band_data(family: DataFamily, n: f64, seed: u64, g: &Grid) -> Result<SpectralField> {
    let f = match family {
        DataFamily::RandomPhase => family.generate((2.0 * n).min(g.xi_max()), seed, g)?,
        _ => family.generate(n, seed, g)?,
    };
    let mut s = f.to_spectrum();
    s.apply_table(&modspace::dyadic_table(g, n));
    Ok(s)
}

fn m42() -> ModNormSpec {
    ModNormSpec::plain(4.0, 2.0)
}

/// Intermediate quantities of the almost-orthogonality argument for one
/// `(N, K)` pair, all squared:
///
/// * `l0 = ||P_N u P_K v||^2_{L^2}`
/// * `l1 = sum_c ||Q_c P_N u P_K v||^2_{L^2}`, `Q_c` sharp projections onto
///   cubes of side `2K / sqrt(d)`
/// * `l2 = sum_c ||Q_c P_N u||^2_{L^4} ||P_K v||^2_{L^4}`
/// * `l3 = sum_c ||Q_c P_N u_0||^2_{M_{4,2}} ||P_K v_0||^2_{M_{4,2}}`
/// * `l4 = ||P_N u_0||^2_{M_{4,2}} ||P_K v_0||^2_{M_{4,2}}`
///
/// `l0 <= overlap * l1` and `l1 <= l2` hold exactly for the discrete
/// quantities; `c23 = l2 / l3` and `c34 = l3 / l4` are measured constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLog {
    pub n: f64,
    pub k: f64,
    pub cells: usize,
    pub overlap: f64,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub c23: f64,
    pub c34: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearCell {
    pub n: f64,
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub chain: Option<ChainLog>,
}

/// `||P_N e^{it Delta} f_1 P_K e^{it Delta} f_2||_{L^2(times x torus)}` over
/// `||P_N f_1||_{M_{4,2}} ||P_K f_2||_{M_{4,2}}`.
pub fn bilinear_cell(f1: &Field, f2: &Field, n: f64, k: f64, times: &[f64], window: &Window, chain: bool) -> Result<BilinearCell> {
    let g = *f1.grid();
    g.check_same(f2.grid())?;
    window.grid().check_same(&g)?;
    let mut a = f1.to_spectrum();
    a.apply_table(&modspace::dyadic_table(&g, n));
    let mut b = f2.to_spectrum();
    b.apply_table(&modspace::dyadic_table(&g, k));
    cell_from_spectra(&a, &b, n, k, times, window, chain)
}

fn cell_from_spectra(
    a: &SpectralField,
    b: &SpectralField,
    n: f64,
    k: f64,
    times: &[f64],
    window: &Window,
    chain: bool,
) -> Result<BilinearCell> {
    grid::check_times(times)?;
    let zero = Complex64::new(0.0, 0.0);
    if a.coefficients().iter().all(|c| *c == zero) || b.coefficients().iter().all(|c| *c == zero) {
        return Err(Error::Degenerate(format!("a projected factor vanishes at (N, K) = ({n}, {k})")));
    }
    let g = *a.grid();
    let rhs_a = modspace::modulation_norm_of_spectrum(a, &m42(), window)?;
    let rhs_b = modspace::modulation_norm_of_spectrum(b, &m42(), window)?;
    let log = if chain {
        chain_log(a, b, n, k, times, window, rhs_a, rhs_b)?
    } else {
        None
    };
    let l0 = match &log {
        Some(c) => c.l0,
        None => {
            let norms = g.frequency_norms_sq();
            let cell = g.cell();
            let slices: Vec<f64> = times
                .par_iter()
                .map(|&t| {
                    let u = synthesize(&g, evolved(a.coefficients(), &norms, t));
                    let v = synthesize(&g, evolved(b.coefficients(), &norms, t));
                    u.iter().zip(&v).map(|(x, y)| (x * y).norm_sqr()).sum::<f64>() * cell
                })
                .collect();
            grid::trapezoid(times, &slices)
        }
    };
    let row = Row::new(n, l0.sqrt(), rhs_a * rhs_b)?;
    Ok(BilinearCell { n, k, lhs: row.lhs, rhs: row.rhs, ratio: row.ratio, chain: log })
}

/// Largest number of cube cells whose product spectra share one output
/// frequency, counted per axis with wrap-around.
fn overlap_count(g: &Grid, members: &BTreeMap<Vec<i64>, Vec<usize>>, b: &SpectralField) -> f64 {
    let d = g.dim();
    let n = g.n() as i64;
    let zero = Complex64::new(0.0, 0.0);
    let mut vmax = vec![0i64; d];
    for (lin, c) in b.coefficients().iter().enumerate() {
        if *c != zero {
            let idx = g.unravel(lin);
            for a in 0..d {
                vmax[a] = vmax[a].max(g.signed(idx[a]).abs());
            }
        }
    }
    let mut total = 1.0;
    for a in 0..d {
        let mut ranges: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
        for (cell, lins) in members {
            for &lin in lins {
                let m = g.signed(g.unravel(lin)[a]);
                let e = ranges.entry(cell[a]).or_insert((m, m));
                e.0 = e.0.min(m);
                e.1 = e.1.max(m);
            }
        }
        let mut counts = vec![0usize; n as usize];
        for &(lo, hi) in ranges.values() {
            for m in (lo - vmax[a])..=(hi + vmax[a]) {
                counts[m.rem_euclid(n) as usize] += 1;
            }
        }
        total *= *counts.iter().max().unwrap_or(&1) as f64;
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn chain_log(
    a: &SpectralField,
    b: &SpectralField,
    n: f64,
    k: f64,
    times: &[f64],
    window: &Window,
    rhs_a: f64,
    rhs_b: f64,
) -> Result<Option<ChainLog>> {
    let g = *a.grid();
    let d = g.dim();
    let side = 2.0 * k / (d as f64).sqrt();
    let zero = Complex64::new(0.0, 0.0);
    let mut members: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    let axis = g.axis_frequencies();
    for (lin, c) in a.coefficients().iter().enumerate() {
        if *c != zero {
            let idx = g.unravel(lin);
            let cell: Vec<i64> = (0..d).map(|ax| (axis[idx[ax]] / side).round() as i64).collect();
            members.entry(cell).or_default().push(lin);
        }
    }
    let overlap = overlap_count(&g, &members, b);
    let groups: Vec<&Vec<usize>> = members.values().collect();
    let norms = g.frequency_norms_sq();
    let cell = g.cell();
    // per node: (full product, per-cell products, per-cell |Qu|^4, |v|^4)
    let per_time: Vec<(f64, Vec<f64>, Vec<f64>, f64)> = times
        .par_iter()
        .map(|&t| {
            let ea = evolved(a.coefficients(), &norms, t);
            let v = synthesize(&g, evolved(b.coefficients(), &norms, t));
            let u = synthesize(&g, ea.clone());
            let full = u.iter().zip(&v).map(|(x, y)| (x * y).norm_sqr()).sum::<f64>() * cell;
            let v4 = v.iter().map(|y| y.norm_sqr().powi(2)).sum::<f64>() * cell;
            let mut prod = Vec::with_capacity(groups.len());
            let mut q4 = Vec::with_capacity(groups.len());
            for lins in &groups {
                let mut buf = vec![zero; g.len()];
                for &lin in lins.iter() {
                    buf[lin] = ea[lin];
                }
                let q = synthesize(&g, buf);
                prod.push(q.iter().zip(&v).map(|(x, y)| (x * y).norm_sqr()).sum::<f64>() * cell);
                q4.push(q.iter().map(|x| x.norm_sqr().powi(2)).sum::<f64>() * cell);
            }
            (full, prod, q4, v4)
        })
        .collect();
    let series = |f: &dyn Fn(&(f64, Vec<f64>, Vec<f64>, f64)) -> f64| -> f64 {
        let vals: Vec<f64> = per_time.iter().map(f).collect();
        grid::trapezoid(times, &vals)
    };
    let l0 = series(&|r| r.0);
    let v4 = series(&|r| r.3).sqrt();
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for c in 0..groups.len() {
        l1 += series(&|r| r.1[c]);
        l2 += series(&|r| r.2[c]).sqrt() * v4;
    }
    let mut l3 = 0.0;
    for lins in &groups {
        let mut q = SpectralField::zeros(g);
        for &lin in lins.iter() {
            q.coefficients_mut()[lin] = a.coefficients()[lin];
        }
        l3 += modspace::modulation_norm_of_spectrum(&q, &m42(), window)?.powi(2) * rhs_b * rhs_b;
    }
    let l4 = (rhs_a * rhs_b).powi(2);
    let slack = 1.0 + 1e-9;
    let holds = l0 <= overlap * l1 * slack && l1 <= l2 * slack;
    Ok(Some(ChainLog {
        n,
        k,
        cells: groups.len(),
        overlap,
        l0,
        l1,
        l2,
        l3,
        l4,
        c23: l2 / l3,
        c34: l3 / l4,
        holds,
    }))
}

fn default_family() -> DataFamily {
    DataFamily::RandomPhase
}
fn default_one() -> f64 {
    1.0
}
fn default_nodes() -> usize {
    513
}
fn default_pieces() -> usize {
    2
}

/// Two sweeps of the bilinear ratio: `N` over `high_sweep` at `K = low_fixed`,
/// and `K` over `low_sweep` at `N = high_fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearConfig {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub high_sweep: Vec<f64>,
    pub low_fixed: f64,
    pub low_sweep: Vec<f64>,
    pub high_fixed: f64,
    #[serde(default = "default_family")]
    pub family: DataFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub horizon: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_one")]
    pub grading: f64,
    /// Required ratio `N / K`.
    #[serde(default = "default_one")]
    pub min_separation: f64,
    /// Log the almost-orthogonality chain for every pair.
    #[serde(default)]
    pub chain: bool,
    #[serde(default)]
    pub margin: Option<f64>,
}

impl BilinearConfig {
    pub fn validate(&self) -> Result<Grid> {
        if !(3..=4).contains(&self.d) {
            return Err(Error::Unsupported(format!("the bilinear sweep is for d in {{3, 4}}, got {}", self.d)));
        }
        let g = Grid::new(self.d, self.n, self.length)?;
        check_scales(&self.high_sweep, g.xi_max())?;
        check_scales(&self.low_sweep, g.xi_max())?;
        check_scales(&[self.low_fixed, 2.0 * self.low_fixed, 4.0 * self.low_fixed], f64::INFINITY)?;
        check_scales(&[self.high_fixed, 2.0 * self.high_fixed, 4.0 * self.high_fixed], f64::INFINITY)?;
        if self.high_fixed > g.xi_max() {
            return Err(Error::OutOfBand(format!("N = {} exceeds the band limit", self.high_fixed)));
        }
        if !(self.min_separation >= 1.0) {
            return Err(Error::Regime(format!("separation {} < 1", self.min_separation)));
        }
        for &n in &self.high_sweep {
            check_pair(n, self.low_fixed, self.min_separation)?;
        }
        for &k in &self.low_sweep {
            check_pair(self.high_fixed, k, self.min_separation)?;
        }
        Ok(g)
    }

    fn times(&self) -> Result<Vec<f64>> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidTimes(format!("horizon {} must be positive", self.horizon)));
        }
        propagator::graded_nodes(self.horizon, self.nodes, self.grading)
    }
}

/// Fits in `N` (predicted 0) and in `K` (predicted `(d-2)/2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearResult {
    pub high: FitResult,
    pub low: FitResult,
    pub cells: Vec<BilinearCell>,
}

impl BilinearResult {
    pub fn pass(&self) -> bool {
        self.high.pass && self.low.pass && self.cells.iter().all(|c| c.chain.as_ref().map_or(true, |l| l.holds))
    }
}

pub fn bilinear_ratio(cfg: &BilinearConfig) -> Result<BilinearResult> {
    let g = cfg.validate()?;
    let times = cfg.times()?;
    let window = modspace::make_window(&g)?;
    let margin = cfg.margin.unwrap_or(DEFAULT_MARGIN);
    let run = |n: f64, k: f64| -> Result<BilinearCell> {
        let a = band_data(cfg.family, n, cfg.seed, &g)?;
        let b = band_data(cfg.family, k, cfg.seed.wrapping_add(1), &g)?;
        cell_from_spectra(&a, &b, n, k, &times, &window, cfg.chain)
    };
    let high_cells = cfg.high_sweep.iter().map(|&n| run(n, cfg.low_fixed)).collect::<Result<Vec<_>>>()?;
    let low_cells = cfg.low_sweep.iter().map(|&k| run(cfg.high_fixed, k)).collect::<Result<Vec<_>>>()?;
    let rows = |cells: &[BilinearCell], by_n: bool| -> Vec<Row> {
        cells
            .iter()
            .map(|c| Row { scale: if by_n { c.n } else { c.k }, lhs: c.lhs, rhs: c.rhs, ratio: c.ratio })
            .collect()
    };
    let high = FitResult::from_rows("bilinear-high", rows(&high_cells, true), 0.0, margin)?;
    let low = FitResult::from_rows("bilinear-low", rows(&low_cells, false), (cfg.d as f64 - 2.0) / 2.0, margin)?;
    let mut cells = high_cells;
    cells.extend(low_cells);
    Ok(BilinearResult { high, low, cells })
}

/// A path `t -> e^{it Delta} f_j` for `t` in `[t_j, t_{j+1})`, the last
/// interval closed, zero outside `[t_0, t_K]`.
#[derive(Debug, Clone)]
pub struct AtomicTrajectory {
    partition: Vec<f64>,
    profiles: Vec<Field>,
}

impl AtomicTrajectory {
    pub fn new(partition: Vec<f64>, profiles: Vec<Field>) -> Result<Self> {
        if profiles.is_empty() || partition.len() != profiles.len() + 1 {
            return Err(Error::InvalidPath(format!("{} partition points for {} profiles", partition.len(), profiles.len())));
        }
        if partition.iter().any(|t| !t.is_finite()) || partition.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath("partition must be finite and strictly increasing".into()));
        }
        let g = profiles[0].grid();
        profiles.iter().try_for_each(|f| f.grid().check_same(g))?;
        Ok(AtomicTrajectory { partition, profiles })
    }

    /// The free trajectory of `f` on `[t0, t1]`.
    pub fn free(f: Field, t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![t0, t1], vec![f])
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn profiles(&self) -> &[Field] {
        &self.profiles
    }

    pub fn grid(&self) -> &Grid {
        self.profiles[0].grid()
    }

    pub fn piece_index(&self, t: f64) -> Option<usize> {
        let last = *self.partition.last().expect("non-empty");
        if t < self.partition[0] || t > last {
            return None;
        }
        if t == last {
            return Some(self.profiles.len() - 1);
        }
        Some(self.partition.partition_point(|&s| s <= t) - 1)
    }

    pub fn eval(&self, t: f64) -> Field {
        match self.piece_index(t) {
            Some(j) => propagator::free_evolve(&self.profiles[j], t),
            None => Field::zeros(*self.grid()),
        }
    }

    pub fn sample(&self, times: &[f64], norm: ValueNorm) -> Result<SampledPath> {
        SampledPath::new(times.to_vec(), times.iter().map(|&t| self.eval(t)).collect(), norm)
    }

    /// Sum of two trajectories on the common refinement of their partitions.
    pub fn superpose(&self, other: &AtomicTrajectory) -> Result<AtomicTrajectory> {
        self.grid().check_same(other.grid())?;
        let mut points: Vec<f64> = self.partition.iter().chain(&other.partition).copied().collect();
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        points.dedup();
        let profiles = points
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let mut f = Field::zeros(*self.grid());
                for traj in [self, other] {
                    if let Some(j) = traj.piece_index(mid) {
                        f = &f + &traj.profiles[j];
                    }
                }
                f
            })
            .collect();
        AtomicTrajectory::new(points, profiles)
    }
}

/// Projected piece spectra of a trajectory.
fn projected(u: &AtomicTrajectory, n: f64) -> Vec<SpectralField> {
    let table = modspace::dyadic_table(u.grid(), n);
    u.profiles
        .iter()
        .map(|f| {
            let mut s = f.to_spectrum();
            s.apply_table(&table);
            s
        })
        .collect()
}

/// `||P_N u||_{V^2_Delta M_{4,2}}` read off on the time nodes. Twisting an
/// atomic trajectory back gives the piecewise constant path `P_N f_j`, and
/// repeated consecutive values do not change a p-variation, so one node per
/// visited piece suffices.
fn adapted_v2(u: &AtomicTrajectory, pieces: &[SpectralField], times: &[f64], window: &Window) -> Result<f64> {
    let mut visits: Vec<(f64, Option<usize>)> = Vec::new();
    for &t in times {
        let j = u.piece_index(t);
        if visits.last().map_or(true, |(_, prev)| *prev != j) {
            visits.push((t, j));
        }
    }
    for j in 0..pieces.len() {
        if !visits.iter().any(|(_, v)| *v == Some(j)) {
            return Err(Error::InvalidPath(format!("atom {j} contains no time node")));
        }
    }
    let g = *u.grid();
    let values = visits
        .iter()
        .map(|(_, j)| match j {
            Some(j) => pieces[*j].to_field(),
            None => Field::zeros(g),
        })
        .collect();
    let path = SampledPath::new(
        visits.iter().map(|(t, _)| *t).collect(),
        values,
        ValueNorm::modulation(m42(), window.clone()),
    )?;
    variation::vp_norm(&path, 2.0)
}

/// The bilinear ratio for atomic trajectories, normalized by adapted `V^2`
/// norms. The time integral is taken interval by interval with both ends
/// evaluated on the atom active inside the interval.
pub fn v2_bilinear_cell(u: &AtomicTrajectory, v: &AtomicTrajectory, n: f64, k: f64, times: &[f64], window: &Window) -> Result<BilinearCell> {
    grid::check_times(times)?;
    let g = *u.grid();
    g.check_same(v.grid())?;
    window.grid().check_same(&g)?;
    let pu = projected(u, n);
    let pv = projected(v, k);
    let zero = Complex64::new(0.0, 0.0);
    let vanishes = |p: &[SpectralField]| p.iter().all(|s| s.coefficients().iter().all(|c| *c == zero));
    if vanishes(&pu) || vanishes(&pv) {
        return Err(Error::Degenerate(format!("a projected path vanishes at (N, K) = ({n}, {k})")));
    }
    let rhs = adapted_v2(u, &pu, times, window)? * adapted_v2(v, &pv, times, window)?;

    // (node, piece of u, piece of v) evaluations needed by the trapezoid
    let mut keys = Vec::new();
    let mut intervals = Vec::new();
    for i in 0..times.len() - 1 {
        let mid = 0.5 * (times[i] + times[i + 1]);
        match (u.piece_index(mid), v.piece_index(mid)) {
            (Some(ju), Some(jv)) => {
                keys.push((i, ju, jv));
                keys.push((i + 1, ju, jv));
                intervals.push((i, ju, jv));
            }
            _ => continue,
        }
    }
    keys.sort_unstable();
    keys.dedup();
    let norms = g.frequency_norms_sq();
    let cell = g.cell();
    let values: HashMap<(usize, usize, usize), f64> = keys
        .par_iter()
        .map(|&(i, ju, jv)| {
            let t = times[i];
            let a = synthesize(&g, evolved(pu[ju].coefficients(), &norms, t));
            let b = synthesize(&g, evolved(pv[jv].coefficients(), &norms, t));
            ((i, ju, jv), a.iter().zip(&b).map(|(x, y)| (x * y).norm_sqr()).sum::<f64>() * cell)
        })
        .collect();
    let l0: f64 = intervals
        .iter()
        .map(|&(i, ju, jv)| 0.5 * (times[i + 1] - times[i]) * (values[&(i, ju, jv)] + values[&(i + 1, ju, jv)]))
        .sum();
    let row = Row::new(k, l0.sqrt(), rhs)?;
    Ok(BilinearCell { n, k, lhs: row.lhs, rhs: row.rhs, ratio: row.ratio, chain: None })
}

/// `K` sweep of the adapted-`V^2` bilinear ratio at fixed `N`; both
/// trajectories have `pieces` atoms with breakpoints on the time nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct V2Config {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub high: f64,
    pub low_sweep: Vec<f64>,
    #[serde(default = "default_pieces")]
    pub pieces: usize,
    #[serde(default = "default_family")]
    pub family: DataFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub horizon: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_one")]
    pub grading: f64,
    #[serde(default = "default_one")]
    pub min_separation: f64,
    /// Strichartz regularity `s`; the predicted `K` slope is `2s`. Defaults
    /// to `(d-2)/4`.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub margin: Option<f64>,
}

fn atomic_data(family: DataFamily, scale: f64, seed: u64, pieces: usize, times: &[f64], g: &Grid) -> Result<AtomicTrajectory> {
    let m = times.len();
    if pieces == 0 || pieces > m - 1 {
        return Err(Error::InvalidPath(format!("{pieces} atoms on {m} time nodes")));
    }
    let partition: Vec<f64> = (0..=pieces).map(|j| times[j * (m - 1) / pieces]).collect();
    let profiles = (0..pieces)
        .map(|j| Ok(band_data(family, scale, seed.wrapping_add(j as u64), g)?.to_field()))
        .collect::<Result<Vec<_>>>()?;
    AtomicTrajectory::new(partition, profiles)
}

pub fn v2_bilinear_ratio(cfg: &V2Config) -> Result<FitResult> {
    if !(3..=4).contains(&cfg.d) {
        return Err(Error::Unsupported(format!("the bilinear sweep is for d in {{3, 4}}, got {}", cfg.d)));
    }
    let g = Grid::new(cfg.d, cfg.n, cfg.length)?;
    check_scales(&cfg.low_sweep, g.xi_max())?;
    if cfg.high > g.xi_max() {
        return Err(Error::OutOfBand(format!("N = {} exceeds the band limit", cfg.high)));
    }
    for &k in &cfg.low_sweep {
        check_pair(cfg.high, k, cfg.min_separation)?;
    }
    if !(cfg.horizon > 0.0) {
        return Err(Error::InvalidTimes(format!("horizon {} must be positive", cfg.horizon)));
    }
    let times = propagator::graded_nodes(cfg.horizon, cfg.nodes, cfg.grading)?;
    let window = modspace::make_window(&g)?;
    let u = atomic_data(cfg.family, cfg.high, cfg.seed, cfg.pieces, &times, &g)?;
    let rows = cfg
        .low_sweep
        .iter()
        .map(|&k| {
            let v = atomic_data(cfg.family, k, cfg.seed.wrapping_add(1000), cfg.pieces, &times, &g)?;
            let c = v2_bilinear_cell(&u, &v, cfg.high, k, &times, &window)?;
            Ok(Row { scale: k, lhs: c.lhs, rhs: c.rhs, ratio: c.ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    let s = cfg.s.unwrap_or((cfg.d as f64 - 2.0) / 4.0);
    FitResult::from_rows("v2bilinear", rows, 2.0 * s, cfg.margin.unwrap_or(DEFAULT_MARGIN))
}
