//! p-variation and atomic step functions for field-valued paths, the
//! duality pairing, the Schrodinger-adapted twist and the iteration norms.
//!
//! Paths are sampled at finitely many nodes. Unless switched off, a path is
//! followed by a virtual terminal node carrying the value 0, so the last
//! value counts as a jump.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::modspace::{self, ModNormSpec, PieceTable, Window};
use crate::propagator;

/// Norm used on path values.
#[derive(Debug, Clone)]
pub enum ValueNorm {
    L2,
    Modulation { spec: ModNormSpec, window: Window },
}

impl ValueNorm {
    pub fn modulation(spec: ModNormSpec, window: Window) -> Self {
        ValueNorm::Modulation { spec, window }
    }

    pub fn norm(&self, f: &Field) -> Result<f64> {
        match self {
            ValueNorm::L2 => grid::lp_norm(f, 2.0),
            ValueNorm::Modulation { spec, window } => modspace::modulation_norm(f, spec, window),
        }
    }

    /// All pairwise distances `||v_i - v_j||` and the norms `||v_i||`.
    fn distances(&self, values: &[Field]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let m = values.len();
        match self {
            ValueNorm::L2 => {
                let norms = values.iter().map(|v| grid::lp_norm(v, 2.0)).collect::<Result<Vec<_>>>()?;
                let rows = (0..m)
                    .into_par_iter()
                    .map(|i| (0..m).map(|j| if j < i { l2_distance(&values[i], &values[j]) } else { 0.0 }).collect())
                    .collect();
                Ok((symmetrize(rows), norms))
            }
            ValueNorm::Modulation { spec, window } => {
                let tables = values.par_iter().map(|v| PieceTable::new(v, spec.p, window)).collect::<Result<Vec<_>>>()?;
                let norms = tables.iter().map(|t| t.norm(spec)).collect::<Result<Vec<_>>>()?;
                let rows = (0..m)
                    .into_par_iter()
                    .map(|i| (0..i).map(|j| tables[i].distance(&tables[j], spec)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                let rows = rows
                    .into_iter()
                    .map(|mut r| {
                        r.resize(m, 0.0);
                        r
                    })
                    .collect();
                Ok((symmetrize(rows), norms))
            }
        }
    }
}

fn l2_distance(a: &Field, b: &Field) -> f64 {
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (sum * a.grid().cell()).sqrt()
}

fn symmetrize(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let m = rows.len();
    for i in 0..m {
        for j in i + 1..m {
            rows[i][j] = rows[j][i];
        }
    }
    rows
}

/// Whether a virtual zero value follows the last node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    TerminalZero,
    Open,
}

/// A field-valued path sampled at strictly increasing times.
#[derive(Debug, Clone)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<Field>,
    norm: ValueNorm,
    endpoint: Endpoint,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<Field>, norm: ValueNorm) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidPath(format!("{} times for {} values", times.len(), values.len())));
        }
        if times.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPath("times must be finite and strictly increasing".into()));
        }
        let g = values[0].grid();
        values.iter().try_for_each(|v| v.grid().check_same(g))?;
        if let ValueNorm::Modulation { window, .. } = &norm {
            window.grid().check_same(g)?;
        }
        Ok(SampledPath { times, values, norm, endpoint: Endpoint::TerminalZero })
    }

    pub fn with_endpoint(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn with_norm(mut self, norm: ValueNorm) -> Result<Self> {
        if let ValueNorm::Modulation { window, .. } = &norm {
            window.grid().check_same(self.grid())?;
        }
        self.norm = norm;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Field] {
        &self.values
    }

    pub fn value_norm(&self) -> &ValueNorm {
        &self.norm
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    pub fn grid(&self) -> &Grid {
        self.values[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at a node time, if `t` is one.
    pub fn at(&self, t: f64) -> Option<&Field> {
        node_index(&self.times, t).map(|j| &self.values[j])
    }

    /// Applies `g` to every value.
    pub fn map(&self, mut g: impl FnMut(f64, &Field) -> Field) -> SampledPath {
        let values = self.times.iter().zip(&self.values).map(|(&t, v)| g(t, v)).collect();
        SampledPath { times: self.times.clone(), values, norm: self.norm.clone(), endpoint: self.endpoint }
    }
}

fn node_index(times: &[f64], t: f64) -> Option<usize> {
    times.iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
}

/// Maximizing subsequence of a p-variation computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpCertificate {
    pub value: f64,
    /// Node indices of the maximizing subsequence; the index `len` denotes
    /// the virtual terminal node.
    pub nodes: Vec<usize>,
}

fn check_vp_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("p-variation needs finite p >= 1, got {p}")));
    }
    Ok(())
}

/// `max over subsequences i_0 < ... < i_r of sum dist(i_{k-1}, i_k)^p` over
/// `count` nodes, by dynamic programming. Returns the p-th root and the
/// first maximizing subsequence.
pub fn p_variation_dp(count: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> Result<VpCertificate> {
    check_vp_exponent(p)?;
    if count < 2 {
        return Err(Error::InvalidPath(format!("p-variation needs at least 2 nodes, got {count}")));
    }
    let mut best = vec![0.0f64; count];
    let mut prev: Vec<Option<usize>> = vec![None; count];
    for i in 1..count {
        for j in 0..i {
            let cand = best[j] + dist(j, i).powf(p);
            if cand > best[i] {
                best[i] = cand;
                prev[i] = Some(j);
            }
        }
    }
    let mut end = 0;
    for i in 1..count {
        if best[i] > best[end] {
            end = i;
        }
    }
    let mut nodes = vec![end];
    while let Some(j) = prev[*nodes.last().unwrap()] {
        nodes.push(j);
    }
    nodes.reverse();
    if nodes.len() == 1 {
        nodes.clear();
    }
    Ok(VpCertificate { value: best[end].powf(1.0 / p), nodes })
}

/// Exhaustive maximum over all subsequences; exponential, for checking.
pub fn p_variation_brute(count: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> Result<f64> {
    check_vp_exponent(p)?;
    if !(2..=20).contains(&count) {
        return Err(Error::InvalidPath(format!("brute force needs 2..=20 nodes, got {count}")));
    }
    let mut best = 0.0f64;
    for mask in 0u32..(1 << count) {
        let mut last: Option<usize> = None;
        let mut acc = 0.0;
        for i in 0..count {
            if mask & (1 << i) != 0 {
                if let Some(j) = last {
                    acc += dist(j, i).powf(p);
                }
                last = Some(i);
            }
        }
        best = best.max(acc);
    }
    Ok(best.powf(1.0 / p))
}

/// p-variation of a scalar sequence, no terminal node.
pub fn scalar_vp(values: &[f64], p: f64) -> Result<f64> {
    Ok(p_variation_dp(values.len(), p, |i, j| (values[i] - values[j]).abs())?.value)
}

/// Distance oracle of a path including its virtual terminal node.
struct PathDistances {
    pairs: Vec<Vec<f64>>,
    norms: Vec<f64>,
    terminal: bool,
}

impl PathDistances {
    fn new(path: &SampledPath) -> Result<Self> {
        let (pairs, norms) = path.norm.distances(&path.values)?;
        Ok(PathDistances { pairs, norms, terminal: path.endpoint == Endpoint::TerminalZero })
    }

    fn count(&self) -> usize {
        self.norms.len() + usize::from(self.terminal)
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let m = self.norms.len();
        match (i < m, j < m) {
            (true, true) => self.pairs[i][j],
            (true, false) => self.norms[i],
            (false, true) => self.norms[j],
            (false, false) => 0.0,
        }
    }
}

/// `||v||_{V^p}` with its certificate.
pub fn vp_norm_certified(v: &SampledPath, p: f64) -> Result<VpCertificate> {
    check_vp_exponent(p)?;
    let d = PathDistances::new(v)?;
    if d.count() < 2 {
        return Err(Error::InvalidPath("p-variation needs at least 2 nodes".into()));
    }
    p_variation_dp(d.count(), p, |i, j| d.dist(i, j))
}

pub fn vp_norm(v: &SampledPath, p: f64) -> Result<f64> {
    Ok(vp_norm_certified(v, p)?.value)
}

/// Exhaustive-search counterpart of [`vp_norm`].
pub fn vp_norm_brute(v: &SampledPath, p: f64) -> Result<f64> {
    let d = PathDistances::new(v)?;
    p_variation_brute(d.count(), p, |i, j| d.dist(i, j))
}

/// `sum_j ||v(t_j) - v(t_{j-1})||` over consecutive nodes, terminal jump
/// excluded.
pub fn increment_sum(v: &SampledPath) -> Result<f64> {
    let d = PathDistances::new(v)?;
    Ok((1..v.len()).map(|j| d.dist(j - 1, j)).sum())
}

/// A right-open step function `sum_k 1_{[t_k, t_{k+1})} phi_k`.
#[derive(Debug, Clone)]
pub struct StepFunction {
    partition: Vec<f64>,
    pieces: Vec<Field>,
}

impl StepFunction {
    pub fn new(partition: Vec<f64>, pieces: Vec<Field>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidPath("a step function needs at least one piece".into()));
        }
        if partition.len() != pieces.len() + 1 {
            return Err(Error::InvalidPath(format!(
                "{} partition points for {} pieces",
                partition.len(),
                pieces.len()
            )));
        }
        if partition.windows(2).any(|w| !(w[1] > w[0])) || partition[0].is_nan() || !partition[0].is_finite() {
            return Err(Error::InvalidPath("partition must be strictly increasing from a finite start".into()));
        }
        if partition[..partition.len() - 1].iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPath("only the last partition point may be infinite".into()));
        }
        let g = pieces[0].grid();
        pieces.iter().try_for_each(|f| f.grid().check_same(g))?;
        Ok(StepFunction { partition, pieces })
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn pieces(&self) -> &[Field] {
        &self.pieces
    }

    pub fn grid(&self) -> &Grid {
        self.pieces[0].grid()
    }

    /// Value at time `t`; zero outside `[t_0, t_K)`.
    pub fn eval(&self, t: f64) -> Field {
        match self.partition.windows(2).position(|w| w[0] <= t && t < w[1]) {
            Some(k) => self.pieces[k].clone(),
            None => Field::zeros(*self.grid()),
        }
    }

    /// Samples at the given times.
    pub fn sample(&self, times: Vec<f64>, norm: ValueNorm) -> Result<SampledPath> {
        let values = times.iter().map(|&t| self.eval(t)).collect();
        SampledPath::new(times, values, norm)
    }

    /// Samples at the finite partition points; the last point, where the
    /// function has dropped to zero, is kept when finite.
    pub fn as_path(&self, norm: ValueNorm) -> Result<SampledPath> {
        let times: Vec<f64> = self.partition.iter().copied().filter(|t| t.is_finite()).collect();
        self.sample(times, norm)
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        StepFunction { partition: self.partition.clone(), pieces: self.pieces.iter().map(|f| f * c).collect() }
    }
}

fn check_up_exponent(p: f64) -> Result<()> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("U^p needs 1 < p < inf, got {p}")));
    }
    Ok(())
}

/// `(sum_k ||phi_k||^p)^{1/p}`.
fn lp_of_pieces(u: &StepFunction, p: f64, norm: &ValueNorm) -> Result<f64> {
    let sum = u.pieces.iter().map(|f| Ok(norm.norm(f)?.powf(p))).sum::<Result<f64>>()?;
    Ok(sum.powf(1.0 / p))
}

/// Rescales the pieces so that `sum_k ||phi_k||^p = 1`.
pub fn make_atom(partition: Vec<f64>, pieces: Vec<Field>, p: f64, norm: &ValueNorm) -> Result<StepFunction> {
    check_up_exponent(p)?;
    let u = StepFunction::new(partition, pieces)?;
    let lambda = lp_of_pieces(&u, p, norm)?;
    if lambda == 0.0 {
        return Err(Error::Degenerate("all atom pieces vanish".into()));
    }
    Ok(u.scale(1.0 / lambda))
}

/// Upper bound on `||u||_{U^p}` from writing `u` as one multiple of an atom
/// on its own partition.
pub fn up_norm_upper(u: &StepFunction, p: f64, norm: &ValueNorm) -> Result<f64> {
    check_up_exponent(p)?;
    lp_of_pieces(u, p, norm)
}

/// Upper bound on `||u||_{U^p}` from the telescoping decomposition into
/// one-piece atoms `1_{[t_k, t_K)} (phi_k - phi_{k-1})`; valid for every p.
pub fn up_norm_jump_bound(u: &StepFunction, norm: &ValueNorm) -> Result<f64> {
    let mut total = norm.norm(&u.pieces[0])?;
    for w in u.pieces.windows(2) {
        total += norm.norm(&(&w[1] - &w[0]))?;
    }
    Ok(total)
}

/// `B(u, v) = -sum_{k=0}^{K} <phi_k - phi_{k-1}, v(t_k)>` with
/// `phi_{-1} = phi_K = 0` and `<f, g> = int f conj(g)`. An infinite last
/// partition point contributes nothing (`v(inf) = 0`).
pub fn duality_pairing(u: &StepFunction, v: &SampledPath) -> Result<Complex64> {
    u.grid().check_same(v.grid())?;
    let k_total = u.pieces.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &t) in u.partition.iter().enumerate() {
        if t.is_infinite() {
            continue;
        }
        let vk = v
            .at(t)
            .ok_or_else(|| Error::InvalidTimes(format!("path is not sampled at partition point {t}")))?;
        let jump = match k {
            0 => u.pieces[0].clone(),
            k if k == k_total => &Field::zeros(*u.grid()) - &u.pieces[k - 1],
            k => &u.pieces[k] - &u.pieces[k - 1],
        };
        acc -= jump.inner(vk)?;
    }
    Ok(acc)
}

/// Dual path that nearly saturates `|B(u, v)| <= ||u||_{U^p} ||v||_{V^{p'}}`
/// for an L2-valued step function: increments `||phi_k||^{p-2} phi_k`,
/// ending at 0 so the terminal node adds no jump.
pub fn dual_witness(u: &StepFunction, p: f64) -> Result<SampledPath> {
    check_up_exponent(p)?;
    let g = *u.grid();
    let times: Vec<f64> = u.partition.iter().copied().filter(|t| t.is_finite()).collect();
    let mut increments = Vec::with_capacity(u.pieces.len());
    for phi in &u.pieces {
        let n = grid::lp_norm(phi, 2.0)?;
        increments.push(if n > 0.0 { phi * n.powf(p - 2.0) } else { Field::zeros(g) });
    }
    // v(t_k) = -sum_{j >= k} increments_j
    let mut values = vec![Field::zeros(g); times.len()];
    let mut tail = Field::zeros(g);
    for k in (0..times.len()).rev() {
        if let Some(inc) = increments.get(k) {
            tail = &tail + inc;
        }
        values[k] = &tail * -1.0;
    }
    SampledPath::new(times, values, ValueNorm::L2)
}

/// Lower bound `max_v |B(u, v)| / ||v||_{V^{p'}}` over candidate dual paths.
pub fn up_norm_lower(u: &StepFunction, p: f64, candidates: &[SampledPath]) -> Result<f64> {
    check_up_exponent(p)?;
    let pd = ModNormSpec::dual_exponent(p);
    let mut best = 0.0f64;
    for v in candidates {
        let vn = vp_norm(v, pd)?;
        if vn > 0.0 {
            best = best.max(duality_pairing(u, v)?.norm() / vn);
        }
    }
    Ok(best)
}

/// Direction of the Schrodinger twist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Twist {
    /// `v(t) -> e^{-it Delta} v(t)`: free trajectories become constant.
    Forward,
    /// `v(t) -> e^{it Delta} v(t)`.
    Backward,
}

pub fn adapt(v: &SampledPath, direction: Twist) -> SampledPath {
    let sign = match direction {
        Twist::Forward => -1.0,
        Twist::Backward => 1.0,
    };
    let times = v.times.clone();
    let values: Vec<Field> = times
        .par_iter()
        .zip(v.values.par_iter())
        .map(|(&t, f)| propagator::free_evolve(f, sign * t))
        .collect();
    SampledPath { times, values, norm: v.norm.clone(), endpoint: v.endpoint }
}

/// `||v||_{V^p_Delta} = ||e^{-it Delta} v||_{V^p}`.
pub fn adapted_vp_norm(v: &SampledPath, p: f64) -> Result<f64> {
    vp_norm(&adapt(v, Twist::Forward), p)
}

/// Per-band contributions to an iteration norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationNormReport {
    pub value: f64,
    /// `(N, ||P_N u||)` in the band norm, before the weight `N^s`.
    pub bands: Vec<(f64, f64)>,
}

fn check_iteration_grid(u: &SampledPath, window: &Window) -> Result<Vec<f64>> {
    window.grid().check_same(u.grid())?;
    if u.len() < 2 {
        return Err(Error::InvalidTimes("iteration norms need at least 2 time nodes".into()));
    }
    let bands = modspace::dyadic_bands(u.grid());
    if bands.len() < 3 {
        return Err(Error::Unsupported(format!("grid resolves only {} dyadic bands, need 3", bands.len())));
    }
    Ok(bands)
}

fn band_path(u: &SampledPath, n: f64) -> SampledPath {
    let table = modspace::dyadic_table(u.grid(), n);
    u.map(|_, f| grid::apply_multiplier(f, &table))
}

/// `(sum_N N^{2s} ||P_N u||^2_{V^2_Delta M_{4,2}})^{1/2}` over the dyadic bands
/// `N >= 1` of the grid.
pub fn ys_norm(u: &SampledPath, s: f64, window: &Window) -> Result<IterationNormReport> {
    let bands = check_iteration_grid(u, window)?;
    let norm = ValueNorm::modulation(ModNormSpec::plain(4.0, 2.0), window.clone());
    let adapted = adapt(u, Twist::Forward).with_norm(norm)?;
    let per_band = bands
        .iter()
        .map(|&n| Ok((n, vp_norm(&band_path(&adapted, n), 2.0)?)))
        .collect::<Result<Vec<_>>>()?;
    let value = per_band.iter().map(|(n, v)| n.powf(2.0 * s) * v * v).sum::<f64>().sqrt();
    Ok(IterationNormReport { value, bands: per_band })
}

/// Computable upper proxy for `X^s`: each adapted band path is read as a
/// step function on the time nodes and bounded by the smaller of its
/// single-atom and telescoping U^2 bounds.
pub fn xs_norm_upper(u: &SampledPath, s: f64, window: &Window) -> Result<IterationNormReport> {
    let bands = check_iteration_grid(u, window)?;
    let norm = ValueNorm::modulation(ModNormSpec::plain(4.0, 2.0), window.clone());
    let adapted = adapt(u, Twist::Forward);
    let mut partition = adapted.times.clone();
    partition.push(f64::INFINITY);
    let per_band = bands
        .iter()
        .map(|&n| {
            let path = band_path(&adapted, n);
            let step = StepFunction::new(partition.clone(), path.values)?;
            let single = up_norm_upper(&step, 2.0, &norm)?;
            let jumps = up_norm_jump_bound(&step, &norm)?;
            Ok((n, single.min(jumps)))
        })
        .collect::<Result<Vec<_>>>()?;
    let value = per_band.iter().map(|(n, v)| n.powf(2.0 * s) * v * v).sum::<f64>().sqrt();
    Ok(IterationNormReport { value, bands: per_band })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> Field {
        let v = (0..g.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        Field::new(g, v).unwrap()
    }

    fn random_path(g: Grid, m: usize, rng: &mut ChaCha8Rng) -> SampledPath {
        let times = (0..m).map(|j| j as f64 * 0.1).collect();
        let values = (0..m).map(|_| random_field(g, rng)).collect();
        SampledPath::new(times, values, ValueNorm::L2).unwrap()
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(scalar_vp(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!((scalar_vp(&[1.0, 0.0, 1.0, 0.0], 2.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!((scalar_vp(&[0.0, 1.0, 2.0, 3.0], 2.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(scalar_vp(&[0.0], 2.0).is_err());
        assert!(scalar_vp(&[0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn certificate_reproduces_value() {
        let xs: [f64; 6] = [0.0, 3.0, 1.0, 2.5, -1.0, 0.5];
        let c = p_variation_dp(xs.len(), 2.0, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        let sum: f64 = c.nodes.windows(2).map(|w| (xs[w[0]] - xs[w[1]]).powi(2)).sum();
        assert!((sum.sqrt() - c.value).abs() < 1e-14);
        assert!(c.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_path_has_only_terminal_jump() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.0)).unwrap();
        let path = SampledPath::new(vec![0.0, 0.5, 1.0], vec![f.clone(); 3], ValueNorm::L2).unwrap();
        let n = grid::lp_norm(&f, 2.0).unwrap();
        assert!((vp_norm(&path, 2.0).unwrap() - n).abs() < 1e-14);
        assert_eq!(vp_norm(&path.clone().with_endpoint(Endpoint::Open), 2.0).unwrap(), 0.0);
        assert_eq!(increment_sum(&path).unwrap(), 0.0);
    }

    #[test]
    fn dp_matches_brute_force_on_field_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::new(1, 8, 3.0).unwrap();
        for _ in 0..40 {
            let m = rng.gen_range(2..=10);
            let p = [1.0, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
            let path = random_path(g, m, &mut rng);
            for endpoint in [Endpoint::TerminalZero, Endpoint::Open] {
                let path = path.clone().with_endpoint(endpoint);
                assert_eq!(vp_norm(&path, p).unwrap(), vp_norm_brute(&path, p).unwrap());
            }
        }
    }

    #[test]
    fn modulation_valued_distances_match_direct_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Grid::new(1, 64, 8.0 * PI).unwrap();
        let w = modspace::make_window(&g).unwrap();
        let spec = ModNormSpec::plain(4.0, 2.0);
        let norm = ValueNorm::modulation(spec, w.clone());
        let path = random_path(g, 5, &mut rng).with_norm(norm.clone()).unwrap();
        let v = vp_norm_certified(&path, 2.0).unwrap();
        let nodes = &v.nodes;
        let value_at = |i: usize| if i < path.len() { path.values()[i].clone() } else { Field::zeros(g) };
        let sum: f64 = nodes
            .windows(2)
            .map(|p| modspace::modulation_norm(&(&value_at(p[1]) - &value_at(p[0])), &spec, &w).unwrap().powi(2))
            .sum();
        assert!((sum.sqrt() - v.value).abs() <= 1e-10 * v.value);
    }

    #[test]
    fn vp_is_nonincreasing_in_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Grid::new(2, 8, 3.0).unwrap();
        for _ in 0..10 {
            let path = random_path(g, 8, &mut rng);
            let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&p| vp_norm(&path, p).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)), "{vals:?}");
        }
    }

    #[test]
    fn atoms_are_normalized() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new(1.0 + x[0].cos(), 0.0)).unwrap();
        let nf = grid::lp_norm(&f, 2.0).unwrap();
        let two = &f * (2.0 / nf);
        let a = make_atom(vec![0.0, 1.0], vec![two.clone()], 2.0, &ValueNorm::L2).unwrap();
        assert!((grid::lp_norm(&a.pieces()[0], 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((up_norm_upper(&a, 2.0, &ValueNorm::L2).unwrap() - 1.0).abs() < 1e-14);
        let a2 = make_atom(vec![0.0, 1.0, 2.0], vec![two.clone(), two.clone()], 2.0, &ValueNorm::L2).unwrap();
        for piece in a2.pieces() {
            assert!((grid::lp_norm(piece, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        }
        let scaled = a2.scale(3.5);
        assert!((up_norm_upper(&scaled, 2.0, &ValueNorm::L2).unwrap() - 3.5).abs() < 1e-13);
        let path = a2.as_path(ValueNorm::L2).unwrap();
        let v = vp_norm(&path, 2.0).unwrap();
        assert!(v.is_finite() && v >= grid::lp_norm(&a2.pieces()[1], 2.0).unwrap());
        assert!(matches!(
            make_atom(vec![0.0, 1.0], vec![Field::zeros(g)], 2.0, &ValueNorm::L2),
            Err(Error::Degenerate(_))
        ));
        assert!(StepFunction::new(vec![0.0, 0.0], vec![f.clone()]).is_err());
        assert!(StepFunction::new(vec![0.0], vec![f]).is_err());
    }

    #[test]
    fn concatenated_atoms_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = Grid::new(1, 16, 4.0).unwrap();
        let p = 2.0;
        let a1 = make_atom(vec![0.0, 0.5, 1.0], vec![random_field(g, &mut rng), random_field(g, &mut rng)], p, &ValueNorm::L2)
            .unwrap();
        let a2 = make_atom(vec![1.0, 2.0], vec![random_field(g, &mut rng)], p, &ValueNorm::L2).unwrap();
        let (l1, l2) = (2.0, 0.75);
        let mut pieces: Vec<Field> = a1.pieces().iter().map(|f| f * l1).collect();
        pieces.extend(a2.pieces().iter().map(|f| f * l2));
        let u = StepFunction::new(vec![0.0, 0.5, 1.0, 2.0], pieces).unwrap();
        let bound = up_norm_upper(&u, p, &ValueNorm::L2).unwrap();
        assert!(bound <= l1 + l2 + 1e-12);
        assert!(bound >= (l1.powf(p) + l2.powf(p)).powf(1.0 / p) - 1e-12);
    }

    #[test]
    fn up_embeds_in_vp_on_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::new(1, 16, 4.0).unwrap();
        for p in [2.0, 4.0] {
            for k in 1..6 {
                let partition = (0..=k).map(|j| j as f64).collect();
                let pieces = (0..k).map(|_| random_field(g, &mut rng)).collect();
                let a = make_atom(partition, pieces, p, &ValueNorm::L2).unwrap();
                let v = vp_norm(&a.as_path(ValueNorm::L2).unwrap(), p).unwrap();
                let up = up_norm_upper(&a, p, &ValueNorm::L2).unwrap();
                assert!(v <= 2f64.powf(1.0 / p) * up * 2.0);
            }
        }
    }

    #[test]
    fn pairing_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Grid::new(1, 16, 4.0).unwrap();
        let phi = random_field(g, &mut rng);
        let u = StepFunction::new(vec![0.25, 0.75], vec![phi.clone()]).unwrap();
        let zero = SampledPath::new(vec![0.0, 0.25, 0.75], vec![Field::zeros(g); 3], ValueNorm::L2).unwrap();
        assert_eq!(duality_pairing(&u, &zero).unwrap(), Complex64::new(0.0, 0.0));
        let w = random_field(g, &mut rng);
        let constant = SampledPath::new(vec![0.0, 0.25, 0.75, 1.0], vec![w.clone(); 4], ValueNorm::L2).unwrap();
        let b = duality_pairing(&u, &constant).unwrap();
        let defining = -(phi.inner(&w).unwrap() - phi.inner(&w).unwrap());
        assert!((b - defining).norm() < 1e-14 && b.norm() < 1e-14);
        let missing = SampledPath::new(vec![0.0, 0.25], vec![w.clone(); 2], ValueNorm::L2).unwrap();
        assert!(matches!(duality_pairing(&u, &missing), Err(Error::InvalidTimes(_))));
        // v(inf) = 0: only the first jump contributes
        let open = StepFunction::new(vec![0.25, f64::INFINITY], vec![phi.clone()]).unwrap();
        let b = duality_pairing(&open, &constant).unwrap();
        assert!((b + phi.inner(&w).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn pairing_is_sesquilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid::new(1, 16, 4.0).unwrap();
        let times = vec![0.0, 1.0, 2.0];
        let u = StepFunction::new(times.clone(), vec![random_field(g, &mut rng), random_field(g, &mut rng)]).unwrap();
        let v = random_path(g, 3, &mut rng);
        let v = SampledPath::new(times, v.values().to_vec(), ValueNorm::L2).unwrap();
        let c = Complex64::new(0.3, -1.2);
        let uc = StepFunction::new(u.partition().to_vec(), u.pieces().iter().map(|f| f.scale(c)).collect()).unwrap();
        let vc = v.map(|_, f| f.scale(c));
        let b = duality_pairing(&u, &v).unwrap();
        assert!((duality_pairing(&uc, &v).unwrap() - c * b).norm() < 1e-12);
        assert!((duality_pairing(&u, &vc).unwrap() - c.conj() * b).norm() < 1e-12);
    }

    #[test]
    fn duality_inequality_and_bracketing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = Grid::new(1, 16, 4.0).unwrap();
        for p in [2.0, 4.0] {
            let pd = ModNormSpec::dual_exponent(p);
            for _ in 0..30 {
                let k = rng.gen_range(1..5);
                let partition: Vec<f64> = (0..=k).map(|j| j as f64).collect();
                let a = make_atom(partition, (0..k).map(|_| random_field(g, &mut rng)).collect(), p, &ValueNorm::L2).unwrap();
                let v = random_path(g, k + 1, &mut rng);
                let v = SampledPath::new((0..=k).map(|j| j as f64).collect(), v.values().to_vec(), ValueNorm::L2).unwrap();
                let b = duality_pairing(&a, &v).unwrap().norm();
                assert!(b <= 1.0001 * vp_norm(&v, pd).unwrap());
                let witness = dual_witness(&a, p).unwrap();
                let lower = up_norm_lower(&a, p, &[v, witness]).unwrap();
                assert!(lower <= up_norm_upper(&a, p, &ValueNorm::L2).unwrap() * (1.0 + 1e-12));
                assert!(lower > 0.0);
            }
        }
    }

    #[test]
    fn witness_saturates_single_piece_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::new(1, 16, 4.0).unwrap();
        let a = make_atom(vec![0.0, 1.0], vec![random_field(g, &mut rng)], 2.0, &ValueNorm::L2).unwrap();
        let lower = up_norm_lower(&a, 2.0, &[dual_witness(&a, 2.0).unwrap()]).unwrap();
        assert!((lower - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adapt_round_trip_and_free_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = Grid::new(1, 32, 8.0).unwrap();
        let f = random_field(g, &mut rng);
        let times: Vec<f64> = (0..6).map(|j| j as f64 * 0.2).collect();
        let traj = SampledPath::new(times.clone(), propagator::free_trajectory(&f, &times), ValueNorm::L2).unwrap();
        let back = adapt(&adapt(&traj, Twist::Forward), Twist::Backward);
        for (a, b) in back.values().iter().zip(traj.values()) {
            assert!((a - b).sup() <= 1e-12 * b.sup());
        }
        let flat = adapt(&traj, Twist::Forward);
        let nf = grid::lp_norm(&f, 2.0).unwrap();
        assert!((vp_norm(&flat, 2.0).unwrap() - nf).abs() <= 1e-12 * nf);
        assert!(increment_sum(&flat).unwrap() <= 1e-12 * nf);
        assert!((adapted_vp_norm(&traj, 2.0).unwrap() - nf).abs() <= 1e-12 * nf);

        let eps: Vec<Field> = times.iter().map(|_| &random_field(g, &mut rng) * 1e-3).collect();
        let perturbed = SampledPath::new(
            times.clone(),
            traj.values().iter().zip(&eps).map(|(a, b)| a + b).collect(),
            ValueNorm::L2,
        )
        .unwrap();
        let budget: f64 = eps.iter().map(|e| grid::lp_norm(e, 2.0).unwrap()).sum();
        let diff = (adapted_vp_norm(&perturbed, 2.0).unwrap() - adapted_vp_norm(&traj, 2.0).unwrap()).abs();
        assert!(diff <= 2.0 * budget);
    }

    #[test]
    fn ys_norm_examples() {
        let g = Grid::new(1, 256, 32.0 * PI).unwrap();
        let w = modspace::make_window(&g).unwrap();
        let times: Vec<f64> = (0..5).map(|j| j as f64 * 0.05).collect();
        let zero = SampledPath::new(times.clone(), vec![Field::zeros(g); 5], ValueNorm::L2).unwrap();
        assert_eq!(ys_norm(&zero, 1.5, &w).unwrap().value, 0.0);

        let n0 = 2.0;
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, n0 * x[0])).unwrap();
        let traj = SampledPath::new(times.clone(), propagator::free_trajectory(&f, &times), ValueNorm::L2).unwrap();
        let s = 1.5;
        let y = ys_norm(&traj, s, &w).unwrap().value;
        let reference = n0.powf(s) * modspace::modulation_norm(&f, &ModNormSpec::plain(4.0, 2.0), &w).unwrap();
        assert!(y >= reference * (1.0 - 1e-10) && y <= 2.0 * reference, "{y} vs {reference}");

        let u = SampledPath::new(times.clone(), times.iter().map(|&t| &f * (1.0 + t)).collect(), ValueNorm::L2).unwrap();
        let ys: Vec<f64> = [1.1, 1.5, 2.0].iter().map(|&s| ys_norm(&u, s, &w).unwrap().value).collect();
        assert!(ys.windows(2).all(|p| p[0] <= p[1]));
        let xs = xs_norm_upper(&u, 1.5, &w).unwrap().value;
        assert!(xs.is_finite() && xs > 0.0);

        let coarse = Grid::new(1, 16, 8.0 * PI).unwrap();
        let wc = modspace::make_window(&coarse).unwrap();
        let tiny = SampledPath::new(vec![0.0, 1.0], vec![Field::zeros(coarse); 2], ValueNorm::L2).unwrap();
        assert!(ys_norm(&tiny, 1.5, &wc).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dp_equals_brute_force_on_scalars(xs in proptest::collection::vec(-5.0f64..5.0, 2..10), p in 1.0f64..6.0) {
            let dp = p_variation_dp(xs.len(), p, |i, j| (xs[i] - xs[j]).abs()).unwrap().value;
            let bf = p_variation_brute(xs.len(), p, |i, j| (xs[i] - xs[j]).abs()).unwrap();
            prop_assert!((dp - bf).abs() <= 1e-12 * (1.0 + bf));
        }

        #[test]
        fn vp_dominates_endpoint_difference(xs in proptest::collection::vec(-5.0f64..5.0, 2..10), p in 1.0f64..6.0) {
            let v = scalar_vp(&xs, p).unwrap();
            let ends = (xs[xs.len() - 1] - xs[0]).abs();
            prop_assert!(v + 1e-12 >= ends);
            let max_jump = xs.iter().flat_map(|a| xs.iter().map(move |b| (a - b).abs())).fold(0.0, f64::max);
            prop_assert!(v + 1e-12 >= max_jump);
        }
    }
}
