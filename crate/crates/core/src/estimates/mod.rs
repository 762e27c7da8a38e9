//! Scale sweeps of the linear, bilinear and decoupling inequalities, with
//! log-log exponent fits.

mod bilinear;
mod decoupling;
mod linear;

pub use bilinear::{
    bilinear_cell, bilinear_ratio, v2_bilinear_cell, v2_bilinear_ratio, AtomicTrajectory, BilinearCell, BilinearConfig,
    BilinearResult, ChainLog, V2Config,
};
pub use decoupling::{cap_count, decoupling_ratio, decoupling_row, DecouplingConfig, ProfileKind};
pub use linear::{evolution_lp_norm, galilean_ratio_pair, smoothing_ratio, strichartz_l4_ratio};

use serde::{Deserialize, Serialize};

use crate::datagen;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::propagator;

pub const DEFAULT_MARGIN: f64 = 0.15;
pub const DEFAULT_DECOUPLING_MARGIN: f64 = 0.2;

/// `s_dec(p, d)`: 0 up to `p = 2(d+2)/d`, then `d/4 - (d+2)/(2p)`.
pub fn sdec(p: f64, d: usize) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::InvalidExponent(format!("s_dec needs p >= 2, got {p}")));
    }
    if d == 0 {
        return Err(Error::InvalidGrid("dimension must be positive".into()));
    }
    let d = d as f64;
    if p <= 2.0 * (d + 2.0) / d {
        Ok(0.0)
    } else {
        Ok(d / 4.0 - (d + 2.0) / (2.0 * p))
    }
}

/// Least-squares line through `(log scale, log ratio)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_exponent(scales: &[f64], ratios: &[f64]) -> Result<LogLogFit> {
    if scales.len() != ratios.len() {
        return Err(Error::Degenerate(format!("{} scales for {} ratios", scales.len(), ratios.len())));
    }
    if scales.len() < 3 {
        return Err(Error::Degenerate(format!("a fit needs at least 3 samples, got {}", scales.len())));
    }
    if let Some(bad) = scales.iter().chain(ratios).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Degenerate(format!("non-positive or non-finite sample {bad}")));
    }
    let xs: Vec<f64> = scales.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all scales coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit { slope, intercept, residual: (rss / n).sqrt() })
}

/// One measured point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scale: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl Row {
    pub fn new(scale: f64, lhs: f64, rhs: f64) -> Result<Self> {
        if !(rhs > 0.0) {
            return Err(Error::Degenerate(format!("right-hand side vanishes at scale {scale}")));
        }
        Ok(Row { scale, lhs, rhs, ratio: lhs / rhs })
    }
}

/// A sweep with its fitted exponent and verdict `slope <= predicted + margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub experiment: String,
    pub rows: Vec<Row>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub predicted: f64,
    pub margin: f64,
    pub pass: bool,
}

impl FitResult {
    pub fn from_rows(experiment: &str, rows: Vec<Row>, predicted: f64, margin: f64) -> Result<Self> {
        let scales: Vec<f64> = rows.iter().map(|r| r.scale).collect();
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let fit = fit_exponent(&scales, &ratios)?;
        Ok(FitResult {
            experiment: experiment.to_string(),
            rows,
            slope: fit.slope,
            intercept: fit.intercept,
            residual: fit.residual,
            predicted,
            margin,
            pass: fit.slope <= predicted + margin,
        })
    }

    /// Whether the slope also stays above `predicted - margin`.
    pub fn saturates(&self) -> bool {
        self.slope >= self.predicted - self.margin
    }
}

/// Initial-data families for the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFamily {
    /// Unit-modulus random phases on `|xi| <= N`.
    RandomPhase,
    /// Constant spectrum on `[-N, N]^d`.
    Focusing,
    /// Smooth unit bump centred at `N e_1`.
    SingleBump,
    Zero,
}

impl DataFamily {
    pub fn generate(self, n: f64, seed: u64, g: &Grid) -> Result<Field> {
        match self {
            DataFamily::RandomPhase => datagen::random_phase_data(n, seed, g),
            DataFamily::Focusing => datagen::focusing_data(n, g),
            DataFamily::SingleBump => datagen::single_bump_data(n, g),
            DataFamily::Zero => Ok(Field::zeros(*g)),
        }
    }
}

pub(crate) fn is_dyadic(n: f64) -> bool {
    n >= 1.0 && n.fract() == 0.0 && (n as u64).is_power_of_two()
}

pub(crate) fn check_scales(scales: &[f64], limit: f64) -> Result<()> {
    if scales.len() < 3 {
        return Err(Error::InvalidScales(format!("a sweep needs at least 3 scales, got {}", scales.len())));
    }
    for &n in scales {
        if !is_dyadic(n) {
            return Err(Error::InvalidScales(format!("scale {n} is not dyadic")));
        }
        if n > limit {
            return Err(Error::InvalidScales(format!("scale {n} exceeds the band limit {limit:.3}")));
        }
    }
    if scales.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidScales("scales must be strictly increasing".into()));
    }
    Ok(())
}

fn default_family() -> DataFamily {
    DataFamily::RandomPhase
}
fn default_p() -> f64 {
    4.0
}
fn default_q() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}
fn default_nodes() -> usize {
    65
}

/// A single-parameter sweep of a linear space-time estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Points per axis.
    pub n: usize,
    /// Period length.
    pub length: f64,
    /// Dyadic frequency scales `N`.
    pub scales: Vec<f64>,
    #[serde(default = "default_family")]
    pub family: DataFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Time horizon `T` of `[0, T]`.
    #[serde(default = "default_one")]
    pub horizon: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Node grading exponent (`t_j = T (j/(m-1))^gamma`); 1 is uniform.
    #[serde(default = "default_one")]
    pub grading: f64,
    #[serde(default)]
    pub margin: Option<f64>,
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.n, self.length)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidTimes(format!("horizon {} must be positive", self.horizon)));
        }
        propagator::graded_nodes(self.horizon, self.nodes, self.grading)
    }

    pub fn validate(&self) -> Result<Grid> {
        let g = self.grid()?;
        check_scales(&self.scales, g.xi_max())?;
        self.times()?;
        Ok(g)
    }

    pub fn margin_or(&self, default: f64) -> f64 {
        self.margin.unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdec_table() {
        assert_eq!(sdec(6.0, 1).unwrap(), 0.0);
        assert_eq!(sdec(8.0, 1).unwrap(), 1.0 / 16.0);
        assert_eq!(sdec(4.0, 3).unwrap(), 1.0 / 8.0);
        assert_eq!(sdec(4.0, 2).unwrap(), 0.0);
        assert_eq!(sdec(2.0, 5).unwrap(), 0.0);
        assert!(sdec(1.5, 1).is_err());
        // continuity at the joint p = 2(d+2)/d
        for d in 1..=4 {
            let joint = 2.0 * (d as f64 + 2.0) / d as f64;
            assert!(sdec(joint + 1e-9, d).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn fit_examples() {
        let scales = [1.0, 2.0, 4.0, 8.0];
        let ratios: Vec<f64> = scales.iter().map(|s: &f64| s.powf(0.5)).collect();
        let f = fit_exponent(&scales, &ratios).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert_eq!(fit_exponent(&scales, &[3.0; 4]).unwrap().slope, 0.0);
        assert!(fit_exponent(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_exponent(&[1.0, 2.0, 4.0], &[1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn fit_verdicts() {
        let rows = [1.0, 2.0, 4.0].iter().map(|&s| Row::new(s, s * s, 1.0).unwrap()).collect();
        let r = FitResult::from_rows("x", rows, 2.0, 0.15).unwrap();
        assert!(r.pass && r.saturates());
        assert!(Row::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn scale_checks() {
        assert!(check_scales(&[1.0, 2.0, 4.0], 4.0).is_ok());
        assert!(check_scales(&[1.0, 2.0], 4.0).is_err());
        assert!(check_scales(&[1.0, 3.0, 4.0], 4.0).is_err());
        assert!(check_scales(&[1.0, 2.0, 8.0], 4.0).is_err());
        assert!(check_scales(&[2.0, 1.0, 4.0], 4.0).is_err());
    }

    #[test]
    fn config_defaults_from_json() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"d":1,"n":64,"length":25.2,"scales":[1,2,4]}"#).unwrap();
        assert_eq!(c.family, DataFamily::RandomPhase);
        assert_eq!(c.nodes, 65);
        assert_eq!(c.margin_or(DEFAULT_MARGIN), DEFAULT_MARGIN);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"d":1,"n":64,"length":25.2,"scales":[1],"bogus":1}"#).is_err());
    }
}
