use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sdec, FitResult, Row, DEFAULT_DECOUPLING_MARGIN};
use crate::error::{Error, Result};
use crate::propagator::{self, ExtensionMesh, Profile};

/// Profiles on the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProfileKind {
    Constant,
    /// Constant on the single cap touching `xi = 0` from above, zero elsewhere.
    SingleCap,
    RandomPhase { seed: u64 },
}

fn default_h() -> f64 {
    0.5
}
fn default_period() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecouplingConfig {
    pub d: usize,
    pub p: f64,
    pub radii: Vec<f64>,
    pub profile: ProfileKind,
    /// Space-time sample spacing bound.
    #[serde(default = "default_h")]
    pub h_max: f64,
    /// Spatial period of the profile mesh in units of `R`.
    #[serde(default = "default_period")]
    pub period_factor: f64,
    #[serde(default)]
    pub margin: Option<f64>,
}

/// Caps per axis, `2 sqrt(R)`, which must be an integer.
fn caps_per_axis(radius: f64) -> Result<usize> {
    let c = 2.0 * radius.sqrt();
    if !(c >= 1.0) || (c - c.round()).abs() > 1e-9 {
        return Err(Error::InvalidScales(format!("2 sqrt(R) = {c} is not an integer for R = {radius}")));
    }
    Ok(c.round() as usize)
}

/// Cells per cap so that the spatial period `2 pi / delta` reaches
/// `period_factor * R`.
fn cells_per_cap(radius: f64, period_factor: f64) -> Result<usize> {
    if !(period_factor >= 2.0) {
        return Err(Error::InvalidGrid(format!("period factor {period_factor} < 2")));
    }
    let side = 1.0 / radius.sqrt();
    Ok((side * period_factor * radius / (2.0 * PI)).ceil().max(1.0) as usize)
}

/// Number of caps of side `R^{-1/2}` meeting the open unit ball.
pub fn cap_count(d: usize, radius: f64) -> Result<usize> {
    let per_axis = caps_per_axis(radius)?;
    let side = 2.0 / per_axis as f64;
    let mut count = 0;
    for mut lin in 0..per_axis.pow(d as u32) {
        // nearest point of the cap to the origin
        let mut r2 = 0.0;
        for _ in 0..d {
            let c = (lin % per_axis) as f64;
            lin /= per_axis;
            let (lo, hi) = (-1.0 + c * side, -1.0 + (c + 1.0) * side);
            let near = if lo > 0.0 { lo } else if hi < 0.0 { hi } else { 0.0 };
            r2 += near * near;
        }
        if r2 < 1.0 {
            count += 1;
        }
    }
    Ok(count)
}

fn build_profile(kind: ProfileKind, d: usize, cells: usize, cap_cells: usize) -> Result<Profile> {
    let one = Complex64::new(1.0, 0.0);
    match kind {
        ProfileKind::Constant => Profile::from_fn(d, cells, |_| one),
        ProfileKind::SingleCap => {
            let delta = 2.0 / cells as f64;
            let side = cap_cells as f64 * delta;
            Profile::from_fn(d, cells, |xi| {
                if xi.iter().all(|&v| v > 0.0 && v < side) {
                    one
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        }
        ProfileKind::RandomPhase { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Profile::from_fn(d, cells, |_| Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))
        }
    }
}

/// `D(R) = ||Ef||_{L^p(B_R)} / (sum_caps ||E f_cap||^2_{L^p(B_R)})^{1/2}`.
pub fn decoupling_row(kind: ProfileKind, d: usize, radius: f64, p: f64, h_max: f64, period_factor: f64) -> Result<Row> {
    if cap_count(d, radius)? < 4 {
        return Err(Error::InvalidGrid(format!("R = {radius} leaves fewer than 4 caps")));
    }
    let per_axis = caps_per_axis(radius)?;
    let q = cells_per_cap(radius, period_factor)?;
    let profile = build_profile(kind, d, per_axis * q, q)?;
    if profile.samples.is_empty() {
        return Err(Error::Degenerate("profile vanishes".into()));
    }
    let mesh = ExtensionMesh::for_profile(&profile, radius, h_max)?;
    let mut caps: BTreeMap<Vec<usize>, Vec<(Vec<usize>, Complex64)>> = BTreeMap::new();
    for (idx, v) in &profile.samples {
        caps.entry(idx.iter().map(|i| i / q).collect()).or_default().push((idx.clone(), *v));
    }
    let caps: Vec<Profile> = caps
        .into_values()
        .map(|samples| Profile { d, delta: profile.delta, cells: profile.cells, samples })
        .collect();
    let lhs = propagator::extension_lp_norm(&profile, radius, &mesh, p)?;
    let squares = caps
        .par_iter()
        .map(|c| Ok(propagator::extension_lp_norm(c, radius, &mesh, p)?.powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    Row::new(radius, lhs, squares.iter().sum::<f64>().sqrt())
}

/// Fit of `log D(R)` against `log R`; predicted slope `s_dec(p, d)`.
pub fn decoupling_ratio(cfg: &DecouplingConfig) -> Result<FitResult> {
    if !(1..=2).contains(&cfg.d) {
        return Err(Error::Unsupported(format!("decoupling is implemented for d in {{1, 2}}, got {}", cfg.d)));
    }
    let predicted = sdec(cfg.p, cfg.d)?;
    if cfg.radii.len() < 3 {
        return Err(Error::InvalidScales(format!("a sweep needs at least 3 radii, got {}", cfg.radii.len())));
    }
    let rows = cfg
        .radii
        .iter()
        .map(|&r| decoupling_row(cfg.profile, cfg.d, r, cfg.p, cfg.h_max, cfg.period_factor))
        .collect::<Result<Vec<_>>>()?;
    FitResult::from_rows("decoupling", rows, predicted, cfg.margin.unwrap_or(DEFAULT_DECOUPLING_MARGIN))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_counts() {
        assert_eq!(cap_count(1, 16.0).unwrap(), 8);
        assert_eq!(cap_count(1, 4.0).unwrap(), 4);
        assert_eq!(cap_count(1, 1.0).unwrap(), 2);
        // every cap of the 4 x 4 square meets the disc, not so for 8 x 8
        assert_eq!(cap_count(2, 4.0).unwrap(), 16);
        assert_eq!(cap_count(2, 16.0).unwrap(), 60);
        assert!(cap_count(1, 10.0).is_err());
    }

    #[test]
    fn too_few_caps_is_rejected() {
        assert!(decoupling_row(ProfileKind::Constant, 1, 1.0, 6.0, 0.5, 8.0).is_err());
    }

    #[test]
    fn single_cap_decouples_trivially() {
        for r in [16.0, 64.0] {
            let row = decoupling_row(ProfileKind::SingleCap, 1, r, 6.0, 0.5, 8.0).unwrap();
            assert!((row.ratio - 1.0).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn p2_ratio_is_at_most_one_and_near_orthogonal() {
        // in L^2 the caps are almost orthogonal on a large ball
        let row = decoupling_row(ProfileKind::RandomPhase { seed: 4 }, 1, 16.0, 2.0, 0.5, 8.0).unwrap();
        assert!(row.ratio > 0.8 && row.ratio < 1.2, "{row:?}");
    }

    #[test]
    fn constant_profile_cells_align_with_caps() {
        let per_axis = caps_per_axis(64.0).unwrap();
        let q = cells_per_cap(64.0, 8.0).unwrap();
        let p = build_profile(ProfileKind::Constant, 1, per_axis * q, q).unwrap();
        assert_eq!(p.samples.len(), per_axis * q);
        assert!(2.0 * PI / p.delta >= 8.0 * 64.0);
    }

    #[test]
    fn rejects_other_dimensions() {
        let cfg = DecouplingConfig {
            d: 3,
            p: 6.0,
            radii: vec![16.0, 64.0, 256.0],
            profile: ProfileKind::Constant,
            h_max: 0.5,
            period_factor: 8.0,
            margin: None,
        };
        assert!(matches!(decoupling_ratio(&cfg), Err(Error::Unsupported(_))));
    }
}
