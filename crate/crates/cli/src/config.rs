//! Experiment configuration files.
//!
//! A config is a TOML document with a top-level `experiment` key naming the
//! experiment and one table of the same name holding its parameters:
//!
//! ```toml
//! experiment = "smoothing"
//!
//! [smoothing]
//! d = 1
//! n = 16384
//! length = 256.0
//! scales = [4, 8, 16, 32]
//! family = "focusing"
//! p = 8
//! ```

use std::path::{Path, PathBuf};

use modlab::estimates::{BilinearConfig, DataFamily, DecouplingConfig, ExperimentConfig, V2Config};
use modlab::propagator::Sign;
use modlab::solver::{IterationNorm, LargeDataOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const EXPERIMENTS: [&str; 10] =
    ["norms", "smoothing", "strichartz", "bilinear", "v2bilinear", "decoupling", "variation", "solve", "largedata", "datagen"];

/// Initial data for the solver and generator experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataSpec {
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    RandomPhase {
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    Focusing {
        scale: f64,
    },
    SingleBump {
        scale: f64,
    },
    /// Smoothed indicator of a ball, normalized in `L^4`.
    MollifiedIndicator {
        radius: f64,
    },
    /// A field written by the `datagen` experiment; relative paths are
    /// resolved against the config file's directory.
    File {
        path: PathBuf,
    },
}

fn default_margin() -> f64 {
    0.15
}
fn default_p4() -> f64 {
    4.0
}
fn default_q() -> f64 {
    2.0
}
fn default_eps() -> f64 {
    0.1
}

/// Modulation norm against `L^2` over generated data at each scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub scales: Vec<f64>,
    pub family: DataFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_p4")]
    pub p: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    /// When set, the fitted slope must lie within `margin` of it.
    #[serde(default)]
    pub expected_slope: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_paths() -> usize {
    100
}
fn default_max_nodes() -> usize {
    10
}
fn default_exponents() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

/// Dynamic-programming p-variation against exhaustive search on random
/// `L^2`-valued paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_exponents")]
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Picard,
    SplitStep,
    CrossValidate,
}

fn default_method() -> Method {
    Method::CrossValidate
}
fn default_coupling() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-5
}
fn default_mass_tolerance() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub data: DataSpec,
    pub sign: Sign,
    pub horizon: f64,
    pub nodes: usize,
    /// Defaults to the quintic power for `d = 1`, cubic for `d = 2` and the
    /// energy-critical power above.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Split-step size; defaults to the node spacing.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Picard versus split-step agreement.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Allowed relative mass drift of the split step.
    #[serde(default = "default_mass_tolerance")]
    pub mass_tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub norm: Option<IterationNorm>,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_ld_nodes() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LargeDataConfig {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub data: DataSpec,
    pub sign: Sign,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_ld_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub options: LargeDataOptions,
}

fn default_file() -> String {
    "field.bin".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenConfig {
    pub d: usize,
    pub n: usize,
    pub length: f64,
    pub data: DataSpec,
    /// Smoothness excess in the recorded `M^{1+eps}_{4,2}` norm.
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_file")]
    pub file: String,
}

#[derive(Debug, Clone)]
pub enum Experiment {
    Norms(NormsConfig),
    Smoothing(ExperimentConfig),
    Strichartz(ExperimentConfig),
    Bilinear(BilinearConfig),
    V2Bilinear(V2Config),
    Decoupling(DecouplingConfig),
    Variation(VariationConfig),
    Solve(SolveConfig),
    LargeData(LargeDataConfig),
    Datagen(DatagenConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Norms(_) => "norms",
            Experiment::Smoothing(_) => "smoothing",
            Experiment::Strichartz(_) => "strichartz",
            Experiment::Bilinear(_) => "bilinear",
            Experiment::V2Bilinear(_) => "v2bilinear",
            Experiment::Decoupling(_) => "decoupling",
            Experiment::Variation(_) => "variation",
            Experiment::Solve(_) => "solve",
            Experiment::LargeData(_) => "largedata",
            Experiment::Datagen(_) => "datagen",
        }
    }

    /// The resolved parameters, defaults included.
    pub fn resolved(&self) -> serde_json::Value {
        let v = match self {
            Experiment::Norms(c) => serde_json::to_value(c),
            Experiment::Smoothing(c) | Experiment::Strichartz(c) => serde_json::to_value(c),
            Experiment::Bilinear(c) => serde_json::to_value(c),
            Experiment::V2Bilinear(c) => serde_json::to_value(c),
            Experiment::Decoupling(c) => serde_json::to_value(c),
            Experiment::Variation(c) => serde_json::to_value(c),
            Experiment::Solve(c) => serde_json::to_value(c),
            Experiment::LargeData(c) => serde_json::to_value(c),
            Experiment::Datagen(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize")
    }
}

/// A parsed config and the directory relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub experiment: Experiment,
    pub base: PathBuf,
}

/// Overwrites the seed of experiments that draw random data.
fn apply_seed(name: &str, table: &mut toml::Table, seed: u64) {
    let seed = toml::Value::Integer(seed as i64);
    match name {
        "norms" | "smoothing" | "strichartz" | "bilinear" | "v2bilinear" | "variation" => {
            table.insert("seed".into(), seed);
        }
        "decoupling" => {
            if let Some(toml::Value::Table(p)) = table.get_mut("profile") {
                if p.get("kind").and_then(|k| k.as_str()) == Some("random-phase") {
                    p.insert("seed".into(), seed);
                }
            }
        }
        _ => {
            if let Some(toml::Value::Table(d)) = table.get_mut("data") {
                if d.get("kind").and_then(|k| k.as_str()) == Some("random-phase") {
                    d.insert("seed".into(), seed);
                }
            }
        }
    }
}

fn section<T: serde::de::DeserializeOwned>(name: &str, table: toml::Table) -> Result<T, CliError> {
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Parse(format!("[{name}]: {e}")))
}

pub fn parse(text: &str, seed: Option<u64>) -> Result<Experiment, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    let name = match doc.remove("experiment") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(CliError::Parse("`experiment` must be a string".into())),
        None => return Err(CliError::Parse("missing `experiment` key".into())),
    };
    if !EXPERIMENTS.contains(&name.as_str()) {
        return Err(CliError::UnknownExperiment(name));
    }
    let mut table = match doc.remove(&name) {
        Some(toml::Value::Table(t)) => t,
        _ => return Err(CliError::Parse(format!("missing [{name}] table"))),
    };
    if let Some(extra) = doc.keys().next() {
        return Err(CliError::Parse(format!("unexpected top-level key `{extra}`")));
    }
    if let Some(seed) = seed {
        apply_seed(&name, &mut table, seed);
    }
    Ok(match name.as_str() {
        "norms" => Experiment::Norms(section(&name, table)?),
        "smoothing" => Experiment::Smoothing(section(&name, table)?),
        "strichartz" => Experiment::Strichartz(section(&name, table)?),
        "bilinear" => Experiment::Bilinear(section(&name, table)?),
        "v2bilinear" => Experiment::V2Bilinear(section(&name, table)?),
        "decoupling" => Experiment::Decoupling(section(&name, table)?),
        "variation" => Experiment::Variation(section(&name, table)?),
        "solve" => Experiment::Solve(section(&name, table)?),
        "largedata" => Experiment::LargeData(section(&name, table)?),
        "datagen" => Experiment::Datagen(section(&name, table)?),
        _ => unreachable!("checked against EXPERIMENTS"),
    })
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let experiment = parse(&text, seed)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { experiment, base })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_config_with_defaults() {
        let e = parse(
            "experiment = \"smoothing\"\n[smoothing]\nd = 1\nn = 256\nlength = 50.0\nscales = [1, 2, 4]\np = 8\n",
            None,
        )
        .unwrap();
        let Experiment::Smoothing(c) = e else { panic!("wrong experiment") };
        assert_eq!(c.p, 8.0);
        assert_eq!(c.family, DataFamily::RandomPhase);
        assert_eq!(c.nodes, 65);
    }

    #[test]
    fn seed_override_reaches_nested_data() {
        let text = "experiment = \"datagen\"\n[datagen]\nd = 1\nn = 64\nlength = 25.0\ndata = { kind = \"random-phase\", scale = 2.0 }\n";
        let Experiment::Datagen(c) = parse(text, Some(9)).unwrap() else { panic!() };
        assert_eq!(c.data, DataSpec::RandomPhase { scale: 2.0, seed: 9 });
        let text = "experiment = \"decoupling\"\n[decoupling]\nd = 1\np = 6\nradii = [16, 64, 256]\nprofile = { kind = \"constant\" }\n";
        let Experiment::Decoupling(c) = parse(text, Some(9)).unwrap() else { panic!() };
        assert_eq!(c.profile, modlab::estimates::ProfileKind::Constant);
    }

    #[test]
    fn rejections() {
        assert!(matches!(parse("experiment = \"nope\"\n[nope]\n", None), Err(CliError::UnknownExperiment(_))));
        assert!(matches!(parse("experiment = \"smoothing\"\n", None), Err(CliError::Parse(_))));
        assert!(matches!(parse("experiment = smoothing", None), Err(CliError::Parse(_))));
        assert!(matches!(parse("[smoothing]\nd = 1\n", None), Err(CliError::Parse(_))));
        let stray = "experiment = \"variation\"\nfoo = 1\n[variation]\n";
        assert!(matches!(parse(stray, None), Err(CliError::Parse(_))));
        let unknown = "experiment = \"variation\"\n[variation]\nbogus = 1\n";
        assert!(matches!(parse(unknown, None), Err(CliError::Parse(_))));
        assert!(parse("experiment = \"variation\"\n[variation]\n", None).is_ok());
    }
}
