//! JSON scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{BoundaryKind, CoefficientFn, CoefficientSpec};
use crate::error::{Error, Result};
use crate::evolution::{ProblemSpec, Scheme};

/// Problem fields as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub bc: BoundaryKind,
    pub omega: [f64; 2],
    #[serde(rename = "N")]
    pub cells: usize,
    #[serde(rename = "M")]
    pub steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub pin_x0: Option<bool>,
}

impl ProblemConfig {
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let spec = ProblemSpec {
            a: CoefficientFn::try_from(&self.a)?,
            b: CoefficientFn::try_from(&self.b)?,
            lambda: self.lambda,
            horizon: self.horizon,
            bc: self.bc,
            omega: (self.omega[0], self.omega[1]),
            cells: self.cells,
            steps: self.steps,
            scheme: self.scheme,
            pin_x0: self.pin_x0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Classify,
    Hardy,
    Wellposed,
    Evolve,
    Carleman,
    Observability,
    Hum,
    Sweep,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Classify => "classify",
            Pipeline::Hardy => "hardy",
            Pipeline::Wellposed => "wellposed",
            Pipeline::Evolve => "evolve",
            Pipeline::Carleman => "carleman",
            Pipeline::Observability => "observability",
            Pipeline::Hum => "hum",
            Pipeline::Sweep => "sweep",
        }
    }

    pub fn parse(name: &str) -> Result<Pipeline> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::param("pipeline", format!("unknown pipeline `{name}`")))
    }
}

/// Spatial weight used by the Carleman pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightChoice {
    /// Degenerate weight when the coefficients vanish, integral weight otherwise.
    #[default]
    Auto,
    Degenerate,
    Integral,
    Exponential,
}

/// Initial datum of the evolve and hum pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialDatum {
    /// `sin(pi x)`.
    #[default]
    Sine,
    /// Seeded random smooth profile.
    Smooth,
}

fn default_s_grid() -> Vec<f64> {
    crate::carleman::geometric_grid(5.0, 100.0, 10)
}

fn one() -> f64 {
    1.0
}

fn default_safety() -> f64 {
    1.01
}

fn default_tol() -> f64 {
    1e-3
}

fn default_iters() -> usize {
    200
}

fn default_cases() -> usize {
    20
}

fn default_sweep_pipeline() -> Pipeline {
    Pipeline::Wellposed
}

fn default_omega_prime() -> Option<[f64; 2]> {
    None
}

/// Pipeline-specific parameters; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    #[serde(default = "one")]
    pub d1: f64,
    #[serde(default = "one", rename = "R")]
    pub rate: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub weight: WeightChoice,
    /// Rate `r` of the nondegenerate weights.
    #[serde(default = "one")]
    pub r: f64,
    /// Constant value of `g` for the integral weight.
    #[serde(default = "one")]
    pub g: f64,
    #[serde(default = "one")]
    pub h0: f64,
    #[serde(default)]
    pub frak_c: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Size of random test families.
    #[serde(default = "default_cases")]
    pub cases: usize,
    #[serde(default)]
    pub u0: InitialDatum,
    /// Caccioppoli inner window; skipped when absent.
    #[serde(default = "default_omega_prime")]
    pub omega_prime: Option<[f64; 2]>,
    /// Pipeline run for every sweep row.
    #[serde(default = "default_sweep_pipeline")]
    pub sweep_pipeline: Pipeline,
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub pipeline: Option<Pipeline>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// A parse or validation failure, with the file for context.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Reads a scenario; serde reports the line, column and field of any error.
pub fn load_config(path: &Path) -> std::result::Result<ScenarioConfig, ConfigError> {
    let err = |message: String| ConfigError {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    cfg.validate().map_err(|e| err(e.to_string()))?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Checks the numeric fields that do not depend on the pipeline.
    pub fn validate(&self) -> Result<()> {
        self.problem.to_spec()?;
        let p = &self.params;
        if p.s_grid.is_empty() || p.s_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::param("s_grid", "values must be positive"));
        }
        if p.s_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("s_grid", "must be increasing"));
        }
        for (name, v) in [("d1", p.d1), ("r", p.r), ("h0", p.h0), ("tol", p.tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if !(p.rate >= 0.0) {
            return Err(Error::param("R", "must be nonnegative"));
        }
        if !(p.safety > 1.0) {
            return Err(Error::param("safety", "must exceed 1"));
        }
        if p.iters == 0 || p.cases == 0 {
            return Err(Error::param(
                "iters",
                "iteration and family counts must be positive",
            ));
        }
        if p.sweep_pipeline == Pipeline::Sweep {
            return Err(Error::param("sweep_pipeline", "cannot be `sweep`"));
        }
        Ok(())
    }

    /// Stable hash of the problem fields, for report identification.
    pub fn problem_hash(&self) -> String {
        let text = serde_json::to_string(&self.problem).expect("problem serializes");
        // FNV-1a, fixed across platforms and toolchains.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Numeric fields a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Lambda,
    K1,
    K2,
    OmegaLo,
    OmegaHi,
    N,
    S,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<SweepAxis> {
        Ok(match name {
            "lambda" => SweepAxis::Lambda,
            "K1" => SweepAxis::K1,
            "K2" => SweepAxis::K2,
            "omega_lo" => SweepAxis::OmegaLo,
            "omega_hi" => SweepAxis::OmegaHi,
            "N" => SweepAxis::N,
            "s" => SweepAxis::S,
            other => {
                return Err(Error::param(
                    "sweep",
                    format!(
                        "`{other}` is not sweepable (lambda, K1, K2, omega_lo, omega_hi, N, s)"
                    ),
                ))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::K1 => "K1",
            SweepAxis::K2 => "K2",
            SweepAxis::OmegaLo => "omega_lo",
            SweepAxis::OmegaHi => "omega_hi",
            SweepAxis::N => "N",
            SweepAxis::S => "s",
        }
    }

    /// A copy of `cfg` with this axis set to `value`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut out = cfg.clone();
        let set_k = |c: &mut CoefficientSpec, which: &'static str| match c {
            CoefficientSpec::Power { k, .. } => {
                *k = value;
                Ok(())
            }
            _ => Err(Error::param(
                "sweep",
                format!("{which} needs a power coefficient"),
            )),
        };
        match self {
            SweepAxis::Lambda => out.problem.lambda = value,
            SweepAxis::K1 => set_k(&mut out.problem.a, "K1")?,
            SweepAxis::K2 => set_k(&mut out.problem.b, "K2")?,
            SweepAxis::OmegaLo => out.problem.omega[0] = value,
            SweepAxis::OmegaHi => out.problem.omega[1] = value,
            SweepAxis::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::param(
                        "N",
                        format!("{value} is not a positive integer"),
                    ));
                }
                out.problem.cells = value as usize;
            }
            SweepAxis::S => out.params.s_grid = vec![value],
        }
        Ok(out)
    }
}

/// Parses `axis=v1,v2,...`; an empty list is allowed.
pub fn parse_sweep(arg: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let (axis, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::param("sweep", "expected axis=v1,v2,..."))?;
    let axis = SweepAxis::parse(axis.trim())?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::param("sweep", format!("`{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((axis, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "problem": {
            "a": {"type": "power", "K": 0.3, "x0": 0.5},
            "b": {"type": "power", "K": 1.2, "x0": 0.5},
            "lambda": -1.0, "T": 1.0, "bc": "dirichlet",
            "omega": [0.3, 0.7], "N": 64, "M": 64
        },
        "pipeline": "classify",
        "seed": 3
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg: ScenarioConfig = serde_json::from_str(BASE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.pipeline, Some(Pipeline::Classify));
        assert_eq!(cfg.params.s_grid.len(), 10);
        assert_eq!(cfg.params.sweep_pipeline, Pipeline::Wellposed);
        assert_eq!(cfg.problem_hash(), cfg.clone().problem_hash());
    }

    #[test]
    fn missing_horizon_names_the_field() {
        let text = BASE.replace(r#""T": 1.0,"#, "");
        let err = serde_json::from_str::<ScenarioConfig>(&text).unwrap_err();
        assert!(err.to_string().contains("`T`"), "{err}");
    }

    #[test]
    fn sweep_arguments() {
        let (axis, values) = parse_sweep("lambda=-1,0.5").unwrap();
        assert_eq!(axis, SweepAxis::Lambda);
        assert_eq!(values, vec![-1.0, 0.5]);
        assert!(parse_sweep("lambda=").unwrap().1.is_empty());
        assert!(parse_sweep("T=1").is_err());
        let cfg: ScenarioConfig = serde_json::from_str(BASE).unwrap();
        let moved = SweepAxis::K2.apply(&cfg, 0.4).unwrap();
        assert!(matches!(moved.problem.b, CoefficientSpec::Power { k, .. } if k == 0.4));
    }
}
