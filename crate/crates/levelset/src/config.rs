//! The run configuration file.
//!
//! One TOML file describes the problem, the oracle, the method parameters and
//! the error estimation. Command-line flags only override paths, the seed and
//! verbosity. See `docs/config.md` for the key reference.

use std::fmt;
use std::path::Path;

use levelset_core::bench::level_for_tolerance;
use levelset_core::metrics::PointFamily;
use levelset_core::{Domain, Exponent, RefinementMode, RunConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A finite rate or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate(pub Exponent);

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Exponent::Finite(v) => s.serialize_f64(v),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Rate(Exponent::Finite(v))),
            Raw::Int(v) => Ok(Rate(Exponent::Finite(v as f64))),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Inf") => Ok(Rate(Exponent::Infinite)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    /// `1/5 - (1 + cos 12r)/(r²/2 + 2)`, 2D.
    DropWave,
    /// Scaled Styblinski–Tang, any dimension.
    StyblinskiTang {
        #[serde(default = "three")]
        dimension: usize,
    },
    /// `|x - center| - radius`.
    Sphere { center: Vec<f64>, radius: f64 },
    /// `coefficients · x - offset`.
    Linear { coefficients: Vec<f64>, offset: f64 },
}

fn three() -> usize {
    3
}

impl Problem {
    pub fn dimension(&self) -> usize {
        match self {
            Problem::DropWave => 2,
            Problem::StyblinskiTang { dimension } => *dimension,
            Problem::Sphere { center, .. } => center.len(),
            Problem::Linear { coefficients, .. } => coefficients.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::DropWave => "drop-wave",
            Problem::StyblinskiTang { .. } => "styblinski-tang",
            Problem::Sphere { .. } => "sphere",
            Problem::Linear { .. } => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Width of a level-0 cell, in domain units.
    pub base_size: f64,
    /// Divides cell widths to give the schedule size `h`.
    #[serde(default = "one")]
    pub length_unit: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum OracleSpec {
    #[default]
    Deterministic,
    /// `f(x) + N(0, variance_factor · h^variance_power)`.
    Gaussian { variance_factor: f64, variance_power: f64 },
    /// Mean of `M_ℓ` draws of `f(x) + sample_sd · Y`, `Y ~ N(0, 1)`.
    MonteCarlo { sample_sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Adaptive,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    #[serde(default = "two")]
    pub alpha: f64,
    #[serde(default = "infinite")]
    pub beta: Rate,
    #[serde(default = "infinite")]
    pub p: Rate,
    /// Refinement strictness `R`; defaults to `(1 + α_p)/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strictness: Option<f64>,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub m0: f64,
    /// Optional schedule size of the first adaptive level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_level_size: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u32>,
    /// Target error; mapped to the final level when `max_level` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn two() -> f64 {
    2.0
}

fn infinite() -> Rate {
    Rate(Exponent::Infinite)
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: infinite(),
            p: infinite(),
            strictness: None,
            c: 1.0,
            m0: 1.0,
            base_level_size: None,
            mode: Mode::Adaptive,
            max_level: None,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PointFamilyChoice {
    #[default]
    Auto,
    Sobol,
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_points")]
    pub points_per_cell: usize,
    #[serde(default)]
    pub point_family: PointFamilyChoice,
    /// Measure the sign-mismatch error of `run` against the exact function.
    #[serde(default = "yes")]
    pub report_error: bool,
}

fn default_runs() -> usize {
    10
}

fn default_points() -> usize {
    512
}

fn yes() -> bool {
    true
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self { n_runs: 10, points_per_cell: 512, point_family: PointFamilyChoice::Auto, report_error: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryFormat {
    /// Segments CSV in 2D, OBJ in 3D, nothing otherwise.
    #[default]
    Auto,
    SegmentsCsv,
    Obj,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub geometry: GeometryFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: Problem,
    pub domain: DomainSection,
    pub grid: GridSection,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl CliConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn dimension(&self) -> usize {
        self.problem.dimension()
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Final level of a single run: `max_level`, or the level for `tolerance`.
    pub fn max_level<const D: usize>(&self) -> Result<u32> {
        match (self.method.max_level, self.method.tolerance) {
            (Some(l), None) => Ok(l),
            (None, Some(eps)) => Ok(level_for_tolerance(eps, &self.run_config::<D>(0)?)?),
            (Some(_), Some(_)) => Err(Error::config("method", "set either max_level or tolerance, not both")),
            (None, None) => Err(Error::config("method", "one of max_level or tolerance is required")),
        }
    }

    /// The core run parameters at final level `max_level`, validated.
    pub fn run_config<const D: usize>(&self, max_level: u32) -> Result<RunConfig<D>> {
        if self.dimension() != D {
            return Err(Error::config("problem", format!("dimension {} does not match {D}", self.dimension())));
        }
        let axis = |name: &str, v: &[f64]| -> Result<[f64; D]> {
            v.try_into()
                .map_err(|_| Error::config(format!("domain.{name}"), format!("expected {D} entries, got {}", v.len())))
        };
        let domain = Domain::new(axis("lower", &self.domain.lower)?, axis("upper", &self.domain.upper)?)
            .map_err(|e| Error::config("domain", e.to_string()))?;
        let m = &self.method;
        let cfg = RunConfig {
            domain,
            base_size: self.grid.base_size,
            length_unit: self.grid.length_unit,
            alpha: m.alpha,
            beta: m.beta.0,
            p: m.p.0,
            r: m.strictness,
            c: m.c,
            max_level,
            m0: m.m0,
            seed: self.seed,
            base_size_override: m.base_level_size,
            mode: match m.mode {
                Mode::Adaptive => RefinementMode::Adaptive,
                Mode::Uniform => RefinementMode::Uniform,
            },
        };
        cfg.validate().map_err(|e| match e {
            levelset_core::ConfigError::Grid(g) => Error::config("grid.base_size", g.to_string()),
            other => other.into(),
        })?;
        Ok(cfg)
    }

    pub fn point_family(&self) -> PointFamily {
        match self.estimate.point_family {
            PointFamilyChoice::Auto => PointFamily::preferred(self.dimension(), self.estimate.points_per_cell),
            PointFamilyChoice::Sobol => PointFamily::ScrambledSobol,
            PointFamilyChoice::Stratified => PointFamily::Stratified,
        }
    }

    /// Checks everything that does not depend on the dimension being
    /// compiled in; `run_config` checks the rest.
    pub fn validate_common(&self) -> Result<()> {
        let d = self.dimension();
        if !(1..=4).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if let Problem::Sphere { radius, .. } = &self.problem {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::config("problem.radius", "must be positive"));
            }
        }
        match &self.oracle {
            OracleSpec::Gaussian { variance_factor, variance_power } => {
                if !(variance_factor.is_finite() && *variance_factor >= 0.0) {
                    return Err(Error::config("oracle.variance_factor", "must be nonnegative"));
                }
                if !variance_power.is_finite() {
                    return Err(Error::config("oracle.variance_power", "must be finite"));
                }
            }
            OracleSpec::MonteCarlo { sample_sd } if !(sample_sd.is_finite() && *sample_sd >= 0.0) => {
                return Err(Error::config("oracle.sample_sd", "must be nonnegative"));
            }
            _ => {}
        }
        if self.estimate.n_runs == 0 {
            return Err(Error::config("estimate.n_runs", "must be at least 1"));
        }
        if self.estimate.points_per_cell == 0 {
            return Err(Error::config("estimate.points_per_cell", "must be at least 1"));
        }
        if self.point_family() == PointFamily::ScrambledSobol && self.estimate.points_per_cell > 1 << 16 {
            return Err(Error::config("estimate.points_per_cell", "scrambled Sobol points are limited to 65536"));
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<()> {
        let levels = &self.sweep.levels;
        if levels.is_empty() {
            return Err(Error::config("sweep.levels", "must not be empty"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sweep.levels", "must be strictly ascending"));
        }
        Ok(())
    }
}
