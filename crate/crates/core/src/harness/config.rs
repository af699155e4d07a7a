//! Scenario documents.
//!
//! A scenario is one JSON object with a block per concern. Unknown keys are
//! rejected and every error carries a `path:line:column` anchor.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ade_solver::{BodyForce, InitialData, Probe, SolverConfig, SteppingOperator};
use crate::conv_oracle::Acceleration;
use crate::harness::mms::Level;
use crate::material::MaterialParams;
use crate::permeability::{FitOptions, Term};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.path.display(),
            self.line,
            self.column,
            self.message
        )
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fit,
    Check,
    RunAde,
    RunConv,
    Compare,
    Mms,
    Transfer,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::Check => "check",
            Mode::RunAde => "run-ade",
            Mode::RunConv => "run-conv",
            Mode::Compare => "compare",
            Mode::Mms => "mms",
            Mode::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// When present, must agree with the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permeability: Option<PermeabilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<BodyForce>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Probe>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSpec>,
}

/// Exactly one source for the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PermeabilitySpec {
    /// Constants `{c, d}`; `η_k` and `F` come from the material.
    Terms(Vec<Term>),
    /// Path to a series JSON document.
    Series(PathBuf),
    Fit(FitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    /// CSV with header `omega,re,im`.
    pub samples: PathBuf,
    pub n: usize,
    #[serde(default)]
    pub static_limit: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_fit_tolerance")]
    pub tolerance: f64,
}

fn default_max_iterations() -> usize {
    FitOptions::default().max_iterations
}
fn default_fit_tolerance() -> f64 {
    FitOptions::default().tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    /// Write the difference operators in triplet form.
    #[serde(default)]
    pub export_operators: bool,
}

/// Initial `u₀`, `v₀`, `p₀`; `Ψ(0) = 0` and `σ(0) = C ε(u₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// Multiples of the lowest Dirichlet mode `Π sin(π x_a / L_a)`.
    Mode {
        #[serde(default)]
        u: f64,
        #[serde(default)]
        v: f64,
        #[serde(default)]
        p: f64,
    },
    /// Independent uniform values in `[-amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Mode {
            u: 0.0,
            v: 0.0,
            p: 0.0,
        }
    }
}

impl InitialSpec {
    pub fn build(&self, stepper: &SteppingOperator, extents: &[f64]) -> InitialData {
        let ops = stepper.ops();
        match *self {
            InitialSpec::Mode { u, v, p } => {
                let mode = |x: [f64; 2]| -> f64 {
                    extents
                        .iter()
                        .zip(x)
                        .map(|(l, xi)| (std::f64::consts::PI * xi / l).sin())
                        .product()
                };
                stepper.initial_data(
                    ops.velocity.sample(|x, _| u * mode(x)),
                    ops.velocity.sample(|x, _| v * mode(x)),
                    ops.pressure.sample(|x, _| p * mode(x)),
                )
            }
            InitialSpec::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n)
                        .map(|_| rng.random_range(-amplitude..=amplitude))
                        .collect()
                };
                let u0 = draw(ops.velocity.len());
                let v0 = draw(ops.velocity.len());
                let p0 = draw(ops.pressure.len());
                stepper.initial_data(u0, v0, p0)
            }
        }
    }
}

fn default_nu0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "default_nu0")]
    pub nu0: f64,
    /// Upper bound on relaxation times; terms at or above it are flagged.
    #[serde(default)]
    pub relaxation_bound: Option<f64>,
    /// Values of `m` at which the convolution-form margin is reported.
    #[serde(default)]
    pub convolution_margin_at: Vec<f64>,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            nu0: default_nu0(),
            relaxation_bound: None,
            convolution_margin_at: Vec::new(),
        }
    }
}

fn default_blowup() -> f64 {
    1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    #[serde(default)]
    pub acceleration: Acceleration,
    /// State norm that aborts the run.
    #[serde(default = "default_blowup")]
    pub blowup: f64,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            acceleration: Acceleration::default(),
            blowup: default_blowup(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// Step sizes, coarse to fine; `solver.dt` is ignored.
    pub dts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSpec {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub theta: f64,
    pub levels: Vec<Level>,
    /// Freeze the manufactured fields in time and balance them with the
    /// discrete residual instead of a refinement study.
    #[serde(default)]
    pub stationary: bool,
}

fn default_transfer_theta() -> f64 {
    0.5
}
fn default_omega_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    #[serde(default)]
    pub omegas: Vec<f64>,
    /// Log-spaced frequencies `{from, to, count}` appended to `omegas`.
    #[serde(default)]
    pub range: Option<FrequencyRange>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_omega_dt")]
    pub omega_dt: f64,
    #[serde(default = "default_transfer_theta")]
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyRange {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

/// A parsed scenario plus what is needed to anchor later errors.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub path: PathBuf,
    text: String,
}

impl LoadedScenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, ConfigError> {
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let loaded = Self {
            scenario,
            path: path.to_path_buf(),
            text,
        };
        if loaded.scenario.version != SCHEMA_VERSION {
            return Err(loaded.error_at(
                "version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    loaded.scenario.version
                ),
            ));
        }
        Ok(loaded)
    }

    /// Error anchored at the first occurrence of `"key"`, or at the start
    /// of the document when the key is absent.
    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let needle = format!("\"{key}\"");
        let (line, column) = self
            .text
            .lines()
            .enumerate()
            .find_map(|(i, l)| l.find(&needle).map(|c| (i + 1, c + 1)))
            .unwrap_or((1, 1));
        ConfigError {
            path: self.path.clone(),
            line,
            column,
            message: message.into(),
        }
    }

    /// Resolves a path from the config relative to the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let base = self.path.parent().unwrap_or(Path::new("."));
        let joined = base.join(p);
        joined.canonicalize().unwrap_or(joined)
    }

    /// The scenario with file references made absolute, fit to be re-run
    /// from any directory.
    pub fn echo(&self, mode: Mode) -> Scenario {
        let mut s = self.scenario.clone();
        s.mode = Some(mode);
        match &mut s.permeability {
            Some(PermeabilitySpec::Series(p)) => *p = self.resolve(p),
            Some(PermeabilitySpec::Fit(f)) => f.samples = self.resolve(&f.samples),
            _ => {}
        }
        s
    }
}
