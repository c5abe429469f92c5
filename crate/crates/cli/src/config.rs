//! The JSON run configuration.
//!
//! Unknown keys are rejected at every level. [`RunConfig::to_json`] writes
//! the effective configuration with all defaults filled in; parsing it back
//! yields an equal value.

use beso_core::convex::{ConvexSet, ScalarConvex};
use beso_core::functional::{InstanceKind, Problem};
use beso_core::grid::{SpaceGrid1D, StateSpace, TimeGrid};
use beso_core::noise::{Basis, NoiseModel, OVERFLOW_CAP};
use beso_core::solver::{SolverConfig, StepSizes};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration that cannot be turned into a problem.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<beso_core::Error> for ConfigError {
    fn from(e: beso_core::Error) -> Self {
        match e {
            beso_core::Error::LambdaNotAboveNu { lambda, nu } => ConfigError(format!(
                "hypothesis violated: lambda = {lambda} must exceed nu = sum_j mu_j^2 gamma_j^2 = {nu}"
            )),
            other => ConfigError(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub paths: PathsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Parabolic {
        integrand: IntegrandSpec,
        lambda: f64,
        initial: InitialSpec,
    },
    TvFlow {
        lambda: f64,
        initial: InitialSpec,
    },
    PorousMedia {
        integrand: IntegrandSpec,
        lambda: f64,
        initial: InitialSpec,
    },
    ObstacleVi {
        lambda: f64,
        initial: InitialSpec,
    },
    FiniteDimVi {
        /// Rows of the symmetric positive semidefinite matrix `A0`.
        a0: Vec<Vec<f64>>,
        set: SetSpec,
        lambda: f64,
        initial: Vec<f64>,
    },
    ScalarLinear {
        a: f64,
        lambda: f64,
        initial: f64,
    },
}

impl InstanceSpec {
    pub fn lambda(&self) -> f64 {
        match self {
            Self::Parabolic { lambda, .. }
            | Self::TvFlow { lambda, .. }
            | Self::PorousMedia { lambda, .. }
            | Self::ObstacleVi { lambda, .. }
            | Self::FiniteDimVi { lambda, .. }
            | Self::ScalarLinear { lambda, .. } => *lambda,
        }
    }

    pub fn set_lambda(&mut self, value: f64) {
        match self {
            Self::Parabolic { lambda, .. }
            | Self::TvFlow { lambda, .. }
            | Self::PorousMedia { lambda, .. }
            | Self::ObstacleVi { lambda, .. }
            | Self::FiniteDimVi { lambda, .. }
            | Self::ScalarLinear { lambda, .. } => *lambda = value,
        }
    }

    fn on_grid(&self) -> bool {
        !matches!(self, Self::FiniteDimVi { .. } | Self::ScalarLinear { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    Quadratic { a: f64 },
    PowerNorm { p: f64 },
    AbsValue,
    LogEntropy,
    ExpGrowth { a0: f64, a1: f64, p: f64 },
    Huber { eps: f64 },
    Envelope { base: Box<IntegrandSpec>, eps: f64 },
}

impl IntegrandSpec {
    pub fn build(&self) -> ScalarConvex {
        match self {
            Self::Quadratic { a } => ScalarConvex::Quadratic(*a),
            Self::PowerNorm { p } => ScalarConvex::PowerNorm(*p),
            Self::AbsValue => ScalarConvex::AbsValue,
            Self::LogEntropy => ScalarConvex::LogEntropy,
            Self::ExpGrowth { a0, a1, p } => ScalarConvex::ExpGrowth {
                a0: *a0,
                a1: *a1,
                p: *p,
            },
            Self::Huber { eps } => ScalarConvex::huber(*eps),
            Self::Envelope { base, eps } => beso_core::convex::moreau_envelope(base.build(), *eps),
        }
    }
}

/// Initial datum `x` as a function on the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    Constant { value: f64 },
    /// `amplitude ξ (L - ξ)`.
    Bump { amplitude: f64 },
    /// `amplitude sin(kπξ/L)`.
    Sine { k: u32, amplitude: f64 },
    /// `height` on `[a, b]`, zero elsewhere.
    Indicator { a: f64, b: f64, height: f64 },
    /// `height max(0, 1 - |ξ - center| / width)`.
    Tent { center: f64, width: f64, height: f64 },
    Values { values: Vec<f64> },
}

impl InitialSpec {
    pub fn sample(&self, g: &SpaceGrid1D) -> Result<Vec<f64>, ConfigError> {
        let l = g.length();
        let xs = g.coords();
        Ok(match self {
            Self::Zero => vec![0.0; xs.len()],
            Self::Constant { value } => vec![*value; xs.len()],
            Self::Bump { amplitude } => xs.iter().map(|x| amplitude * x * (l - x)).collect(),
            Self::Sine { k, amplitude } => xs
                .iter()
                .map(|x| amplitude * (*k as f64 * std::f64::consts::PI * x / l).sin())
                .collect(),
            Self::Indicator { a, b, height } => xs.iter().map(|x| if x >= a && x <= b { *height } else { 0.0 }).collect(),
            Self::Tent { center, width, height } => {
                if !(*width > 0.0) {
                    return Err(ConfigError("tent width must be positive".into()));
                }
                xs.iter().map(|x| height * (1.0 - (x - center).abs() / width).max(0.0)).collect()
            }
            Self::Values { values } => {
                if values.len() != xs.len() {
                    return Err(ConfigError(format!(
                        "initial values have length {} but the grid has {} nodes",
                        values.len(),
                        xs.len()
                    )));
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    NonnegOrthant,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polytope { vertices: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Constant { value: f64 },
    Sine { k: u32 },
    Indicator { a: f64, b: f64 },
    Tabulated { values: Vec<f64> },
}

impl BasisSpec {
    fn build(&self) -> Basis {
        match self {
            Self::Constant { value } => Basis::Constant(*value),
            Self::Sine { k } => Basis::Sine(*k),
            Self::Indicator { a, b } => Basis::Indicator(*a, *b),
            Self::Tabulated { values } => Basis::Tabulated(values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseMode {
    pub mu: f64,
    pub basis: BasisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub modes: Vec<NoiseMode>,
    #[serde(default = "default_cap")]
    pub overflow_cap: f64,
}

fn default_cap() -> f64 {
    OVERFLOW_CAP
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            modes: vec![],
            overflow_cap: OVERFLOW_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Interior nodes; ignored (and may be omitted) for Euclidean
    /// instances, whose dimension comes from the instance block.
    #[serde(default)]
    pub m: Option<usize>,
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Named(AutoSteps),
    Fixed { tau: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoSteps {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub max_iters: usize,
    pub tol_gap: f64,
    pub tol_residual: f64,
    pub step_sizes: StepSpec,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iters: d.max_iters,
            tol_gap: d.tol_gap,
            tol_residual: d.tol_residual,
            step_sizes: StepSpec::Named(AutoSteps::Auto),
            inner_max_iters: d.inner_max_iters,
            inner_tol: d.inner_tol,
        }
    }
}

impl SolverSpec {
    pub fn build(&self) -> Result<SolverConfig, ConfigError> {
        let cfg = SolverConfig {
            max_iters: self.max_iters,
            tol_gap: self.tol_gap,
            tol_residual: self.tol_residual,
            step_sizes: match self.step_sizes {
                StepSpec::Named(AutoSteps::Auto) => StepSizes::Auto,
                StepSpec::Fixed { tau, sigma } => StepSizes::Fixed { tau, sigma },
            },
            inner_max_iters: self.inner_max_iters,
            inner_tol: self.inner_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSpec {
    pub n_paths: usize,
    pub base_seed: u64,
}

impl Default for PathsSpec {
    fn default() -> Self {
        Self { n_paths: 8, base_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The effective configuration, pretty-printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        self.solver.build()
    }

    fn space(&self) -> Result<StateSpace, ConfigError> {
        let grid = || -> Result<SpaceGrid1D, ConfigError> {
            let m = self
                .grid
                .m
                .ok_or_else(|| ConfigError(format!("instance {} needs grid.m", self.kind_name())))?;
            Ok(SpaceGrid1D::new(m, self.grid.length)?)
        };
        Ok(match &self.instance {
            InstanceSpec::Parabolic { .. } | InstanceSpec::TvFlow { .. } | InstanceSpec::ObstacleVi { .. } => StateSpace::L2(grid()?),
            InstanceSpec::PorousMedia { .. } => StateSpace::HMinus1(grid()?),
            InstanceSpec::FiniteDimVi { a0, .. } => StateSpace::Euclidean(a0.len()),
            InstanceSpec::ScalarLinear { .. } => StateSpace::Euclidean(1),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.instance {
            InstanceSpec::Parabolic { .. } => "parabolic",
            InstanceSpec::TvFlow { .. } => "tv_flow",
            InstanceSpec::PorousMedia { .. } => "porous_media",
            InstanceSpec::ObstacleVi { .. } => "obstacle_vi",
            InstanceSpec::FiniteDimVi { .. } => "finite_dim_vi",
            InstanceSpec::ScalarLinear { .. } => "scalar_linear",
        }
    }

    /// Builds and validates the problem, including `λ > ν`.
    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        if !self.instance.on_grid() {
            if let Some(m) = self.grid.m {
                let d = match &self.instance {
                    InstanceSpec::FiniteDimVi { a0, .. } => a0.len(),
                    _ => 1,
                };
                if m != d {
                    return Err(ConfigError(format!("grid.m = {m} does not match the instance dimension {d}")));
                }
            }
        }
        let space = self.space()?;
        let time = TimeGrid::uniform(self.grid.n, self.grid.horizon)?;
        let mu: Vec<f64> = self.noise.modes.iter().map(|m| m.mu).collect();
        let bases: Vec<Basis> = self.noise.modes.iter().map(|m| m.basis.build()).collect();
        let noise = NoiseModel::new(mu, &bases, &space)?.with_overflow_cap(self.noise.overflow_cap)?;
        let lambda = self.instance.lambda();
        let (kind, x) = match (&self.instance, space.grid()) {
            (InstanceSpec::Parabolic { integrand, initial, .. }, Some(g)) => (InstanceKind::Parabolic(integrand.build()), initial.sample(g)?),
            (InstanceSpec::TvFlow { initial, .. }, Some(g)) => (InstanceKind::TvFlow, initial.sample(g)?),
            (InstanceSpec::PorousMedia { integrand, initial, .. }, Some(g)) => (InstanceKind::PorousMedia(integrand.build()), initial.sample(g)?),
            (InstanceSpec::ObstacleVi { initial, .. }, Some(g)) => (InstanceKind::ObstacleVi, initial.sample(g)?),
            (InstanceSpec::FiniteDimVi { a0, set, initial, .. }, _) => {
                let d = a0.len();
                if d == 0 || a0.iter().any(|r| r.len() != d) {
                    return Err(ConfigError("a0 must be a non-empty square matrix".into()));
                }
                let mat = nalgebra::DMatrix::from_fn(d, d, |i, j| a0[i][j]);
                let set = match set {
                    SetSpec::NonnegOrthant => ConvexSet::NonnegOrthant(d),
                    SetSpec::Box { lo, hi } => ConvexSet::Box {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    },
                    SetSpec::Polytope { vertices } => ConvexSet::Polytope {
                        vertices: vertices.clone(),
                    },
                };
                (InstanceKind::FiniteDimVi { a0: mat, set }, initial.clone())
            }
            (InstanceSpec::ScalarLinear { a, initial, .. }, _) => (InstanceKind::ScalarLinear(*a), vec![*initial]),
            _ => unreachable!("grid instances have a grid"),
        };
        Ok(Problem::new(kind, space, time, noise, x, lambda)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"{
        "schema_version": 1,
        "instance": {"kind": "parabolic", "integrand": {"type": "quadratic", "a": 1.0},
                     "lambda": 1.0, "initial": {"type": "bump", "amplitude": 1.0}},
        "noise": {"modes": [{"mu": 0.3, "basis": {"type": "sine", "k": 1}}]},
        "grid": {"m": 8, "n": 16}
    }"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = RunConfig::from_json(HEAT).unwrap();
        assert_eq!(c.paths, PathsSpec::default());
        assert_eq!(c.grid.length, 1.0);
        assert_eq!(c.solver, SolverSpec::default());
        let p = c.build_problem().unwrap();
        assert_eq!(p.dim(), 8);
    }

    #[test]
    fn effective_config_round_trips() {
        let c = RunConfig::from_json(HEAT).unwrap();
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json(), again.to_json());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = HEAT.replace("\"n\": 16", "\"n\": 16, \"tol_gpa\": 1e-3");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = HEAT.replace("\"a\": 1.0", "\"a\": 1.0, \"b\": 2.0");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = HEAT.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn lambda_gate_names_the_hypothesis() {
        let bad = HEAT.replace("\"lambda\": 1.0", "\"lambda\": 0.01");
        let err = RunConfig::from_json(&bad).unwrap().build_problem().unwrap_err();
        assert!(err.0.contains("hypothesis violated"), "{err}");
    }

    #[test]
    fn fixed_step_sizes_parse() {
        let text = HEAT.replace(
            "\"grid\"",
            "\"solver\": {\"max_iters\": 2, \"tol_gap\": 1e-6, \"tol_residual\": 1e-8, \"step_sizes\": {\"tau\": 0.1, \"sigma\": 0.2}, \"inner_max_iters\": 100, \"inner_tol\": 1e-12}, \"grid\"",
        );
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.solver_config().unwrap().step_sizes, StepSizes::Fixed { tau: 0.1, sigma: 0.2 });
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
