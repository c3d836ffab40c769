//! Run configuration: the TOML schema and its translation into engine types.

use std::path::Path;

use anyhow::{bail, Context};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use doss_core::engine::McParams;
use doss_core::potentials::{Branch, PotentialSpec, PotentialTerm, SourceConvention, TimeDependentPotential};
use doss_core::states::InitialState;
use doss_core::testfunctions::{Basis, TestFunction};
use doss_core::ufunctional::WindowFunction;
use doss_core::validation::Scale;

/// A complex number written either as a float or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Num {
    Real(f64),
    Pair([f64; 2]),
}

impl Num {
    pub fn value(self) -> Complex64 {
        match self {
            Num::Real(x) => Complex64::new(x, 0.0),
            Num::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

fn one() -> Num {
    Num::Real(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Propagate,
    Ufunctional,
    CheckAssumptions,
    Validate,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub state: StateConfig,
    /// Test function; `ġ` is also the source term of the potential.
    pub g: Option<TestFunctionConfig>,
    /// Ray direction for U-functional probes.
    pub h: Option<TestFunctionConfig>,
    pub window: Option<WindowConfig>,
    pub times: Option<TimesConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub oracles: OracleConfig,
    pub assumptions: Option<AssumptionConfig>,
    pub ufunctional: Option<UFunctionalConfig>,
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchName {
    #[default]
    Sheet,
    Principal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionName {
    #[default]
    Backward,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub branch: BranchName,
    #[serde(default)]
    pub convention: ConventionName,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermConfig {
    /// Coefficients `a_0 … a_{4n+2}` of `Σ a_k z^k`, leading one positive.
    Polynomial { coefficients: Vec<Num> },
    Quadratic {
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        a1: f64,
        a2: f64,
    },
    /// `a / |z - b|^n`, continued off the real line.
    InverseAbs { a: Num, b: f64, n: u32 },
    /// `a / (z - b)^n`.
    InversePlain { a: Num, b: f64, n: u32 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StateTerm {
    #[serde(default = "one")]
    pub coef: Num,
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    /// Single Hermite function `f_m`; ignored when `terms` is given.
    pub m: Option<u32>,
    pub terms: Option<Vec<StateTerm>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    Gaussian {
        #[serde(default = "one")]
        coef: Num,
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "unit")]
        sigma: f64,
    },
    Hermite {
        #[serde(default = "one")]
        coef: Num,
        m: u32,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    pub terms: Vec<BasisConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowConfig {
    Delta { x: f64 },
    Indicator { lo: f64, hi: f64 },
    Biweight { center: f64, half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    #[serde(default)]
    pub t0: f64,
    pub t: f64,
    /// Horizon `T`; defaults to `t`.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Explicit evaluation points; overrides `min`/`max`/`points`.
    pub x: Option<Vec<f64>>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    pub workers: Option<usize>,
}

fn default_paths() -> u64 {
    10_000
}
fn default_steps() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}
fn default_chunk() -> usize {
    doss_core::engine::DEFAULT_CHUNK_SIZE
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            n_steps: default_steps(),
            seed: default_seed(),
            chunk_size: default_chunk(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Closed-form free evolution; needs a zero potential and no source.
    #[serde(default)]
    pub free: bool,
    /// Crank–Nicolson reference on `[-half_width, half_width]`.
    #[serde(default)]
    pub crank_nicolson: bool,
    pub cn_half_width: Option<f64>,
    pub cn_dx: Option<f64>,
    pub cn_dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleConfig {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub l: f64,
    #[serde(default = "default_outer")]
    pub n_outer: u64,
    #[serde(default = "default_inner")]
    pub n_inner: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeConfig {
    pub epsilon_h: f64,
    #[serde(default = "default_outer")]
    pub n_outer: u64,
    #[serde(default = "default_inner")]
    pub n_inner: u64,
}

fn default_outer() -> u64 {
    doss_core::propagator::DEFAULT_OUTER_PATHS
}
fn default_inner() -> u64 {
    doss_core::propagator::DEFAULT_INNER_PATHS
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionConfig {
    /// The `ε` of the exponential moment; must lie inside the window.
    pub epsilon: f64,
    pub double: Option<DoubleConfig>,
    pub derivatives: Option<DerivativeConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UFunctionalConfig {
    /// Points `w` at which `F(g + w·h)` is tabulated.
    #[serde(default = "origin")]
    pub ray: Vec<Num>,
    #[serde(default)]
    pub radii: Vec<f64>,
    #[serde(default = "default_contour")]
    pub contour_nodes: usize,
    /// Samples for the growth fit of `F(w·g)`; empty skips the fit.
    #[serde(default)]
    pub growth: Vec<Num>,
    #[serde(default = "default_order")]
    pub x_order: usize,
}

fn origin() -> Vec<Num> {
    vec![Num::Real(0.0)]
}
fn default_contour() -> usize {
    doss_core::ufunctional::DEFAULT_CONTOUR_NODES
}
fn default_order() -> usize {
    doss_core::ufunctional::DEFAULT_WINDOW_ORDER
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NPaths,
    NSteps,
    HT,
    HX,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleName {
    #[default]
    Full,
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub scale: ScaleName,
}

impl ValidateConfig {
    pub fn scale(&self) -> Scale {
        match self.scale {
            ScaleName::Full => Scale::Full,
            ScaleName::Smoke => Scale::Smoke,
        }
    }
}

/// A manifest carries the effective configuration under `[config]`.
#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

/// Reads a config file, or the `[config]` section of a run manifest.
pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.contains_key("config") && value.contains_key("run") {
        let m: ManifestConfig = toml::from_str(&text).with_context(|| format!("reading [config] of {}", path.display()))?;
        return Ok(m.config);
    }
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunConfig {
    pub fn potential(&self) -> anyhow::Result<TimeDependentPotential> {
        let terms = self
            .potential
            .terms
            .iter()
            .map(|t| match t {
                TermConfig::Polynomial { coefficients } => PotentialTerm::Polynomial {
                    coefficients: coefficients.iter().map(|c| c.value()).collect(),
                },
                TermConfig::Quadratic { a0, a1, a2 } => PotentialTerm::Quadratic { a0: *a0, a1: *a1, a2: *a2 },
                TermConfig::InverseAbs { a, b, n } => PotentialTerm::InversePowerAbs { a: a.value(), b: *b, n: *n },
                TermConfig::InversePlain { a, b, n } => PotentialTerm::InversePowerPlain { a: a.value(), b: *b, n: *n },
            })
            .collect();
        let branch = match self.potential.branch {
            BranchName::Sheet => Branch::Sheet,
            BranchName::Principal => Branch::Principal,
        };
        let base = PotentialSpec::new(terms)?.with_branch(branch);
        let convention = match self.potential.convention {
            ConventionName::Backward => SourceConvention::Backward,
            ConventionName::Forward => SourceConvention::Forward,
        };
        Ok(TimeDependentPotential::new(base, self.g()?).with_convention(convention))
    }

    pub fn state(&self) -> anyhow::Result<InitialState> {
        let state = match &self.state.terms {
            Some(terms) => InitialState::combination(terms.iter().map(|t| (t.coef.value(), t.m)).collect())?,
            None => InitialState::hermite(self.state.m.unwrap_or(0)),
        };
        state.validate()?;
        Ok(state)
    }

    fn test_function(cfg: Option<&TestFunctionConfig>) -> anyhow::Result<TestFunction> {
        let Some(cfg) = cfg else {
            return Ok(TestFunction::zero());
        };
        let terms = cfg
            .terms
            .iter()
            .map(|b| match *b {
                BasisConfig::Gaussian { coef, amplitude, mean, sigma } => {
                    (coef.value(), Basis::Gaussian { amplitude, mean, sigma })
                }
                BasisConfig::Hermite { coef, m } => (coef.value(), Basis::Hermite { m }),
            })
            .collect();
        Ok(TestFunction::from_terms(terms)?)
    }

    pub fn g(&self) -> anyhow::Result<TestFunction> {
        Self::test_function(self.g.as_ref())
    }

    pub fn h(&self) -> anyhow::Result<TestFunction> {
        Self::test_function(self.h.as_ref())
    }

    pub fn window(&self) -> anyhow::Result<WindowFunction> {
        let w = match self.window.as_ref() {
            None => bail!("ufunctional mode needs a [window] section"),
            Some(WindowConfig::Delta { x }) => WindowFunction::delta(*x),
            Some(WindowConfig::Indicator { lo, hi }) => WindowFunction::indicator(*lo, *hi),
            Some(WindowConfig::Biweight { center, half_width }) => {
                if !(*half_width > 0.0) {
                    bail!("biweight half_width must be positive, got {half_width}");
                }
                WindowFunction::biweight(*center, *half_width)
            }
        };
        w.validate()?;
        Ok(w)
    }

    /// `(t0, t, T)`.
    pub fn times(&self) -> anyhow::Result<(f64, f64, f64)> {
        let Some(times) = self.times else {
            bail!("missing [times] section");
        };
        let horizon = times.horizon.unwrap_or(times.t);
        let ok = [times.t0, times.t, horizon].iter().all(|v| v.is_finite())
            && 0.0 <= times.t0
            && times.t0 <= times.t
            && times.t <= horizon;
        if !ok {
            bail!("need 0 <= t0 <= t <= T, got t0 = {}, t = {}, T = {horizon}", times.t0, times.t);
        }
        Ok((times.t0, times.t, horizon))
    }

    pub fn grid(&self) -> anyhow::Result<Vec<f64>> {
        let xs = match (&self.grid.x, self.grid.min, self.grid.max, self.grid.points) {
            (Some(xs), _, _, _) => xs.clone(),
            (None, Some(lo), Some(hi), Some(n)) => {
                if n < 2 || !(lo < hi) {
                    bail!("grid needs min < max and at least 2 points");
                }
                (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
            }
            (None, None, None, None) => vec![0.0],
            _ => bail!("grid needs either x = [...] or all of min, max, points"),
        };
        if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
            bail!("grid points must be finite and non-empty");
        }
        Ok(xs)
    }

    pub fn mc(&self) -> McParams {
        McParams::new(self.mc.n_paths, self.mc.n_steps, self.mc.seed).with_chunk_size(self.mc.chunk_size)
    }
}
