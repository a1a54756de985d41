//! JSON experiment configuration.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundKind;
use crate::error::{Error, Result};
use crate::kernels::{birth_death, random_monotone, reflected_walk, CouplingStyle, FiniteKernel};
use crate::rates::{MConvention, PhiSpec, PsiSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainConfig {
    BirthDeath { size: usize, p: f64, q: f64 },
    ReflectedWalk { size: usize, p: f64 },
    RandomMonotone { size: usize, decay: f64, seed: u64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

impl ChainConfig {
    pub fn build(&self) -> Result<FiniteKernel> {
        match self {
            ChainConfig::BirthDeath { size, p, q } => birth_death(*size, *p, *q),
            ChainConfig::ReflectedWalk { size, p } => reflected_walk(*size, *p),
            ChainConfig::RandomMonotone { size, decay, seed } => random_monotone(*size, *decay, *seed),
            ChainConfig::Explicit { matrix } => FiniteKernel::new(matrix.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SmallSetConfig {
    States(Vec<usize>),
    /// `{x : V(x) <= level}`.
    Level { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MinorizationConfig {
    #[default]
    Auto,
    Explicit { epsilon: f64, nu: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case", deny_unknown_fields)]
pub enum VFormula {
    /// `V(x) = intercept + slope · x`.
    Affine { intercept: f64, slope: f64 },
    /// `V(x) = (1 + x)^exponent`.
    Power { exponent: f64 },
    /// `V(x) = base^x`.
    Exponential { base: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VConfig {
    Vector(Vec<f64>),
    Formula(VFormula),
}

impl VConfig {
    pub fn evaluate(&self, size: usize) -> Vec<f64> {
        match self {
            VConfig::Vector(v) => v.clone(),
            VConfig::Formula(f) => (0..size)
                .map(|x| {
                    let x = x as f64;
                    match f {
                        VFormula::Affine { intercept, slope } => intercept + slope * x,
                        VFormula::Power { exponent } => (1.0 + x).powf(*exponent),
                        VFormula::Exponential { base } => base.powf(x),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YoungConfig {
    pub rho: f64,
    pub psi: PsiSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IngredientSource {
    #[default]
    Exact,
    Drift,
    Mc { n_paths: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_bounds")]
    pub bounds: Vec<BoundKind>,
    #[serde(default = "default_true")]
    pub verify: bool,
    /// Also integrate the bounds over `x' ~ π`.
    #[serde(default)]
    pub stationary: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            bounds: default_bounds(),
            verify: true,
            stationary: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_sim_paths")]
    pub n_paths: usize,
    #[serde(default = "default_sim_horizon")]
    pub horizon: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_paths: default_sim_paths(),
            horizon: default_sim_horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainConfig,
    #[serde(default = "default_small_set")]
    pub small_set: SmallSetConfig,
    #[serde(default)]
    pub minorization: MinorizationConfig,
    #[serde(default = "default_phi")]
    pub phi: PhiSpec,
    #[serde(default)]
    pub v: Option<VConfig>,
    /// Certify `D(φ, V, C)` before use; when false `V` only shapes the weight `W`.
    #[serde(default = "default_true")]
    pub verify_drift: bool,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub coupling: CouplingStyle,
    #[serde(default = "default_horizon")]
    pub rate_horizon: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub m_convention: MConvention,
    #[serde(default)]
    pub young: Option<YoungConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ingredient_source: IngredientSource,
    /// Defaults to `[[0, S-1]]`.
    #[serde(default)]
    pub start_pairs: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_small_set() -> SmallSetConfig {
    SmallSetConfig::States(vec![0])
}

fn default_phi() -> PhiSpec {
    PhiSpec::Polynomial { c: 1.0, alpha: 0.5 }
}

fn default_true() -> bool {
    true
}

fn default_horizon() -> usize {
    500
}

fn default_delta() -> f64 {
    1.0
}

fn default_bounds() -> Vec<BoundKind> {
    vec![BoundKind::TvSeries]
}

fn default_sim_paths() -> usize {
    1000
}

fn default_sim_horizon() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every default explicitly, applies the seed override and checks
    /// static constraints that do not need the kernel.
    pub fn resolve(mut self, seed_override: Option<u64>, size: usize) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.seed = seed;
        }
        if self.start_pairs.is_none() {
            self.start_pairs = Some(vec![[0, size - 1]]);
        }
        for pair in self.start_pairs.as_ref().unwrap() {
            if pair[0] >= size || pair[1] >= size {
                return Err(Error::Config(format!("start pair {pair:?} is out of range 0..{size}")));
            }
        }
        if let SmallSetConfig::States(states) = &self.small_set {
            if let Some(x) = states.iter().find(|&&x| x >= size) {
                return Err(Error::Config(format!("small-set state {x} is out of range 0..{size}")));
            }
        }
        if let Some(VConfig::Vector(v)) = &self.v {
            if v.len() != size {
                return Err(Error::Config(format!("V has {} entries for {size} states", v.len())));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.rate_horizon < 1 {
            return Err(Error::Config("rate_horizon must be at least 1".into()));
        }
        if self.outputs.bounds.contains(&BoundKind::Interpolated) && self.young.is_none() {
            return Err(Error::Config("interpolated bounds need a young section".into()));
        }
        if let IngredientSource::Mc { n_paths } = self.ingredient_source {
            if n_paths < 100 {
                return Err(Error::Config("Monte Carlo ingredients need n_paths >= 100".into()));
            }
        }
        Ok(self)
    }
}
