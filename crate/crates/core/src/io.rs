//! Scenario files: one JSON document bundling a model, payoffs, a strategy profile and
//! the settings of each command.

use serde::{Deserialize, Serialize};

use crate::best_reply::SolverOptions;
use crate::diffusion::{DiffusionModel, LocalTimeMethod};
use crate::equilibrium::{build_example_payoffs, ExampleConfig, GridSpec, Profile};
use crate::error::{Error, Result};
use crate::measures::{Atom, ExtendedMeasure, LocallyFiniteMeasure};
use crate::payoffs::{McConfig, PayoffSpec};
use crate::strategies::MarkovStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    /// `dX = X(1 - X) dW` on `(0, 1)`.
    LogisticMartingale,
    /// Standard Brownian motion.
    Brownian,
}

/// Either `{"preset": ...}` or explicit coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Preset { preset: ModelPreset },
    Coefficients(DiffusionModel),
}

impl ModelSource {
    pub fn build(&self) -> Result<DiffusionModel> {
        let m = match self {
            ModelSource::Preset {
                preset: ModelPreset::LogisticMartingale,
            } => DiffusionModel::logistic_martingale(),
            ModelSource::Preset {
                preset: ModelPreset::Brownian,
            } => DiffusionModel::brownian(),
            ModelSource::Coefficients(m) => m.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffPreset {
    /// Payoffs of the logistic-martingale game without pure equilibrium.
    Example,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PayoffSource {
    Preset { preset: PayoffPreset },
    Explicit([PayoffSpec; 2]),
}

impl PayoffSource {
    pub fn build(&self) -> Result<[PayoffSpec; 2]> {
        match self {
            PayoffSource::Preset {
                preset: PayoffPreset::Example,
            } => Ok(build_example_payoffs()?.specs),
            PayoffSource::Explicit(s) => Ok(s.clone()),
        }
    }
}

fn default_record_paths() -> usize {
    10
}
fn default_stride() -> usize {
    1
}

/// Settings of `simulate`. Paths, step and horizon come from the scenario's `mc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub x0: f64,
    /// Levels `y` whose local time `L^y` is reported.
    #[serde(default)]
    pub levels: Vec<f64>,
    /// Number of leading paths written node by node.
    #[serde(default = "default_record_paths")]
    pub record_paths: usize,
    /// Write every `stride`-th node of the recorded paths.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_samples() -> usize {
    2001
}

/// Settings of `mollify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifySpec {
    pub measure: ExtendedMeasure,
    pub eps: Vec<f64>,
    /// Uniform sample count on `[lower, upper]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub lower: f64,
    pub upper: f64,
}

impl MollifySpec {
    /// `δ_x` sampled on `[x - 1, x + 1]`.
    pub fn dirac(x: f64, eps: Vec<f64>) -> Self {
        MollifySpec {
            measure: ExtendedMeasure {
                finite_part: LocallyFiniteMeasure {
                    atoms: vec![Atom { x, mass: 1.0 }],
                    densities: Vec::new(),
                },
                explosion: Default::default(),
            },
            eps,
            samples: default_samples(),
            lower: x - 1.0,
            upper: x + 1.0,
        }
    }
}

fn default_n_se() -> f64 {
    3.0
}

/// Settings of `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySpec {
    #[serde(default)]
    pub probes: Vec<f64>,
    #[serde(default = "default_n_se")]
    pub n_se: f64,
    #[serde(default)]
    pub budget: f64,
    #[serde(default)]
    pub deviations: [Vec<MarkovStrategy>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestReplyMethod {
    #[default]
    PolicyIteration,
    ConcaveEnvelope,
}

fn default_players() -> Vec<usize> {
    vec![1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub model: ModelSource,
    #[serde(default)]
    pub payoffs: Option<PayoffSource>,
    #[serde(default)]
    pub profile: Option<Profile>,
    /// Initial states for `payoff`.
    #[serde(default)]
    pub x0: Vec<f64>,
    /// Players (1 or 2) handled by `payoff` and `best-reply`.
    #[serde(default = "default_players")]
    pub players: Vec<usize>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub method: BestReplyMethod,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub mollify: Option<MollifySpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub example: Option<ExampleConfig>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Structural checks: the model is well formed, strategies are valid and every
    /// referenced point lies inside the state space.
    pub fn validate(&self) -> Result<()> {
        let model = self.model.build()?;
        let space = model.state_space;
        let inside = |x: f64, what: &str| {
            if space.contains(x) {
                Ok(())
            } else {
                Err(Error::Schema(format!("{what} {x} outside the state space")))
            }
        };
        if let Some(p) = &self.payoffs {
            p.build()?;
        }
        if let Some(p) = &self.profile {
            for s in [&p.strat_1, &p.strat_2] {
                s.clone().validated()?;
                s.intensity.validate_in(&space)?;
                for x in s.intensity.special_points() {
                    inside(x, "special point")?;
                }
            }
        }
        for &x in &self.x0 {
            inside(x, "initial state")?;
        }
        if self.players.iter().any(|&p| p != 1 && p != 2) {
            return Err(Error::Schema("players must be 1 or 2".into()));
        }
        if let Some(g) = &self.grid {
            if !(g.lower < g.upper) || g.n < 3 {
                return Err(Error::Schema("grid needs lower < upper and n >= 3".into()));
            }
            if g.lower < space.lower || g.upper > space.upper {
                return Err(Error::Schema("grid leaves the state space".into()));
            }
            for &x in &g.extra {
                inside(x, "grid point")?;
            }
        }
        if let Some(mc) = &self.mc {
            mc.validate()?;
        }
        if let Some(s) = &self.simulate {
            inside(s.x0, "initial state")?;
            for &y in &s.levels {
                inside(y, "level")?;
            }
            if s.stride == 0 {
                return Err(Error::Schema("stride must be at least 1".into()));
            }
        }
        if let Some(m) = &self.mollify {
            if !(m.lower < m.upper) || m.samples < 2 {
                return Err(Error::Schema(
                    "mollify needs lower < upper and 2+ samples".into(),
                ));
            }
            if m.eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(Error::Schema("mollify eps must lie in [0, 1]".into()));
            }
        }
        if let Some(v) = &self.verify {
            for &x in &v.probes {
                inside(x, "probe")?;
            }
            for s in v.deviations.iter().flatten() {
                s.clone().validated()?;
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<DiffusionModel> {
        self.model.build()
    }

    pub fn payoff_specs(&self) -> Result<[PayoffSpec; 2]> {
        self.payoffs
            .as_ref()
            .ok_or_else(|| Error::Schema("scenario has no payoffs".into()))?
            .build()
    }

    pub fn profile(&self) -> Result<Profile> {
        self.profile
            .clone()
            .ok_or_else(|| Error::Schema("scenario has no profile".into()))
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.grid
            .clone()
            .ok_or_else(|| Error::Schema("scenario has no grid".into()))
    }

    pub fn mc(&self) -> Result<McConfig> {
        self.mc
            .clone()
            .ok_or_else(|| Error::Schema("scenario has no mc settings".into()))
    }
}

/// Monte Carlo settings used when a scenario leaves them out.
pub fn default_mc(seed: u64) -> McConfig {
    let mut mc = McConfig::new(1000, 1e-3, 20.0, seed);
    mc.method = LocalTimeMethod::Kernel;
    mc
}
