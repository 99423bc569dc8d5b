//! Run configuration: a flat JSON document plus one-to-one CLI overrides.

use crate::adaptivity::{AdaptiveOptions, RefinementMode};
use crate::afc::{InitGuess, LimiterKind, SolverOptions};
use crate::estimators::Technique;
use crate::problems::{self, ProblemSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Flat run configuration. All fields have defaults; runs are fully
/// deterministic (there is no seed anywhere).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_problem")]
    pub problem: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// `kuzmin` or `bjk`.
    #[serde(default = "default_limiter")]
    pub limiter: String,
    /// `afc_energy` or `afc_supg_energy`.
    #[serde(default = "default_technique")]
    pub technique: String,
    /// `uniform` or `adaptive`.
    #[serde(default = "default_refinement")]
    pub refinement: String,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_min_fraction")]
    pub min_fraction: f64,
    #[serde(default = "default_max_dofs")]
    pub max_dofs: usize,
    #[serde(default = "default_eta_tol")]
    pub eta_tol: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// `supg`, `zero` or `upwind`.
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_c_inv")]
    pub c_inv: f64,
    /// Uniform BJK limiter weight.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_meshes: bool,
    #[serde(default)]
    pub dump_solutions: bool,

    // constant coefficients of a `problem = "custom"` run
    #[serde(default)]
    pub custom_bx: f64,
    #[serde(default)]
    pub custom_by: f64,
    #[serde(default)]
    pub custom_c: f64,
    #[serde(default)]
    pub custom_f: f64,
    #[serde(default)]
    pub custom_u_d: f64,
    #[serde(default)]
    pub custom_g: f64,
    #[serde(default)]
    pub custom_sigma0: Option<f64>,
}

fn default_problem() -> String {
    "boundary_layer".into()
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_limiter() -> String {
    "kuzmin".into()
}
fn default_technique() -> String {
    "afc_energy".into()
}
fn default_refinement() -> String {
    "adaptive".into()
}
fn default_theta() -> f64 {
    0.5
}
fn default_min_fraction() -> f64 {
    0.1
}
fn default_max_dofs() -> usize {
    100_000
}
fn default_eta_tol() -> f64 {
    1e-3
}
fn default_omega() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    25_000
}
fn default_init() -> String {
    "supg".into()
}
fn default_c_inv() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.limiter_kind()?;
        self.technique_kind()?;
        self.refinement_mode()?;
        self.init_guess()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must be in (0, 1], got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(Error::Config(format!(
                "min_fraction must be in [0, 1], got {}",
                self.min_fraction
            )));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config(format!("omega must be in (0, 1], got {}", self.omega)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.c_inv > 0.0) {
            return Err(Error::Config(format!("c_inv must be > 0, got {}", self.c_inv)));
        }
        if self.max_dofs < 25 {
            return Err(Error::Config("max_dofs must allow at least the 25-dof start".into()));
        }
        // problem name check (custom handled separately)
        if self.problem != "custom" {
            problems::by_name(&self.problem, self.epsilon)?;
        }
        Ok(())
    }

    pub fn limiter_kind(&self) -> Result<LimiterKind> {
        match self.limiter.as_str() {
            "kuzmin" => Ok(LimiterKind::Kuzmin),
            "bjk" => Ok(LimiterKind::Bjk),
            other => Err(Error::Config(format!(
                "unknown limiter {other:?} (expected \"kuzmin\" or \"bjk\")"
            ))),
        }
    }

    pub fn technique_kind(&self) -> Result<Technique> {
        match self.technique.as_str() {
            "afc_energy" => Ok(Technique::AfcEnergy),
            "afc_supg_energy" => Ok(Technique::AfcSupgEnergy),
            other => Err(Error::Config(format!(
                "unknown technique {other:?} (expected \"afc_energy\" or \"afc_supg_energy\")"
            ))),
        }
    }

    pub fn refinement_mode(&self) -> Result<RefinementMode> {
        match self.refinement.as_str() {
            "uniform" => Ok(RefinementMode::Uniform),
            "adaptive" => Ok(RefinementMode::Adaptive),
            other => Err(Error::Config(format!(
                "unknown refinement {other:?} (expected \"uniform\" or \"adaptive\")"
            ))),
        }
    }

    pub fn init_guess(&self) -> Result<InitGuess> {
        match self.init.as_str() {
            "supg" => Ok(InitGuess::Supg),
            "zero" => Ok(InitGuess::Zero),
            "upwind" => Ok(InitGuess::Upwind),
            other => Err(Error::Config(format!(
                "unknown init {other:?} (expected \"supg\", \"zero\" or \"upwind\")"
            ))),
        }
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        if self.problem == "custom" {
            let sigma0 = self.custom_sigma0.unwrap_or(self.custom_c.max(0.0));
            problems::custom_constant(
                self.epsilon,
                [self.custom_bx, self.custom_by],
                self.custom_c,
                self.custom_f,
                self.custom_u_d,
                self.custom_g,
                sigma0,
            )
        } else {
            problems::by_name(&self.problem, self.epsilon)
        }
    }

    pub fn adaptive_options(&self) -> Result<AdaptiveOptions> {
        Ok(AdaptiveOptions {
            refinement: self.refinement_mode()?,
            theta: self.theta,
            min_fraction: self.min_fraction,
            max_dofs: self.max_dofs,
            eta_tol: self.eta_tol,
            solver: SolverOptions {
                omega: self.omega,
                tol: self.tol,
                max_iter: self.max_iter,
                init: self.init_guess()?,
                gamma: self.gamma,
                gamma_override: None,
            },
            c_inv: self.c_inv,
        })
    }
}
