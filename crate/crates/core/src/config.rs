use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, FeatureMap, MlpArchitecture};

/// Ordering of the Hamiltonian update inside one JKO step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymplecticVariant {
    /// Kick with `-∇φ(xⁿ) + u`, then drift with the new velocity.
    AlgorithmOne,
    /// Drift, then kick at the new position; control added afterwards.
    SymplecticEuler,
    /// Half kick, drift, half kick; control added afterwards.
    StormerVerlet,
}

impl std::str::FromStr for SymplecticVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm_one" => Ok(Self::AlgorithmOne),
            "symplectic_euler" => Ok(Self::SymplecticEuler),
            "stormer_verlet" => Ok(Self::StormerVerlet),
            _ => Err(Error::Config(format!("unknown symplectic variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JkoConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub inner_iters: usize,
    pub learning_rate: f64,
    pub warm_start: bool,
    pub seed: u64,
    pub symplectic_variant: SymplecticVariant,
    pub epsilon: f64,
    pub t0: f64,
}

impl JkoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 || self.inner_iters == 0 {
            return Err(Error::Config("n_steps and inner_iters must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.epsilon >= 0.0) || !(self.t0 > 0.0) {
            return Err(Error::Config("need epsilon >= 0 and t0 > 0".into()));
        }
        Ok(())
    }

    /// Steps needed to reach `t_final`, i.e. `ceil(T/Δt)` with a guard against
    /// round-off just above an integer.
    pub fn steps_for(t_final: f64, dt: f64) -> usize {
        let r = t_final / dt;
        let n = r.round();
        if (r - n).abs() < 1e-9 * n.max(1.0) {
            n as usize
        } else {
            r.ceil() as usize
        }
    }
}

/// Hidden layout of the control network; input and output widths follow the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub feature_map: FeatureMap,
}

impl NetworkSpec {
    pub fn affine() -> Self {
        Self { hidden: Vec::new(), activation: Activation::None, feature_map: FeatureMap::Identity }
    }

    pub fn build(&self, dim_x: usize, dim_v: usize) -> Result<MlpArchitecture> {
        MlpArchitecture::new(dim_x, dim_v, &self.hidden, dim_v, self.activation, self.feature_map)
    }
}
