//! Registered experiment presets and `key=value` overrides of their defaults.

use serde::{Deserialize, Serialize};

use crate::config::{JkoConfig, NetworkSpec, SymplecticVariant};
use crate::error::{Error, Result};
use crate::nn::InitScheme;
use crate::phase_space::{DomainSpec, Potential};
use crate::pic::PoissonNormalization;
use crate::sampling::InitialCondition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KineticJko,
    SplitJko,
    ScoreBaseline,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kinetic_jko" => Ok(Self::KineticJko),
            "split_jko" => Ok(Self::SplitJko),
            "score_baseline" => Ok(Self::ScoreBaseline),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

fn default_init() -> InitScheme {
    InitScheme::FanInUniform
}

fn default_normalization() -> PoissonNormalization {
    PoissonNormalization::Density
}

fn default_bins() -> usize {
    crate::oracles::DEFAULT_BINS
}

fn default_hist_cells() -> usize {
    128
}

fn default_vrange() -> (f64, f64) {
    (-3.0, 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub n_particles: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Takes precedence over `t_final` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    pub epsilon: f64,
    pub t0: f64,
    pub inner_iters: usize,
    pub learning_rate: f64,
    pub warm_start: bool,
    pub seed: u64,
    pub symplectic_variant: SymplecticVariant,
    pub method: Method,
    /// Zero disables snapshots.
    pub snapshot_every: usize,
    pub network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_network: Option<NetworkSpec>,
    /// Inner-loop settings used instead of the JKO ones when `method` is
    /// `score_baseline`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_inner_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_warm_start: Option<bool>,
    #[serde(default = "default_init")]
    pub init: InitScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cells: Option<usize>,
    #[serde(default = "default_normalization")]
    pub poisson_normalization: PoissonNormalization,
    /// Draw velocities from `N(0, T₀)` instead of the preset's profile.
    #[serde(default)]
    pub thermal_velocities: bool,
    /// Constant `c` of the allowed per-step energy rise `cΔt²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_slack: Option<f64>,
    #[serde(default = "default_bins")]
    pub marginal_bins: usize,
    #[serde(default = "default_hist_cells")]
    pub phase_bins_x: usize,
    #[serde(default = "default_hist_cells")]
    pub phase_bins_v: usize,
    #[serde(default = "default_vrange")]
    pub phase_v_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub domain: DomainSpec,
    pub potential: Potential,
    pub initial: InitialCondition,
    pub defaults: Defaults,
}

const SOURCES: &[(&str, &str)] = &[
    ("example1_1d", include_str!("../presets/example1_1d.toml")),
    ("example1_3d", include_str!("../presets/example1_3d.toml")),
    ("example2", include_str!("../presets/example2.toml")),
    ("example3_periodic", include_str!("../presets/example3_periodic.toml")),
    ("example4_3d", include_str!("../presets/example4_3d.toml")),
    ("vpfp_1d1v_eps10", include_str!("../presets/vpfp_1d1v_eps10.toml")),
    ("vpfp_1d1v_eps5e-3", include_str!("../presets/vpfp_1d1v_eps5e-3.toml")),
    ("vpfp_1d1v_eps1e-2", include_str!("../presets/vpfp_1d1v_eps1e-2.toml")),
    ("vpfp_1d3v_eps10", include_str!("../presets/vpfp_1d3v_eps10.toml")),
    ("vpfp_1d3v_eps5e-3", include_str!("../presets/vpfp_1d3v_eps5e-3.toml")),
];

pub fn preset_ids() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(id, _)| *id)
}

impl Preset {
    pub fn parse(text: &str) -> Result<Self> {
        let p: Preset = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(id: &str) -> Result<Self> {
        let (_, text) = SOURCES
            .iter()
            .find(|(k, _)| *k == id)
            .ok_or_else(|| Error::UnknownPreset(id.to_string()))?;
        Self::parse(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.potential.validate(&self.domain)?;
        self.initial.validate(&self.domain)?;
        self.jko_config()?.validate()?;
        let d = &self.defaults;
        if d.n_particles == 0 {
            return Err(Error::Config("n_particles must be positive".into()));
        }
        if !self.potential.is_closed_form() && d.grid_cells.is_none() {
            return Err(Error::Config("a self-consistent preset needs grid_cells".into()));
        }
        if !self.potential.is_closed_form() && d.method != Method::KineticJko {
            return Err(Error::Config("self-consistent runs support only kinetic_jko".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.defaults.n_steps.unwrap_or_else(|| JkoConfig::steps_for(self.defaults.t_final, self.defaults.dt))
    }

    pub fn jko_config(&self) -> Result<JkoConfig> {
        let d = &self.defaults;
        let score = d.method == Method::ScoreBaseline;
        let cfg = JkoConfig {
            dt: d.dt,
            n_steps: self.n_steps(),
            inner_iters: if score { d.score_inner_iters.unwrap_or(d.inner_iters) } else { d.inner_iters },
            learning_rate: if score { d.score_learning_rate.unwrap_or(d.learning_rate) } else { d.learning_rate },
            warm_start: if score { d.score_warm_start.unwrap_or(d.warm_start) } else { d.warm_start },
            seed: d.seed,
            symplectic_variant: d.symplectic_variant,
            epsilon: d.epsilon,
            t0: d.t0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Initial condition actually sampled, honouring `thermal_velocities`.
    pub fn effective_initial(&self) -> Result<InitialCondition> {
        if self.defaults.thermal_velocities {
            self.initial.with_thermal_velocities(self.defaults.t0)
        } else {
            Ok(self.initial.clone())
        }
    }

    /// Applies `key=value` overrides to the defaults. Values are TOML
    /// literals; bare words are taken as strings. Nested keys use dots.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(&self.defaults).map_err(|e| Error::Parse(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override `{item}` is not key=value")))?;
            set_path(&mut table, key.trim(), parse_value(raw.trim())?)?;
        }
        let defaults: Defaults = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let out = Preset { defaults, ..self.clone() };
        out.validate()?;
        Ok(out)
    }
}

fn parse_value(raw: &str) -> Result<toml::Value> {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => Ok(t.remove("v").expect("parsed key")),
        Err(_) => Ok(toml::Value::String(raw.to_string())),
    }
}

const TOP_KEYS: &[&str] = &[
    "n_particles",
    "dt",
    "t_final",
    "n_steps",
    "epsilon",
    "t0",
    "inner_iters",
    "learning_rate",
    "warm_start",
    "score_inner_iters",
    "score_learning_rate",
    "score_warm_start",
    "seed",
    "symplectic_variant",
    "method",
    "snapshot_every",
    "network",
    "score_network",
    "init",
    "grid_cells",
    "poisson_normalization",
    "thermal_velocities",
    "energy_slack",
    "marginal_bins",
    "phase_bins_x",
    "phase_bins_v",
    "phase_v_range",
];

const NETWORK_KEYS: &[&str] = &["hidden", "activation", "feature_map"];

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let unknown = || Error::UnknownKey(key.to_string());
    let mut parts = key.split('.');
    let head = parts.next().filter(|h| TOP_KEYS.contains(h)).ok_or_else(unknown)?;
    let rest: Vec<&str> = parts.collect();
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    if !matches!(head, "network" | "score_network") || rest.len() != 1 || !NETWORK_KEYS.contains(&rest[0]) {
        return Err(unknown());
    }
    if !table.contains_key(head) {
        let base = table.get("network").cloned().ok_or_else(unknown)?;
        table.insert(head.to_string(), base);
    }
    let sub = table.get_mut(head).and_then(|v| v.as_table_mut()).ok_or_else(unknown)?;
    sub.insert(rest[0].to_string(), value);
    Ok(())
}
