//! Experiment configuration: JSON schema, validation, and conversion into
//! the core types.
//!
//! A config file fully determines an experiment; together with the tool
//! version it is the reproducibility contract. Every module-level invariant
//! is re-checked at load time with a key path in the error, and unknown
//! keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dcp_core::policy::{DcpConfig, PolicySpec};
use dcp_core::solver::{AlgorithmVariant, HSchedule};
use dcp_core::{ArrivalProcess, ChannelModel, RateModel, RinfParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config invalid at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("cannot read `{path}`: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::ConfigInvalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Per-state gain-magnitude vectors, one [g1, g2] pair per state.
    pub states: Vec<[f64; 2]>,
    /// Row-major transition matrix.
    pub transition: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub n0: f64,
    pub p_t: f64,
}

/// Quality-vs-runtime model of the suboptimal solver.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSection {
    GapDecay { beta: f64 },
    FactorG { xi: f64, zeta: f64 },
    FactorGPtas { beta_p: f64, n_users: u32 },
    RandomizedH { h: Vec<(u64, f64)> },
}

impl VariantSection {
    pub fn to_core(&self, path: &str) -> Result<AlgorithmVariant, ConfigError> {
        let v = match self {
            VariantSection::GapDecay { beta } => AlgorithmVariant::GapDecay { beta: *beta },
            VariantSection::FactorG { xi, zeta } => AlgorithmVariant::FactorG {
                xi: *xi,
                zeta: *zeta,
            },
            VariantSection::FactorGPtas { beta_p, n_users } => AlgorithmVariant::FactorGPtas {
                beta_p: *beta_p,
                n_users: *n_users,
            },
            VariantSection::RandomizedH { h } => AlgorithmVariant::RandomizedH {
                h: HSchedule::new(h.clone()).map_err(|e| invalid(path, e.to_string()))?,
            },
        };
        v.validate().map_err(|e| invalid(path, e.to_string()))?;
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub variant: VariantSection,
    /// Exact-solver grid used inside simulation runs.
    #[serde(default = "default_sim_grid")]
    pub sim_grid: usize,
}

fn default_sim_grid() -> usize {
    128
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DcpSection {
    pub n_c: u64,
    pub alpha: f64,
    pub l1: u32,
    pub n1_set: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArrivalsSection {
    /// Base arrival-rate vector; the sweep scales it by each load factor.
    pub base: [f64; 2],
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    pub load_factors: Vec<f64>,
}

fn default_a_max() -> f64 {
    8.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: u64,
    #[serde(default = "default_window")]
    pub window: u64,
    pub root_seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

fn default_window() -> u64 {
    10_000
}

fn default_replications() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RinfSection {
    pub delta: f64,
    pub rho_phi: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
}

fn default_k_max() -> u64 {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Number of angular steps over the quadrant (directions = grid + 1).
    #[serde(default = "default_direction_grid")]
    pub direction_grid: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Exact-solver grid used by analysis sweeps.
    #[serde(default = "default_analysis_grid")]
    pub solver_grid: usize,
    #[serde(default)]
    pub seed: u64,
    pub rinf: Option<RinfSection>,
}

fn default_direction_grid() -> usize {
    180
}

fn default_mc_samples() -> usize {
    100_000
}

fn default_analysis_grid() -> usize {
    4096
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            direction_grid: default_direction_grid(),
            mc_samples: default_mc_samples(),
            solver_grid: default_analysis_grid(),
            seed: 0,
            rinf: None,
        }
    }
}

/// The whole experiment description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSection,
    pub rates: RatesSection,
    pub solver: SolverSection,
    /// `"dcp"`, `"static:<N1>"`, or `"oracle"`.
    pub policy: String,
    pub dcp: DcpSection,
    pub arrivals: ArrivalsSection,
    pub sim: SimSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// What `simulate` writes next to the artifacts, and what it accepts back:
/// the resolved config plus the tool version.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    /// Loads a config file; a manifest file (recognized by its
    /// `manifest_version` key) is accepted too, so a run can be reproduced
    /// from its own artifacts.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::IoFailure {
            path: path.display().to_string(),
            source: e,
        })?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
        let cfg: ExperimentConfig = if value.get("manifest_version").is_some() {
            let manifest: Manifest = serde_json::from_value(value)
                .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
            manifest.config
        } else {
            serde_json::from_value(value)
                .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-checks every module-level invariant, reporting the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.channel_model()?;
        self.rate_model()?;
        let variant = self.solver.variant.to_core("solver.variant")?;
        if self.solver.sim_grid < 2 {
            return Err(invalid("solver.sim_grid", "grid needs at least 2 points"));
        }

        let dcp = DcpConfig {
            n_c: self.dcp.n_c,
            alpha: self.dcp.alpha,
            l1: self.dcp.l1,
            n1_set: self.dcp.n1_set.clone(),
            variant,
            solver_grid: self.solver.sim_grid,
        };
        dcp.validate().map_err(|e| invalid("dcp", e.to_string()))?;

        self.policy_spec()?;

        if self.arrivals.load_factors.is_empty() {
            return Err(invalid("arrivals.load_factors", "at least one load factor"));
        }
        for (i, &g) in self.arrivals.load_factors.iter().enumerate() {
            if !(g > 0.0) {
                return Err(invalid(
                    &format!("arrivals.load_factors[{i}]"),
                    "load factors must be positive",
                ));
            }
            // The scaled process must satisfy the batch bound for every
            // point of the sweep.
            ArrivalProcess::new(
                [self.arrivals.base[0] * g, self.arrivals.base[1] * g],
                self.arrivals.a_max,
            )
            .map_err(|e| invalid(&format!("arrivals.load_factors[{i}]"), e.to_string()))?;
        }

        if self.sim.horizon == 0 {
            return Err(invalid("sim.horizon", "horizon must be at least 1 slot"));
        }
        if self.sim.window == 0 || self.sim.window > self.sim.horizon {
            return Err(invalid("sim.window", "window must be in 1..=horizon"));
        }
        if self.sim.replications == 0 {
            return Err(invalid("sim.replications", "at least one replication"));
        }

        if self.analysis.direction_grid < 1 {
            return Err(invalid(
                "analysis.direction_grid",
                "need at least one angular step",
            ));
        }
        if self.analysis.mc_samples < 1 {
            return Err(invalid("analysis.mc_samples", "need at least one sample"));
        }
        if self.analysis.solver_grid < 2 {
            return Err(invalid(
                "analysis.solver_grid",
                "grid needs at least 2 points",
            ));
        }
        if let Some(rinf) = &self.analysis.rinf {
            self.rinf_params(rinf)
                .map_err(|e| invalid("analysis.rinf", e.to_string()))?;
        }
        Ok(())
    }

    pub fn channel_model(&self) -> Result<ChannelModel, ConfigError> {
        ChannelModel::new_markov(self.channel.states.clone(), self.channel.transition.clone())
            .map_err(|e| invalid("channel", e.to_string()))
    }

    pub fn rate_model(&self) -> Result<RateModel, ConfigError> {
        RateModel::new(self.rates.n0, self.rates.p_t).map_err(|e| invalid("rates", e.to_string()))
    }

    pub fn variant(&self) -> Result<AlgorithmVariant, ConfigError> {
        self.solver.variant.to_core("solver.variant")
    }

    pub fn dcp_config(&self) -> Result<DcpConfig, ConfigError> {
        Ok(DcpConfig {
            n_c: self.dcp.n_c,
            alpha: self.dcp.alpha,
            l1: self.dcp.l1,
            n1_set: self.dcp.n1_set.clone(),
            variant: self.variant()?,
            solver_grid: self.solver.sim_grid,
        })
    }

    /// Parses the policy string into a runnable spec.
    pub fn policy_spec(&self) -> Result<PolicySpec, ConfigError> {
        let p = self.policy.as_str();
        if p == "dcp" {
            return Ok(PolicySpec::Dcp(self.dcp_config()?));
        }
        if p == "oracle" {
            return Ok(PolicySpec::Oracle {
                solver_grid: self.solver.sim_grid,
            });
        }
        if let Some(n1) = p.strip_prefix("static:") {
            let n1: u32 = n1
                .parse()
                .map_err(|_| invalid("policy", format!("bad static frame length `{n1}`")))?;
            if n1 == 0 {
                return Err(invalid("policy", "static frame length must be positive"));
            }
            return Ok(PolicySpec::Static {
                n1,
                variant: self.variant()?,
                solver_grid: self.solver.sim_grid,
            });
        }
        Err(invalid(
            "policy",
            format!("unknown policy `{p}`; expected `dcp`, `static:<N1>`, or `oracle`"),
        ))
    }

    fn rinf_params(&self, section: &RinfSection) -> Result<RinfParams, ConfigError> {
        let params = RinfParams {
            delta: section.delta,
            rho_phi: section.rho_phi,
            l1: self.dcp.l1,
            k_max: section.k_max,
        };
        params
            .validate()
            .map_err(|e| invalid("analysis.rinf", e.to_string()))?;
        Ok(params)
    }

    /// Round-statistics parameters: explicit config section, or derived
    /// from the candidate set (`delta = 1/|n1_set|`) with a vanishing
    /// failure probability.
    pub fn rinf_params_or_default(&self) -> Result<RinfParams, ConfigError> {
        match &self.analysis.rinf {
            Some(s) => self.rinf_params(s),
            None => Ok(RinfParams {
                delta: 1.0 / self.dcp.n1_set.len() as f64,
                rho_phi: 1e-9,
                l1: self.dcp.l1,
                k_max: default_k_max(),
            }),
        }
    }
}
