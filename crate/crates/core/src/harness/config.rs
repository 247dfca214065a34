//! Scenario file: `agent`, `environment`, `policy` and `run` sections.
//! Every field has a default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doppler::{ClutterOrder, HrSettings};
use crate::environment::EnvConfig;
use crate::model::{ActionSet, AgentConfig, AngleGrid, BeamModelParams};
use crate::{Error, Result};

/// Evenly spaced angles, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformAngles {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// How the measured profile is brought onto the unit-peak model scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationScale {
    /// Subtract the expected noise floor, divide by the response of a
    /// target centred in a beam steered at it.
    #[default]
    Calibrated,
    /// Divide by the profile maximum.
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub bw: f64,
    pub hw: f64,
    pub n_particles: usize,
    pub resample_threshold: f64,
    pub cov_jitter: f64,
    pub grid: UniformAngles,
    pub actions: UniformAngles,
    pub observation_scale: ObservationScale,
    pub clutter_filter: ClutterOrder,
    pub hr: HrSettings,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            sigma_x: a.sigma_x,
            sigma_y: a.sigma_y,
            bw: a.beam.bw,
            hw: a.beam.hw,
            n_particles: a.n_particles,
            resample_threshold: a.resample_threshold,
            cov_jitter: a.cov_jitter,
            grid: UniformAngles {
                min: a.grid.min(),
                max: a.grid.max(),
                count: a.grid.len(),
            },
            actions: UniformAngles {
                min: a.actions.min(),
                max: a.actions.max(),
                count: a.actions.len(),
            },
            observation_scale: ObservationScale::default(),
            clutter_filter: ClutterOrder::default(),
            hr: HrSettings::default(),
        }
    }
}

/// Steering policy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Greedy entropy planner on the current posterior.
    #[default]
    Adaptive,
    /// Open loop, always the same angle.
    Fixed { angle: f64 },
    /// Open loop, one angle per step.
    Scripted { angles: Vec<f64> },
}

impl Policy {
    /// Short label, e.g. `adaptive`, `fixed(0)`, `scripted`.
    pub fn label(&self) -> String {
        match self {
            Policy::Adaptive => "adaptive".into(),
            Policy::Fixed { angle } => format!("fixed({angle})"),
            Policy::Scripted { .. } => "scripted".into(),
        }
    }

    /// Parses `adaptive`, `fixed`, `fixed:<angle>` or `fixed(<angle>)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "adaptive" {
            return Ok(Policy::Adaptive);
        }
        if s == "fixed" {
            return Ok(Policy::Fixed { angle: 0.0 });
        }
        let arg = s
            .strip_prefix("fixed:")
            .or_else(|| s.strip_prefix("fixed(").and_then(|r| r.strip_suffix(')')));
        match arg.map(|a| a.trim().parse::<f64>()) {
            Some(Ok(angle)) => Ok(Policy::Fixed { angle }),
            _ => Err(Error::config(format!("unknown policy '{s}'"))),
        }
    }

    pub fn validate(&self, actions: &ActionSet, steps: usize) -> Result<()> {
        match self {
            Policy::Adaptive => Ok(()),
            Policy::Fixed { angle } => {
                if angle.is_finite() && actions.contains_range(*angle) {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "fixed angle {angle} is outside the action range [{}, {}]",
                        actions.min(),
                        actions.max()
                    )))
                }
            }
            Policy::Scripted { angles } => {
                if angles.len() < steps {
                    return Err(Error::config(format!(
                        "scripted policy has {} angles for {steps} steps",
                        angles.len()
                    )));
                }
                if angles.iter().any(|a| !a.is_finite()) {
                    return Err(Error::config("scripted angles must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Action for step `t`, or `None` when the planner decides.
    pub fn open_loop_action(&self, t: usize) -> Option<f64> {
        match self {
            Policy::Adaptive => None,
            Policy::Fixed { angle } => Some(*angle),
            Policy::Scripted { angles } => angles.get(t).copied(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(alias = "T")]
    pub steps: usize,
    pub seed: u64,
    /// Data-parallel inner kernels and parallel sweep cells.
    pub parallel: bool,
    /// Write measured step latency into the trace. Off by default so that
    /// traces are byte-reproducible.
    pub trace_timing: bool,
    pub hr_tolerance_bpm: f64,
    pub outputs: Outputs,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            steps: 60,
            seed: 0,
            parallel: true,
            trace_timing: false,
            hr_tolerance_bpm: 5.0,
            outputs: Outputs::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub agent: AgentSection,
    pub environment: EnvConfig,
    pub policy: Policy,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn angle_grid(&self) -> Result<AngleGrid> {
        let g = self.agent.grid;
        AngleGrid::uniform(g.min, g.max, g.count).map_err(as_config)
    }

    pub fn action_set(&self) -> Result<ActionSet> {
        let a = self.agent.actions;
        ActionSet::uniform(a.min, a.max, a.count).map_err(as_config)
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        let s = &self.agent;
        let cfg = AgentConfig {
            sigma_x: s.sigma_x,
            sigma_y: s.sigma_y,
            beam: BeamModelParams { bw: s.bw, hw: s.hw },
            n_particles: s.n_particles,
            resample_threshold: s.resample_threshold,
            cov_jitter: s.cov_jitter,
            grid: self.angle_grid()?,
            actions: self.action_set()?,
            seed: self.run.seed,
        };
        cfg.validate().map_err(as_config)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let agent = self.agent_config()?;
        self.agent.hr.validate().map_err(as_config)?;
        self.environment.validate().map_err(as_config)?;
        if self.run.steps == 0 {
            return Err(Error::config("run.steps must be positive"));
        }
        if !(self.run.hr_tolerance_bpm.is_finite() && self.run.hr_tolerance_bpm >= 0.0) {
            return Err(Error::config("run.hr_tolerance_bpm must be non-negative"));
        }
        self.policy.validate(&agent.actions, self.run.steps)?;
        Ok(())
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        let hash = Sha256::digest(&bytes);
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
