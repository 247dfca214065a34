//! Closed-loop transmit beam steering for Doppler ultrasound.
//!
//! A particle filter tracks the angular position of a moving Doppler target
//! from depth-integrated power Doppler profiles, and a greedy planner picks
//! the next transmit steering angle by maximizing the marginal entropy of the
//! predicted observation. The heart rate is read out with an autocorrelation
//! estimator at the tracked position.
//!
//! - [`model`]: generative model (beam x target response, transition, likelihood)
//! - [`filter`]: sequential Monte Carlo perception
//! - [`planner`]: information-seeking action selection
//! - [`doppler`]: clutter filter, power Doppler, range search, heart rate
//! - [`environment`]: synthetic polar-grid slow-time world
//! - [`harness`]: scenario runner, policies, metrics, oracles and persistence

pub mod doppler;
pub mod environment;
mod error;
pub mod filter;
pub mod harness;
pub mod model;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};

pub use doppler::{HrEstimate, HrSettings, PowerDopplerFrame, SlowTimeEnsemble};
pub use environment::{EnvConfig, Environment, NoiseConfig, TargetConfig, TrajectoryConfig};
pub use filter::{ParticleSet, PosteriorSummary};
pub use harness::{Policy, ScenarioConfig, ScenarioSummary, StepRecord};
pub use model::{ActionSet, AgentConfig, AngleGrid, BeamModelParams};
pub use planner::ActionScore;
