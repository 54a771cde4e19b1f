//! Simulator for cloud-aware acquisition scheduling of Earth-observation
//! constellations over a large area of interest.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: the AOI grid and the mesh index mapping
//! - [`weather`]: forecast fields, the forecast-error model, synthetic weather
//! - [`passes`]: satellite pass schedules and accessible meshes
//! - [`env`]: the episodic environment (observation, step, reward)
//! - [`agents`]: random and heuristic reference policies
//! - [`harness`]: episode runner, benchmark batches, statistics, CSV
//! - [`config`]: JSON scenario files
//! - [`protocol`] and [`server`]: the newline-delimited JSON environment server

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod grid;
pub mod harness;
pub mod passes;
pub mod protocol;
pub mod server;
pub mod weather;

pub use agents::{Agent, AgentKind, HeuristicAgent, HeuristicParams, IdleAgent, RandomAgent, ScriptedAgent};
pub use config::{Scenario, ScenarioConfig};
pub use env::{discounted_return, Env, EnvConfig, EnvState, Observation, ScheduleSource, StepInfo, StepResult};
pub use error::{AgentError, EnvError, GridError, HarnessError, ScheduleError, WeatherError};
pub use grid::{Cell, GridSpec, MeshSet};
pub use harness::{BenchmarkPlan, BenchmarkReport, BenchmarkSummary, EpisodeStats};
pub use passes::{ConstellationParams, PassSchedule, PassWindow};
pub use weather::{SynthParams, Timestamp, WeatherField, WeatherModelParams};
