//! Reference policies that act on the observation tensor alone.
//!
//! Candidates at a pass are the meshes still to acquire whose current-pass
//! probability (frame 1) is positive; a zero probability encodes an
//! inaccessible mesh.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::AgentError;
use crate::grid::{Cell, MeshSet};

/// A policy mapping observations to actions in `0..=K`.
pub trait Agent: Send {
    fn name(&self) -> &str;

    /// Called before each episode.
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation) -> Result<usize, AgentError>;
}

/// Meshes that are unvalidated and accessible at the current pass, ascending.
pub fn candidates<'a>(obs: &'a Observation, ms: &'a MeshSet) -> impl Iterator<Item = usize> + 'a {
    ms.meshes().iter().enumerate().filter_map(move |(k, c)| {
        let frames = obs.cell(c.lat, c.lon);
        (frames[0] > 0.0 && frames.get(1).is_some_and(|&p| p > 0.0)).then_some(k)
    })
}

/// Uniform choice among candidates, or do-nothing when there is none.
pub fn random_action<R: Rng + ?Sized>(obs: &Observation, ms: &MeshSet, rng: &mut R) -> usize {
    let pool: Vec<usize> = candidates(obs, ms).collect();
    if pool.is_empty() {
        0
    } else {
        pool[rng.random_range(0..pool.len())] + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    /// Weight on future passes.
    pub alpha: f64,
    /// Per-pass discount favouring near passes.
    pub beta: f64,
    pub n_pass: usize,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.99, n_pass: 20 }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n_pass < 2 {
            return Err(AgentError::BadParams(format!("n_pass must be >= 2, got {}", self.n_pass)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(AgentError::BadParams(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(AgentError::BadParams("alpha must be finite".into()));
        }
        Ok(())
    }

    /// `beta^n` for `n = 2..=n_pass`.
    fn discounts(&self) -> Vec<f64> {
        (2..=self.n_pass).map(|n| self.beta.powi(n as i32)).collect()
    }

    fn check(&self, obs: &Observation) -> Result<(), AgentError> {
        self.validate()?;
        if obs.n_pass() != self.n_pass {
            return Err(AgentError::LookAheadMismatch { expected: self.n_pass, got: obs.n_pass() });
        }
        Ok(())
    }
}

/// `p(m,1) + alpha * (1 - mean_{n=2..N} beta^n p(m,n))` from one cell's frames.
#[inline]
fn score_frames(frames: &[f32], alpha: f64, discounts: &[f64]) -> f64 {
    let future: f64 = discounts.iter().zip(&frames[2..]).map(|(d, &p)| d * p as f64).sum();
    frames[1] as f64 + alpha * (1.0 - future / discounts.len() as f64)
}

/// Trade-off score of the mesh at `cell`.
pub fn heuristic_score(obs: &Observation, cell: Cell, hp: &HeuristicParams) -> Result<f64, AgentError> {
    hp.check(obs)?;
    let [n_lat, n_lon, _] = obs.shape();
    if cell.lat >= n_lat || cell.lon >= n_lon {
        return Err(AgentError::Grid(crate::error::GridError::OutOfBounds {
            lat: cell.lat,
            lon: cell.lon,
            n_lat,
            n_lon,
        }));
    }
    Ok(score_frames(obs.cell(cell.lat, cell.lon), hp.alpha, &hp.discounts()))
}

/// Highest-scoring candidate, lowest mesh index on ties; do-nothing if none.
pub fn heuristic_action(obs: &Observation, ms: &MeshSet, hp: &HeuristicParams) -> Result<usize, AgentError> {
    hp.check(obs)?;
    Ok(best_candidate(obs, ms, hp.alpha, &hp.discounts()))
}

fn best_candidate(obs: &Observation, ms: &MeshSet, alpha: f64, discounts: &[f64]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for k in candidates(obs, ms) {
        let c = ms.meshes()[k];
        let s = score_frames(obs.cell(c.lat, c.lon), alpha, discounts);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map_or(0, |(k, _)| k + 1)
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    ms: Arc<MeshSet>,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(ms: Arc<MeshSet>, seed: u64) -> Self {
        Self { ms, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, obs: &Observation) -> Result<usize, AgentError> {
        Ok(random_action(obs, &self.ms, &mut self.rng))
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicAgent {
    ms: Arc<MeshSet>,
    params: HeuristicParams,
    discounts: Vec<f64>,
}

impl HeuristicAgent {
    pub fn new(ms: Arc<MeshSet>, params: HeuristicParams) -> Result<Self, AgentError> {
        params.validate()?;
        Ok(Self { ms, discounts: params.discounts(), params })
    }

    pub fn params(&self) -> &HeuristicParams {
        &self.params
    }
}

impl Agent for HeuristicAgent {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn act(&mut self, obs: &Observation) -> Result<usize, AgentError> {
        if obs.n_pass() != self.params.n_pass {
            return Err(AgentError::LookAheadMismatch { expected: self.params.n_pass, got: obs.n_pass() });
        }
        Ok(best_candidate(obs, &self.ms, self.params.alpha, &self.discounts))
    }
}

/// Always does nothing. Useful to probe the step cap.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdleAgent;

impl Agent for IdleAgent {
    fn name(&self) -> &str {
        "idle"
    }

    fn act(&mut self, _obs: &Observation) -> Result<usize, AgentError> {
        Ok(0)
    }
}

/// Replays a fixed action list, then does nothing.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAgent {
    actions: Vec<usize>,
    pos: usize,
}

impl ScriptedAgent {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions, pos: 0 }
    }
}

impl Agent for ScriptedAgent {
    fn name(&self) -> &str {
        "scripted"
    }

    fn reset(&mut self, _seed: u64) {
        self.pos = 0;
    }

    fn act(&mut self, _obs: &Observation) -> Result<usize, AgentError> {
        let a = self.actions.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Heuristic,
    Idle,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::Heuristic => "heuristic",
            AgentKind::Idle => "idle",
        }
    }

    pub fn build(&self, ms: Arc<MeshSet>, hp: HeuristicParams) -> Result<Box<dyn Agent>, AgentError> {
        Ok(match self {
            AgentKind::Random => Box::new(RandomAgent::new(ms, 0)),
            AgentKind::Heuristic => Box::new(HeuristicAgent::new(ms, hp)?),
            AgentKind::Idle => Box::new(IdleAgent),
        })
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(AgentKind::Random),
            "heuristic" => Ok(AgentKind::Heuristic),
            "idle" | "noop" => Ok(AgentKind::Idle),
            other => Err(AgentError::UnknownAgent(other.to_string())),
        }
    }
}
