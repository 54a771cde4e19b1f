//! The acquisition-scheduling environment.
//!
//! One step is one satellite pass. Action `0` does nothing; action `k` in
//! `1..=K` asks the current satellite to acquire mesh `k - 1`. An acquisition
//! of an accessible, not yet validated mesh draws the actual cloud cover and
//! validates the mesh when the cover is at most `c_max`, earning reward 1.
//!
//! The observation is an `(n_lat, n_lon, n_pass + 1)` tensor stored
//! channel-last in row-major order. Frame 0 is the status frame (1 = still
//! to acquire). Frame `n` holds the validation probability of each mesh at
//! pass `t + n - 1`, or 0 where the mesh is not accessible during that pass
//! (or the pass lies beyond the schedule).

use std::sync::Arc;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{EnvError, WeatherError};
use crate::grid::MeshSet;
use crate::passes::{generate_schedule, ConstellationParams, PassSchedule};
use crate::weather::{Timestamp, WeatherField, WeatherModelParams};

pub const DEFAULT_GAMMA: f64 = 0.99;

/// Where an episode's passes come from.
#[derive(Debug, Clone)]
pub enum ScheduleSource {
    /// A fresh schedule per episode, starting at the episode's start date.
    Generate(ConstellationParams),
    /// The same schedule for every episode; the start date is ignored.
    Fixed(Arc<PassSchedule>),
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub mesh_set: Arc<MeshSet>,
    pub weather: Arc<WeatherField>,
    pub model: WeatherModelParams,
    pub schedule: ScheduleSource,
    /// Look-ahead passes in the observation.
    pub n_pass: usize,
    /// Step cap; `10 * K` unless overridden.
    pub t_max: usize,
    pub gamma: f64,
    /// Inclusive bounds for randomly drawn start dates.
    pub start_range: Option<(Timestamp, Timestamp)>,
}

impl EnvConfig {
    pub fn new(
        mesh_set: Arc<MeshSet>,
        weather: Arc<WeatherField>,
        model: WeatherModelParams,
        schedule: ScheduleSource,
        n_pass: usize,
    ) -> Result<Self, EnvError> {
        let t_max = 10 * mesh_set.len();
        let cfg = Self { mesh_set, weather, model, schedule, n_pass, t_max, gamma: DEFAULT_GAMMA, start_range: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_t_max(mut self, t_max: usize) -> Result<Self, EnvError> {
        self.t_max = t_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, EnvError> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_start_range(mut self, from: Timestamp, to: Timestamp) -> Result<Self, EnvError> {
        self.start_range = Some((from, to));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        let (g, w) = (self.mesh_set.grid(), self.weather.grid());
        if (g.n_lat, g.n_lon) != (w.n_lat, w.n_lon) {
            return bad(format!(
                "weather grid {}x{} does not match mesh grid {}x{}",
                w.n_lat, w.n_lon, g.n_lat, g.n_lon
            ));
        }
        if self.n_pass == 0 {
            return bad("n_pass must be >= 1".into());
        }
        if self.t_max == 0 {
            return bad("t_max must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if let Some((a, b)) = self.start_range {
            if b < a {
                return bad("start range is reversed".into());
            }
        }
        self.model.validate()?;
        match &self.schedule {
            ScheduleSource::Generate(cp) => cp.validate(g.n_lon)?,
            ScheduleSource::Fixed(s) => {
                if let Some(m) =
                    s.windows().iter().flat_map(|w| w.accessible.iter()).find(|&&m| m >= self.mesh_set.len())
                {
                    return bad(format!("fixed schedule references unknown mesh {m}"));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.mesh_set.len()
    }

    /// `K + 1`, including do-nothing.
    pub fn action_count(&self) -> usize {
        self.k() + 1
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        let g = self.mesh_set.grid();
        [g.n_lat, g.n_lon, self.n_pass + 1]
    }

    /// Passes generated per episode: enough for the look-ahead at `t_max`.
    pub fn passes_per_episode(&self) -> usize {
        self.t_max + self.n_pass
    }

    /// Range of admissible start dates for generated schedules.
    pub fn valid_starts(&self) -> Result<(Timestamp, Timestamp), EnvError> {
        let cp = match &self.schedule {
            ScheduleSource::Generate(cp) => cp,
            ScheduleSource::Fixed(s) => return Ok((s.first_time(), s.first_time())),
        };
        let n = self.passes_per_episode() as f64;
        let span = ((n - 0.5) * cp.spacing_seconds()).round() as i64 + cp.jitter_seconds as i64;
        let mut lo = self.weather.epoch();
        let mut hi = self.weather.end() - Duration::seconds(span + 1);
        if let Some((a, b)) = self.start_range {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        if hi < lo {
            return Err(EnvError::Config(format!(
                "weather field ({} .. {}) too short for {} passes from the requested start range",
                self.weather.epoch().to_rfc3339(),
                self.weather.end().to_rfc3339(),
                self.passes_per_episode()
            )));
        }
        Ok((lo, hi))
    }
}

/// Mutable per-episode state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvState {
    /// Per mesh: `true` while still to acquire. Never flips back once false.
    pub status: Vec<bool>,
    /// Current pass index.
    pub t: usize,
    /// Timestamp of the current pass (of the last pass once past the schedule).
    pub time: Timestamp,
    pub remaining: usize,
    pub done: bool,
}

/// Channel-last observation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Observation {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_parts(shape: [usize; 3], data: Vec<f32>) -> Option<Self> {
        (shape.iter().product::<usize>() == data.len()).then_some(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Number of probability frames (`n_pass`).
    pub fn n_pass(&self) -> usize {
        self.shape[2] - 1
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, lat: usize, lon: usize, frame: usize) -> usize {
        (lat * self.shape[1] + lon) * self.shape[2] + frame
    }

    #[inline]
    pub fn get(&self, lat: usize, lon: usize, frame: usize) -> f32 {
        self.data[self.offset(lat, lon, frame)]
    }

    #[inline]
    fn set(&mut self, lat: usize, lon: usize, frame: usize, v: f32) {
        let o = self.offset(lat, lon, frame);
        self.data[o] = v;
    }

    /// All frames of one cell: status followed by `n_pass` probabilities.
    #[inline]
    pub fn cell(&self, lat: usize, lon: usize) -> &[f32] {
        let o = self.offset(lat, lon, 0);
        &self.data[o..o + self.shape[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PassForecast {
    mesh: usize,
    forecast: f64,
    probability: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepInfo {
    /// Pass index at which the action was taken.
    pub t: usize,
    pub chosen_mesh: Option<usize>,
    /// Actual cover clamped to `[0, 1]`, present when a draw happened.
    pub sampled_actual_cover: Option<f64>,
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    state: EnvState,
    start: Timestamp,
    schedule: Arc<PassSchedule>,
    forecasts: Vec<Vec<PassForecast>>,
    draws: ChaCha8Rng,
    horizon: usize,
}

/// A single environment instance. Not shared between threads; create one
/// per worker.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: Arc<EnvConfig>,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(cfg: Arc<EnvConfig>) -> Self {
        Self { cfg, episode: None }
    }

    pub fn config(&self) -> &Arc<EnvConfig> {
        &self.cfg
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn schedule(&self) -> Option<&Arc<PassSchedule>> {
        self.episode.as_ref().map(|e| &e.schedule)
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.episode.as_ref().map(|e| e.start)
    }

    /// Starts a new episode. `start = None` draws a start date from the seed.
    pub fn reset(&mut self, seed: u64, start: Option<Timestamp>) -> Result<Observation, EnvError> {
        let cfg = &self.cfg;
        let mut setup = ChaCha8Rng::seed_from_u64(seed);
        let mut draws = ChaCha8Rng::seed_from_u64(seed);
        draws.set_stream(1);

        let (start, schedule) = match &cfg.schedule {
            ScheduleSource::Fixed(s) => (s.first_time(), Arc::clone(s)),
            ScheduleSource::Generate(cp) => {
                let start = match start {
                    Some(s) => s,
                    None => {
                        let (lo, hi) = cfg.valid_starts()?;
                        let span = (hi - lo).num_seconds();
                        lo + Duration::seconds(setup.random_range(0..=span))
                    }
                };
                if start < cfg.weather.epoch() {
                    return Err(out_of_coverage(&cfg.weather, start));
                }
                let s = generate_schedule(&cfg.mesh_set, cp, start, cfg.passes_per_episode(), &mut setup)?;
                (start, Arc::new(s))
            }
        };

        let grid = cfg.mesh_set.grid();
        let mut forecasts = Vec::with_capacity(schedule.len());
        for w in schedule.windows() {
            let frame = cfg.weather.frame_index(w.time)?;
            let values = cfg.weather.frame(frame);
            forecasts.push(
                w.accessible
                    .iter()
                    .map(|&mesh| {
                        let cell = cfg.mesh_set.meshes()[mesh];
                        let forecast = values[grid.offset(cell)] as f64;
                        PassForecast { mesh, forecast, probability: cfg.model.validation_probability(forecast) as f32 }
                    })
                    .collect(),
            );
        }

        let k = cfg.k();
        let state = EnvState { status: vec![true; k], t: 0, time: schedule.first_time(), remaining: k, done: false };
        let horizon = cfg.t_max.min(schedule.len());
        self.episode = Some(Episode { state, start, schedule, forecasts, draws, horizon });
        Ok(self.observation().expect("episode just created"))
    }

    /// Observation of the current state.
    pub fn observation(&self) -> Option<Observation> {
        let ep = self.episode.as_ref()?;
        let cfg = &self.cfg;
        let mut obs = Observation::zeros(cfg.obs_shape());
        for (mesh, cell) in cfg.mesh_set.meshes().iter().enumerate() {
            if ep.state.status[mesh] {
                obs.set(cell.lat, cell.lon, 0, 1.0);
            }
        }
        for n in 1..=cfg.n_pass {
            let Some(pass) = ep.forecasts.get(ep.state.t + n - 1) else { break };
            for pf in pass {
                let cell = cfg.mesh_set.meshes()[pf.mesh];
                obs.set(cell.lat, cell.lon, n, pf.probability);
            }
        }
        Some(obs)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let k = self.cfg.k();
        if action > k {
            return Err(EnvError::BadAction { action, max: k });
        }
        let ep = self.episode.as_mut().ok_or(EnvError::NoEpisode)?;
        if ep.state.done {
            return Err(EnvError::EpisodeDone);
        }
        let t = ep.state.t;
        let mut info = StepInfo { t, ..StepInfo::default() };
        let mut reward = 0.0;
        if action > 0 {
            let mesh = action - 1;
            info.chosen_mesh = Some(mesh);
            if ep.state.status[mesh] {
                let pass = &ep.forecasts[t];
                if let Ok(i) = pass.binary_search_by_key(&mesh, |pf| pf.mesh) {
                    let sample = self.cfg.model.sample_actual_cover(pass[i].forecast, &mut ep.draws);
                    info.sampled_actual_cover = Some(sample.clamped);
                    if self.cfg.model.validates(&sample) {
                        info.validated = true;
                        ep.state.status[mesh] = false;
                        ep.state.remaining -= 1;
                        reward = 1.0;
                    }
                }
            }
        }
        ep.state.t += 1;
        if let Some(w) = ep.schedule.get(ep.state.t) {
            ep.state.time = w.time;
        }
        ep.state.done = ep.state.remaining == 0 || ep.state.t >= ep.horizon;
        let done = ep.state.done;
        let observation = self.observation().expect("episode exists");
        Ok(StepResult { observation, reward, done, info })
    }
}

fn out_of_coverage(weather: &WeatherField, time: Timestamp) -> EnvError {
    EnvError::Weather(WeatherError::TimeOutOfRange {
        time: time.to_rfc3339(),
        start: weather.epoch().to_rfc3339(),
        end: weather.end().to_rfc3339(),
    })
}

/// `sum_t gamma^t r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
