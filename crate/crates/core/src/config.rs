//! JSON scenario files.
//!
//! A scenario names the AOI mask, the forecast source, the constellation,
//! the error model and the episode settings. Relative paths are resolved
//! against the directory of the scenario file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::HeuristicParams;
use crate::env::{EnvConfig, ScheduleSource, DEFAULT_GAMMA};
use crate::error::HarnessError;
use crate::grid::{self, GridSpec, MaskDocument, MeshSet};
use crate::passes::ConstellationParams;
use crate::weather::{generate_synthetic_weather, SynthParams, Timestamp, WeatherField, WeatherModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// `france_like` (122 meshes) or `tiny` (20 meshes on 6x6).
    Builtin(String),
    File(PathBuf),
    Inline(MaskDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherFiles {
    pub meta: PathBuf,
    pub data: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWeather {
    pub seed: u64,
    pub epoch: Timestamp,
    pub step_seconds: u32,
    pub days: f64,
    #[serde(default)]
    pub params: SynthParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherSource {
    Files(WeatherFiles),
    Synthetic(SyntheticWeather),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRange {
    pub from: Timestamp,
    pub to: Timestamp,
}

/// Heuristic knobs; the look-ahead always equals the scenario's `n_pass`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        let d = HeuristicParams::default();
        Self { alpha: d.alpha, beta: d.beta }
    }
}

fn default_n_pass() -> usize {
    20
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub mask: MaskSource,
    pub weather: WeatherSource,
    #[serde(default)]
    pub weather_model: WeatherModelParams,
    #[serde(default)]
    pub constellation: ConstellationParams,
    #[serde(default = "default_n_pass")]
    pub n_pass: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Defaults to `10 * K`.
    #[serde(default)]
    pub t_max: Option<usize>,
    #[serde(default)]
    pub start_range: Option<StartRange>,
    #[serde(default)]
    pub heuristic: HeuristicWeights,
    #[serde(default)]
    pub master_seed: u64,
}

/// Fully materialized scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub env: Arc<EnvConfig>,
    pub heuristic: HeuristicParams,
    pub master_seed: u64,
    pub digest: String,
}

impl ScenarioConfig {
    /// 122-mesh France-like AOI, four satellites, two years of six-hourly
    /// synthetic forecasts; starts drawn from the second year.
    pub fn france_like() -> Self {
        let epoch = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap();
        Self {
            mask: MaskSource::Builtin("france_like".into()),
            weather: WeatherSource::Synthetic(SyntheticWeather {
                seed: 2015,
                epoch,
                step_seconds: 6 * 3600,
                days: 730.0,
                params: SynthParams::default(),
            }),
            weather_model: WeatherModelParams::default(),
            constellation: ConstellationParams::default(),
            n_pass: default_n_pass(),
            gamma: DEFAULT_GAMMA,
            t_max: None,
            start_range: Some(StartRange { from: epoch, to: epoch + Duration::days(365) }),
            heuristic: HeuristicWeights::default(),
            master_seed: 0,
        }
    }

    /// Desk-scale scenario: 20 meshes on a 6x6 grid, two satellites.
    pub fn tiny() -> Self {
        let epoch = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap();
        Self {
            mask: MaskSource::Builtin("tiny".into()),
            weather: WeatherSource::Synthetic(SyntheticWeather {
                seed: 7,
                epoch,
                step_seconds: 6 * 3600,
                days: 200.0,
                params: SynthParams { blur_radius: 1, ..SynthParams::default() },
            }),
            weather_model: WeatherModelParams::default(),
            constellation: ConstellationParams {
                n_sats: 2,
                passes_per_sat_per_day: 1.0,
                corridor_width_cols: 3,
                drift_cols_per_pass: 2,
                jitter_seconds: 1800,
            },
            n_pass: 5,
            gamma: DEFAULT_GAMMA,
            t_max: None,
            start_range: None,
            heuristic: HeuristicWeights::default(),
            master_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Loads a scenario file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let MaskSource::File(p) = &mut self.mask {
            fix(p);
        }
        if let WeatherSource::Files(f) = &mut self.weather {
            fix(&mut f.meta);
            fix(&mut f.data);
        }
    }

    /// Short hex digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn mesh_set(&self) -> Result<MeshSet, HarnessError> {
        Ok(match &self.mask {
            MaskSource::Builtin(name) => builtin_mask(name)?,
            MaskSource::File(p) => grid::load_mask(p)?,
            MaskSource::Inline(doc) => doc.clone().into_mesh_set()?,
        })
    }

    pub fn weather_field(&self, grid: &GridSpec) -> Result<WeatherField, HarnessError> {
        Ok(match &self.weather {
            WeatherSource::Files(f) => WeatherField::load(&f.meta, &f.data)?,
            WeatherSource::Synthetic(s) => {
                if s.step_seconds == 0 || !s.days.is_finite() || s.days <= 0.0 {
                    return Err(HarnessError::Config("synthetic weather needs step_seconds > 0 and days > 0".into()));
                }
                let n_frames = ((s.days * 86_400.0) / s.step_seconds as f64).ceil() as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
                generate_synthetic_weather(*grid, n_frames, s.epoch, s.step_seconds, &s.params, &mut rng)?
            }
        })
    }

    pub fn build(&self) -> Result<Scenario, HarnessError> {
        let ms = Arc::new(self.mesh_set()?);
        let weather = Arc::new(self.weather_field(ms.grid())?);
        let mut env =
            EnvConfig::new(ms, weather, self.weather_model, ScheduleSource::Generate(self.constellation), self.n_pass)?
                .with_gamma(self.gamma)?;
        if let Some(t_max) = self.t_max {
            env = env.with_t_max(t_max)?;
        }
        if let Some(r) = self.start_range {
            env = env.with_start_range(r.from, r.to)?;
        }
        let heuristic = HeuristicParams { alpha: self.heuristic.alpha, beta: self.heuristic.beta, n_pass: self.n_pass };
        Ok(Scenario { env: Arc::new(env), heuristic, master_seed: self.master_seed, digest: self.digest() })
    }
}

pub fn builtin_mask(name: &str) -> Result<MeshSet, HarnessError> {
    match name {
        "france_like" | "france-like" => Ok(grid::france_like()),
        "tiny" => Ok(tiny_mask()),
        other => Err(HarnessError::Config(format!("unknown builtin mask {other:?} (expected france_like or tiny)"))),
    }
}

/// Octagon on a 6x6 grid, rows of 2, 4, 4, 4, 4, 2 meshes: 20 meshes.
fn tiny_mask() -> MeshSet {
    let grid = GridSpec::new(6, 6, 46.0, 2.0, 0.5).expect("static grid");
    let mask = grid
        .cells()
        .map(|c| match c.lat {
            0 | 5 => (2..=3).contains(&c.lon),
            _ => (1..=4).contains(&c.lon),
        })
        .collect();
    MeshSet::from_flat(grid, mask).expect("non-empty")
}
