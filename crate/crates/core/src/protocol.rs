//! Newline-delimited JSON messages exchanged with remote trainers.
//!
//! Each request and response is one JSON object on one line, tagged by a
//! `"type"` field. See `PROTOCOL.md` at the repository root for examples.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation, StepInfo, StepResult};
use crate::weather::Timestamp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Flat array of decimal numbers.
    #[default]
    Json,
    /// Base64 of little-endian `f32` values.
    B64f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello {
        /// Session default for observation encoding.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
    },
    Reset {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_date: Option<Timestamp>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
    },
    Step {
        action: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        encoding: Option<Encoding>,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Spec(SpecMessage),
    State(StateMessage),
    Error { code: ErrorCode, message: String },
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NoEpisode,
    BadAction,
    EpisodeDone,
    ResetFailed,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NoEpisode => "no_episode",
            ErrorCode::BadAction => "bad_action",
            ErrorCode::EpisodeDone => "episode_done",
            ErrorCode::ResetFailed => "reset_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecMessage {
    pub n_lat: usize,
    pub n_lon: usize,
    pub n_pass: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub action_count: usize,
    pub t_max: usize,
    pub gamma: f64,
    /// `[lat_idx, lon_idx]` of mesh `i`; action `i + 1` acquires it.
    pub meshes: Vec<[usize; 2]>,
}

impl SpecMessage {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        let [n_lat, n_lon, _] = cfg.obs_shape();
        Self {
            n_lat,
            n_lon,
            n_pass: cfg.n_pass,
            k: cfg.k(),
            action_count: cfg.action_count(),
            t_max: cfg.t_max,
            gamma: cfg.gamma,
            meshes: cfg.mesh_set.meshes().iter().map(|c| [c.lat, c.lon]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub observation: WireObservation,
    pub reward: f64,
    pub done: bool,
    pub info: WireInfo,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireInfo {
    pub t: usize,
    pub chosen_mesh: Option<usize>,
    pub sampled_actual_cover: Option<f64>,
    pub validated: bool,
}

impl From<&StepInfo> for WireInfo {
    fn from(i: &StepInfo) -> Self {
        Self {
            t: i.t,
            chosen_mesh: i.chosen_mesh,
            sampled_actual_cover: i.sampled_actual_cover,
            validated: i.validated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireData {
    Numbers(Vec<f32>),
    Base64(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    pub shape: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
    pub data: WireData,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("observation data does not match shape {0:?}")]
    Shape([usize; 3]),
    #[error("invalid base64 payload: {0}")]
    Base64(String),
    #[error("encoding field and data kind disagree")]
    Mismatch,
}

impl WireObservation {
    pub fn encode(obs: &Observation, encoding: Encoding) -> Self {
        match encoding {
            Encoding::Json => Self { shape: obs.shape(), encoding: None, data: WireData::Numbers(obs.data().to_vec()) },
            Encoding::B64f32 => {
                let bytes: Vec<u8> = obs.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                Self { shape: obs.shape(), encoding: Some(Encoding::B64f32), data: WireData::Base64(B64.encode(bytes)) }
            }
        }
    }

    pub fn decode(&self) -> Result<Observation, DecodeError> {
        let data = match (&self.data, self.encoding.unwrap_or_default()) {
            (WireData::Numbers(v), Encoding::Json) => v.clone(),
            (WireData::Base64(s), Encoding::B64f32) => {
                let bytes = B64.decode(s).map_err(|e| DecodeError::Base64(e.to_string()))?;
                if bytes.len() % 4 != 0 {
                    return Err(DecodeError::Shape(self.shape));
                }
                bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()
            }
            _ => return Err(DecodeError::Mismatch),
        };
        Observation::from_parts(self.shape, data).ok_or(DecodeError::Shape(self.shape))
    }
}

impl StateMessage {
    pub fn from_reset(obs: &Observation, encoding: Encoding) -> Self {
        Self {
            observation: WireObservation::encode(obs, encoding),
            reward: 0.0,
            done: false,
            info: WireInfo::default(),
        }
    }

    pub fn from_step(step: &StepResult, encoding: Encoding) -> Self {
        Self {
            observation: WireObservation::encode(&step.observation, encoding),
            reward: step.reward,
            done: step.done,
            info: WireInfo::from(&step.info),
        }
    }
}

/// Serializes a message as one line, newline included.
pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("protocol messages serialize");
    s.push('\n');
    s
}
