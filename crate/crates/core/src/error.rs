use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have at least one row and column, got {n_lat}x{n_lon}")]
    EmptyGrid { n_lat: usize, n_lon: usize },
    #[error("grid resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid corner coordinates must be finite")]
    BadCorner,
    #[error("mask shape does not match grid {expected:?}: {rows} rows, offending row {row:?}")]
    MaskShape { expected: (usize, usize), rows: usize, row: Option<(usize, usize)> },
    #[error("flat mask has {got} entries, grid has {expected} cells")]
    FlatMaskLength { expected: usize, got: usize },
    #[error("mask selects no cell")]
    EmptyMask,
    #[error("mask value at ({lat}, {lon}) must be 0 or 1, got {value}")]
    MaskValue { lat: usize, lon: usize, value: u8 },
    #[error("cell ({lat}, {lon}) outside {n_lat}x{n_lon} grid")]
    OutOfBounds { lat: usize, lon: usize, n_lat: usize, n_lon: usize },
    #[error("malformed mask document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("invalid weather model: {0}")]
    BadModel(String),
    #[error("invalid synthetic weather parameters: {0}")]
    BadSynth(String),
    #[error("weather blob has {got} values, metadata implies {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weather blob length {0} is not a multiple of 4 bytes")]
    RaggedBlob(usize),
    #[error("cloud cover {value} at value index {index} outside [0, 1]")]
    OutOfRangeValue { index: usize, value: f32 },
    #[error("time {time} outside weather coverage [{start}, {end})")]
    TimeOutOfRange { time: String, start: String, end: String },
    #[error("malformed weather metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("weather metadata json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("weather file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid constellation parameters: {0}")]
    BadParams(String),
    #[error("pass index {t} outside schedule of {len} passes")]
    OutOfRange { t: usize, len: usize },
    #[error("schedule must contain at least one pass")]
    Empty,
    #[error("pass timestamps must be strictly increasing (pass {0})")]
    Unordered(usize),
    #[error("pass {pass} references mesh {mesh}, only {k} meshes exist")]
    UnknownMesh { pass: usize, mesh: usize, k: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("action {action} outside 0..={max}")]
    BadAction { action: usize, max: usize },
    #[error("no episode in progress; call reset first")]
    NoEpisode,
    #[error("episode is finished; call reset")]
    EpisodeDone,
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("heuristic parameters: {0}")]
    BadParams(String),
    #[error("heuristic expects {expected} look-ahead passes, observation has {got}")]
    LookAheadMismatch { expected: usize, got: usize },
    #[error("unknown agent {0:?} (expected random, heuristic or idle)")]
    UnknownAgent(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("config: {0}")]
    Config(String),
    #[error("config json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}
