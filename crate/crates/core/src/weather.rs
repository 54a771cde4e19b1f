//! Cloud-cover forecasts and the forecast-error model.
//!
//! The actual cover seen at acquisition time is modelled as
//! `c_a ~ Normal(c_f, sigma(c_f)^2)` with `sigma(x) = u * x + v`. An
//! acquisition validates when `c_a <= c_max`, so the validation probability
//! of a mesh with forecast `c_f` is `Phi((c_max - c_f) / sigma(c_f))`.
//!
//! Forecast fields are stored as `f32` in time-major, row-major order, which
//! is also the on-disk layout of the `.f32` blob next to its JSON sidecar.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::WeatherError;
use crate::grid::{Cell, GridSpec};

pub type Timestamp = DateTime<Utc>;

/// Parameters of the forecast-error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherModelParams {
    pub u: f64,
    pub v: f64,
    pub c_max: f64,
}

impl Default for WeatherModelParams {
    fn default() -> Self {
        Self { u: 0.1, v: 0.2, c_max: 0.2 }
    }
}

/// One draw of the actual cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverSample {
    /// Unclamped Gaussian draw, used for thresholding.
    pub raw: f64,
    /// `raw` clamped to `[0, 1]`, for traces and display.
    pub clamped: f64,
}

impl WeatherModelParams {
    pub fn new(u: f64, v: f64, c_max: f64) -> Result<Self, WeatherError> {
        let p = Self { u, v, c_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        if !self.v.is_finite() || self.v <= 0.0 {
            return Err(WeatherError::BadModel(format!("v must be > 0, got {}", self.v)));
        }
        if !self.u.is_finite() || self.u < 0.0 {
            return Err(WeatherError::BadModel(format!("u must be >= 0, got {}", self.u)));
        }
        if !(self.c_max > 0.0 && self.c_max < 1.0) {
            return Err(WeatherError::BadModel(format!("c_max must lie in (0, 1), got {}", self.c_max)));
        }
        Ok(())
    }

    /// Forecast-error standard deviation. Panics if `c_f` is outside `[0, 1]`.
    #[inline]
    pub fn sigma(&self, c_f: f64) -> f64 {
        assert!((0.0..=1.0).contains(&c_f), "cloud cover {c_f} outside [0, 1]");
        self.u * c_f + self.v
    }

    /// `P(c_a <= c_max | c_f)`.
    #[inline]
    pub fn validation_probability(&self, c_f: f64) -> f64 {
        normal_cdf((self.c_max - c_f) / self.sigma(c_f))
    }

    /// Draws the actual cover around a forecast. Consumes exactly one
    /// standard-normal variate from `rng`.
    pub fn sample_actual_cover<R: Rng + ?Sized>(&self, c_f: f64, rng: &mut R) -> CoverSample {
        let sigma = self.sigma(c_f);
        let z: f64 = rng.sample(StandardNormal);
        let raw = c_f + sigma * z;
        CoverSample { raw, clamped: raw.clamp(0.0, 1.0) }
    }

    pub fn validates(&self, sample: &CoverSample) -> bool {
        sample.raw <= self.c_max
    }
}

/// Standard normal CDF, `0.5 * erfc(-x / sqrt(2))`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Time-indexed forecast cloud-cover grids.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherField {
    grid: GridSpec,
    epoch: Timestamp,
    step_seconds: u32,
    n_frames: usize,
    values: Vec<f32>,
}

impl WeatherField {
    /// Builds a field from time-major, row-major values.
    pub fn new(grid: GridSpec, epoch: Timestamp, step_seconds: u32, values: Vec<f32>) -> Result<Self, WeatherError> {
        grid.validate()?;
        if step_seconds == 0 {
            return Err(WeatherError::Meta("step_seconds must be positive".into()));
        }
        let cells = grid.n_cells();
        if values.is_empty() || !values.len().is_multiple_of(cells) {
            return Err(WeatherError::LengthMismatch {
                expected: cells * (values.len() / cells).max(1),
                got: values.len(),
            });
        }
        check_range(&values)?;
        Ok(Self { grid, epoch, step_seconds, n_frames: values.len() / cells, values })
    }

    pub fn constant(
        grid: GridSpec,
        epoch: Timestamp,
        step_seconds: u32,
        n_frames: usize,
        value: f32,
    ) -> Result<Self, WeatherError> {
        Self::new(grid, epoch, step_seconds, vec![value; grid.n_cells() * n_frames])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn epoch(&self) -> Timestamp {
        self.epoch
    }

    pub fn step_seconds(&self) -> u32 {
        self.step_seconds
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// First instant past the last frame's validity.
    pub fn end(&self) -> Timestamp {
        self.epoch + Duration::seconds(self.step_seconds as i64 * self.n_frames as i64)
    }

    pub fn covers(&self, time: Timestamp) -> bool {
        time >= self.epoch && time < self.end()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let cells = self.grid.n_cells();
        &self.values[index * cells..(index + 1) * cells]
    }

    /// Index of the latest frame at or before `time`.
    pub fn frame_index(&self, time: Timestamp) -> Result<usize, WeatherError> {
        if !self.covers(time) {
            return Err(WeatherError::TimeOutOfRange {
                time: time.to_rfc3339(),
                start: self.epoch.to_rfc3339(),
                end: self.end().to_rfc3339(),
            });
        }
        let elapsed = (time - self.epoch).num_seconds();
        Ok((elapsed / self.step_seconds as i64) as usize)
    }

    pub fn forecast_at(&self, time: Timestamp, cell: Cell) -> Result<f64, WeatherError> {
        self.grid.check(cell)?;
        let frame = self.frame_index(time)?;
        Ok(self.frame(frame)[self.grid.offset(cell)] as f64)
    }

    pub fn meta(&self) -> WeatherMeta {
        WeatherMeta {
            n_frames: self.n_frames,
            n_lat: self.grid.n_lat,
            n_lon: self.grid.n_lon,
            epoch: self.epoch,
            step_seconds: self.step_seconds,
            lat0: self.grid.lat0,
            lon0: self.grid.lon0,
            res_deg: self.grid.res_deg,
        }
    }

    /// Little-endian `f32` blob.
    pub fn to_blob(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn save(&self, meta_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<(), WeatherError> {
        let meta_path = meta_path.as_ref();
        let data_path = data_path.as_ref();
        let meta = serde_json::to_string_pretty(&self.meta())?;
        fs::write(meta_path, meta).map_err(|e| io_err(meta_path, e))?;
        fs::write(data_path, self.to_blob()).map_err(|e| io_err(data_path, e))?;
        Ok(())
    }

    pub fn load(meta_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<Self, WeatherError> {
        let meta_path = meta_path.as_ref();
        let data_path = data_path.as_ref();
        let text = fs::read_to_string(meta_path).map_err(|e| io_err(meta_path, e))?;
        let meta: WeatherMeta = serde_json::from_str(&text)?;
        let blob = fs::read(data_path).map_err(|e| io_err(data_path, e))?;
        load_weather_field(&meta, &blob)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> WeatherError {
    WeatherError::Io { path: path.display().to_string(), source }
}

fn check_range(values: &[f32]) -> Result<(), WeatherError> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(WeatherError::OutOfRangeValue { index, value: values[index] }),
        None => Ok(()),
    }
}

/// JSON sidecar of a weather blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherMeta {
    pub n_frames: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    pub epoch: Timestamp,
    pub step_seconds: u32,
    pub lat0: f64,
    pub lon0: f64,
    pub res_deg: f64,
}

/// Decodes a little-endian `f32` blob described by `meta`.
pub fn load_weather_field(meta: &WeatherMeta, blob: &[u8]) -> Result<WeatherField, WeatherError> {
    let grid = GridSpec::new(meta.n_lat, meta.n_lon, meta.lat0, meta.lon0, meta.res_deg)?;
    if meta.n_frames == 0 {
        return Err(WeatherError::Meta("n_frames must be positive".into()));
    }
    if !blob.len().is_multiple_of(4) {
        return Err(WeatherError::RaggedBlob(blob.len()));
    }
    let expected = meta.n_frames * grid.n_cells();
    if blob.len() / 4 != expected {
        return Err(WeatherError::LengthMismatch { expected, got: blob.len() / 4 });
    }
    let values: Vec<f32> = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    WeatherField::new(grid, meta.epoch, meta.step_seconds, values)
}

/// Knobs of the synthetic forecast generator.
///
/// Each cell follows a unit-variance AR(1) latent process
/// `x' = rho * x + sqrt(1 - rho^2) * eps` whose innovations are box-blurred
/// over `blur_radius` cells. Cover is `logistic(offset + bias + scale * x)`
/// where `bias` is a static, spatially smoothed per-cell climate offset with
/// standard deviation `spatial_bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub rho: f64,
    pub blur_radius: usize,
    pub offset: f64,
    pub scale: f64,
    pub spatial_bias: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { rho: 0.9, blur_radius: 2, offset: 0.6, scale: 2.5, spatial_bias: 0.8 }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(WeatherError::BadSynth(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !self.offset.is_finite()
            || !self.scale.is_finite()
            || !self.spatial_bias.is_finite()
            || self.spatial_bias < 0.0
        {
            return Err(WeatherError::BadSynth(
                "offset, scale and spatial_bias must be finite, spatial_bias >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// The pre-squash latent state of the synthetic generator.
#[derive(Debug, Clone)]
pub struct LatentProcess {
    grid: GridSpec,
    params: SynthParams,
    state: Vec<f64>,
    bias: Vec<f64>,
}

impl LatentProcess {
    /// Starts the process in its stationary distribution.
    pub fn new<R: Rng + ?Sized>(grid: GridSpec, params: SynthParams, rng: &mut R) -> Result<Self, WeatherError> {
        grid.validate()?;
        params.validate()?;
        let bias = smoothed_noise(&grid, params.blur_radius.max(1) * 2, rng)
            .into_iter()
            .map(|b| b * params.spatial_bias)
            .collect();
        let state = smoothed_noise(&grid, params.blur_radius, rng);
        Ok(Self { grid, params, state, bias })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let eps = smoothed_noise(&self.grid, self.params.blur_radius, rng);
        let rho = self.params.rho;
        let innov = (1.0 - rho * rho).sqrt();
        for (x, e) in self.state.iter_mut().zip(eps) {
            *x = rho * *x + innov * e;
        }
    }

    /// Current state mapped to cloud cover in `[0, 1]`.
    pub fn cover(&self) -> impl Iterator<Item = f32> + '_ {
        self.state.iter().zip(&self.bias).map(|(x, b)| {
            let z = self.params.offset + b + self.params.scale * x;
            (1.0 / (1.0 + (-z).exp())) as f32
        })
    }
}

/// Unit-variance spatially box-blurred Gaussian noise.
fn smoothed_noise<R: Rng + ?Sized>(grid: &GridSpec, radius: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..grid.n_cells()).map(|_| rng.sample(StandardNormal)).collect();
    if radius == 0 {
        return raw;
    }
    let (n_lat, n_lon) = (grid.n_lat, grid.n_lon);
    let mut out = vec![0.0; raw.len()];
    for i in 0..n_lat {
        for j in 0..n_lon {
            let (i0, i1) = (i.saturating_sub(radius), (i + radius).min(n_lat - 1));
            let (j0, j1) = (j.saturating_sub(radius), (j + radius).min(n_lon - 1));
            let mut sum = 0.0;
            for ii in i0..=i1 {
                for jj in j0..=j1 {
                    sum += raw[ii * n_lon + jj];
                }
            }
            let count = ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
            out[i * n_lon + j] = sum / count.sqrt();
        }
    }
    out
}

/// Generates an autocorrelated, spatially smooth forecast field.
pub fn generate_synthetic_weather<R: Rng + ?Sized>(
    grid: GridSpec,
    n_frames: usize,
    epoch: Timestamp,
    step_seconds: u32,
    params: &SynthParams,
    rng: &mut R,
) -> Result<WeatherField, WeatherError> {
    if n_frames == 0 {
        return Err(WeatherError::BadSynth("n_frames must be >= 1".into()));
    }
    let mut process = LatentProcess::new(grid, *params, rng)?;
    let mut values = Vec::with_capacity(n_frames * grid.n_cells());
    for frame in 0..n_frames {
        if frame > 0 {
            process.advance(rng);
        }
        values.extend(process.cover());
    }
    WeatherField::new(grid, epoch, step_seconds, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::TimeZone;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Frozen with mpmath at 40 digits: ncdf((c_max - c_f) / (u*c_f + v)).
    const PHI_AT_0: f64 = 0.841_344_746_068_542_9;
    const PHI_AT_1: f64 = 0.003_830_380_567_589_735_6;
    const PHI_AT_HALF: f64 = 0.115_069_670_221_708_27;

    fn reference_model() -> WeatherModelParams {
        WeatherModelParams::default()
    }

    fn epoch() -> Timestamp {
        Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn sigma_values() {
        let m = reference_model();
        assert_eq!(m.sigma(0.0), 0.2);
        assert_abs_diff_eq!(m.sigma(1.0), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.sigma(0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    #[should_panic]
    fn sigma_rejects_out_of_range() {
        reference_model().sigma(1.5);
    }

    #[test]
    fn validation_probability_values() {
        let m = reference_model();
        assert_abs_diff_eq!(m.validation_probability(0.2), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.validation_probability(0.0), PHI_AT_0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.validation_probability(1.0), PHI_AT_1, epsilon = 1e-12);
        assert_abs_diff_eq!(m.validation_probability(0.5), PHI_AT_HALF, epsilon = 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(WeatherModelParams::new(0.1, 0.0, 0.2).is_err());
        assert!(WeatherModelParams::new(-0.1, 0.2, 0.2).is_err());
        assert!(WeatherModelParams::new(0.1, 0.2, 1.0).is_err());
        assert!(WeatherModelParams::new(0.1, 0.2, 0.2).is_ok());
    }

    #[test]
    fn zero_variance_limit_returns_forecast() {
        let m = WeatherModelParams::new(0.0, 1e-12, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = m.sample_actual_cover(0.37, &mut rng);
            assert_abs_diff_eq!(s.raw, 0.37, epsilon = 1e-9);
        }
    }

    #[test]
    fn sample_mean_and_validation_rate() {
        let m = reference_model();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let (mut sum, mut hits) = (0.0, 0usize);
        for _ in 0..n {
            let s = m.sample_actual_cover(0.4, &mut rng);
            sum += s.raw;
            hits += usize::from(m.validates(&s));
        }
        assert_abs_diff_eq!(sum / n as f64, 0.4, epsilon = 1e-3);
        assert_abs_diff_eq!(hits as f64 / n as f64, m.validation_probability(0.4), epsilon = 5e-3);
    }

    #[test]
    fn clamped_sample_stays_in_unit_interval() {
        let m = reference_model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let s = m.sample_actual_cover(0.95, &mut rng);
            assert!((0.0..=1.0).contains(&s.clamped));
        }
    }

    #[test]
    fn forecast_lookup_uses_frame_at_or_before() {
        let grid = GridSpec::with_shape(1, 2).unwrap();
        let f = WeatherField::new(grid, epoch(), 3600, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = Cell::new(0, 1);
        assert_eq!(f.forecast_at(epoch(), c).unwrap(), 0.2f32 as f64);
        assert_eq!(f.forecast_at(epoch() + Duration::seconds(5400), c).unwrap(), 0.4f32 as f64);
        assert!(f.forecast_at(epoch() - Duration::seconds(1), c).is_err());
        assert!(f.forecast_at(epoch() + Duration::seconds(7200), c).is_err());
        assert!(f.forecast_at(epoch(), Cell::new(1, 0)).is_err());
    }

    #[test]
    fn constant_field() {
        let grid = GridSpec::with_shape(3, 3).unwrap();
        let f = WeatherField::constant(grid, epoch(), 600, 5, 0.3).unwrap();
        for cell in grid.cells() {
            assert_eq!(f.forecast_at(epoch() + Duration::seconds(1234), cell).unwrap(), 0.3f32 as f64);
        }
    }

    #[test]
    fn blob_layout_and_validation() {
        let meta = WeatherMeta {
            n_frames: 1,
            n_lat: 2,
            n_lon: 2,
            epoch: epoch(),
            step_seconds: 3600,
            lat0: 0.0,
            lon0: 0.0,
            res_deg: 0.5,
        };
        let blob: Vec<u8> = [0.0f32, 0.25, 0.5, 1.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let f = load_weather_field(&meta, &blob).unwrap();
        assert_eq!(f.forecast_at(epoch(), Cell::new(0, 0)).unwrap(), 0.0);
        assert_eq!(f.forecast_at(epoch(), Cell::new(1, 1)).unwrap(), 1.0);

        let bad: Vec<u8> = [0.0f32, 0.25, 1.5, 1.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert!(matches!(load_weather_field(&meta, &bad), Err(WeatherError::OutOfRangeValue { index: 2, .. })));
        assert!(matches!(load_weather_field(&meta, &blob[..12]), Err(WeatherError::LengthMismatch { .. })));
        assert!(matches!(load_weather_field(&meta, &blob[..13]), Err(WeatherError::RaggedBlob(13))));
        assert!(serde_json::from_str::<WeatherMeta>(r#"{"n_frames":1}"#).is_err());
    }

    #[test]
    fn save_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::with_shape(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = generate_synthetic_weather(grid, 6, epoch(), 21600, &SynthParams::default(), &mut rng).unwrap();
        let (m, d) = (dir.path().join("w.json"), dir.path().join("w.f32"));
        f.save(&m, &d).unwrap();
        assert_eq!(WeatherField::load(&m, &d).unwrap(), f);
    }

    fn lag1_autocorr(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    fn latent_series(rho: f64, seed: u64) -> Vec<f64> {
        let grid = GridSpec::with_shape(4, 4).unwrap();
        let params = SynthParams { rho, ..SynthParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LatentProcess::new(grid, params, &mut rng).unwrap();
        let mut out = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            out.push(p.state()[5]);
            p.advance(&mut rng);
        }
        out
    }

    #[test]
    fn independent_frames_when_rho_zero() {
        assert!(lag1_autocorr(&latent_series(0.0, 11)).abs() <= 0.05);
    }

    #[test]
    fn persistent_frames_when_rho_high() {
        assert!(lag1_autocorr(&latent_series(0.99, 12)) >= 0.95);
    }

    #[test]
    fn rejects_bad_synth_params() {
        let grid = GridSpec::with_shape(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for rho in [1.0, -0.1] {
            let p = SynthParams { rho, ..SynthParams::default() };
            assert!(generate_synthetic_weather(grid, 3, epoch(), 60, &p, &mut rng).is_err());
        }
        assert!(generate_synthetic_weather(grid, 0, epoch(), 60, &SynthParams::default(), &mut rng).is_err());
    }

    #[test]
    fn synthetic_is_seed_determined() {
        let grid = GridSpec::with_shape(5, 5).unwrap();
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_synthetic_weather(grid, 20, epoch(), 3600, &SynthParams::default(), &mut rng).unwrap()
        };
        assert_eq!(gen(5), gen(5));
        assert_ne!(gen(5), gen(6));
    }
}
