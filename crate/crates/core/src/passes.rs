//! Satellite pass schedules and per-pass accessible meshes.
//!
//! Accessibility follows a cyclic-corridor model: during a pass a satellite
//! reaches the AOI meshes whose column lies in a band of
//! `corridor_width_cols` columns. The band center moves east by
//! `drift_cols_per_pass` columns after each pass of that satellite and wraps
//! around the grid's east edge. Satellites start with evenly spread centers.

use chrono::Duration;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::grid::MeshSet;
use crate::weather::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassWindow {
    pub index: usize,
    pub time: Timestamp,
    pub satellite_id: u16,
    /// Sorted mesh indices reachable during this pass. May be empty.
    pub accessible: Vec<usize>,
}

impl PassWindow {
    pub fn is_accessible(&self, mesh: usize) -> bool {
        self.accessible.binary_search(&mesh).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassSchedule {
    windows: Vec<PassWindow>,
}

impl PassSchedule {
    /// Validates ordering and mesh references of hand-built windows.
    pub fn new(mut windows: Vec<PassWindow>, k: usize) -> Result<Self, ScheduleError> {
        if windows.is_empty() {
            return Err(ScheduleError::Empty);
        }
        for (i, w) in windows.iter_mut().enumerate() {
            w.index = i;
            w.accessible.sort_unstable();
            w.accessible.dedup();
            if let Some(&mesh) = w.accessible.iter().find(|&&m| m >= k) {
                return Err(ScheduleError::UnknownMesh { pass: i, mesh, k });
            }
        }
        if let Some(i) = windows.windows(2).position(|p| p[1].time <= p[0].time) {
            return Err(ScheduleError::Unordered(i + 1));
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[PassWindow] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&PassWindow> {
        self.windows.get(t)
    }

    pub fn accessible_meshes(&self, t: usize) -> Result<&[usize], ScheduleError> {
        self.windows
            .get(t)
            .map(|w| w.accessible.as_slice())
            .ok_or(ScheduleError::OutOfRange { t, len: self.windows.len() })
    }

    pub fn first_time(&self) -> Timestamp {
        self.windows[0].time
    }

    pub fn last_time(&self) -> Timestamp {
        self.windows[self.windows.len() - 1].time
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationParams {
    pub n_sats: usize,
    pub passes_per_sat_per_day: f64,
    pub corridor_width_cols: usize,
    pub drift_cols_per_pass: usize,
    /// Uniform timing noise in `[-jitter_seconds, jitter_seconds]`.
    pub jitter_seconds: u32,
}

impl Default for ConstellationParams {
    fn default() -> Self {
        Self {
            n_sats: 4,
            passes_per_sat_per_day: 1.0,
            corridor_width_cols: 4,
            drift_cols_per_pass: 3,
            jitter_seconds: 1800,
        }
    }
}

impl ConstellationParams {
    /// Nominal seconds between consecutive passes of the whole constellation.
    pub fn spacing_seconds(&self) -> f64 {
        86_400.0 / (self.passes_per_sat_per_day * self.n_sats as f64)
    }

    /// Number of passes the constellation produces in `days`.
    pub fn passes_for_days(&self, days: f64) -> usize {
        (self.n_sats as f64 * self.passes_per_sat_per_day * days).round() as usize
    }

    pub fn validate(&self, n_lon: usize) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::BadParams(m));
        if self.n_sats == 0 || self.n_sats > u16::MAX as usize {
            return bad(format!("n_sats must be in 1..=65535, got {}", self.n_sats));
        }
        if !self.passes_per_sat_per_day.is_finite() || self.passes_per_sat_per_day <= 0.0 {
            return bad(format!("passes_per_sat_per_day must be positive, got {}", self.passes_per_sat_per_day));
        }
        if self.corridor_width_cols == 0 {
            return bad("corridor_width_cols must be >= 1".into());
        }
        if self.corridor_width_cols < n_lon
            && (self.drift_cols_per_pass == 0 || self.drift_cols_per_pass > self.corridor_width_cols)
        {
            return bad(format!(
                "drift_cols_per_pass must lie in 1..={} so every column is eventually reachable, got {}",
                self.corridor_width_cols, self.drift_cols_per_pass
            ));
        }
        if 2.0 * self.jitter_seconds as f64 + 2.0 > self.spacing_seconds() {
            return bad(format!(
                "jitter_seconds {} too large for a pass spacing of {:.0} s",
                self.jitter_seconds,
                self.spacing_seconds()
            ));
        }
        Ok(())
    }

    /// Corridor center of `satellite` at its `nth` pass.
    pub fn corridor_center(&self, n_lon: usize, satellite: usize, nth: usize) -> usize {
        let phase = satellite * n_lon / self.n_sats;
        (phase + nth * self.drift_cols_per_pass) % n_lon
    }

    /// Columns covered by a corridor centered at `center`, wrapping east to west.
    pub fn corridor_columns(&self, n_lon: usize, center: usize) -> Vec<usize> {
        let w = self.corridor_width_cols;
        if w >= n_lon {
            return (0..n_lon).collect();
        }
        let back = (w - 1) / 2;
        let mut cols: Vec<usize> = (0..w).map(|o| (center + n_lon - back + o) % n_lon).collect();
        cols.sort_unstable();
        cols
    }
}

/// Generates `n_passes` passes starting after `start`.
///
/// Pass `g` belongs to satellite `g % n_sats`; its nominal time is
/// `start + (g + 0.5) * spacing`, shifted by integer-second jitter drawn from
/// `rng` in pass order.
pub fn generate_schedule<R: Rng + ?Sized>(
    ms: &MeshSet,
    cp: &ConstellationParams,
    start: Timestamp,
    n_passes: usize,
    rng: &mut R,
) -> Result<PassSchedule, ScheduleError> {
    let n_lon = ms.grid().n_lon;
    cp.validate(n_lon)?;
    if n_passes == 0 {
        return Err(ScheduleError::Empty);
    }
    // meshes grouped by column, already in ascending index order
    let mut by_column: Vec<Vec<usize>> = vec![Vec::new(); n_lon];
    for (k, cell) in ms.meshes().iter().enumerate() {
        by_column[cell.lon].push(k);
    }
    let spacing = cp.spacing_seconds();
    let jitter = cp.jitter_seconds as i64;
    let mut windows = Vec::with_capacity(n_passes);
    for g in 0..n_passes {
        let sat = g % cp.n_sats;
        let nth = g / cp.n_sats;
        let nominal = ((g as f64 + 0.5) * spacing).round() as i64;
        let noise = if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
        let center = cp.corridor_center(n_lon, sat, nth);
        let mut accessible: Vec<usize> =
            cp.corridor_columns(n_lon, center).into_iter().flat_map(|c| by_column[c].iter().copied()).collect();
        accessible.sort_unstable();
        windows.push(PassWindow {
            index: g,
            time: start + Duration::seconds(nominal + noise),
            satellite_id: sat as u16,
            accessible,
        });
    }
    PassSchedule::new(windows, ms.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{france_like, GridSpec};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn start() -> Timestamp {
        Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn full_width_corridor_reaches_everything() {
        let ms = france_like();
        let cp = ConstellationParams { corridor_width_cols: ms.grid().n_lon, ..Default::default() };
        let s = generate_schedule(&ms, &cp, start(), 10, &mut rng()).unwrap();
        for t in 0..10 {
            assert_eq!(s.accessible_meshes(t).unwrap().len(), ms.len());
        }
    }

    #[test]
    fn single_column_corridor_cycles() {
        let ms = MeshSet::full(GridSpec::with_shape(1, 4).unwrap()).unwrap();
        let cp = ConstellationParams {
            n_sats: 1,
            corridor_width_cols: 1,
            drift_cols_per_pass: 1,
            jitter_seconds: 0,
            ..Default::default()
        };
        let s = generate_schedule(&ms, &cp, start(), 5, &mut rng()).unwrap();
        let centers: Vec<usize> = (0..5).map(|t| s.accessible_meshes(t).unwrap()[0]).collect();
        assert_eq!(centers, vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn pass_count_for_a_week() {
        let cp = ConstellationParams::default();
        assert_eq!(cp.passes_for_days(7.0), 28);
        let ms = france_like();
        let s = generate_schedule(&ms, &cp, start(), cp.passes_for_days(7.0), &mut rng()).unwrap();
        assert_eq!(s.len(), 28);
        assert!(s.last_time() < start() + Duration::days(7));
    }

    #[test]
    fn out_of_range_pass() {
        let ms = france_like();
        let s = generate_schedule(&ms, &ConstellationParams::default(), start(), 3, &mut rng()).unwrap();
        assert!(matches!(s.accessible_meshes(3), Err(ScheduleError::OutOfRange { t: 3, len: 3 })));
    }

    #[test]
    fn one_drift_cycle_covers_the_aoi() {
        let ms = france_like();
        let cp = ConstellationParams::default();
        let n_lon = ms.grid().n_lon;
        let cycle = n_lon.div_ceil(cp.drift_cols_per_pass);
        let s = generate_schedule(&ms, &cp, start(), cycle * cp.n_sats, &mut rng()).unwrap();
        for sat in 0..cp.n_sats {
            let union: BTreeSet<usize> = s
                .windows()
                .iter()
                .filter(|w| w.satellite_id as usize == sat)
                .flat_map(|w| w.accessible.iter().copied())
                .collect();
            assert_eq!(union.len(), ms.len(), "satellite {sat}");
        }
    }

    #[test]
    fn rejects_bad_params() {
        let ms = france_like();
        let cases = [
            ConstellationParams { n_sats: 0, ..Default::default() },
            ConstellationParams { corridor_width_cols: 0, ..Default::default() },
            ConstellationParams { drift_cols_per_pass: 0, ..Default::default() },
            ConstellationParams { drift_cols_per_pass: 5, corridor_width_cols: 4, ..Default::default() },
            ConstellationParams { jitter_seconds: 20_000, ..Default::default() },
        ];
        for cp in cases {
            assert!(generate_schedule(&ms, &cp, start(), 4, &mut rng()).is_err(), "{cp:?}");
        }
        assert!(generate_schedule(&ms, &ConstellationParams::default(), start(), 0, &mut rng()).is_err());
    }

    #[test]
    fn hand_built_schedule_validation() {
        let w = |i: usize, secs: i64, acc: Vec<usize>| PassWindow {
            index: i,
            time: start() + Duration::seconds(secs),
            satellite_id: 0,
            accessible: acc,
        };
        assert!(PassSchedule::new(vec![w(0, 0, vec![0]), w(1, 0, vec![])], 1).is_err());
        assert!(PassSchedule::new(vec![w(0, 0, vec![3])], 2).is_err());
        let s = PassSchedule::new(vec![w(0, 0, vec![1, 0, 1])], 2).unwrap();
        assert_eq!(s.accessible_meshes(0).unwrap(), &[0, 1]);
    }

    proptest! {
        #[test]
        fn schedules_are_ordered_feasible_and_deterministic(
            n_lat in 1usize..6,
            n_lon in 1usize..12,
            n_sats in 1usize..5,
            width in 1usize..6,
            drift_frac in 0.0f64..1.0,
            jitter in 0u32..3000,
            seed in any::<u64>(),
        ) {
            let ms = MeshSet::full(GridSpec::with_shape(n_lat, n_lon).unwrap()).unwrap();
            let drift = 1 + ((width.min(n_lon) as f64 - 1.0) * drift_frac) as usize;
            let cp = ConstellationParams {
                n_sats,
                passes_per_sat_per_day: 1.0,
                corridor_width_cols: width,
                drift_cols_per_pass: drift,
                jitter_seconds: jitter,
            };
            let cycle = n_lon.div_ceil(drift.max(1));
            let n = cycle * n_sats * 2;
            let a = generate_schedule(&ms, &cp, start(), n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = generate_schedule(&ms, &cp, start(), n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            for pair in a.windows().windows(2) {
                prop_assert!(pair[0].time < pair[1].time);
            }
            // any window of `cycle` consecutive passes of one satellite covers the AOI
            for sat in 0..n_sats {
                let own: Vec<&PassWindow> = a.windows().iter().filter(|w| w.satellite_id as usize == sat).collect();
                for win in own.windows(cycle) {
                    let union: BTreeSet<usize> = win.iter().flat_map(|w| w.accessible.iter().copied()).collect();
                    prop_assert_eq!(union.len(), ms.len());
                }
            }
        }
    }
}
