use std::sync::Arc;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eosched_core::weather::generate_synthetic_weather;
use eosched_core::{
    ConstellationParams, Env, EnvConfig, EnvError, GridSpec, MeshSet, ScheduleSource, SynthParams, Timestamp,
    WeatherField, WeatherModelParams,
};

fn epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap()
}

/// Small random scenario fully determined by `seed`.
fn scenario(seed: u64) -> Arc<EnvConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_lat, n_lon) = (rng.random_range(1..=5), rng.random_range(2..=6));
    let grid = GridSpec::with_shape(n_lat, n_lon).unwrap();
    let mut mask: Vec<bool> = (0..n_lat * n_lon).map(|_| rng.random_bool(0.6)).collect();
    mask[0] = true;
    let ms = MeshSet::from_flat(grid, mask).unwrap();
    let width = rng.random_range(1..=n_lon);
    let cp = ConstellationParams {
        n_sats: rng.random_range(1..=3),
        passes_per_sat_per_day: 1.0,
        corridor_width_cols: width,
        drift_cols_per_pass: rng.random_range(1..=width),
        jitter_seconds: 600,
    };
    let n_pass = rng.random_range(1..=5);
    let days = (10 * ms.len() + n_pass) as f64 / cp.n_sats as f64 + 2.0;
    let weather = generate_synthetic_weather(
        grid,
        (days * 4.0).ceil() as usize,
        epoch(),
        6 * 3600,
        &SynthParams { blur_radius: 1, ..SynthParams::default() },
        &mut rng,
    )
    .unwrap();
    Arc::new(
        EnvConfig::new(
            Arc::new(ms),
            Arc::new(weather),
            WeatherModelParams::default(),
            ScheduleSource::Generate(cp),
            n_pass,
        )
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episode_invariants(cfg_seed in 0u64..1_000, ep_seed: u64, action_seed: u64) {
        let cfg = scenario(cfg_seed);
        let k = cfg.k();
        let mut env = Env::new(Arc::clone(&cfg));
        env.reset(ep_seed, None).unwrap();
        let horizon = cfg.t_max.min(env.schedule().unwrap().len());
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        let mut total = 0.0;
        loop {
            let before = env.state().unwrap().clone();
            let accessible = env.schedule().unwrap().get(before.t).unwrap().accessible.clone();
            let action = rng.random_range(0..=k);
            let step = env.step(action).unwrap();
            let after = env.state().unwrap();

            // statuses only go from "to acquire" to "validated"
            for m in 0..k {
                prop_assert!(before.status[m] || !after.status[m]);
            }
            prop_assert_eq!(after.remaining, after.status.iter().filter(|&&s| s).count());
            prop_assert_eq!(after.t, before.t + 1);
            prop_assert_eq!(step.info.t, before.t);

            // reward is 1 exactly when the chosen, pending, accessible mesh validated
            prop_assert!(step.reward == 0.0 || step.reward == 1.0);
            prop_assert_eq!(step.reward == 1.0, step.info.validated);
            prop_assert_eq!(step.info.chosen_mesh, action.checked_sub(1));
            let flipped = before.remaining - after.remaining;
            prop_assert_eq!(flipped, step.info.validated as usize);
            if step.info.validated {
                let m = action - 1;
                prop_assert!(before.status[m] && !after.status[m]);
                prop_assert!(accessible.contains(&m));
            }
            if step.info.sampled_actual_cover.is_some() {
                let m = action - 1;
                prop_assert!(before.status[m] && accessible.contains(&m));
            }
            total += step.reward;

            prop_assert_eq!(step.done, after.remaining == 0 || after.t >= horizon);
            prop_assert_eq!(step.observation.clone(), env.observation().unwrap());
            if step.done {
                break;
            }
        }
        let st = env.state().unwrap();
        prop_assert_eq!(total as usize, k - st.remaining);
        prop_assert!(st.t <= 10 * k);
        prop_assert!(matches!(env.step(0), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn same_seed_and_actions_same_trajectory(cfg_seed in 0u64..1_000, ep_seed: u64, actions in proptest::collection::vec(0usize..64, 1..60)) {
        let cfg = scenario(cfg_seed);
        let k = cfg.k();
        let run = || {
            let mut env = Env::new(Arc::clone(&cfg));
            let mut out = vec![env.reset(ep_seed, None).unwrap()];
            for &a in &actions {
                let s = env.step(a % (k + 1)).unwrap();
                out.push(s.observation);
                if s.done {
                    break;
                }
            }
            (out, env.state().cloned())
        };
        prop_assert_eq!(run(), run());
    }
}

/// First-step validation over many seeds is a Bernoulli trial with
/// success probability `p(c_f)`.
#[test]
fn acquisition_is_a_bernoulli_trial() {
    let grid = GridSpec::with_shape(1, 1).unwrap();
    let ms = Arc::new(MeshSet::full(grid).unwrap());
    let model = WeatherModelParams::default();
    for c_f in [0.15f32, 0.45] {
        let weather = Arc::new(WeatherField::constant(grid, epoch(), 3600, 24 * 30, c_f).unwrap());
        let cp =
            ConstellationParams { n_sats: 1, corridor_width_cols: 1, drift_cols_per_pass: 1, ..Default::default() };
        let cfg = Arc::new(
            EnvConfig::new(ms.clone(), weather, model, ScheduleSource::Generate(cp), 1)
                .unwrap()
                .with_start_range(epoch(), epoch())
                .unwrap(),
        );
        let mut env = Env::new(cfg);
        let n = 100_000u64;
        let mut hits = 0u64;
        for seed in 0..n {
            env.reset(seed, None).unwrap();
            hits += env.step(1).unwrap().info.validated as u64;
        }
        let p = model.validation_probability(c_f as f64);
        let rate = hits as f64 / n as f64;
        let bound = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < bound, "c_f={c_f}: rate {rate}, p {p}");
    }
}
