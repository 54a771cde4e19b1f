//! Episode runner, seeded benchmark batches and summary statistics.
//!
//! Every episode is keyed by `(agent, start date, weather seed)`. The
//! environment seed depends only on `(master seed, start date, weather
//! seed)`, so all agents of a batch see the same pass schedule and draw from
//! the same noise stream. Agents with internal randomness get their own seed
//! derived from the environment seed and the agent name.

use std::io::{Read, Write};
use std::sync::Arc;

use chrono::Duration;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{Agent, AgentKind, HeuristicParams};
use crate::env::{discounted_return, Env, EnvConfig};
use crate::error::HarnessError;
use crate::weather::Timestamp;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub agent: String,
    pub weather_seed: u64,
    /// Environment seed actually used.
    pub seed: u64,
    pub start_date: Timestamp,
    /// Steps until every mesh validated, or `t_max` when capped.
    pub length: usize,
    pub validated_count: usize,
    pub discounted_return: f64,
    pub capped: bool,
}

/// One step of a JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub time: Timestamp,
    pub action: usize,
    pub mesh: Option<usize>,
    pub reward: f64,
    pub validated: bool,
    pub sampled_cover: Option<f64>,
    pub remaining: usize,
    pub done: bool,
}

/// Runs one episode to completion.
pub fn run_episode(
    cfg: &Arc<EnvConfig>,
    agent: &mut dyn Agent,
    seed: u64,
    start: Option<Timestamp>,
) -> Result<EpisodeStats, HarnessError> {
    run_episode_traced(cfg, agent, seed, start, |_| {})
}

pub fn run_episode_traced(
    cfg: &Arc<EnvConfig>,
    agent: &mut dyn Agent,
    seed: u64,
    start: Option<Timestamp>,
    mut trace: impl FnMut(&TraceRecord),
) -> Result<EpisodeStats, HarnessError> {
    let mut env = Env::new(Arc::clone(cfg));
    let mut obs = env.reset(seed, start)?;
    let start_date = env.start().expect("episode started");
    let mut rewards = Vec::new();
    loop {
        let time = env.state().expect("episode").time;
        let action = agent.act(&obs)?;
        let step = env.step(action)?;
        rewards.push(step.reward);
        trace(&TraceRecord {
            t: step.info.t,
            time,
            action,
            mesh: step.info.chosen_mesh,
            reward: step.reward,
            validated: step.info.validated,
            sampled_cover: step.info.sampled_actual_cover,
            remaining: env.state().expect("episode").remaining,
            done: step.done,
        });
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let state = env.state().expect("episode");
    let validated_count = cfg.k() - state.remaining;
    Ok(EpisodeStats {
        agent: agent.name().to_string(),
        weather_seed: seed,
        seed,
        start_date,
        length: state.t,
        validated_count,
        discounted_return: discounted_return(&rewards, cfg.gamma),
        capped: state.remaining > 0,
    })
}

/// Stable 64-bit seed from labelled parts.
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

pub fn env_seed(master: u64, start: Timestamp, weather_seed: u64) -> u64 {
    derive_seed(&[b"env", &master.to_le_bytes(), &start.timestamp().to_le_bytes(), &weather_seed.to_le_bytes()])
}

pub fn agent_seed(env_seed: u64, agent: &str) -> u64 {
    derive_seed(&[b"agent", &env_seed.to_le_bytes(), agent.as_bytes()])
}

/// `n` start dates evenly spread over the admissible range.
pub fn start_dates(cfg: &EnvConfig, n: usize) -> Result<Vec<Timestamp>, HarnessError> {
    let (lo, hi) = cfg.valid_starts()?;
    let span = (hi - lo).num_seconds();
    Ok((0..n).map(|i| lo + Duration::seconds(((i as i128 * span as i128) / n.max(1) as i128) as i64)).collect())
}

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub agents: Vec<AgentKind>,
    pub heuristic: HeuristicParams,
    pub dates: Vec<Timestamp>,
    pub weather_seeds: Vec<u64>,
    pub master_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub runs: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub capped: usize,
    pub mean_validated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub config_digest: String,
    pub runs: usize,
    pub agents: Vec<AgentSummary>,
}

impl BenchmarkSummary {
    pub fn agent(&self, name: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == name)
    }

    pub fn to_table(&self) -> String {
        let mut out =
            format!("{:<10} {:>6} {:>9} {:>8} {:>8} {:>7}\n", "agent", "runs", "mean", "median", "std", "capped");
        for a in &self.agents {
            out.push_str(&format!(
                "{:<10} {:>6} {:>9.1} {:>8.1} {:>8.1} {:>7}\n",
                a.agent, a.runs, a.mean, a.median, a.std, a.capped
            ));
        }
        out.push_str(&format!("config {}\n", self.config_digest));
        out
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<EpisodeStats>,
    pub summary: BenchmarkSummary,
}

/// Runs the Cartesian product of agents, dates and weather seeds.
pub fn run_benchmark(
    cfg: &Arc<EnvConfig>,
    plan: &BenchmarkPlan,
    digest: &str,
) -> Result<BenchmarkReport, HarnessError> {
    if plan.agents.is_empty() || plan.dates.is_empty() || plan.weather_seeds.is_empty() {
        return Err(HarnessError::Config("benchmark needs at least one agent, date and weather seed".into()));
    }
    let jobs: Vec<(AgentKind, Timestamp, u64)> = plan
        .agents
        .iter()
        .flat_map(|&a| plan.dates.iter().flat_map(move |&d| plan.weather_seeds.iter().map(move |&s| (a, d, s))))
        .collect();
    let run = |&(kind, date, wseed): &(AgentKind, Timestamp, u64)| -> Result<EpisodeStats, HarnessError> {
        let seed = env_seed(plan.master_seed, date, wseed);
        let mut agent = kind.build(Arc::clone(&cfg.mesh_set), plan.heuristic)?;
        agent.reset(agent_seed(seed, kind.as_str()));
        let mut stats = run_episode(cfg, agent.as_mut(), seed, Some(date))?;
        stats.weather_seed = wseed;
        Ok(stats)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    let summary = summarize(&rows, digest);
    Ok(BenchmarkReport { rows, summary })
}

/// Per-agent statistics of episode lengths, agents in first-seen order.
/// Capped episodes count at their capped length. `std` is the sample
/// standard deviation (0 for a single run).
pub fn summarize(rows: &[EpisodeStats], digest: &str) -> BenchmarkSummary {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.agent.as_str()) {
            names.push(&r.agent);
        }
    }
    let agents = names
        .into_iter()
        .map(|name| {
            let mine: Vec<&EpisodeStats> = rows.iter().filter(|r| r.agent == name).collect();
            let mut lengths: Vec<usize> = mine.iter().map(|r| r.length).collect();
            lengths.sort_unstable();
            let n = lengths.len();
            let total: u128 = lengths.iter().map(|&l| l as u128).sum();
            let mean = total as f64 / n as f64;
            let median =
                if n % 2 == 1 { lengths[n / 2] as f64 } else { (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0 };
            let std = if n > 1 {
                (lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let validated: u128 = mine.iter().map(|r| r.validated_count as u128).sum();
            AgentSummary {
                agent: name.to_string(),
                runs: n,
                mean,
                median,
                std,
                capped: mine.iter().filter(|r| r.capped).count(),
                mean_validated: validated as f64 / n as f64,
            }
        })
        .collect();
    BenchmarkSummary { config_digest: digest.to_string(), runs: rows.len(), agents }
}

pub fn write_csv<W: Write>(rows: &[EpisodeStats], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: "csv".into(), source: e })?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<EpisodeStats>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Rolling mean of the last `window` lengths. The first `window - 1`
/// entries average over the episodes seen so far.
pub fn rolling_mean(lengths: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(lengths.len());
    let mut sum = 0.0;
    for (i, &l) in lengths.iter().enumerate() {
        sum += l;
        if i >= window {
            sum -= lengths[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Reads episode lengths from a CSV with a `length` column, or from the
/// first column when there is no such header.
pub fn read_lengths<R: Read>(input: R) -> Result<Vec<f64>, HarnessError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let Some(first) = records.next().transpose()? else {
        return Ok(Vec::new());
    };
    let (col, mut out) = match first.iter().position(|h| h.trim() == "length") {
        Some(c) => (c, Vec::new()),
        None => {
            let v = parse_len(first.get(0).unwrap_or(""), 1)?;
            (0, vec![v])
        }
    };
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        out.push(parse_len(rec.get(col).unwrap_or(""), i + 2)?);
    }
    Ok(out)
}

fn parse_len(s: &str, line: usize) -> Result<f64, HarnessError> {
    s.trim().parse().map_err(|_| HarnessError::Config(format!("line {line}: {s:?} is not a number")))
}

/// `step,mean_length` CSV of a rolling-mean curve; steps are 1-based.
pub fn write_curve<W: Write>(curve: &[f64], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "mean_length"])?;
    for (i, v) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: "csv".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn row(agent: &str, length: usize) -> EpisodeStats {
        EpisodeStats {
            agent: agent.into(),
            weather_seed: 1,
            seed: 2,
            start_date: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
            length,
            validated_count: 3,
            discounted_return: 0.1 + length as f64 / 7.0,
            capped: false,
        }
    }

    #[test]
    fn rolling_mean_examples() {
        assert_eq!(rolling_mean(&[50.0; 5], 3), vec![50.0; 5]);
        assert_eq!(rolling_mean(&[10.0, 20.0, 30.0], 2), vec![10.0, 15.0, 25.0]);
        let xs: Vec<f64> = (1..=99).map(f64::from).collect();
        let c = rolling_mean(&xs, 100);
        assert_eq!(c.len(), 99);
        assert_eq!(c[98], 50.0);
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn summary_statistics() {
        let rows = vec![row("a", 1), row("a", 2), row("a", 6), row("a", 3), row("b", 5)];
        let s = summarize(&rows, "x");
        let a = s.agent("a").unwrap();
        assert_eq!(a.runs, 4);
        assert_eq!(a.mean, 3.0);
        assert_eq!(a.median, 2.5);
        assert!((a.std - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let b = s.agent("b").unwrap();
        assert_eq!((b.mean, b.median, b.std), (5.0, 5.0, 0.0));
        assert_eq!(s.runs, 5);
    }

    #[test]
    fn csv_round_trip_preserves_summary() {
        let rows: Vec<EpisodeStats> = (0..20).map(|i| row(if i % 3 == 0 { "x" } else { "y" }, 100 + i * 7)).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(summarize(&back, "d"), summarize(&rows, "d"));
    }

    #[test]
    fn lengths_from_csv() {
        let rows = vec![row("a", 4), row("a", 9)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_lengths(buf.as_slice()).unwrap(), vec![4.0, 9.0]);
        assert_eq!(read_lengths("3\n5\n".as_bytes()).unwrap(), vec![3.0, 5.0]);
        assert!(read_lengths("3\nx\n".as_bytes()).is_err());
    }

    #[test]
    fn curve_csv() {
        let mut buf = Vec::new();
        write_curve(&[10.0, 15.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,mean_length\n1,10\n2,15\n");
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let d = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        assert_eq!(env_seed(1, d, 2), env_seed(1, d, 2));
        assert_ne!(env_seed(1, d, 2), env_seed(1, d, 3));
        assert_ne!(env_seed(0, d, 2), env_seed(1, d, 2));
        assert_ne!(agent_seed(5, "random"), agent_seed(5, "heuristic"));
    }
}
