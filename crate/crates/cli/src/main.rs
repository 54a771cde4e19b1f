use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use eosched_core::config::ScenarioConfig;
use eosched_core::harness::{self, BenchmarkPlan};
use eosched_core::server::{serve_stdio, EnvServer};
use eosched_core::{Agent, AgentKind, Env, Scenario, ScriptedAgent};

#[derive(Parser)]
#[command(name = "eosched", version, about = "Cloud-aware acquisition scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run agents over start dates and weather seeds and summarize episode lengths.
    Bench {
        /// Scenario JSON file, or builtin:france_like / builtin:tiny.
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "random,heuristic", value_delimiter = ',')]
        agents: Vec<AgentKind>,
        /// Number of start dates, spread evenly over the admissible range.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Output directory for episodes.csv, summary.json and summary.txt.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run one episode and write a per-step JSON-lines trace.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "heuristic")]
        agent: AgentKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ISO-8601 start date; drawn from the seed when omitted.
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Replay actions from a file (whitespace or comma separated) instead of `--agent`.
        #[arg(long)]
        actions: Option<PathBuf>,
    },
    /// Rolling mean of episode lengths, as `step,mean_length` CSV.
    Curve {
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expose the environment over newline-delimited JSON.
    Serve {
        #[arg(long)]
        config: String,
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
    /// Write the scenario's AOI mask as a JSON mask document.
    ExportMask {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the pass schedule of one episode as JSON.
    ExportSchedule {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the scenario's forecast field as a .json/.f32 pair.
    ExportWeather {
        #[arg(long)]
        config: String,
        /// Path prefix; `.json` and `.f32` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a builtin scenario as an editable JSON file.
    ShowConfig {
        #[arg(default_value = "france_like")]
        builtin: String,
    },
}

fn load_config(spec: &str) -> Result<ScenarioConfig> {
    match spec.strip_prefix("builtin:") {
        Some("france_like") | Some("france-like") => Ok(ScenarioConfig::france_like()),
        Some("tiny") => Ok(ScenarioConfig::tiny()),
        Some(other) => bail!("unknown builtin scenario {other:?}"),
        None => ScenarioConfig::load(spec).with_context(|| format!("loading {spec}")),
    }
}

fn build(spec: &str) -> Result<(ScenarioConfig, Scenario)> {
    let cfg = load_config(spec)?;
    let scenario = cfg.build().context("building scenario")?;
    Ok((cfg, scenario))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_actions(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().with_context(|| format!("bad action {t:?} in {}", path.display())))
        .collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match Cli::parse().command {
        Command::Bench { config, agents, episodes, seeds, out, workers } => {
            let (_, scenario) = build(&config)?;
            let dates = harness::start_dates(&scenario.env, episodes)?;
            let plan = BenchmarkPlan {
                agents,
                heuristic: scenario.heuristic,
                dates,
                weather_seeds: seeds,
                master_seed: scenario.master_seed,
                workers,
            };
            let report = harness::run_benchmark(&scenario.env, &plan, &scenario.digest)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            harness::write_csv(&report.rows, create(&out.join("episodes.csv"))?)?;
            let json = serde_json::to_string_pretty(&report.summary)?;
            fs::write(out.join("summary.json"), json + "\n")?;
            let table = report.summary.to_table();
            fs::write(out.join("summary.txt"), &table)?;
            print!("{table}");
        }
        Command::Simulate { config, agent, seed, start, trace, actions } => {
            let (_, scenario) = build(&config)?;
            let mut agent: Box<dyn Agent> = match actions {
                Some(path) => Box::new(ScriptedAgent::new(read_actions(&path)?)),
                None => agent.build(Arc::clone(&scenario.env.mesh_set), scenario.heuristic)?,
            };
            agent.reset(harness::agent_seed(seed, agent.name()));
            let mut sink: Option<BufWriter<File>> = trace.as_deref().map(create).transpose()?;
            let mut write_err = None;
            let stats = harness::run_episode_traced(&scenario.env, agent.as_mut(), seed, start, |rec| {
                if let Some(w) = sink.as_mut() {
                    let line = serde_json::to_string(rec).expect("trace record serializes");
                    if let Err(e) = writeln!(w, "{line}") {
                        write_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = write_err {
                return Err(e).context("writing trace");
            }
            if let Some(mut w) = sink {
                w.flush()?;
            }
            println!("{}", serde_json::to_string(&stats)?);
        }
        Command::Curve { window, input, out } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let lengths = harness::read_lengths(file)?;
            let curve = harness::rolling_mean(&lengths, window);
            match out {
                Some(p) => harness::write_curve(&curve, create(&p)?)?,
                None => harness::write_curve(&curve, io::stdout().lock())?,
            }
        }
        Command::Serve { config, listen, stdio } => {
            let (_, scenario) = build(&config)?;
            if stdio {
                serve_stdio(scenario.env)?;
            } else {
                let addr = listen.unwrap_or_else(|| "127.0.0.1:7878".to_string());
                let server = EnvServer::bind(scenario.env, &addr).with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on {}", server.local_addr()?);
                server.serve()?;
            }
        }
        Command::ExportMask { config, out } => {
            let cfg = load_config(&config)?;
            let ms = cfg.mesh_set()?;
            fs::write(&out, ms.to_document().to_json() + "\n")?;
            eprintln!("{} meshes written to {}", ms.len(), out.display());
        }
        Command::ExportSchedule { config, seed, start, out } => {
            let (_, scenario) = build(&config)?;
            let mut env = Env::new(scenario.env);
            env.reset(seed, start)?;
            let schedule = env.schedule().expect("episode started");
            fs::write(&out, schedule.to_json() + "\n")?;
        }
        Command::ExportWeather { config, out } => {
            let cfg = load_config(&config)?;
            let ms = cfg.mesh_set()?;
            let field = cfg.weather_field(ms.grid())?;
            let meta = out.with_extension("json");
            let data = out.with_extension("f32");
            field.save(&meta, &data)?;
            eprintln!("{} frames written to {} and {}", field.n_frames(), meta.display(), data.display());
        }
        Command::ShowConfig { builtin } => {
            let cfg = load_config(&format!("builtin:{builtin}"))?;
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}
