//! `omar` command line: train, arena, replay, gae-check.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
//! `OMAR_OUT_DIR` supplies the output directory when `--out` is absent and
//! `OMAR_WORKERS` overrides the configured worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use omar::arena::run_arena;
use omar::config::Config;
use omar::gae_check::gae_check;
use omar::policy::{load_checkpoint, Actor, Policy, PolicyParameters};
use omar::replay::replay_file;
use omar::train::imitation::demonstrator;
use omar::train::{train_loop, TrainOutput};
use omar::Error;

#[derive(Parser)]
#[command(name = "omar", version, about = "Conversational self-play RL with hierarchical advantages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warm start, then PPO self-play; writes metrics, checkpoints and trajectories.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training checkpoint (checkpoints/step_*.json or last.json) to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Head-to-head evaluation of two policies.
    Arena {
        #[arg(long)]
        config: PathBuf,
        /// Policy checkpoint, "initial" for fresh parameters or "bot" for the
        /// rule-based demonstrator.
        #[arg(long)]
        policy_a: String,
        #[arg(long)]
        policy_b: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Seed for "initial" parameters.
        #[arg(long, default_value_t = 0)]
        init_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one recorded episode as a transcript.
    Replay {
        file: PathBuf,
        #[arg(long)]
        episode: u64,
    },
    /// Check the advantage estimator against closed-form references.
    GaeCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Shift estimator outputs so the check must fail.
        #[arg(long)]
        perturb: bool,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() { Failure::Usage(e.to_string()) } else { Failure::Runtime(e.to_string()) }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn out_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("OMAR_OUT_DIR").filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn workers_override() -> Result<Option<usize>, Failure> {
    match std::env::var("OMAR_WORKERS") {
        Ok(v) if !v.is_empty() => {
            v.parse().map(Some).map_err(|_| Failure::Usage(format!("OMAR_WORKERS must be a non-negative integer, got {v:?}")))
        }
        _ => Ok(None),
    }
}

fn load_actor(spec: &str, cfg: &Config, init_seed: u64) -> Result<Box<dyn Actor>, Failure> {
    let params: PolicyParameters = match spec {
        "bot" => return Ok(demonstrator(&cfg.env)),
        "initial" => cfg.initial_params(init_seed),
        path => {
            let shape = (cfg.env.vocabulary().len(), cfg.policy.feature_dim, cfg.policy.embed_dim);
            // a checkpoint that does not fit the config is a usage error
            load_checkpoint(Path::new(path), Some(shape)).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    Ok(Box::new(Policy::new(params, cfg.policy.decode())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, seed, out, resume } => {
            let mut cfg = Config::load(&config)?;
            if let Some(w) = workers_override()? {
                cfg.train.workers = w;
            }
            let dir = out_dir(out).unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{seed}", cfg.env.env_id())));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
            let outcome = train_loop(&cfg, seed, &TrainOutput { dir: Some(dir.clone()), resume })?;
            println!("trained {} steps; outputs in {}", outcome.steps_done, dir.display());
            if let Some(m) = outcome.metrics.last() {
                println!(
                    "last interval: mean reward {:.4}, entropy {:.4}, filter pass rate {:.4}",
                    m.mean_episode_reward, m.policy_entropy, m.filter_pass_rate
                );
            }
            if let Some(r) = outcome.stop {
                println!("stopped early: {}", r.as_str());
            }
        }
        Command::Arena { config, policy_a, policy_b, episodes, seed, init_seed, out } => {
            let mut cfg = Config::load(&config)?;
            if let Some(n) = episodes {
                cfg.arena.n_episodes = n;
            }
            if let Some(s) = seed {
                cfg.arena.seed = s;
            }
            if let Some(w) = workers_override()? {
                cfg.arena.workers = w;
            }
            cfg.validate()?;
            let a = load_actor(&policy_a, &cfg, init_seed)?;
            let b = load_actor(&policy_b, &cfg, init_seed)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.arena.workers)
                .build()
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let report = pool.install(|| run_arena(&cfg.env, a.as_ref(), b.as_ref(), &cfg.arena, &cfg.rollout_settings()))?;
            let summary = report.summary();
            print!("{summary}");
            if let Some(dir) = out_dir(out) {
                fs::create_dir_all(&dir)?;
                report.write_csv(fs::File::create(dir.join("arena.csv"))?)?;
                fs::write(dir.join("arena_summary.txt"), &summary)?;
                fs::write(dir.join("arena_report.json"), serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
            }
        }
        Command::Replay { file, episode } => {
            // render fully before printing so errors leave no partial output
            let text = replay_file(&file, episode)?;
            print!("{text}");
        }
        Command::GaeCheck { seed, instances, perturb } => {
            let report = gae_check(seed, instances, perturb)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            println!("instances: {}", report.instances);
            println!("max deviation: {:e}", report.max_deviation);
            if !report.passed {
                return Err(Failure::Runtime(format!(
                    "deviation {:e} exceeds tolerance {:e}",
                    report.max_deviation,
                    omar::gae_check::TOLERANCE
                )));
            }
            println!("PASS");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
