//! Command-line entry points: config generation, batch evaluation, PPO
//! training, and record replay.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use clutter_search::agents::mlp::{MlpPolicy, PolicyAgent};
use clutter_search::agents::{Agent, GesAgent, GnbvAgent, RandomAgent, TrainConfig};
use clutter_search::harness::{self, ExperimentConfig, config as expconfig};

#[derive(Parser)]
#[command(
    name = "clutter-search",
    version,
    about = "Object search in clutter: simulation, baselines, and PPO training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the built-in experiment presets as TOML files.
    GenConfig {
        #[arg(long, default_value = "configs")]
        out_dir: PathBuf,
    },
    /// Evaluate an agent over seeded episodes and print a metrics report.
    Eval {
        /// Agent: ppo | gnbv | ges | random.
        #[arg(long)]
        agent: String,
        /// Built-in preset name (active, active-large, interactive, smoke-train).
        #[arg(long, conflicts_with = "config")]
        scene: Option<String>,
        /// Experiment config file (overrides --scene).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Policy checkpoint (required for --agent ppo).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Sample the policy instead of acting greedily.
        #[arg(long)]
        stochastic: bool,
        /// Write the metrics report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write replayable episode records (JSON lines).
        #[arg(long)]
        records: Option<PathBuf>,
        /// Worker thread count (results are identical for any value).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Train the PPO policy; emits checkpoints and a metrics CSV.
    Train {
        #[arg(long, conflicts_with = "config", default_value = "smoke-train")]
        scene: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Total environment steps (defaults to the config value).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-simulate recorded episodes and verify them bit-exactly.
    Replay { file: PathBuf },
}

fn load_config(
    scene: &Option<String>,
    config: &Option<PathBuf>,
) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    match (config, scene) {
        (Some(path), _) => Ok(ExperimentConfig::load(path)?),
        (None, Some(name)) => Ok(expconfig::preset(name)?),
        (None, None) => Ok(expconfig::preset("active")?),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().cmd {
        Cmd::GenConfig { out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            for name in expconfig::PRESET_NAMES {
                let cfg = expconfig::preset(name)?;
                let path = out_dir.join(format!("{name}.toml"));
                cfg.save(&path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Cmd::Eval {
            agent,
            scene,
            config,
            episodes,
            seed,
            policy,
            stochastic,
            out,
            records,
            workers,
        } => {
            let exp = load_config(&scene, &config)?;
            let mut episode_cfg = exp.episode.clone();
            episode_cfg.resolve_explore_scale();
            let n = episodes.unwrap_or(exp.eval_episodes);

            let loaded_policy = match (agent.as_str(), &policy) {
                ("ppo", Some(path)) => Some(MlpPolicy::load(std::io::BufReader::new(
                    std::fs::File::open(path)?,
                ))?),
                ("ppo", None) => return Err("--agent ppo requires --policy <checkpoint>".into()),
                _ => None,
            };
            let make_agent: Box<dyn Fn() -> Box<dyn Agent> + Sync> = match agent.as_str() {
                "ppo" => {
                    let p = loaded_policy.clone().unwrap();
                    Box::new(move || Box::new(PolicyAgent::new(p.clone(), !stochastic)))
                }
                "gnbv" => {
                    let c = exp.gnbv;
                    Box::new(move || Box::new(GnbvAgent::new(c)))
                }
                "ges" => {
                    let c = exp.ges;
                    Box::new(move || Box::new(GesAgent::new(c)))
                }
                "random" => Box::new(|| Box::new(RandomAgent::new())),
                other => return Err(format!("unknown agent '{other}'").into()),
            };

            let run = || -> clutter_search::Result<Vec<harness::EpisodeRecord>> {
                harness::evaluate_records(&episode_cfg, make_agent.as_ref(), n, seed)
            };
            let recs = match workers {
                Some(w) => rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()?
                    .install(run)?,
                None => run()?,
            };
            let report = harness::aggregate(&episode_cfg, &agent, &recs);
            println!("{report}");
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                println!("report written to {}", path.display());
            }
            if let Some(path) = records {
                harness::write_records(&path, &episode_cfg, &recs)?;
                println!("{} records written to {}", recs.len(), path.display());
            }
            Ok(())
        }
        Cmd::Train {
            scene,
            config,
            out_dir,
            steps,
            seed,
        } => {
            let exp = load_config(&Some(scene), &config)?;
            std::fs::create_dir_all(&out_dir)?;
            let train_cfg = TrainConfig {
                episode: exp.episode.clone(),
                ppo: exp.ppo,
                total_steps: steps.unwrap_or(exp.train_total_steps),
                hidden: exp.hidden,
                seed,
            };
            let csv_path = out_dir.join("metrics.csv");
            let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
            writeln!(
                csv,
                "iteration,env_steps,episodes,mean_return,success_rate,entropy,clip_fraction,policy_loss,value_loss,approx_kl"
            )?;
            let ckpt_dir = out_dir.clone();
            let run = clutter_search::agents::train(&train_cfg, |it, policy| {
                writeln!(
                    csv,
                    "{},{},{},{:.6},{:.4},{:.4},{:.4},{:.6},{:.6},{:.6}",
                    it.iteration,
                    it.env_steps,
                    it.episodes,
                    it.mean_return,
                    it.success_rate,
                    it.entropy,
                    it.clip_fraction,
                    it.policy_loss,
                    it.value_loss,
                    it.approx_kl
                )
                .and_then(|_| csv.flush())
                .expect("metrics csv write");
                println!(
                    "iter {:>4} steps {:>8} return {:>9.2} success {:.2} entropy {:.2}",
                    it.iteration, it.env_steps, it.mean_return, it.success_rate, it.entropy
                );
                if (it.iteration + 1) % 10 == 0 {
                    let path = ckpt_dir.join(format!("policy_{:04}.bin", it.iteration + 1));
                    let mut f = std::io::BufWriter::new(
                        std::fs::File::create(&path).expect("checkpoint file"),
                    );
                    policy.save(&mut f).expect("checkpoint write");
                }
            })?;
            let final_path = out_dir.join("policy_final.bin");
            let mut f = std::io::BufWriter::new(std::fs::File::create(&final_path)?);
            run.policy.save(&mut f)?;
            println!(
                "training done: {} iterations, final policy at {}",
                run.history.len(),
                final_path.display()
            );
            Ok(())
        }
        Cmd::Replay { file } => {
            let (cfg, records) = harness::read_records(&file)?;
            let mut failures = 0usize;
            for (i, rec) in records.iter().enumerate() {
                match harness::replay(&cfg, rec) {
                    Ok(()) => println!("episode {i} (seed {}): PASS", rec.seed),
                    Err(e) => {
                        failures += 1;
                        println!("episode {i} (seed {}): FAIL ({e})", rec.seed);
                    }
                }
            }
            println!(
                "{} / {} episodes replayed bit-exactly",
                records.len() - failures,
                records.len()
            );
            if failures > 0 {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}
