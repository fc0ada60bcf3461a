use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evoplastic::checkpoint::Checkpoint;
use evoplastic::config::RunConfig;
use evoplastic::engine::Workers;
use evoplastic::protocol::{
    bench_cases, compare, evaluate_checkpoint, run_bench, run_training, TrainOutput,
    CHECKPOINT_FILE, DEFAULT_COMPARE_MODELS, DEFAULT_EVAL_EPISODES, DEFAULT_EVAL_SEED,
};

#[derive(Parser)]
#[command(
    name = "evoplastic",
    version,
    about = "Evolve self-modifying network policies with evolution strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Evaluation threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (defaults to `run.out_dir` from the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a run config, or resume from a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to resume from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override `es.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint over fresh episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        /// Base seed of the evaluation episodes.
        #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train and evaluate self-modifying vs static variants.
    Compare {
        /// Config of the self-modifying variant.
        #[arg(long)]
        config: PathBuf,
        /// Config of the static variant; defaults to `--config` with plasticity off.
        #[arg(long)]
        static_config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_COMPARE_MODELS)]
        models: usize,
        #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        /// Base seed of the evaluation episodes.
        #[arg(long, default_value_t = DEFAULT_EVAL_SEED)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the sphere / Rosenbrock optimizer checks.
    Bench {
        /// Master seed of the optimizer runs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn workers(flag: Option<usize>, config: &RunConfig) -> Workers {
    Workers(flag.unwrap_or(config.run.workers))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            checkpoint,
            seed,
            common,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.es.master_seed = seed;
            }
            let out_dir = common
                .out_dir
                .clone()
                .unwrap_or_else(|| cfg.run.out_dir.clone());
            let resume = checkpoint
                .map(|p| Checkpoint::load(&p).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let ck = run_training(
                &cfg,
                resume,
                &TrainOutput {
                    dir: Some(out_dir.clone()),
                },
                workers(common.workers, &cfg),
            )?;
            let last = ck.log.records.last();
            println!(
                "trained {} generations; last mean return {:.4}; checkpoint {}",
                ck.generation(),
                last.map_or(f64::NAN, |r| r.mean_return),
                out_dir.join(CHECKPOINT_FILE).display()
            );
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            out_dir,
        } => {
            let ck = Checkpoint::load(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let report = evaluate_checkpoint(&ck, episodes, seed)?;
            let dir = out_dir
                .unwrap_or_else(|| checkpoint.parent().map(PathBuf::from).unwrap_or_default());
            report.write_outputs(&dir)?;
            println!(
                "{} episodes: mean {:.4} std {:.4} min {:.4} max {:.4}",
                report.episodes,
                report.mean_return,
                report.std_return,
                report.min_return,
                report.max_return
            );
            for t in &report.per_task {
                println!(
                    "  hidden index {}: {} episodes, mean {:.4}",
                    t.hidden_index, t.count, t.mean_return
                );
            }
        }
        Command::Compare {
            config,
            static_config,
            models,
            episodes,
            seed,
            common,
        } => {
            let sm = RunConfig::load(&config)?;
            let st = match static_config {
                Some(p) => RunConfig::load(p)?,
                None => {
                    let mut st = sm.clone();
                    st.network.plastic = false;
                    st
                }
            };
            if !sm.network.plastic {
                bail!("--config must describe the plastic variant (network.plastic = true)");
            }
            let out_dir = common
                .out_dir
                .clone()
                .unwrap_or_else(|| sm.run.out_dir.join("compare"));
            let report = compare(
                &sm,
                &st,
                models,
                episodes,
                seed,
                Some(&out_dir),
                workers(common.workers, &sm),
            )?;
            for s in [&report.sm, &report.static_] {
                println!(
                    "{:>6}: mean {:.4}  per model {:?}",
                    s.variant.label(),
                    s.mean_return,
                    s.model_means
                );
            }
            println!("wrote {}", out_dir.display());
        }
        Command::Bench {
            seed,
            workers,
            out_dir,
        } => {
            let mut results = Vec::new();
            for case in bench_cases(seed) {
                let r = run_bench(&case, Workers(workers.unwrap_or(0)))?;
                println!(
                    "{:<10} best {:>12.4e} threshold {:>8.1e} first above at {:?} -> {}",
                    r.name,
                    r.best_return,
                    r.threshold,
                    r.first_generation_above,
                    if r.passed { "pass" } else { "FAIL" }
                );
                results.push(r);
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join("bench.json"),
                    serde_json::to_string_pretty(&results)?,
                )?;
            }
            if results.iter().any(|r| !r.passed) {
                bail!("benchmark thresholds not met");
            }
        }
    }
    Ok(())
}
