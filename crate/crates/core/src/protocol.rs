//! Training, evaluation and comparison runs built on top of the optimizer:
//! the library side of the `train`, `eval`, `compare` and `bench` commands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::engine::Workers;
use crate::env::{run_episode, EnvConfig, EnvFactory};
use crate::error::{Error, Result};
use crate::es::{EsConfig, Trainer, TRAIN_LOG_HEADER};
use crate::policy::GenomeTemplate;
use crate::seed::{derive_seed, tag};

/// Episodes per evaluation report unless overridden.
pub const DEFAULT_EVAL_EPISODES: usize = 100;
/// Independently trained models per variant in a comparison.
pub const DEFAULT_COMPARE_MODELS: usize = 5;
pub const DEFAULT_EVAL_SEED: u64 = 20_240_601;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const EVAL_EPISODES_FILE: &str = "eval_episodes.csv";
pub const COMPARE_CSV_FILE: &str = "compare.csv";
pub const COMPARE_REPORT_FILE: &str = "compare_report.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Train log writer that appends and flushes one row per generation.
struct LogSink {
    writer: csv::Writer<File>,
}

impl LogSink {
    fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(create_file(path)?);
        writer.write_record(TRAIN_LOG_HEADER)?;
        Ok(LogSink { writer })
    }

    fn append(&mut self, record: &crate::es::TrainRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.writer.flush().map_err(|e| Error::io("<train log>", e))
    }
}

/// Where a training run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    /// `None` keeps everything in memory.
    pub dir: Option<PathBuf>,
}

/// Trains `config` from scratch, or continues `resume` when given. With an
/// output directory, the train log is streamed to `train_log.csv` and a
/// checkpoint is written every `run.checkpoint_every` generations and at the
/// end.
pub fn run_training(
    config: &RunConfig,
    resume: Option<Checkpoint>,
    output: &TrainOutput,
    workers: Workers,
) -> Result<Checkpoint> {
    config.validate()?;
    let template = config.template()?;
    let factory = &config.env;

    let mut trainer = match resume {
        Some(ck) => {
            let mut a = ck.config.clone();
            a.run = config.run.clone();
            if a != *config {
                return Err(Error::config(
                    "checkpoint",
                    "checkpoint was produced by a different run config",
                ));
            }
            Trainer::resume(
                config.es.clone(),
                &template,
                factory,
                workers,
                ck.state,
                ck.log,
            )?
        }
        None => Trainer::new(config.es.clone(), &template, factory, workers)?,
    };

    let mut sink = None;
    if let Some(dir) = &output.dir {
        create_dir(dir)?;
        let mut s = LogSink::create(&dir.join(TRAIN_LOG_FILE))?;
        for r in &trainer.log().records {
            s.append(r)?;
        }
        sink = Some(s);
    }
    let every = config.run.checkpoint_every;
    trainer.run_with(|t, record| {
        if let Some(s) = sink.as_mut() {
            s.append(record)?;
        }
        if let Some(dir) = &output.dir {
            if t.state().generation % every == 0 && !t.is_finished() {
                Checkpoint::new(config.clone(), t.state().clone(), t.log().clone())
                    .save(dir.join(CHECKPOINT_FILE))?;
            }
        }
        Ok(())
    })?;
    let (state, log) = trainer.into_parts();
    let ck = Checkpoint::new(config.clone(), state, log);
    if let Some(dir) = &output.dir {
        ck.save(dir.join(CHECKPOINT_FILE))?;
    }
    Ok(ck)
}

/// Seeds of the evaluation episodes; disjoint from training streams.
pub fn eval_seeds(seeds_base: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64)
        .map(|k| derive_seed(seeds_base, &[tag::EVALUATION, k]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub hidden_index: Option<usize>,
    pub total_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMean {
    pub hidden_index: usize,
    pub count: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_digest: String,
    pub env: String,
    pub plastic: bool,
    pub generation: u64,
    pub seeds_base: u64,
    pub episodes: usize,
    pub mean_return: f64,
    /// Sample standard deviation (zero for a single episode).
    pub std_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub per_task: Vec<TaskMean>,
    pub returns: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = create_file(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }

    /// Columns: `episode,seed,hidden_index,return`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["episode", "seed", "hidden_index", "return"])?;
        for r in &self.returns {
            w.write_record([
                r.episode.to_string(),
                r.seed.to_string(),
                r.hidden_index.map_or_else(String::new, |i| i.to_string()),
                r.total_return.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<eval csv>", e))
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        self.write_json(&dir.join(EVAL_REPORT_FILE))?;
        self.write_csv(create_file(&dir.join(EVAL_EPISODES_FILE))?)
    }
}

/// Rolls `episodes` fresh episodes of genome `theta` under `config`.
pub fn evaluate_theta(
    config: &RunConfig,
    theta: &[f64],
    generation: u64,
    episodes: usize,
    seeds_base: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be positive".into()));
    }
    let template = config.template()?;
    let mut policy = template.instantiate(theta)?;
    let mut env = EnvFactory::<f64>::make(&config.env)?;
    let mut returns = Vec::with_capacity(episodes);
    for (episode, seed) in eval_seeds(seeds_base, episodes).into_iter().enumerate() {
        let outcome = run_episode(&mut policy, env.as_mut(), seed)?;
        returns.push(EpisodeRecord {
            episode,
            seed,
            hidden_index: outcome.task.hidden_index,
            total_return: outcome.total_reward,
        });
    }

    let values: Vec<f64> = returns.iter().map(|r| r.total_return).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for r in &returns {
        if let Some(i) = r.hidden_index {
            let e = groups.entry(i).or_default();
            e.0 += 1;
            e.1 += r.total_return;
        }
    }
    Ok(EvalReport {
        config_digest: config.digest(),
        env: config.env.key().to_string(),
        plastic: config.network.plastic,
        generation,
        seeds_base,
        episodes,
        mean_return: mean,
        std_return: std,
        min_return: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_return: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_task: groups
            .into_iter()
            .map(|(hidden_index, (count, sum))| TaskMean {
                hidden_index,
                count,
                mean_return: sum / count as f64,
            })
            .collect(),
        returns,
    })
}

pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    episodes: usize,
    seeds_base: u64,
) -> Result<EvalReport> {
    evaluate_theta(
        &ck.config,
        ck.theta(),
        ck.generation(),
        episodes,
        seeds_base,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SelfModifying,
    Static,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::SelfModifying => "sm",
            Variant::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub variant: Variant,
    pub model: usize,
    pub master_seed: u64,
    pub mean_return: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub mean_return: f64,
    pub model_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub models: usize,
    pub episodes: usize,
    pub sm_digest: String,
    pub static_digest: String,
    pub sm: VariantSummary,
    pub static_: VariantSummary,
    pub results: Vec<ModelResult>,
}

impl CompareReport {
    /// Columns: `row_type,variant,model,master_seed,episode,hidden_index,return`.
    /// One `episode` row per evaluated episode, then one `model_mean` row per
    /// model and one `variant_mean` row per variant.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "row_type",
            "variant",
            "model",
            "master_seed",
            "episode",
            "hidden_index",
            "return",
        ])?;
        for m in &self.results {
            for r in &m.eval.returns {
                w.write_record([
                    "episode".to_string(),
                    m.variant.label().to_string(),
                    m.model.to_string(),
                    m.master_seed.to_string(),
                    r.episode.to_string(),
                    r.hidden_index.map_or_else(String::new, |i| i.to_string()),
                    r.total_return.to_string(),
                ])?;
            }
        }
        for m in &self.results {
            w.write_record([
                "model_mean".to_string(),
                m.variant.label().to_string(),
                m.model.to_string(),
                m.master_seed.to_string(),
                String::new(),
                String::new(),
                m.mean_return.to_string(),
            ])?;
        }
        for s in [&self.sm, &self.static_] {
            w.write_record([
                "variant_mean".to_string(),
                s.variant.label().to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                s.mean_return.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<compare csv>", e))
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        self.write_csv(create_file(&dir.join(COMPARE_CSV_FILE))?)?;
        let path = dir.join(COMPARE_REPORT_FILE);
        let mut f = create_file(&path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(&path, e))
    }
}

/// Master seed of model `model` in a comparison.
pub fn model_seed(base: u64, model: usize) -> u64 {
    base.wrapping_add(model as u64)
}

/// Trains `models` independent models per variant and evaluates each on the
/// same `episodes` seeds. Model `m` of both variants shares a master seed.
pub fn compare(
    sm: &RunConfig,
    static_: &RunConfig,
    models: usize,
    episodes: usize,
    seeds_base: u64,
    out_dir: Option<&Path>,
    workers: Workers,
) -> Result<CompareReport> {
    if !sm.network.plastic || static_.network.plastic {
        return Err(Error::config(
            "network.plastic",
            "compare expects a plastic config and a static config",
        ));
    }
    if !sm.differs_only_in_plasticity(static_) {
        return Err(Error::config(
            "config",
            "self-modifying and static configs must differ only in network.plastic",
        ));
    }
    if models == 0 {
        return Err(Error::InvalidArgument("models must be positive".into()));
    }

    let mut results = Vec::with_capacity(2 * models);
    for (variant, base) in [(Variant::SelfModifying, sm), (Variant::Static, static_)] {
        for model in 0..models {
            let mut cfg = base.clone();
            cfg.es.master_seed = model_seed(base.es.master_seed, model);
            let output = TrainOutput {
                dir: out_dir.map(|d| d.join(variant.label()).join(format!("model_{model}"))),
            };
            let ck = run_training(&cfg, None, &output, workers)?;
            let eval = evaluate_checkpoint(&ck, episodes, seeds_base)?;
            results.push(ModelResult {
                variant,
                model,
                master_seed: cfg.es.master_seed,
                mean_return: eval.mean_return,
                eval,
            });
        }
    }
    let summary = |variant: Variant| {
        let model_means: Vec<f64> = results
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.mean_return)
            .collect();
        VariantSummary {
            variant,
            mean_return: model_means.iter().sum::<f64>() / model_means.len() as f64,
            model_means,
        }
    };
    let report = CompareReport {
        models,
        episodes,
        sm_digest: sm.digest(),
        static_digest: static_.digest(),
        sm: summary(Variant::SelfModifying),
        static_: summary(Variant::Static),
        results,
    };
    if let Some(dir) = out_dir {
        report.write_outputs(dir)?;
    }
    Ok(report)
}

/// One optimizer oracle problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: &'static str,
    pub config: RunConfig,
    /// The center point must reach a return above this.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub name: String,
    pub generations: u64,
    pub threshold: f64,
    pub best_return: f64,
    pub first_generation_above: Option<u64>,
    pub passed: bool,
}

/// The benchmark suite: a 10-d sphere centered at 1 and a 2-d Rosenbrock
/// shifted so the origin sits at (-1.2, -1.2), both started from the origin.
pub fn bench_cases(master_seed: u64) -> Vec<BenchCase> {
    let es = |iterations| EsConfig {
        population_size: 50,
        sigma: 0.1,
        learning_rate: 0.05,
        iterations,
        master_seed,
        episodes_per_eval: 1,
        ..EsConfig::default()
    };
    let config = |env, iterations| RunConfig {
        env,
        network: Default::default(),
        es: es(iterations),
        run: Default::default(),
    };
    vec![
        BenchCase {
            name: "sphere",
            config: config(
                EnvConfig::Sphere {
                    dim: 10,
                    center: 1.0,
                },
                300,
            ),
            threshold: -1e-3,
        },
        BenchCase {
            name: "rosenbrock",
            config: config(
                EnvConfig::Rosenbrock {
                    dim: 2,
                    offset: -1.2,
                },
                2000,
            ),
            threshold: -1.0,
        },
    ]
}

/// Trains one benchmark, tracking the return of the current center point.
pub fn run_bench(case: &BenchCase, workers: Workers) -> Result<BenchResult> {
    let template = case.config.template()?;
    let factory = &case.config.env;
    let mut trainer = Trainer::new(case.config.es.clone(), &template, factory, workers)?;
    let mut best = f64::NEG_INFINITY;
    let mut first = None;
    trainer.run_with(|t, record| {
        let r = crate::env::evaluate_genome(&t.state().theta, &template, factory, &[0])?;
        best = best.max(r);
        if first.is_none() && r > case.threshold {
            first = Some(record.generation);
        }
        Ok(())
    })?;
    Ok(BenchResult {
        name: case.name.to_string(),
        generations: case.config.es.iterations,
        threshold: case.threshold,
        best_return: best,
        first_generation_above: first,
        passed: best > case.threshold,
    })
}
