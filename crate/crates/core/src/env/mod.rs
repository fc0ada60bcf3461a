//! Episodic environments and genome rollouts.
//!
//! Two meta-learning tasks hide an episode-level variable from the agent and
//! resample it at every reset:
//!
//! * [`CrippledThruster`]: one of `K` actuators is silently disabled.
//!   Observation layout: `[a_prev_0 .. a_prev_{K-1}, r_prev, t / T]`.
//! * [`NonstationaryBandit`]: two Bernoulli arms whose good arm flips at
//!   the episode midpoint. Observation layout: `[arm0_prev, arm1_prev, r_prev]`.
//!
//! [`Benchmark`] wraps the sphere and Rosenbrock functions as single-step
//! episodes with empty observations so the optimizer can be exercised end to
//! end through the same interface.

mod bandit;
mod benchmark;
mod thruster;

pub use bandit::NonstationaryBandit;
pub use benchmark::{benchmark_eval, Benchmark, BenchmarkKind};
pub use thruster::CrippledThruster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{GenomeTemplate, Policy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub episode_length: usize,
}

/// The hidden per-episode variable: the crippled actuator for
/// `CrippledThruster`, the initially good arm for the bandit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeTask {
    pub hidden_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub obs: Vec<T>,
    pub reward: T,
    pub done: bool,
}

pub trait Environment<T>: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode whose hidden task is drawn from `episode_seed`.
    fn reset(&mut self, episode_seed: u64) -> Vec<T>;

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>>;

    fn task(&self) -> EpisodeTask;
}

/// Produces independent environment instances, one per worker.
pub trait EnvFactory<T>: Sync {
    fn make(&self) -> Result<Box<dyn Environment<T>>>;
}

impl<T, F> EnvFactory<T> for F
where
    F: Fn() -> Box<dyn Environment<T>> + Sync,
{
    fn make(&self) -> Result<Box<dyn Environment<T>>> {
        Ok(self())
    }
}

fn default_actuators() -> usize {
    4
}
fn default_penalty() -> f64 {
    0.25
}
fn default_thruster_len() -> usize {
    100
}
fn default_good_prob() -> f64 {
    0.9
}
fn default_bad_prob() -> f64 {
    0.1
}
fn default_bandit_len() -> usize {
    200
}
fn default_true() -> bool {
    true
}

/// Environment selection by string key, as written in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    CrippledThruster {
        #[serde(default = "default_actuators")]
        actuators: usize,
        #[serde(default = "default_penalty")]
        penalty: f64,
        #[serde(default = "default_thruster_len")]
        episode_length: usize,
    },
    NonstationaryBandit {
        #[serde(default = "default_good_prob")]
        good_prob: f64,
        #[serde(default = "default_bad_prob")]
        bad_prob: f64,
        #[serde(default = "default_bandit_len")]
        episode_length: usize,
        #[serde(default = "default_true")]
        flip_at_midpoint: bool,
    },
    Sphere {
        dim: usize,
        #[serde(default)]
        center: f64,
    },
    Rosenbrock {
        dim: usize,
        /// Shifts the point before evaluation, moving the optimum to
        /// `1 - offset` in every coordinate.
        #[serde(default)]
        offset: f64,
    },
}

impl EnvConfig {
    pub fn crippled_thruster() -> Self {
        EnvConfig::CrippledThruster {
            actuators: default_actuators(),
            penalty: default_penalty(),
            episode_length: default_thruster_len(),
        }
    }

    pub fn nonstationary_bandit() -> Self {
        EnvConfig::NonstationaryBandit {
            good_prob: default_good_prob(),
            bad_prob: default_bad_prob(),
            episode_length: default_bandit_len(),
            flip_at_midpoint: true,
        }
    }

    /// Benchmarks are optimized directly over their input vector rather than
    /// through a network.
    pub fn is_benchmark(&self) -> bool {
        matches!(
            self,
            EnvConfig::Sphere { .. } | EnvConfig::Rosenbrock { .. }
        )
    }

    pub fn key(&self) -> &'static str {
        match self {
            EnvConfig::CrippledThruster { .. } => "crippled_thruster",
            EnvConfig::NonstationaryBandit { .. } => "nonstationary_bandit",
            EnvConfig::Sphere { .. } => "sphere",
            EnvConfig::Rosenbrock { .. } => "rosenbrock",
        }
    }

    /// Checks parameter ranges, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::config(format!("env.{field}"), "must be positive"))
            } else {
                Ok(())
            }
        };
        let prob = |field: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("env.{field}"), "must lie in [0, 1]"))
            }
        };
        match *self {
            EnvConfig::CrippledThruster {
                actuators,
                penalty,
                episode_length,
            } => {
                positive("actuators", actuators)?;
                positive("episode_length", episode_length)?;
                if !(penalty >= 0.0 && penalty.is_finite()) {
                    return Err(Error::config(
                        "env.penalty",
                        "must be finite and non-negative",
                    ));
                }
            }
            EnvConfig::NonstationaryBandit {
                good_prob,
                bad_prob,
                episode_length,
                ..
            } => {
                prob("good_prob", good_prob)?;
                prob("bad_prob", bad_prob)?;
                positive("episode_length", episode_length)?;
            }
            EnvConfig::Sphere { dim, center } => {
                positive("dim", dim)?;
                if !center.is_finite() {
                    return Err(Error::config("env.center", "must be finite"));
                }
            }
            EnvConfig::Rosenbrock { dim, offset } => {
                if dim < 2 {
                    return Err(Error::config(
                        "env.dim",
                        "rosenbrock needs at least 2 dimensions",
                    ));
                }
                if !offset.is_finite() {
                    return Err(Error::config("env.offset", "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Environment<T>>> {
        self.validate()?;
        Ok(match *self {
            EnvConfig::CrippledThruster {
                actuators,
                penalty,
                episode_length,
            } => Box::new(CrippledThruster::new(
                actuators,
                T::lit(penalty),
                episode_length,
            )),
            EnvConfig::NonstationaryBandit {
                good_prob,
                bad_prob,
                episode_length,
                flip_at_midpoint,
            } => Box::new(NonstationaryBandit::new(
                good_prob,
                bad_prob,
                episode_length,
                flip_at_midpoint,
            )),
            EnvConfig::Sphere { dim, center } => Box::new(Benchmark::new(
                BenchmarkKind::Sphere {
                    center: T::lit(center),
                },
                dim,
            )?),
            EnvConfig::Rosenbrock { dim, offset } => Box::new(Benchmark::new(
                BenchmarkKind::Rosenbrock {
                    offset: T::lit(offset),
                },
                dim,
            )?),
        })
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build::<f64>()?.spec().clone())
    }
}

impl<T: Scalar> EnvFactory<T> for EnvConfig {
    fn make(&self) -> Result<Box<dyn Environment<T>>> {
        self.build()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome<T> {
    pub total_reward: T,
    pub task: EpisodeTask,
    pub steps: usize,
}

/// Rolls one lifetime: reset policy state and environment, then step until
/// done. Plastic traces carry over between steps of the episode.
pub fn run_episode<T: Scalar, P: Policy<T> + ?Sized>(
    policy: &mut P,
    env: &mut dyn Environment<T>,
    episode_seed: u64,
) -> Result<EpisodeOutcome<T>> {
    policy.reset();
    let mut obs = env.reset(episode_seed);
    let task = env.task();
    let mut total = T::zero();
    let mut steps = 0;
    loop {
        let action = policy.act(&obs)?;
        let res = env.step(&action)?;
        total = total + res.reward;
        steps += 1;
        if res.done {
            break;
        }
        obs = res.obs;
    }
    Ok(EpisodeOutcome {
        total_reward: total,
        task,
        steps,
    })
}

/// Mean episode return of an already built policy over `episode_seeds`.
pub fn mean_return<T: Scalar, P: Policy<T> + ?Sized>(
    policy: &mut P,
    env: &mut dyn Environment<T>,
    episode_seeds: &[u64],
) -> Result<T> {
    if episode_seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one episode seed is required".into(),
        ));
    }
    let mut sum = T::zero();
    for &seed in episode_seeds {
        sum = sum + run_episode(policy, env, seed)?.total_reward;
    }
    Ok(sum / T::lit(episode_seeds.len() as f64))
}

/// Mean lifetime return of genome `theta`.
pub fn evaluate_genome<T, G, F>(
    theta: &[T],
    template: &G,
    factory: &F,
    episode_seeds: &[u64],
) -> Result<T>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    let mut policy = template.instantiate(theta)?;
    let mut env = factory.make()?;
    mean_return(&mut policy, env.as_mut(), episode_seeds)
}
