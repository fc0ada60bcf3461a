use rand::Rng;

use super::{EnvSpec, Environment, EpisodeTask, StepResult};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// `K` actuators push with unit gain except for one that has been disabled.
/// Per-step reward is `sum_i g_i a_i - penalty * sum_i a_i^2`, with actions
/// clipped into `[-1, 1]`. The dynamics are noiseless; all randomness is the
/// choice of the crippled actuator.
#[derive(Debug, Clone)]
pub struct CrippledThruster<T> {
    spec: EnvSpec,
    penalty: T,
    crippled: usize,
    t: usize,
}

impl<T: Scalar> CrippledThruster<T> {
    pub fn new(actuators: usize, penalty: T, episode_length: usize) -> Self {
        CrippledThruster {
            spec: EnvSpec {
                name: "crippled_thruster".into(),
                obs_dim: actuators + 2,
                action_dim: actuators,
                episode_length,
            },
            penalty,
            crippled: 0,
            t: 0,
        }
    }

    pub fn crippled_index(&self) -> usize {
        self.crippled
    }

    /// Reward for `action` given the current crippled actuator; no clipping.
    pub fn reward(&self, action: &[T]) -> T {
        action
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let gain = if i == self.crippled {
                    T::zero()
                } else {
                    T::one()
                };
                gain * a - self.penalty * a * a
            })
            .sum()
    }
}

impl<T: Scalar> Environment<T> for CrippledThruster<T> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: u64) -> Vec<T> {
        let mut rng = rng_from_seed(episode_seed);
        self.crippled = rng.random_range(0..self.spec.action_dim);
        self.t = 0;
        vec![T::zero(); self.spec.obs_dim]
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        if self.t >= self.spec.episode_length {
            return Err(Error::EpisodeDone);
        }
        check_len("thruster action", self.spec.action_dim, action.len())?;
        let clipped: Vec<T> = action
            .iter()
            .map(|&a| {
                if a.is_nan() {
                    T::zero()
                } else {
                    a.max(-T::one()).min(T::one())
                }
            })
            .collect();
        let reward = self.reward(&clipped);
        self.t += 1;
        let mut obs = clipped;
        obs.push(reward);
        obs.push(T::lit(self.t as f64 / self.spec.episode_length as f64));
        Ok(StepResult {
            obs,
            reward,
            done: self.t == self.spec.episode_length,
        })
    }

    fn task(&self) -> EpisodeTask {
        EpisodeTask {
            hidden_index: Some(self.crippled),
        }
    }
}
