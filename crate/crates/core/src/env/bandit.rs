use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, Environment, EpisodeTask, StepResult};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Two-armed Bernoulli bandit whose good arm is hidden, drawn per episode
/// and (optionally) swapped once at the midpoint. The chosen arm is the
/// argmax of the action, ties going to arm 0.
///
/// One uniform draw is consumed per step whatever arm is pulled, so the
/// payoff sequence is a function of the episode seed and the actions only.
#[derive(Debug, Clone)]
pub struct NonstationaryBandit {
    spec: EnvSpec,
    good_prob: f64,
    bad_prob: f64,
    flip_at_midpoint: bool,
    initial_good: usize,
    good: usize,
    t: usize,
    rng: ChaCha8Rng,
}

impl NonstationaryBandit {
    pub fn new(
        good_prob: f64,
        bad_prob: f64,
        episode_length: usize,
        flip_at_midpoint: bool,
    ) -> Self {
        NonstationaryBandit {
            spec: EnvSpec {
                name: "nonstationary_bandit".into(),
                obs_dim: 3,
                action_dim: 2,
                episode_length,
            },
            good_prob,
            bad_prob,
            flip_at_midpoint,
            initial_good: 0,
            good: 0,
            t: 0,
            rng: rng_from_seed(0),
        }
    }

    /// The arm currently paying `good_prob`.
    pub fn good_arm(&self) -> usize {
        self.good
    }
}

fn argmax<T: Scalar>(action: &[T]) -> usize {
    let mut best = 0;
    for (i, &a) in action.iter().enumerate().skip(1) {
        if a > action[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Environment<T> for NonstationaryBandit {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: u64) -> Vec<T> {
        self.rng = rng_from_seed(episode_seed);
        self.initial_good = self.rng.random_range(0..2);
        self.good = self.initial_good;
        self.t = 0;
        vec![T::zero(); 3]
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        if self.t >= self.spec.episode_length {
            return Err(Error::EpisodeDone);
        }
        check_len("bandit action", 2, action.len())?;
        if self.flip_at_midpoint && self.t == self.spec.episode_length / 2 {
            self.good = 1 - self.initial_good;
        }
        let arm = argmax(action);
        let p = if arm == self.good {
            self.good_prob
        } else {
            self.bad_prob
        };
        let u: f64 = self.rng.random();
        let reward = if u < p { T::one() } else { T::zero() };
        self.t += 1;
        let mut obs = vec![T::zero(); 3];
        obs[arm] = T::one();
        obs[2] = reward;
        Ok(StepResult {
            obs,
            reward,
            done: self.t == self.spec.episode_length,
        })
    }

    fn task(&self) -> EpisodeTask {
        EpisodeTask {
            hidden_index: Some(self.initial_good),
        }
    }
}
