//! Parallel evaluation of one generation.
//!
//! Work items carry only indices and seeds. Each worker rebuilds the
//! perturbation for its items from `(master_seed, generation, index)`, keeps
//! a private environment instance, and returns one scalar per item. Items
//! are dealt to workers by index stride and results are written back by
//! index, so the output does not depend on the number of workers.

use std::num::NonZeroUsize;

use crate::env::{mean_return, EnvFactory};
use crate::error::{check_len, Error, Result};
use crate::es::{perturbation_seed, standard_noise, EsConfig, Population};
use crate::policy::GenomeTemplate;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, tag};

/// Worker count; `0` means one worker per available core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Workers(pub usize);

impl Workers {
    pub fn resolve(self) -> usize {
        if self.0 > 0 {
            self.0
        } else {
            std::thread::available_parallelism().map_or(1, NonZeroUsize::get)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkItem {
    pub generation: u64,
    /// Perturbation index; shared by both members of a mirrored pair.
    pub index: usize,
    pub mirrored_sign: i8,
    pub episode_seeds: Vec<u64>,
}

impl WorkItem {
    /// Position of this item's return in `Population::returns`.
    pub fn slot(&self, mirrored: bool) -> usize {
        if mirrored {
            2 * self.index + usize::from(self.mirrored_sign < 0)
        } else {
            self.index
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkResult<T> {
    pub index: usize,
    pub mirrored_sign: i8,
    pub mean_return: T,
}

/// Episode seeds shared by every individual of `generation`.
pub fn episode_seed_schedule(
    master_seed: u64,
    generation: u64,
    episodes_per_eval: usize,
) -> Vec<u64> {
    (0..episodes_per_eval as u64)
        .map(|k| derive_seed(master_seed, &[tag::EPISODE, generation, k]))
        .collect()
}

/// Episode seeds for one perturbation index when common random numbers are
/// disabled; both mirrored members still share them.
pub fn independent_episode_seeds(
    master_seed: u64,
    generation: u64,
    index: usize,
    episodes: usize,
) -> Vec<u64> {
    (0..episodes as u64)
        .map(|k| {
            derive_seed(
                master_seed,
                &[tag::EPISODE, generation, k, index as u64 + 1],
            )
        })
        .collect()
}

/// The work items of one generation in slot order.
pub fn work_items(config: &EsConfig, generation: u64) -> Vec<WorkItem> {
    let shared = config
        .common_random_numbers
        .then(|| episode_seed_schedule(config.master_seed, generation, config.episodes_per_eval));
    let seeds_for = |index: usize| match &shared {
        Some(s) => s.clone(),
        None => independent_episode_seeds(
            config.master_seed,
            generation,
            index,
            config.episodes_per_eval,
        ),
    };
    let mut items = Vec::with_capacity(config.evaluations_per_generation());
    for index in 0..config.population_size {
        let episode_seeds = seeds_for(index);
        if config.mirrored {
            items.push(WorkItem {
                generation,
                index,
                mirrored_sign: 1,
                episode_seeds: episode_seeds.clone(),
            });
            items.push(WorkItem {
                generation,
                index,
                mirrored_sign: -1,
                episode_seeds,
            });
        } else {
            items.push(WorkItem {
                generation,
                index,
                mirrored_sign: 1,
                episode_seeds,
            });
        }
    }
    items
}

fn run_item<T, G, F>(
    theta: &[T],
    config: &EsConfig,
    template: &G,
    env: &mut dyn crate::env::Environment<T>,
    item: &WorkItem,
) -> Result<WorkResult<T>>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    let step = T::lit(config.sigma * f64::from(item.mirrored_sign));
    let eps = standard_noise::<T>(
        perturbation_seed(config.master_seed, item.generation, item.index),
        theta.len(),
    );
    let candidate: Vec<T> = theta
        .iter()
        .zip(&eps)
        .map(|(&t, &e)| t + step * e)
        .collect();
    let mut policy = template.instantiate(&candidate)?;
    let mean_return = mean_return(&mut policy, env, &item.episode_seeds)?;
    Ok(WorkResult {
        index: item.index,
        mirrored_sign: item.mirrored_sign,
        mean_return,
    })
}

fn run_stride<T, G, F>(
    theta: &[T],
    config: &EsConfig,
    factory: &F,
    template: &G,
    items: &[WorkItem],
    offset: usize,
    stride: usize,
) -> Vec<(usize, Result<WorkResult<T>>)>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    let mut env = match factory.make() {
        Ok(env) => env,
        Err(e) => {
            let msg = e.to_string();
            return (offset..items.len())
                .step_by(stride)
                .map(|k| {
                    (
                        k,
                        Err(Error::InvalidArgument(format!(
                            "environment construction failed: {msg}"
                        ))),
                    )
                })
                .collect();
        }
    };
    (offset..items.len())
        .step_by(stride)
        .map(|k| {
            (
                k,
                run_item::<T, G, F>(theta, config, template, env.as_mut(), &items[k]),
            )
        })
        .collect()
}

/// Evaluates every individual of `generation` around `theta`.
pub fn evaluate_generation<T, G, F>(
    theta: &[T],
    config: &EsConfig,
    factory: &F,
    template: &G,
    generation: u64,
    workers: Workers,
) -> Result<Population<T>>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    check_len("theta", template.genome_len(), theta.len())?;
    let items = work_items(config, generation);
    let n_workers = workers.resolve().min(items.len()).max(1);

    let mut outcomes: Vec<(usize, Result<WorkResult<T>>)> = if n_workers == 1 {
        run_stride(theta, config, factory, template, &items, 0, 1)
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n_workers)
                .map(|w| {
                    let items = &items;
                    scope.spawn(move || {
                        run_stride(theta, config, factory, template, items, w, n_workers)
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    outcomes.sort_by_key(|(k, _)| *k);

    let mut returns = vec![T::zero(); items.len()];
    for (k, outcome) in outcomes {
        let item = &items[k];
        let result = outcome.map_err(|e| Error::Evaluation {
            generation,
            index: item.slot(config.mirrored),
            source: Box::new(e),
        })?;
        returns[item.slot(config.mirrored)] = result.mean_return;
    }
    Ok(Population {
        generation,
        perturbation_seeds: (0..config.population_size)
            .map(|i| perturbation_seed(config.master_seed, generation, i))
            .collect(),
        mirrored: config.mirrored,
        returns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{evaluate_genome, EnvConfig};
    use crate::plastic::{Activation, LayerOptions, PlasticNetwork};

    fn thruster_setup() -> (EnvConfig, PlasticNetwork<f64>) {
        let env = EnvConfig::crippled_thruster();
        let net =
            PlasticNetwork::zeros(&[6, 4, 4], Activation::Tanh, LayerOptions::default()).unwrap();
        (env, net)
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (env, net) = thruster_setup();
        let cfg = EsConfig {
            population_size: 12,
            episodes_per_eval: 2,
            master_seed: 99,
            ..EsConfig::default()
        };
        let theta: Vec<f64> = (0..net.genome_len())
            .map(|i| (i as f64 * 0.13).sin() * 0.5)
            .collect();
        let one = evaluate_generation(&theta, &cfg, &env, &net, 4, Workers(1)).unwrap();
        for w in [2, 3, 8] {
            let many = evaluate_generation(&theta, &cfg, &env, &net, 4, Workers(w)).unwrap();
            assert_eq!(
                one.returns.iter().map(|r| r.to_bits()).collect::<Vec<_>>(),
                many.returns.iter().map(|r| r.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn zero_sigma_single_individual_matches_direct_evaluation() {
        let (env, net) = thruster_setup();
        let cfg = EsConfig {
            population_size: 1,
            mirrored: false,
            rank_shaping: false,
            sigma: 0.0,
            ..EsConfig::default()
        };
        let theta: Vec<f64> = (0..net.genome_len())
            .map(|i| (i as f64 * 0.71).cos() * 0.3)
            .collect();
        let pop = evaluate_generation(&theta, &cfg, &env, &net, 2, Workers(1)).unwrap();
        let seeds = episode_seed_schedule(cfg.master_seed, 2, cfg.episodes_per_eval);
        let direct = evaluate_genome(&theta, &net, &env, &seeds).unwrap();
        assert_eq!(pop.returns, vec![direct]);
    }

    #[test]
    fn evaluation_counts() {
        let mut cfg = EsConfig {
            population_size: 7,
            ..EsConfig::default()
        };
        assert_eq!(work_items(&cfg, 0).len(), 14);
        cfg.mirrored = false;
        assert_eq!(work_items(&cfg, 0).len(), 7);
    }

    #[test]
    fn schedule_shared_within_generation_and_distinct_across() {
        let cfg = EsConfig::default();
        let items = work_items(&cfg, 5);
        assert!(items
            .windows(2)
            .all(|p| p[0].episode_seeds == p[1].episode_seeds));
        let a = episode_seed_schedule(3, 10, 4);
        let b = episode_seed_schedule(3, 11, 4);
        assert_eq!(a, episode_seed_schedule(3, 10, 4));
        assert!(a.iter().all(|s| !b.contains(s)));
    }

    #[test]
    fn independent_seeds_differ_between_pairs_only() {
        let cfg = EsConfig {
            common_random_numbers: false,
            population_size: 3,
            ..EsConfig::default()
        };
        let items = work_items(&cfg, 0);
        assert_eq!(items[0].episode_seeds, items[1].episode_seeds);
        assert_ne!(items[0].episode_seeds, items[2].episode_seeds);
    }

    #[test]
    fn work_item_size_is_independent_of_genome() {
        let cfg = EsConfig::default();
        let item = &work_items(&cfg, 0)[0];
        assert_eq!(item.episode_seeds.len(), cfg.episodes_per_eval);
    }

    #[test]
    fn failure_reports_offending_index() {
        let net = PlasticNetwork::<f64>::zeros(&[3, 4], Activation::Tanh, LayerOptions::default())
            .unwrap();
        // thruster observations have 6 entries, the net expects 3
        let env = EnvConfig::crippled_thruster();
        let cfg = EsConfig {
            population_size: 2,
            ..EsConfig::default()
        };
        let theta = vec![0.0; net.genome_len()];
        match evaluate_generation(&theta, &cfg, &env, &net, 8, Workers(2)) {
            Err(Error::Evaluation {
                generation, index, ..
            }) => {
                assert_eq!(generation, 8);
                assert_eq!(index, 0);
            }
            other => panic!("{other:?}"),
        }
    }
}
