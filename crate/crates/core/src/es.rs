//! Simplified natural evolution strategies.
//!
//! Each generation samples Gaussian perturbations `v_i = sigma * eps_i`,
//! evaluates `theta + v_i`, optionally replaces returns by centered ranks,
//! and takes the step
//!
//! ```text
//! theta <- theta + lr / (n * sigma^2) * sum_i v_i * f_i
//! ```
//!
//! where `n` counts evaluated individuals (`2N` with mirrored sampling).
//! Perturbations are never stored: they are regenerated from
//! `(master_seed, generation, index)`.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{evaluate_generation, Workers};
use crate::env::EnvFactory;
use crate::error::{check_len, Error, Result};
use crate::policy::GenomeTemplate;
use crate::scalar::{l2_norm, Scalar};
use crate::seed::{derive_seed, rng_from_seed, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    /// Number of noise vectors per generation; doubled in evaluations when
    /// `mirrored` is set.
    pub population_size: usize,
    /// Standard deviation of the perturbations.
    pub sigma: f64,
    pub learning_rate: f64,
    pub iterations: u64,
    pub master_seed: u64,
    pub mirrored: bool,
    pub rank_shaping: bool,
    /// Episodes averaged into each individual's fitness.
    pub episodes_per_eval: usize,
    /// Share one episode seed list across a generation.
    pub common_random_numbers: bool,
    pub weight_decay: f64,
    pub momentum: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population_size: 50,
            sigma: 0.1,
            learning_rate: 0.05,
            iterations: 300,
            master_seed: 0,
            mirrored: true,
            rank_shaping: true,
            episodes_per_eval: 3,
            common_random_numbers: true,
            weight_decay: 0.0,
            momentum: 0.0,
        }
    }
}

impl EsConfig {
    /// Individuals evaluated per generation.
    pub fn evaluations_per_generation(&self) -> usize {
        if self.mirrored {
            2 * self.population_size
        } else {
            self.population_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("es.population_size", "must be positive"));
        }
        if self.evaluations_per_generation() < 2 && self.rank_shaping {
            return Err(Error::config(
                "es.population_size",
                "rank shaping needs at least two evaluated individuals",
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("es.sigma", "must be positive and finite"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "es.learning_rate",
                "must be finite and non-negative",
            ));
        }
        if self.iterations == 0 {
            return Err(Error::config("es.iterations", "must be positive"));
        }
        if self.episodes_per_eval == 0 {
            return Err(Error::config("es.episodes_per_eval", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("es.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(
                "es.weight_decay",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// One generation's evaluated individuals.
///
/// With mirrored sampling `returns[2 * i]` belongs to `theta + v_i` and
/// `returns[2 * i + 1]` to `theta - v_i`; otherwise `returns[i]` belongs to
/// `theta + v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    pub generation: u64,
    pub perturbation_seeds: Vec<u64>,
    pub mirrored: bool,
    pub returns: Vec<T>,
}

impl<T> Population<T> {
    pub fn expected_returns(&self) -> usize {
        if self.mirrored {
            2 * self.perturbation_seeds.len()
        } else {
            self.perturbation_seeds.len()
        }
    }
}

/// Seed of the noise stream for individual `index` of `generation`.
pub fn perturbation_seed(master_seed: u64, generation: u64, index: usize) -> u64 {
    derive_seed(master_seed, &[tag::PERTURBATION, generation, index as u64])
}

/// Unit-variance Gaussian vector regenerated from `seed`.
pub fn standard_noise<T: Scalar>(seed: u64, dim: usize) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    (0..dim)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// `v ~ N(0, sigma^2 I)` for individual `(generation, index)`.
pub fn perturbation<T: Scalar>(
    master_seed: u64,
    generation: u64,
    index: usize,
    dim: usize,
    sigma: T,
) -> Vec<T> {
    let mut v = standard_noise::<T>(perturbation_seed(master_seed, generation, index), dim);
    v.iter_mut().for_each(|x| *x = *x * sigma);
    v
}

/// Maps returns to `rank / (n - 1) - 0.5` with 0-based ascending ranks.
/// Tied values share the mean of their ranks; NaN ranks lowest.
pub fn centered_ranks<T: Scalar>(returns: &[T]) -> Result<Vec<T>> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "centered ranks need at least 2 returns, got {n}"
        )));
    }
    let key = |x: T| if x.is_nan() { T::neg_infinity() } else { x };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        key(returns[a])
            .partial_cmp(&key(returns[b]))
            .unwrap_or(Ordering::Equal)
    });
    let mut ranks = vec![T::zero(); n];
    let denom = T::lit((n - 1) as f64);
    let half = T::lit(0.5);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && key(returns[order[end]]) == key(returns[order[start]]) {
            end += 1;
        }
        let mean_rank = T::lit((start + end - 1) as f64 / 2.0);
        for &idx in &order[start..end] {
            ranks[idx] = mean_rank / denom - half;
        }
        start = end;
    }
    Ok(ranks)
}

/// `1 / (n sigma^2) * sum_i v_i f_i` for explicit perturbations `v_i`
/// (already scaled by sigma) and shaped fitness values `f_i`.
pub fn search_gradient<T: Scalar>(
    perturbations: &[Vec<T>],
    fitness: &[T],
    sigma: T,
) -> Result<Vec<T>> {
    check_len("fitness values", perturbations.len(), fitness.len())?;
    let dim = perturbations.first().map_or(0, Vec::len);
    let mut g = vec![T::zero(); dim];
    for (v, &f) in perturbations.iter().zip(fitness) {
        check_len("perturbation", dim, v.len())?;
        for (gi, &vi) in g.iter_mut().zip(v) {
            *gi = *gi + vi * f;
        }
    }
    let scale = T::one() / (T::lit(perturbations.len() as f64) * sigma * sigma);
    g.iter_mut().for_each(|x| *x = *x * scale);
    Ok(g)
}

fn shaped_fitness<T: Scalar>(returns: &[T], rank_shaping: bool) -> Result<Vec<T>> {
    if rank_shaping {
        centered_ranks(returns)
    } else {
        Ok(returns.to_vec())
    }
}

/// Search-gradient estimate from a population, regenerating its noise.
pub fn population_gradient<T: Scalar>(
    dim: usize,
    population: &Population<T>,
    config: &EsConfig,
) -> Result<Vec<T>> {
    if population.returns.len() != population.expected_returns() {
        return Err(Error::InvalidArgument(format!(
            "population for generation {} has {} returns, expected {}",
            population.generation,
            population.returns.len(),
            population.expected_returns()
        )));
    }
    if population.returns.is_empty() {
        return Err(Error::InvalidArgument("empty population".into()));
    }
    let sigma = T::lit(config.sigma);
    let fitness = shaped_fitness(&population.returns, config.rank_shaping)?;
    let mut g = vec![T::zero(); dim];
    for (i, &seed) in population.perturbation_seeds.iter().enumerate() {
        // +v f+ and -v f- fold into v (f+ - f-)
        let weight = if population.mirrored {
            fitness[2 * i] - fitness[2 * i + 1]
        } else {
            fitness[i]
        };
        if weight == T::zero() {
            continue;
        }
        let eps = standard_noise::<T>(seed, dim);
        for (gi, &e) in g.iter_mut().zip(&eps) {
            *gi = *gi + sigma * e * weight;
        }
    }
    let scale = T::one() / (T::lit(population.returns.len() as f64) * sigma * sigma);
    g.iter_mut().for_each(|x| *x = *x * scale);
    Ok(g)
}

/// Plain SGD step. `theta` is left untouched.
pub fn update<T: Scalar>(
    theta: &[T],
    population: &Population<T>,
    config: &EsConfig,
) -> Result<Vec<T>> {
    let g = population_gradient(theta.len(), population, config)?;
    let lr = T::lit(config.learning_rate);
    Ok(theta.iter().zip(&g).map(|(&t, &gi)| t + lr * gi).collect())
}

/// Optimizer state carried between generations and into checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState<T> {
    /// Number of completed generations.
    pub generation: u64,
    pub theta: Vec<T>,
    /// Momentum buffer; all zero unless momentum is configured.
    pub velocity: Vec<T>,
}

impl<T: Scalar> EsState<T> {
    /// Zero-vector starting point.
    pub fn initial(dim: usize) -> Self {
        EsState {
            generation: 0,
            theta: vec![T::zero(); dim],
            velocity: vec![T::zero(); dim],
        }
    }

    /// Applies an ascent step for gradient `g`. Without momentum or weight
    /// decay this is exactly `theta + lr * g`.
    pub fn apply(&mut self, g: &[T], config: &EsConfig) {
        let lr = T::lit(config.learning_rate);
        if config.momentum == 0.0 && config.weight_decay == 0.0 {
            for (t, &gi) in self.theta.iter_mut().zip(g) {
                *t = *t + lr * gi;
            }
        } else {
            let mu = T::lit(config.momentum);
            let wd = T::lit(config.weight_decay);
            for ((t, v), &gi) in self.theta.iter_mut().zip(self.velocity.iter_mut()).zip(g) {
                *v = mu * *v + gi - wd * *t;
                *t = *t + lr * *v;
            }
        }
        self.generation += 1;
    }
}

/// Per-generation metrics. All fields but `wall_ms` are deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub generation: u64,
    pub mean_return: f64,
    pub max_return: f64,
    pub min_return: f64,
    pub theta_norm: f64,
    pub wall_ms: u64,
}

impl TrainRecord {
    /// Bitwise equality on the deterministic columns.
    pub fn same_trajectory(&self, other: &TrainRecord) -> bool {
        self.generation == other.generation
            && self.mean_return.to_bits() == other.mean_return.to_bits()
            && self.max_return.to_bits() == other.max_return.to_bits()
            && self.min_return.to_bits() == other.min_return.to_bits()
            && self.theta_norm.to_bits() == other.theta_norm.to_bits()
    }
}

pub const TRAIN_LOG_HEADER: [&str; 6] = [
    "generation",
    "mean_return",
    "max_return",
    "min_return",
    "theta_norm",
    "wall_ms",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_trajectory(b))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record(TRAIN_LOG_HEADER)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(false)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != TRAIN_LOG_HEADER {
            return Err(Error::InvalidArgument(format!(
                "unexpected train log header {header:?}"
            )));
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TrainLog { records })
    }
}

/// Drives generations of evaluation and update, one at a time so callers can
/// checkpoint between them.
pub struct Trainer<'a, T, G: ?Sized, F: ?Sized> {
    config: EsConfig,
    template: &'a G,
    factory: &'a F,
    workers: Workers,
    state: EsState<T>,
    log: TrainLog,
}

impl<'a, T, G, F> Trainer<'a, T, G, F>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    pub fn new(
        config: EsConfig,
        template: &'a G,
        factory: &'a F,
        workers: Workers,
    ) -> Result<Self> {
        config.validate()?;
        let state = EsState::initial(template.genome_len());
        Ok(Trainer {
            config,
            template,
            factory,
            workers,
            state,
            log: TrainLog::default(),
        })
    }

    /// Continues from a saved state and log.
    pub fn resume(
        config: EsConfig,
        template: &'a G,
        factory: &'a F,
        workers: Workers,
        state: EsState<T>,
        log: TrainLog,
    ) -> Result<Self> {
        config.validate()?;
        check_len("resumed theta", template.genome_len(), state.theta.len())?;
        check_len(
            "resumed velocity",
            template.genome_len(),
            state.velocity.len(),
        )?;
        if log.records.len() as u64 != state.generation {
            return Err(Error::InvalidArgument(format!(
                "log has {} records but state is at generation {}",
                log.records.len(),
                state.generation
            )));
        }
        Ok(Trainer {
            config,
            template,
            factory,
            workers,
            state,
            log,
        })
    }

    pub fn config(&self) -> &EsConfig {
        &self.config
    }

    pub fn state(&self) -> &EsState<T> {
        &self.state
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.state.generation >= self.config.iterations
    }

    /// Runs one generation and returns its record.
    pub fn step(&mut self) -> Result<TrainRecord> {
        let start = Instant::now();
        let generation = self.state.generation;
        let population = evaluate_generation(
            &self.state.theta,
            &self.config,
            self.factory,
            self.template,
            generation,
            self.workers,
        )?;
        let g = population_gradient(self.state.theta.len(), &population, &self.config)?;
        self.state.apply(&g, &self.config);

        let returns = &population.returns;
        let mean = returns.iter().map(|r| r.as_f64()).sum::<f64>() / returns.len() as f64;
        let max = returns
            .iter()
            .map(|r| r.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let min = returns
            .iter()
            .map(|r| r.as_f64())
            .fold(f64::INFINITY, f64::min);
        let record = TrainRecord {
            generation,
            mean_return: mean,
            max_return: max,
            min_return: min,
            theta_norm: l2_norm(&self.state.theta).as_f64(),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        self.log.records.push(record);
        Ok(record)
    }

    /// Runs remaining generations, calling `hook` after each one.
    pub fn run_with<H>(&mut self, mut hook: H) -> Result<()>
    where
        H: FnMut(&Self, &TrainRecord) -> Result<()>,
    {
        while !self.is_finished() {
            let record = self.step()?;
            hook(self, &record)?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (EsState<T>, TrainLog) {
        (self.state, self.log)
    }
}

/// Trains from the zero vector for `config.iterations` generations.
pub fn train<T, G, F>(
    config: &EsConfig,
    factory: &F,
    template: &G,
    workers: Workers,
) -> Result<(Vec<T>, TrainLog)>
where
    T: Scalar,
    G: GenomeTemplate<T> + ?Sized,
    F: EnvFactory<T> + ?Sized,
{
    let mut trainer = Trainer::new(config.clone(), template, factory, workers)?;
    trainer.run_with(|_, _| Ok(()))?;
    let (state, log) = trainer.into_parts();
    Ok((state.theta, log))
}
