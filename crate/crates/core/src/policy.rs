//! Turning a flat genome into something that acts in an environment.

use crate::error::{check_len, Result};
use crate::plastic::PlasticNetwork;
use crate::scalar::Scalar;

/// A stateful controller rolled through one episode at a time.
pub trait Policy<T>: Send {
    /// Clears within-episode state.
    fn reset(&mut self);
    fn act(&mut self, obs: &[T]) -> Result<Vec<T>>;
}

/// Builds policies from flat parameter vectors of a fixed length.
pub trait GenomeTemplate<T>: Sync {
    type Policy: Policy<T>;

    fn genome_len(&self) -> usize;
    fn instantiate(&self, theta: &[T]) -> Result<Self::Policy>;
}

impl<T: Scalar> Policy<T> for PlasticNetwork<T> {
    fn reset(&mut self) {
        self.reset_state();
    }

    fn act(&mut self, obs: &[T]) -> Result<Vec<T>> {
        self.step(obs)
    }
}

impl<T: Scalar> GenomeTemplate<T> for PlasticNetwork<T> {
    type Policy = PlasticNetwork<T>;

    fn genome_len(&self) -> usize {
        PlasticNetwork::genome_len(self)
    }

    fn instantiate(&self, theta: &[T]) -> Result<Self::Policy> {
        self.from_flat(theta)
    }
}

/// The genome itself is the action; used by the benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectTemplate {
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectPolicy<T> {
    params: Vec<T>,
}

impl<T: Scalar> Policy<T> for DirectPolicy<T> {
    fn reset(&mut self) {}

    fn act(&mut self, _obs: &[T]) -> Result<Vec<T>> {
        Ok(self.params.clone())
    }
}

impl<T: Scalar> GenomeTemplate<T> for DirectTemplate {
    type Policy = DirectPolicy<T>;

    fn genome_len(&self) -> usize {
        self.dim
    }

    fn instantiate(&self, theta: &[T]) -> Result<Self::Policy> {
        check_len("genome", self.dim, theta.len())?;
        Ok(DirectPolicy {
            params: theta.to_vec(),
        })
    }
}

/// Either kind of template, chosen at runtime from a config.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTemplate<T> {
    Network(PlasticNetwork<T>),
    Direct(DirectTemplate),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyPolicy<T> {
    Network(PlasticNetwork<T>),
    Direct(DirectPolicy<T>),
}

impl<T: Scalar> Policy<T> for AnyPolicy<T> {
    fn reset(&mut self) {
        match self {
            AnyPolicy::Network(n) => n.reset_state(),
            AnyPolicy::Direct(d) => d.reset(),
        }
    }

    fn act(&mut self, obs: &[T]) -> Result<Vec<T>> {
        match self {
            AnyPolicy::Network(n) => n.step(obs),
            AnyPolicy::Direct(d) => d.act(obs),
        }
    }
}

impl<T: Scalar> GenomeTemplate<T> for AnyTemplate<T> {
    type Policy = AnyPolicy<T>;

    fn genome_len(&self) -> usize {
        match self {
            AnyTemplate::Network(n) => n.genome_len(),
            AnyTemplate::Direct(d) => d.dim,
        }
    }

    fn instantiate(&self, theta: &[T]) -> Result<Self::Policy> {
        Ok(match self {
            AnyTemplate::Network(n) => AnyPolicy::Network(n.from_flat(theta)?),
            AnyTemplate::Direct(d) => AnyPolicy::Direct(d.instantiate(theta)?),
        })
    }
}
