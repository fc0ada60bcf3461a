//! Evolution strategies for self-modifying neural network policies.
//!
//! Networks combine slow weights with a neuromodulated Hebbian trace that
//! changes during an episode ([`plastic`]). A rank-shaped natural evolution
//! strategy ([`es`]) optimizes the flat parameter vector, evaluating
//! perturbed copies in parallel from seeds alone ([`engine`]). The
//! [`env`] module provides meta-learning tasks with a hidden per-episode
//! variable, and [`protocol`] wires training, evaluation and comparison
//! together behind run configs and checkpoints.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the persistence layer uses.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod env;
pub mod error;
pub mod es;
pub mod plastic;
pub mod policy;
pub mod protocol;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PlasticLayer = plastic::PlasticLayer<f64>;
pub type PlasticNetwork = plastic::PlasticNetwork<f64>;
pub type Population = es::Population<f64>;
pub type EsState = es::EsState<f64>;
pub type StepResult = env::StepResult<f64>;
pub type Template = policy::AnyTemplate<f64>;
