use super::{EnvSpec, Environment, EpisodeTask, StepResult};
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchmarkKind<T> {
    /// `-sum (x_i - center)^2`
    Sphere { center: T },
    /// `-sum [100 (y_{i+1} - y_i^2)^2 + (1 - y_i)^2]` with `y = x + offset`
    Rosenbrock { offset: T },
}

impl<T: Scalar> BenchmarkKind<T> {
    pub fn value(&self, x: &[T]) -> T {
        match *self {
            BenchmarkKind::Sphere { center } => {
                -x.iter().map(|&v| (v - center) * (v - center)).sum::<T>()
            }
            BenchmarkKind::Rosenbrock { offset } => {
                let hundred = T::lit(100.0);
                -x.windows(2)
                    .map(|p| {
                        let (y0, y1) = (p[0] + offset, p[1] + offset);
                        let a = y1 - y0 * y0;
                        let b = T::one() - y0;
                        hundred * a * a + b * b
                    })
                    .sum::<T>()
            }
        }
    }
}

/// Benchmark objective by name: `sphere` or `rosenbrock`.
pub fn benchmark_eval<T: Scalar>(name: &str, x: &[T]) -> Result<T> {
    let kind = match name {
        "sphere" => BenchmarkKind::Sphere { center: T::zero() },
        "rosenbrock" => {
            if x.len() < 2 {
                return Err(Error::InvalidArgument(
                    "rosenbrock needs at least 2 dimensions".into(),
                ));
            }
            BenchmarkKind::Rosenbrock { offset: T::zero() }
        }
        other => return Err(Error::UnknownEnvironment(other.to_string())),
    };
    Ok(kind.value(x))
}

/// Single-step episode: the action is the point, the reward its objective.
#[derive(Debug, Clone)]
pub struct Benchmark<T> {
    spec: EnvSpec,
    kind: BenchmarkKind<T>,
    done: bool,
}

impl<T: Scalar> Benchmark<T> {
    pub fn new(kind: BenchmarkKind<T>, dim: usize) -> Result<Self> {
        let name = match kind {
            BenchmarkKind::Sphere { .. } => "sphere",
            BenchmarkKind::Rosenbrock { .. } => "rosenbrock",
        };
        if dim == 0 || (matches!(kind, BenchmarkKind::Rosenbrock { .. }) && dim < 2) {
            return Err(Error::InvalidArgument(format!(
                "{name} dimension {dim} too small"
            )));
        }
        Ok(Benchmark {
            spec: EnvSpec {
                name: name.into(),
                obs_dim: 0,
                action_dim: dim,
                episode_length: 1,
            },
            kind,
            done: false,
        })
    }
}

impl<T: Scalar> Environment<T> for Benchmark<T> {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _episode_seed: u64) -> Vec<T> {
        self.done = false;
        Vec::new()
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        check_len("benchmark point", self.spec.action_dim, action.len())?;
        self.done = true;
        Ok(StepResult {
            obs: Vec::new(),
            reward: self.kind.value(action),
            done: true,
        })
    }

    fn task(&self) -> EpisodeTask {
        EpisodeTask::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(benchmark_eval("sphere", &[0.0f64; 5]).unwrap(), 0.0);
        assert_eq!(benchmark_eval("sphere", &[3.0f64, 4.0]).unwrap(), -25.0);
        assert_eq!(benchmark_eval("rosenbrock", &[1.0f64; 4]).unwrap(), 0.0);
        assert_eq!(benchmark_eval("rosenbrock", &[0.0f64, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            benchmark_eval("ackley", &[0.0f64]),
            Err(Error::UnknownEnvironment(_))
        ));
        assert!(benchmark_eval("rosenbrock", &[0.0f64]).is_err());
    }

    #[test]
    fn shifted_sphere_peaks_at_center() {
        let k = BenchmarkKind::Sphere { center: 1.0f64 };
        assert_eq!(k.value(&[1.0, 1.0]), 0.0);
        assert_eq!(k.value(&[0.0, 1.0]), -1.0);
    }

    #[test]
    fn offset_rosenbrock_moves_the_optimum() {
        let k = BenchmarkKind::Rosenbrock { offset: -1.2f64 };
        assert!(k.value(&[2.2, 2.2]).abs() < 1e-12);
        // (-1.2, -1.2): 100 * (-1.2 - 1.44)^2 + 2.2^2
        assert!((k.value(&[0.0, 0.0]) + 701.8).abs() < 1e-9);
    }

    #[test]
    fn single_step_episode() {
        let mut b = Benchmark::new(BenchmarkKind::Sphere { center: 0.0f64 }, 2).unwrap();
        assert!(b.reset(0).is_empty());
        let r = b.step(&[3.0, 4.0]).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, -25.0);
        assert!(b.step(&[0.0, 0.0]).is_err());
    }
}
