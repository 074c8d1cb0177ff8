//! Frame-level decision rules. Every policy sees one observation per agent
//! and returns one action vector per agent; a learned actor only ever reads
//! its own agent's observation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nmac::{MlpParams, Nmac};

pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, observations: &[Vec<f64>], action_dim: usize) -> Result<Vec<Vec<f64>>>;
}

/// Uniform actions in `[0, 1]`.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, observations: &[Vec<f64>], action_dim: usize) -> Result<Vec<Vec<f64>>> {
        Ok(observations
            .iter()
            .map(|_| {
                (0..action_dim)
                    .map(|_| self.rng.random_range(0.0..=1.0))
                    .collect()
            })
            .collect())
    }
}

/// The same compute and memory fractions for every cell slot.
pub struct StaticPolicy {
    pub compute_frac: f64,
    pub memory_frac: f64,
}

impl Policy for StaticPolicy {
    fn name(&self) -> &str {
        "static"
    }

    fn decide(&mut self, observations: &[Vec<f64>], action_dim: usize) -> Result<Vec<Vec<f64>>> {
        if !(0.0..=1.0).contains(&self.compute_frac) || !(0.0..=1.0).contains(&self.memory_frac) {
            return Err(Error::Config("static fractions must lie in [0, 1]".into()));
        }
        let one: Vec<f64> = (0..action_dim)
            .map(|k| {
                if k % 2 == 0 {
                    self.compute_frac
                } else {
                    self.memory_frac
                }
            })
            .collect();
        Ok(vec![one; observations.len()])
    }
}

/// Deterministic trained actors, one per agent.
pub struct ActorPolicy {
    actors: Vec<MlpParams>,
}

impl ActorPolicy {
    pub fn new(actors: Vec<MlpParams>) -> Self {
        ActorPolicy { actors }
    }

    pub fn from_nmac(nmac: &Nmac) -> Self {
        ActorPolicy::new(nmac.actors())
    }
}

impl Policy for ActorPolicy {
    fn name(&self) -> &str {
        "actor"
    }

    fn decide(&mut self, observations: &[Vec<f64>], action_dim: usize) -> Result<Vec<Vec<f64>>> {
        if observations.len() != self.actors.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} actors",
                observations.len(),
                self.actors.len()
            )));
        }
        self.actors
            .iter()
            .zip(observations)
            .map(|(actor, obs)| {
                if actor.output_dim() != action_dim {
                    return Err(Error::Shape(format!(
                        "actor emits {} values, environment expects {action_dim}",
                        actor.output_dim()
                    )));
                }
                actor.forward(obs)
            })
            .collect()
    }
}
