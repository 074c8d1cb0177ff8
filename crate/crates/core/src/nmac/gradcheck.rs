//! Central finite-difference checks of the analytic gradients.
//!
//! Error at one point is `|g_a - g_n| / max(|g_a|, |g_n|)` over the whole
//! gradient vector; a report carries the worst point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, OutputActivation};
use super::{critic_loss_and_grad, policy_gradient};
use crate::error::Result;

pub const GRAD_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;
const AGENTS: usize = 2;
const OBS: usize = 4;
const ACT: usize = 2;
const HIDDEN: usize = 64;
const BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub points: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn numeric_gradient<F>(x: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[k] += STEP;
            minus[k] -= STEP;
            (f(&plus) - f(&minus)) / (2.0 * STEP)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn report(name: &str, errors: Vec<f64>) -> GradCheckReport {
    let max_rel_error = errors.iter().copied().fold(0.0, f64::max);
    GradCheckReport {
        name: name.to_string(),
        points: errors.len(),
        max_rel_error,
        passed: max_rel_error < GRAD_TOL,
    }
}

fn critic_input_dim() -> usize {
    AGENTS * (OBS + ACT)
}

/// Critic mean-squared loss against random targets, differentiated with
/// respect to the critic parameters.
pub fn check_critic_loss(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(points);
    for _ in 0..points {
        let critic = MlpParams::new(
            &[critic_input_dim(), HIDDEN, HIDDEN, 1],
            OutputActivation::Identity,
            &mut rng,
        );
        let inputs: Vec<Vec<f64>> = (0..BATCH)
            .map(|_| random_vec(&mut rng, critic_input_dim(), -1.0, 1.0))
            .collect();
        let targets = random_vec(&mut rng, BATCH, -2.0, 2.0);
        let (_, analytic) = critic_loss_and_grad(&critic, &inputs, &targets)?;
        let numeric = numeric_gradient(&critic.flatten(), |theta| {
            let mut c = critic.clone();
            c.set_flat(theta).expect("same layout");
            critic_loss_and_grad(&c, &inputs, &targets)
                .expect("valid batch")
                .0
        });
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(report("critic_loss", errors))
}

/// `dQ/d(input)` of the critic, which drives the policy gradient.
pub fn check_critic_input(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(points);
    for _ in 0..points {
        let critic = MlpParams::new(
            &[critic_input_dim(), HIDDEN, HIDDEN, 1],
            OutputActivation::Identity,
            &mut rng,
        );
        let x = random_vec(&mut rng, critic_input_dim(), -1.0, 1.0);
        let cache = critic.forward_cached(&x)?;
        let (_, analytic) = critic.backward(&cache, &[1.0]);
        let numeric = numeric_gradient(&x, |v| critic.forward(v).expect("valid input")[0]);
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(report("critic_input", errors))
}

/// Surrogate `mean_b Q(s_b, a_b with agent 0's action = actor(o_b))`,
/// differentiated with respect to the actor parameters.
pub fn check_actor_surrogate(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(points);
    let agent = 0;
    for _ in 0..points {
        let actor = MlpParams::new(
            &[OBS, HIDDEN, HIDDEN, ACT],
            OutputActivation::Sigmoid,
            &mut rng,
        );
        let critic = MlpParams::new(
            &[critic_input_dim(), HIDDEN, HIDDEN, 1],
            OutputActivation::Identity,
            &mut rng,
        );
        let states: Vec<Vec<f64>> = (0..BATCH)
            .map(|_| random_vec(&mut rng, AGENTS * OBS, -1.0, 1.0))
            .collect();
        let joints: Vec<Vec<f64>> = (0..BATCH)
            .map(|_| random_vec(&mut rng, AGENTS * ACT, 0.0, 1.0))
            .collect();
        let critic_in = |b: usize, a: &[f64]| -> Vec<f64> {
            let mut joint = joints[b].clone();
            joint[agent * ACT..(agent + 1) * ACT].copy_from_slice(a);
            let mut x = states[b].clone();
            x.extend(joint);
            x
        };
        let observations: Vec<&[f64]> = states
            .iter()
            .map(|s| &s[agent * OBS..(agent + 1) * OBS])
            .collect();
        let offset = AGENTS * OBS + agent * ACT;
        let analytic = policy_gradient(&actor, &observations, |b, a| {
            let cache = critic.forward_cached(&critic_in(b, a))?;
            let (_, dx) = critic.backward(&cache, &[1.0]);
            Ok(dx[offset..offset + ACT].to_vec())
        })?;
        let surrogate = |phi: &[f64]| -> f64 {
            let mut act = actor.clone();
            act.set_flat(phi).expect("same layout");
            observations
                .iter()
                .enumerate()
                .map(|(b, o)| {
                    let a = act.forward(o).expect("valid obs");
                    critic.forward(&critic_in(b, &a)).expect("valid input")[0]
                })
                .sum::<f64>()
                / BATCH as f64
        };
        let numeric = numeric_gradient(&actor.flatten(), surrogate);
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(report("actor_surrogate", errors))
}

/// Losses of `steps` plain SGD steps at `lr` on one fixed regression
/// target; the check passes when they strictly decrease.
pub fn check_critic_descent(steps: usize, lr: f64, seed: u64) -> Result<(bool, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut critic = MlpParams::new(
        &[critic_input_dim(), HIDDEN, HIDDEN, 1],
        OutputActivation::Identity,
        &mut rng,
    );
    let x = random_vec(&mut rng, critic_input_dim(), -1.0, 1.0);
    let target = 1.0;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, grad) = critic_loss_and_grad(&critic, std::slice::from_ref(&x), &[target])?;
        losses.push(loss);
        critic.add_scaled(&grad, -lr);
    }
    let monotone = losses.windows(2).all(|w| w[1] < w[0]);
    Ok((monotone, losses))
}

pub fn run_all(points: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        check_critic_loss(points, seed)?,
        check_critic_input(points, seed.wrapping_add(1))?,
        check_actor_surrogate(points, seed.wrapping_add(2))?,
    ])
}
