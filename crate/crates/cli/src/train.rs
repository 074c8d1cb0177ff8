use anyhow::Result;
use serde::{Deserialize, Serialize};
use slasched_core::nmac::Nmac;
use slasched_core::sim::{evaluate_policy, ActorPolicy, RandomPolicy, SimConfig, SimEnv};

use crate::{io, Context, Outcome, Report};

/// Evaluation episodes are numbered from here so they never coincide with
/// training episodes.
pub const EVAL_EPISODE_BASE: u64 = 1_000_000;
const EVAL_POLICY_SALT: u64 = 0xE7A1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub episodes: Vec<u64>,
    pub random_rewards: Vec<f64>,
    pub trained_rewards: Vec<f64>,
    pub random_mean: f64,
    pub trained_mean: f64,
    /// `trained_mean / random_mean`.
    pub ratio: f64,
    pub train_seconds: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn train(ctx: &Context, episodes: usize, eval_episodes: usize) -> Result<Report> {
    let cfg: &SimConfig = &ctx.cfg;
    let eval: Vec<u64> = (0..eval_episodes as u64)
        .map(|k| EVAL_EPISODE_BASE + k)
        .collect();

    // The baseline is measured before any training.
    let mut random = RandomPolicy::new(cfg.seed ^ EVAL_POLICY_SALT);
    let random_rewards = evaluate_policy(cfg, &mut random, eval.iter().copied())?;

    let mut env = SimEnv::new(cfg.clone())?;
    let mut nmac = Nmac::new(
        cfg.nodes,
        cfg.observation_dim(),
        cfg.action_dim(),
        cfg.train.clone(),
    )?;
    let started = std::time::Instant::now();
    let log = nmac.train(&mut env, episodes)?;
    let train_seconds = started.elapsed().as_secs_f64();
    if let Some(last) = log.episodes.last() {
        log::info!(
            "trained {episodes} episodes in {train_seconds:.1}s, last return {:.4}",
            last.mean_return
        );
    }

    let trained_rewards = evaluate_policy(
        cfg,
        &mut ActorPolicy::from_nmac(&nmac),
        eval.iter().copied(),
    )?;
    let (random_mean, trained_mean) = (mean(&random_rewards), mean(&trained_rewards));
    let evaluation = Evaluation {
        episodes: eval,
        ratio: if random_mean > 0.0 {
            trained_mean / random_mean
        } else {
            0.0
        },
        random_rewards,
        trained_rewards,
        random_mean,
        trained_mean,
        train_seconds,
    };
    log::info!(
        "evaluation: random {:.4}, trained {:.4}, ratio {:.3}",
        evaluation.random_mean,
        evaluation.trained_mean,
        evaluation.ratio
    );

    let curve = ctx.path("learning_curve.jsonl");
    io::write_jsonl(&curve, &log.episodes)?;
    let checkpoint = ctx.path("checkpoint.json");
    nmac.save(&checkpoint)?;
    let report = ctx.path("evaluation.json");
    io::write_json(&report, &evaluation)?;
    Ok(Report {
        outcome: Outcome::Success,
        outputs: vec![curve, checkpoint, report],
    })
}
