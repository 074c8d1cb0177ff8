use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use slasched_core::nmac::Nmac;
use slasched_core::sim::{
    reset_episode, run_episode, ActorPolicy, EpisodeSummary, Policy, RandomPolicy, SimConfig,
    StaticPolicy,
};

use crate::{io, Context, Outcome, PolicyKind, Report, SweepKind};

/// Offset between the simulation seed and the random policy's seed.
const POLICY_SEED_SALT: u64 = 0x5EED_F00D;

pub struct Options {
    pub policy: PolicyKind,
    pub checkpoint: Option<PathBuf>,
    pub frames: usize,
    pub episode: u64,
    pub static_fractions: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub policy: PolicyKind,
    pub seed: u64,
    pub episode: u64,
    pub frames: usize,
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    pub throughput: f64,
    pub episode_reward: f64,
    pub channel_arrived: Vec<u64>,
    pub channel_served: Vec<u64>,
    /// Served requests per channel over all arrivals; sums to `throughput`.
    pub channel_share: Vec<f64>,
    pub max_load_excess: f64,
    pub indicator_breaches: u64,
}

impl SimSummary {
    fn new(policy: PolicyKind, cfg: &SimConfig, s: &EpisodeSummary) -> Self {
        let m = &s.metrics;
        let arrived = m.arrived();
        SimSummary {
            policy,
            seed: cfg.seed,
            episode: s.episode,
            frames: s.frames.len(),
            arrived,
            served: m.served(),
            dropped: arrived - m.served(),
            throughput: m.throughput(),
            episode_reward: s.episode_reward,
            channel_arrived: m.channel_arrived.clone(),
            channel_served: m.channel_served.clone(),
            channel_share: m
                .channel_served
                .iter()
                .map(|&v| {
                    if arrived == 0 {
                        0.0
                    } else {
                        v as f64 / arrived as f64
                    }
                })
                .collect(),
            max_load_excess: m.max_load_excess,
            indicator_breaches: m.indicator_breaches,
        }
    }
}

fn build_policy(cfg: &SimConfig, opts: &Options) -> Result<Box<dyn Policy>> {
    Ok(match opts.policy {
        PolicyKind::Random => Box::new(RandomPolicy::new(cfg.seed ^ POLICY_SEED_SALT)),
        PolicyKind::Static => Box::new(StaticPolicy {
            compute_frac: opts.static_fractions.0,
            memory_frac: opts.static_fractions.1,
        }),
        PolicyKind::Checkpoint => {
            let Some(path) = &opts.checkpoint else {
                bail!("--policy checkpoint needs --checkpoint PATH");
            };
            let nmac = Nmac::load(path).with_context(|| format!("loading {}", path.display()))?;
            if nmac.num_agents() != cfg.nodes {
                bail!(
                    "checkpoint has {} agents, configuration has {} nodes",
                    nmac.num_agents(),
                    cfg.nodes
                );
            }
            Box::new(ActorPolicy::from_nmac(&nmac))
        }
    })
}

fn episode(cfg: &SimConfig, opts: &Options) -> Result<EpisodeSummary> {
    let mut policy = build_policy(cfg, opts)?;
    let (mut state, obs) = reset_episode(cfg, opts.episode)?;
    Ok(run_episode(&mut state, obs, policy.as_mut(), opts.frames)?)
}

pub fn simulate(ctx: &Context, opts: &Options) -> Result<Report> {
    let summary = episode(&ctx.cfg, opts)?;
    log::info!(
        "{} frames, throughput {:.4}, episode reward {:.4}",
        summary.frames.len(),
        summary.throughput,
        summary.episode_reward
    );
    let frames = ctx.path("frames.jsonl");
    io::write_jsonl(&frames, &summary.frames)?;
    let out = ctx.path("summary.json");
    io::write_json(&out, &SimSummary::new(opts.policy, &ctx.cfg, &summary))?;
    Ok(Report {
        outcome: Outcome::Success,
        outputs: vec![frames, out],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub family: String,
    pub parameter: String,
    pub value: f64,
    pub throughput: f64,
    pub episode_reward: f64,
    pub arrived: u64,
    pub served: u64,
}

pub const HETEROGENEITY_SPREADS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];
pub const BANDWIDTHS_MBPS: [f64; 5] = [1.0, 2.5, 12.5, 50.0, 125.0];

pub fn sweep(ctx: &Context, opts: &Options, kind: SweepKind) -> Result<Report> {
    let (family, parameter, values) = match kind {
        SweepKind::Heterogeneity => (
            "heterogeneity",
            "topology.blob_spread",
            HETEROGENEITY_SPREADS,
        ),
        SweepKind::Bandwidth => ("bandwidth", "bandwidth_choices", BANDWIDTHS_MBPS),
    };
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = ctx.cfg.clone();
        match kind {
            SweepKind::Heterogeneity => cfg.topology.blob_spread = value,
            SweepKind::Bandwidth => cfg.bandwidth_choices = vec![value],
        }
        let s = episode(&cfg, opts)?;
        log::info!("{parameter} = {value}: throughput {:.4}", s.throughput);
        points.push(SweepPoint {
            family: family.into(),
            parameter: parameter.into(),
            value,
            throughput: s.throughput,
            episode_reward: s.episode_reward,
            arrived: s.metrics.arrived(),
            served: s.metrics.served(),
        });
    }
    let out = ctx.path(&format!("sweep_{family}.jsonl"));
    io::write_jsonl(&out, &points)?;
    Ok(Report {
        outcome: Outcome::Success,
        outputs: vec![out],
    })
}
