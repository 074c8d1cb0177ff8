//! Networked multi-agent actor-critic.
//!
//! Every edge node runs one agent. Its actor maps the node's local
//! observation to cell-size fractions in `[0, 1]`; its critic scores the
//! concatenated observations and actions of all agents. Training is
//! centralized and replay-driven; execution only ever feeds an actor its
//! own agent's observation.

pub mod gradcheck;
pub mod mlp;
pub mod replay;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use mlp::{MlpParams, OutputActivation};
pub use replay::{ReplayBuffer, Transition};

pub const CHECKPOINT_FORMAT: &str = "nmac-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Soft target update rate in `(0, 1]`.
    pub target_rate: f64,
    /// Episodes played with uniform-random actions before learning starts.
    pub exploration_episodes: usize,
    /// Initial standard deviation of the Gaussian action noise; decays
    /// linearly to zero over the remaining episodes.
    pub noise_scale: f64,
    /// Frames between gradient updates.
    pub update_every: usize,
    pub hidden_units: usize,
    /// Optional cap on the L2 norm of every gradient step.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            discount: 0.95,
            batch_size: 64,
            replay_capacity: 100_000,
            target_rate: 0.01,
            exploration_episodes: 100,
            noise_scale: 0.2,
            update_every: 1,
            hidden_units: 64,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1)");
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return bad("target_rate must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.update_every == 0 {
            return bad("batch_size, replay_capacity and update_every must be positive");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be non-negative");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive when set");
        }
        Ok(())
    }
}

/// Environment interface the trainer drives.
pub trait MultiAgentEnv {
    fn num_agents(&self) -> usize;
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;
    /// Starts episode `episode` and returns one observation per agent.
    fn reset(&mut self, episode: u64) -> Result<Vec<Vec<f64>>>;
    /// Applies one action per agent; returns per-agent rewards and the next
    /// observations.
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub target_actor: MlpParams,
    pub target_critic: MlpParams,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        num_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let actor = MlpParams::new(
            &[obs_dim, hidden, hidden, act_dim],
            OutputActivation::Sigmoid,
            rng,
        );
        let critic_in = num_agents * (obs_dim + act_dim);
        let critic = MlpParams::new(
            &[critic_in, hidden, hidden, 1],
            OutputActivation::Identity,
            rng,
        );
        Agent {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn soft_update(&mut self, rate: f64) {
        self.target_actor.blend_toward(&self.actor, rate);
        self.target_critic.blend_toward(&self.critic, rate);
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn clip(grad: &mut [f64], limit: Option<f64>) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if let Some(c) = limit {
        if norm > c {
            let s = c / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Mean squared error of `critic` against `targets` and its gradient with
/// respect to the flattened critic parameters.
pub fn critic_loss_and_grad(
    critic: &MlpParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Shape(
            "critic batch must be non-empty and match its targets".into(),
        ));
    }
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let cache = critic.forward_cached(x)?;
        let err = cache.output()[0] - y;
        loss += err * err / n;
        critic.backward_into(&cache, &[2.0 * err / n], &mut grad);
    }
    Ok((loss, grad))
}

/// Gradient of `mean_b Q(actor(obs_b))` with respect to the actor
/// parameters, where `action_grad(b, a)` returns `dQ/da` for sample `b` at
/// action `a`.
pub fn policy_gradient<F>(
    actor: &MlpParams,
    observations: &[&[f64]],
    action_grad: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>>,
{
    if observations.is_empty() {
        return Err(Error::Shape("actor batch is empty".into()));
    }
    let n = observations.len() as f64;
    let mut grad = vec![0.0; actor.num_params()];
    for (b, obs) in observations.iter().enumerate() {
        let cache = actor.forward_cached(obs)?;
        let dq: Vec<f64> = action_grad(b, cache.output())?
            .iter()
            .map(|g| g / n)
            .collect();
        actor.backward_into(&cache, &dq, &mut grad);
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub exploring: bool,
    pub noise_scale: f64,
    /// Per-agent sum of rewards over the episode.
    pub agent_returns: Vec<f64>,
    pub mean_return: f64,
    /// Mean pre-step critic loss over the episode's updates.
    pub critic_loss: Option<f64>,
    pub actor_grad_norm: Option<f64>,
    pub updates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

pub struct Nmac {
    pub agents: Vec<Agent>,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
    buffer: ReplayBuffer,
    episodes_trained: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub observation_dim: usize,
    pub action_dim: usize,
    pub episodes_trained: usize,
    pub agents: Vec<Agent>,
    pub rng: ChaCha8Rng,
}

impl Nmac {
    pub fn new(
        num_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if num_agents == 0 || obs_dim == 0 || act_dim == 0 {
            return Err(Error::Config(
                "agents, observations and actions must be non-empty".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agents = (0..num_agents)
            .map(|_| Agent::new(num_agents, obs_dim, act_dim, cfg.hidden_units, &mut rng))
            .collect();
        Ok(Nmac {
            agents,
            obs_dim,
            act_dim,
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            cfg,
            rng,
            episodes_trained: 0,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Decentralized decision for one agent from its own observation.
    pub fn act(&self, agent: usize, local_obs: &[f64]) -> Result<Vec<f64>> {
        self.agents
            .get(agent)
            .ok_or_else(|| Error::Shape(format!("no agent {agent}")))?
            .actor
            .forward(local_obs)
    }

    pub fn actors(&self) -> Vec<MlpParams> {
        self.agents.iter().map(|a| a.actor.clone()).collect()
    }

    fn split_obs<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    fn check_transition(&self, t: &Transition) -> Result<()> {
        let n = self.agents.len();
        if t.global_state.len() != n * self.obs_dim
            || t.next_global_state.len() != n * self.obs_dim
            || t.joint_action.len() != n * self.act_dim
            || t.rewards.len() != n
        {
            return Err(Error::Shape(
                "transition does not match the agent layout".into(),
            ));
        }
        Ok(())
    }

    /// Joint action of the target actors on every next state in `batch`.
    fn target_next_actions(&self, batch: &[&Transition]) -> Result<Vec<Vec<f64>>> {
        batch
            .iter()
            .map(|t| {
                let mut joint = Vec::with_capacity(self.agents.len() * self.act_dim);
                for (j, agent) in self.agents.iter().enumerate() {
                    joint.extend(
                        agent
                            .target_actor
                            .forward(self.split_obs(&t.next_global_state, j))?,
                    );
                }
                Ok(joint)
            })
            .collect()
    }

    fn critic_targets(
        &self,
        agent: usize,
        batch: &[&Transition],
        next_actions: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let target_critic = &self.agents[agent].target_critic;
        batch
            .iter()
            .zip(next_actions)
            .map(|(t, a)| {
                let q = target_critic.forward(&concat(&t.next_global_state, a))?[0];
                Ok(t.rewards[agent] + self.cfg.discount * q)
            })
            .collect()
    }

    /// One SGD step on agent `agent`'s critic; returns the pre-step loss.
    pub fn critic_update(&mut self, agent: usize, batch: &[&Transition]) -> Result<f64> {
        self.check_batch(agent, batch)?;
        let next = self.target_next_actions(batch)?;
        let targets = self.critic_targets(agent, batch, &next)?;
        let (lr, limit) = (self.cfg.learning_rate, self.cfg.grad_clip);
        critic_step(&mut self.agents[agent], agent, batch, &targets, lr, limit)
    }

    /// One ascent step on agent `agent`'s actor; returns the gradient norm.
    pub fn actor_update(&mut self, agent: usize, batch: &[&Transition]) -> Result<f64> {
        self.check_batch(agent, batch)?;
        let (obs, act, lr, limit) = (
            self.obs_dim,
            self.act_dim,
            self.cfg.learning_rate,
            self.cfg.grad_clip,
        );
        actor_step(&mut self.agents[agent], agent, batch, obs, act, lr, limit)
    }

    pub fn soft_update_targets(&mut self, rate: f64) {
        for a in &mut self.agents {
            a.soft_update(rate);
        }
    }

    fn check_batch(&self, agent: usize, batch: &[&Transition]) -> Result<()> {
        if agent >= self.agents.len() {
            return Err(Error::Shape(format!("no agent {agent}")));
        }
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        batch.iter().try_for_each(|t| self.check_transition(t))
    }

    /// Critic then actor update for every agent on one shared batch, then
    /// a soft target update. Agents update concurrently; each only touches
    /// its own networks.
    fn update_all(&mut self) -> Result<(f64, f64)> {
        let batch: Vec<Transition> = self
            .buffer
            .sample(&mut self.rng, self.cfg.batch_size)
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let next = self.target_next_actions(&refs)?;
        let targets: Vec<Vec<f64>> = (0..self.agents.len())
            .map(|i| self.critic_targets(i, &refs, &next))
            .collect::<Result<_>>()?;
        let cfg = &self.cfg;
        let (obs, act) = (self.obs_dim, self.act_dim);
        let results: Vec<(f64, f64)> = self
            .agents
            .par_iter_mut()
            .enumerate()
            .map(|(i, agent)| {
                let loss = critic_step(
                    agent,
                    i,
                    &refs,
                    &targets[i],
                    cfg.learning_rate,
                    cfg.grad_clip,
                )?;
                let norm = actor_step(agent, i, &refs, obs, act, cfg.learning_rate, cfg.grad_clip)?;
                agent.soft_update(cfg.target_rate);
                Ok((loss, norm))
            })
            .collect::<Result<_>>()?;
        let n = results.len() as f64;
        Ok((
            results.iter().map(|r| r.0).sum::<f64>() / n,
            results.iter().map(|r| r.1).sum::<f64>() / n,
        ))
    }

    fn noise_at(&self, episode: usize, total: usize) -> f64 {
        let start = self.cfg.exploration_episodes;
        let span = total.saturating_sub(start).max(1) as f64;
        let progress = (episode.saturating_sub(start) as f64 / span).min(1.0);
        self.cfg.noise_scale * (1.0 - progress)
    }

    /// Runs `episodes` training episodes against `env`.
    pub fn train<E: MultiAgentEnv + ?Sized>(
        &mut self,
        env: &mut E,
        episodes: usize,
    ) -> Result<TrainingLog> {
        let n = self.agents.len();
        if env.num_agents() != n
            || env.observation_dim() != self.obs_dim
            || env.action_dim() != self.act_dim
        {
            return Err(Error::Shape(
                "environment does not match the agent layout".into(),
            ));
        }
        let mut log = TrainingLog::default();
        let mut frames_seen = 0usize;
        let total = self.episodes_trained + episodes;
        for _ in 0..episodes {
            let episode = self.episodes_trained;
            let exploring = episode < self.cfg.exploration_episodes;
            let sigma = if exploring {
                1.0
            } else {
                self.noise_at(episode, total)
            };
            let mut obs = env.reset(episode as u64)?;
            let mut returns = vec![0.0; n];
            let (mut loss_sum, mut norm_sum, mut updates) = (0.0, 0.0, 0usize);
            for _ in 0..env.episode_length() {
                let actions: Vec<Vec<f64>> = if exploring {
                    (0..n)
                        .map(|_| {
                            (0..self.act_dim)
                                .map(|_| self.rng.random::<f64>())
                                .collect()
                        })
                        .collect()
                } else {
                    let mut out = Vec::with_capacity(n);
                    for (i, o) in obs.iter().enumerate() {
                        let mut a = self.agents[i].actor.forward(o)?;
                        for v in &mut a {
                            let z: f64 = self.rng.sample(StandardNormal);
                            *v = (*v + sigma * z).clamp(0.0, 1.0);
                        }
                        out.push(a);
                    }
                    out
                };
                let (rewards, next_obs) = env.step(&actions)?;
                if rewards.len() != n || rewards.iter().any(|r| !r.is_finite()) {
                    return Err(Error::NonFinite("environment rewards".into()));
                }
                for (acc, r) in returns.iter_mut().zip(&rewards) {
                    *acc += r;
                }
                self.buffer.push(Transition {
                    global_state: obs.concat(),
                    joint_action: actions.concat(),
                    rewards,
                    next_global_state: next_obs.concat(),
                });
                frames_seen += 1;
                if !exploring
                    && frames_seen.is_multiple_of(self.cfg.update_every)
                    && self.buffer.len() >= self.cfg.batch_size
                {
                    let (loss, norm) = self.update_all()?;
                    loss_sum += loss;
                    norm_sum += norm;
                    updates += 1;
                }
                obs = next_obs;
            }
            let mean_return = returns.iter().sum::<f64>() / n as f64;
            log::debug!("episode {episode}: mean return {mean_return:.4}, {updates} updates");
            log.episodes.push(EpisodeLog {
                episode,
                exploring,
                noise_scale: if exploring { 0.0 } else { sigma },
                agent_returns: returns,
                mean_return,
                critic_loss: (updates > 0).then(|| loss_sum / updates as f64),
                actor_grad_norm: (updates > 0).then(|| norm_sum / updates as f64),
                updates,
            });
            self.episodes_trained += 1;
        }
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.cfg.clone(),
            observation_dim: self.obs_dim,
            action_dim: self.act_dim,
            episodes_trained: self.episodes_trained,
            agents: self.agents.clone(),
            rng: self.rng.clone(),
        }
    }

    /// Restores networks, configuration and RNG; the replay buffer starts
    /// empty.
    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Version {
                found: cp.format,
                expected: CHECKPOINT_FORMAT.into(),
            });
        }
        cp.config.validate()?;
        let n = cp.agents.len();
        for a in &cp.agents {
            for net in [&a.actor, &a.target_actor, &a.critic, &a.target_critic] {
                net.validate()?;
            }
            let actor_ok =
                a.actor.input_dim() == cp.observation_dim && a.actor.output_dim() == cp.action_dim;
            let critic_ok = a.critic.input_dim() == n * (cp.observation_dim + cp.action_dim)
                && a.critic.output_dim() == 1;
            if !actor_ok || !critic_ok {
                return Err(Error::Shape(
                    "checkpoint networks do not match its dimensions".into(),
                ));
            }
        }
        Ok(Nmac {
            buffer: ReplayBuffer::new(cp.config.replay_capacity),
            agents: cp.agents,
            obs_dim: cp.observation_dim,
            act_dim: cp.action_dim,
            cfg: cp.config,
            rng: cp.rng,
            episodes_trained: cp.episodes_trained,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }
}

/// Reads a checkpoint file, checking the format tag before anything else.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
    if found != CHECKPOINT_FORMAT {
        return Err(Error::Version {
            found: found.to_string(),
            expected: CHECKPOINT_FORMAT.into(),
        });
    }
    Ok(serde_json::from_value(value)?)
}

fn critic_step(
    agent: &mut Agent,
    index: usize,
    batch: &[&Transition],
    targets: &[f64],
    lr: f64,
    limit: Option<f64>,
) -> Result<f64> {
    let inputs: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| concat(&t.global_state, &t.joint_action))
        .collect();
    let (loss, mut grad) = critic_loss_and_grad(&agent.critic, &inputs, targets)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "critic loss {loss} for agent {index}"
        )));
    }
    clip(&mut grad, limit);
    agent.critic.add_scaled(&grad, -lr);
    Ok(loss)
}

fn actor_step(
    agent: &mut Agent,
    index: usize,
    batch: &[&Transition],
    obs_dim: usize,
    act_dim: usize,
    lr: f64,
    limit: Option<f64>,
) -> Result<f64> {
    let observations: Vec<&[f64]> = batch
        .iter()
        .map(|t| &t.global_state[index * obs_dim..(index + 1) * obs_dim])
        .collect();
    let critic = &agent.critic;
    let action_offset = batch[0].global_state.len() + index * act_dim;
    let mut grad = policy_gradient(&agent.actor, &observations, |b, a| {
        let t = batch[b];
        let mut joint = t.joint_action.clone();
        joint[index * act_dim..(index + 1) * act_dim].copy_from_slice(a);
        let input = concat(&t.global_state, &joint);
        let cache = critic.forward_cached(&input)?;
        let (_, dx) = critic.backward(&cache, &[1.0]);
        Ok(dx[action_offset..action_offset + act_dim].to_vec())
    })?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "policy gradient for agent {index}"
        )));
    }
    let norm = clip(&mut grad, limit);
    agent.actor.add_scaled(&grad, lr);
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_transition(n: usize, obs: usize, act: usize, reward: f64) -> Transition {
        Transition {
            global_state: (0..n * obs).map(|k| 0.1 * k as f64).collect(),
            joint_action: vec![0.5; n * act],
            rewards: vec![reward; n],
            next_global_state: (0..n * obs).map(|k| 0.05 * k as f64).collect(),
        }
    }

    #[test]
    fn zero_discount_target_is_the_reward() {
        let cfg = TrainConfig {
            discount: 0.0,
            ..TrainConfig::default()
        };
        let mut nmac = Nmac::new(2, 3, 2, cfg).unwrap();
        for a in &mut nmac.agents {
            a.critic = MlpParams::zeros(&[10, 64, 64, 1], OutputActivation::Identity);
        }
        let t = fixed_transition(2, 3, 2, 1.0);
        let loss = nmac.critic_update(0, &[&t]).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn critic_loss_decreases_on_a_fixed_point() {
        let mut nmac = Nmac::new(2, 3, 2, TrainConfig::default()).unwrap();
        let t = fixed_transition(2, 3, 2, 1.0);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = nmac.critic_update(1, &[&t]).unwrap();
            assert!(loss < last, "{loss} >= {last}");
            last = loss;
        }
    }

    #[test]
    fn constant_critic_leaves_actor_unchanged() {
        let mut nmac = Nmac::new(2, 3, 2, TrainConfig::default()).unwrap();
        nmac.agents[0].critic = MlpParams::zeros(&[10, 64, 64, 1], OutputActivation::Identity);
        let before = nmac.agents[0].actor.clone();
        let t = fixed_transition(2, 3, 2, 1.0);
        let norm = nmac.actor_update(0, &[&t]).unwrap();
        assert_eq!(norm, 0.0);
        assert_eq!(nmac.agents[0].actor, before);
    }

    #[test]
    fn actor_climbs_a_quadratic_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut actor = MlpParams::new(&[2, 64, 64, 1], OutputActivation::Sigmoid, &mut rng);
        let obs = [0.3, -0.2];
        let start = actor.forward(&obs).unwrap()[0];
        for _ in 0..3000 {
            let g = policy_gradient(&actor, &[&obs], |_, a| Ok(vec![-2.0 * (a[0] - 0.7)])).unwrap();
            actor.add_scaled(&g, 0.05);
        }
        let end = actor.forward(&obs).unwrap()[0];
        assert!((end - 0.7).abs() < (start - 0.7).abs());
        assert!((end - 0.7).abs() < 1e-2, "ended at {end}");
    }

    #[test]
    fn soft_update_converges_geometrically() {
        let mut nmac = Nmac::new(1, 2, 1, TrainConfig::default()).unwrap();
        let a = &mut nmac.agents[0];
        a.critic.add_scaled(&vec![1.0; a.critic.num_params()], 1.0);
        let gap0: f64 = a
            .critic
            .flatten()
            .iter()
            .zip(a.target_critic.flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        for _ in 0..100 {
            a.soft_update(0.1);
        }
        let gap: f64 = a
            .critic
            .flatten()
            .iter()
            .zip(a.target_critic.flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!((gap - gap0 * 0.9f64.powi(100)).abs() < 1e-9);
        a.soft_update(1.0);
        assert_eq!(a.target_critic, a.critic);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            TrainConfig {
                discount: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                target_rate: 0.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(Nmac::new(1, 1, 1, cfg).is_err());
        }
    }
}
