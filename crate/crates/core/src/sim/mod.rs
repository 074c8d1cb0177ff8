//! Two-time-scale simulator.
//!
//! Each frame: release last frame's cells, build new cells from the agents'
//! actions, cluster them into channels, bind services by SLA class and run
//! the greedy orchestration per channel. Each slot: draw arrivals, solve the
//! dispatch program per channel against the fixed orchestration, round to
//! whole requests, serve up to cell capacity and drop the rest.

pub mod config;
pub mod policy;
pub mod topology;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::SimConfig;
pub use policy::{ActorPolicy, Policy, RandomPolicy, StaticPolicy};

use crate::customizer::{
    allocate_cell, assign_services_to_channels, cluster_channels, release_cell, CellDemand,
    RegionState,
};
use crate::error::{Error, Result};
use crate::jsord::{solve_all_channels, solve_dispatch_lp, ChannelInstance, OrchestrationSet};
use crate::model::{
    compute_reward, throughput_rate, CellCharacteristics, Channel, CloudCenter, ResourceCell,
    ServiceSpec, CAPACITY_TOL,
};
use crate::nmac::MultiAgentEnv;
use crate::trace::{load_trace, poisson, ArrivalProcess, TraceBinning, WorkloadModel};

pub const STATE_FORMAT: &str = "sim-state/1";

/// Where slot arrivals come from. Trace counts act as per-slot Poisson
/// rates, replayed cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArrivalSource {
    Synthetic(WorkloadModel),
    Trace(ArrivalProcess),
}

impl ArrivalSource {
    fn draw<R: Rng + ?Sized>(&self, slot: u64, rng: &mut R) -> Vec<Vec<Vec<u64>>> {
        match self {
            ArrivalSource::Synthetic(model) => model.draw_slot(slot, rng),
            ArrivalSource::Trace(process) => {
                let counts = &process.slots[slot as usize % process.slots.len()];
                counts
                    .iter()
                    .map(|per_l| {
                        per_l
                            .iter()
                            .map(|per_i| per_i.iter().map(|&c| poisson(c as f64, rng)).collect())
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Long-run mean per slot, used before any frame has been observed.
    fn mean_rates(&self) -> Vec<Vec<Vec<f64>>> {
        match self {
            ArrivalSource::Synthetic(model) => model.rates.clone(),
            ArrivalSource::Trace(process) => {
                let n = process.slots.len().max(1) as f64;
                let mut out: Vec<Vec<Vec<f64>>> = process
                    .services_per_channel
                    .iter()
                    .map(|&l| vec![vec![0.0; process.nodes]; l])
                    .collect();
                for slot in &process.slots {
                    for (p, per_l) in slot.iter().enumerate() {
                        for (l, per_i) in per_l.iter().enumerate() {
                            for (i, &c) in per_i.iter().enumerate() {
                                out[p][l][i] += c as f64 / n;
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCounters {
    pub arrived: u64,
    pub served: u64,
    /// Requests that arrived but were not served within the slot.
    pub sla_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `[p][l]`.
    pub services: Vec<Vec<ServiceCounters>>,
    pub channel_arrived: Vec<u64>,
    pub channel_served: Vec<u64>,
    pub slots: u64,
    pub frames: u64,
    /// Requests routed to a pair outside the orchestration or past its
    /// deadline; these are refused, so the count should stay zero.
    pub indicator_breaches: u64,
    /// Largest `load - capacity` seen on any cell in any slot.
    pub max_load_excess: f64,
    /// Frames whose orchestration overfilled some cell's memory.
    pub memory_violations: u64,
}

impl Metrics {
    fn new(services: &[Vec<ServiceSpec>]) -> Self {
        Metrics {
            services: services
                .iter()
                .map(|s| vec![ServiceCounters::default(); s.len()])
                .collect(),
            channel_arrived: vec![0; services.len()],
            channel_served: vec![0; services.len()],
            slots: 0,
            frames: 0,
            indicator_breaches: 0,
            max_load_excess: f64::NEG_INFINITY,
            memory_violations: 0,
        }
    }

    pub fn arrived(&self) -> u64 {
        self.channel_arrived.iter().sum()
    }

    pub fn served(&self) -> u64 {
        self.channel_served.iter().sum()
    }

    pub fn throughput(&self) -> f64 {
        throughput_rate(self.served(), self.arrived())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub episode: u64,
    pub frame: u64,
    pub arrived: u64,
    pub served: u64,
    pub dropped: u64,
    pub throughput: f64,
    pub channel_arrived: Vec<u64>,
    pub channel_served: Vec<u64>,
    pub channel_priority: Vec<f64>,
    pub channel_cells: Vec<usize>,
    pub channel_objective: Vec<f64>,
    pub cells: usize,
    pub cloud_cells: usize,
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
    pub max_load_excess: f64,
    pub indicator_breaches: u64,
    pub memory_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotResult {
    pub slot: u64,
    pub arrived: u64,
    pub served: u64,
    pub channel_served: Vec<u64>,
    pub max_load_excess: f64,
    pub indicator_breaches: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub rewards: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub record: FrameRecord,
}

/// Orchestration of one channel, fixed for a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub instance: ChannelInstance,
    pub set: OrchestrationSet,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub cfg: SimConfig,
    pub episode: u64,
    pub frame: u64,
    /// Slots elapsed in this episode.
    pub slot: u64,
    pub region: RegionState,
    /// `[p][l]`, class `p + 1`.
    pub services: Vec<Vec<ServiceSpec>>,
    pub cells: Vec<ResourceCell>,
    pub channels: Vec<Channel>,
    pub plans: Vec<ChannelPlan>,
    pub metrics: Metrics,
    pub source: ArrivalSource,
    pub rng: ChaCha8Rng,
    /// Demand used to orchestrate the next frame, `[p][l][i]` per slot.
    pub predicted: Vec<Vec<Vec<f64>>>,
    /// Mean arrivals per slot over the last completed frame; zero at reset.
    pub observed: Vec<Vec<Vec<f64>>>,
    frame_arrived: Vec<Vec<Vec<u64>>>,
    frame_served: Vec<Vec<Vec<u64>>>,
    frame_load_excess: f64,
    frame_breaches: u64,
}

fn mix(seed: u64, episode: u64) -> u64 {
    seed ^ episode.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn generate_services<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<Vec<ServiceSpec>> {
    let s = &cfg.services;
    let draw = |r: [f64; 2], rng: &mut R| rng.random_range(r[0]..=r[1]);
    (1..=cfg.channels)
        .map(|class| {
            let count = rng.random_range(s.per_channel[0]..=s.per_channel[1]);
            (0..count)
                .map(|l| {
                    let exec_time = draw(s.exec_ms, rng);
                    let jitter = rng.random_range(0.0..=s.deadline_jitter_ms);
                    ServiceSpec {
                        channel_id: class,
                        service_id: l,
                        packet_size: draw(s.packet_kbits, rng) * 1_000.0,
                        memory_req: draw(s.memory_mb, rng),
                        compute_req: draw(s.compute, rng),
                        deadline: s.deadline_base_ms
                            + s.deadline_step_ms * (class - 1) as f64
                            + jitter,
                        exec_time,
                    }
                })
                .collect()
        })
        .collect()
}

fn zeros_like<T: Clone + Default>(services: &[Vec<ServiceSpec>], nodes: usize) -> Vec<Vec<Vec<T>>> {
    services
        .iter()
        .map(|s| vec![vec![T::default(); nodes]; s.len()])
        .collect()
}

fn empty_channel(channel_id: usize, epsilon: f64) -> Channel {
    Channel::new(
        channel_id,
        Vec::new(),
        Vec::new(),
        CellCharacteristics {
            w_norm: 0.0,
            r_norm: 0.0,
            edge_fraction: 0.0,
            epsilon,
        },
    )
}

/// Episode 0 of `cfg`.
pub fn reset(cfg: &SimConfig) -> Result<(SimState, Vec<Vec<f64>>)> {
    reset_episode(cfg, 0)
}

/// Fresh state for `episode`. Topology, services and rates depend only on
/// `cfg.seed`; the episode number only changes the arrival and clustering
/// randomness.
pub fn reset_episode(cfg: &SimConfig, episode: u64) -> Result<(SimState, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let mut setup = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topology = topology::generate_topology(cfg, &mut setup)?;
    let services = generate_services(cfg, &mut setup);
    let rates: Vec<Vec<Vec<f64>>> = services
        .iter()
        .map(|s| {
            s.iter()
                .map(|_| {
                    (0..cfg.nodes)
                        .map(|_| {
                            setup.random_range(
                                cfg.workload.rate_range[0]..=cfg.workload.rate_range[1],
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let source = match &cfg.workload.trace {
        Some(path) => ArrivalSource::Trace(load_trace(
            path,
            &TraceBinning {
                slot_width_s: cfg.workload.slot_width_s,
                nodes: cfg.nodes,
                services_per_channel: services.iter().map(|s| s.len()).collect(),
            },
        )?),
        None => ArrivalSource::Synthetic(WorkloadModel {
            rates,
            diurnal_amplitude: cfg.workload.diurnal_amplitude,
            diurnal_period: cfg.workload.diurnal_period_slots,
            burstiness: cfg.workload.burstiness,
            seed: cfg.seed,
        }),
    };
    let channels = (1..=cfg.channels)
        .map(|p| {
            let mut ch = empty_channel(p, cfg.epsilon);
            ch.services = services[p - 1].clone();
            ch
        })
        .collect();
    let state = SimState {
        cfg: cfg.clone(),
        episode,
        frame: 0,
        slot: 0,
        region: RegionState::new(topology, CloudCenter::unbounded(cfg.cloud_latency_ms)),
        predicted: source.mean_rates(),
        observed: zeros_like(&services, cfg.nodes),
        frame_arrived: zeros_like(&services, cfg.nodes),
        frame_served: zeros_like(&services, cfg.nodes),
        frame_load_excess: f64::NEG_INFINITY,
        frame_breaches: 0,
        metrics: Metrics::new(&services),
        services,
        cells: Vec::new(),
        channels,
        plans: Vec::new(),
        source,
        rng: ChaCha8Rng::seed_from_u64(mix(cfg.seed, episode)),
    };
    let obs = state.observe_all()?;
    Ok((state, obs))
}

/// Splits `count` requests over cells by largest remainder; the final
/// entry collects the requests the dispatch leaves unassigned.
pub fn apportion(count: u64, weights: &[f64]) -> Vec<u64> {
    let mut w: Vec<f64> = weights.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = w.iter().sum();
    if sum > 1.0 {
        w.iter_mut().for_each(|v| *v /= sum);
    }
    let kept: f64 = w.iter().sum();
    w.push((1.0 - kept).max(0.0));
    let shares: Vec<f64> = w.iter().map(|v| v * count as f64).collect();
    let mut out: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    let mut left = count.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (shares[b] - shares[b].floor())
            .total_cmp(&(shares[a] - shares[a].floor()))
            .then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}

struct ChannelSlot {
    served: Vec<Vec<u64>>,
    max_load_excess: f64,
    breaches: u64,
}

fn dispatch_channel(plan: &ChannelPlan, counts: &[Vec<u64>]) -> Result<ChannelSlot> {
    let inst = &plan.instance;
    let (num_l, num_n, num_m) = (inst.services.len(), inst.num_nodes, inst.cells.len());
    let mut out = ChannelSlot {
        served: vec![vec![0; num_n]; num_l],
        max_load_excess: f64::NEG_INFINITY,
        breaches: 0,
    };
    if num_m == 0 || counts.iter().flatten().all(|&c| c == 0) {
        return Ok(out);
    }
    let demand: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64).collect())
        .collect();
    let (plan_y, _) = solve_dispatch_lp(inst, &plan.set, &demand)?;
    let mut assigned: Vec<Vec<(usize, usize, u64)>> = vec![Vec::new(); num_m];
    for l in 0..num_l {
        for i in 0..num_n {
            let c = counts[l][i];
            if c == 0 {
                continue;
            }
            let weights: Vec<f64> = (0..num_m).map(|m| plan_y.get(l, i, m)).collect();
            for (m, &k) in apportion(c, &weights)[..num_m].iter().enumerate() {
                if k > 0 {
                    assigned[m].push((l, i, k));
                }
            }
        }
    }
    for (m, queue) in assigned.iter().enumerate() {
        let cap = inst.cells[m].compute;
        let mut load = 0.0;
        for &(l, i, k) in queue {
            if !plan.set.contains(&(l, m)) || !inst.indicator[l][i][m] {
                out.breaches += k;
                continue;
            }
            let w = inst.services[l].compute_req;
            let fit = if w <= 0.0 {
                k
            } else {
                (((cap + CAPACITY_TOL - load) / w).floor().max(0.0) as u64).min(k)
            };
            load += fit as f64 * w;
            out.served[l][i] += fit;
        }
        out.max_load_excess = out.max_load_excess.max(load - cap);
    }
    Ok(out)
}

impl SimState {
    pub fn num_agents(&self) -> usize {
        self.cfg.nodes
    }

    /// Fixed-schema observation of `node`:
    /// 1. mean arrivals per slot last frame, per (class, service slot);
    /// 2. `(memory / cell memory limit, compute, deadline / 100)` per
    ///    (class, service slot);
    /// 3. `(w, r, u)` of each of the node's cell slots;
    /// 4. available compute and memory fractions over the neighborhood.
    ///
    /// Missing services and unallocated cell slots are zero-filled.
    pub fn observe(&self, node: usize) -> Result<Vec<f64>> {
        let topo = &self.region.topology;
        topo.node(node)?;
        let lmax = self.cfg.max_services();
        let mut v = Vec::with_capacity(self.cfg.observation_dim());
        for p in 0..self.cfg.channels {
            for l in 0..lmax {
                v.push(self.observed[p].get(l).map_or(0.0, |row| row[node]));
            }
        }
        for p in 0..self.cfg.channels {
            for l in 0..lmax {
                match self.services[p].get(l) {
                    Some(s) => v.extend([
                        s.memory_req / self.cfg.cell_memory_mb,
                        s.compute_req,
                        s.deadline / 100.0,
                    ]),
                    None => v.extend([0.0; 3]),
                }
            }
        }
        for k in 0..self.cfg.cells_per_node {
            let id = node * self.cfg.cells_per_node + k;
            match self.cells.binary_search_by_key(&id, |c| c.cell_id) {
                Ok(idx) => {
                    let c = &self.cells[idx].characteristics;
                    v.extend([c.w_norm, c.r_norm, c.edge_fraction]);
                }
                Err(_) => v.extend([0.0; 3]),
            }
        }
        let (mut ac, mut cc, mut am, mut cm) = (0.0, 0.0, 0.0, 0.0);
        for j in topo.neighborhood(node) {
            let n = topo.node(j)?;
            ac += n.available_compute;
            cc += n.compute_cap;
            am += n.available_memory;
            cm += n.memory_cap;
        }
        v.push(if cc > 0.0 { ac / cc } else { 0.0 });
        v.push(if cm > 0.0 { am / cm } else { 0.0 });
        Ok(v)
    }

    pub fn observe_all(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.cfg.nodes).map(|i| self.observe(i)).collect()
    }

    fn check_actions(&self, actions: &[Vec<f64>]) -> Result<()> {
        if actions.len() != self.cfg.nodes {
            return Err(Error::Shape(format!(
                "expected {} action vectors, got {}",
                self.cfg.nodes,
                actions.len()
            )));
        }
        for (i, a) in actions.iter().enumerate() {
            if a.len() != self.cfg.action_dim() {
                return Err(Error::Shape(format!(
                    "agent {i} action has length {}, expected {}",
                    a.len(),
                    self.cfg.action_dim()
                )));
            }
            if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("agent {i} action leaves [0, 1]")));
            }
        }
        Ok(())
    }

    /// Rebuilds cells from `actions`, clusters them into channels, binds
    /// services and returns one orchestration instance per channel, built
    /// against the predicted demand.
    pub fn customize(&mut self, actions: &[Vec<f64>]) -> Result<Vec<ChannelInstance>> {
        self.check_actions(actions)?;
        let cfg = self.cfg.clone();
        let limits = cfg.limits();

        for cell in std::mem::take(&mut self.cells) {
            release_cell(&mut self.region, &cell)?;
        }
        for (i, a) in actions.iter().enumerate() {
            for k in 0..cfg.cells_per_node {
                let demand = CellDemand {
                    owner_node: i,
                    compute_frac: a[2 * k],
                    memory_frac: a[2 * k + 1],
                };
                if demand.compute_frac == 0.0 && demand.memory_frac == 0.0 {
                    continue;
                }
                let id = i * cfg.cells_per_node + k;
                self.cells.push(allocate_cell(
                    &mut self.region,
                    &demand,
                    id,
                    &limits,
                    cfg.epsilon,
                )?);
            }
        }

        let cluster_seed: u64 = self.rng.random();
        let groups = self.cells.len().min(cfg.channels);
        let mut channels = if groups == 0 {
            Vec::new()
        } else {
            cluster_channels(&self.cells, groups, cfg.epsilon, cluster_seed)?.channels
        };
        for p in channels.len() + 1..=cfg.channels {
            channels.push(empty_channel(p, cfg.epsilon));
        }
        let all_services: Vec<ServiceSpec> = self.services.iter().flatten().cloned().collect();
        let mut bound = assign_services_to_channels(&all_services, cfg.channels)?;
        for ch in &mut channels {
            ch.services = bound.remove(&ch.channel_id).unwrap_or_default();
        }
        self.channels = channels;
        self.channels
            .iter()
            .enumerate()
            .map(|(p, ch)| {
                ChannelInstance::from_channel(
                    ch,
                    &self.region.topology,
                    &self.region.cloud,
                    self.predicted[p].clone(),
                )
            })
            .collect()
    }

    /// All current cells and services as one undivided instance, any
    /// service allowed on any cell.
    pub fn merged_instance(&self) -> Result<ChannelInstance> {
        let mut all = empty_channel(1, self.cfg.epsilon);
        all.cells = self
            .channels
            .iter()
            .flat_map(|c| c.cells.iter().cloned())
            .collect();
        all.services = self.services.iter().flatten().cloned().collect();
        let arrivals = self.predicted.iter().flatten().cloned().collect();
        ChannelInstance::from_channel(&all, &self.region.topology, &self.region.cloud, arrivals)
    }

    /// One frame: customize, cluster, orchestrate, then run every slot.
    pub fn step_frame(&mut self, actions: &[Vec<f64>]) -> Result<FrameResult> {
        let instances = self.customize(actions)?;
        let cfg = self.cfg.clone();
        let outcomes = solve_all_channels(&instances, 0)?;
        let mut memory_ok = true;
        self.plans = instances
            .into_iter()
            .zip(outcomes)
            .map(|(instance, o)| {
                memory_ok &= o.set.is_feasible(&instance);
                ChannelPlan {
                    instance,
                    set: o.set,
                    objective: o.objective,
                }
            })
            .collect();
        if !memory_ok {
            self.metrics.memory_violations += 1;
        }

        self.frame_arrived = zeros_like(&self.services, cfg.nodes);
        self.frame_served = zeros_like(&self.services, cfg.nodes);
        self.frame_load_excess = f64::NEG_INFINITY;
        self.frame_breaches = 0;
        let before = (
            self.metrics.channel_arrived.clone(),
            self.metrics.channel_served.clone(),
        );
        for _ in 0..cfg.slots_per_frame {
            self.step_slot()?;
        }

        let priorities: Vec<f64> = self.channels.iter().map(|c| c.priority).collect();
        let rewards: Vec<f64> = (0..cfg.nodes)
            .map(|i| {
                let rates: Vec<Vec<f64>> = self
                    .frame_arrived
                    .iter()
                    .zip(&self.frame_served)
                    .map(|(arr, srv)| {
                        arr.iter()
                            .zip(srv)
                            .map(|(a, s)| throughput_rate(s[i], a[i]))
                            .collect()
                    })
                    .collect();
                compute_reward(&rates, &priorities)
            })
            .collect();
        let spf = cfg.slots_per_frame as f64;
        self.observed = self
            .frame_arrived
            .iter()
            .map(|per_l| {
                per_l
                    .iter()
                    .map(|per_i| per_i.iter().map(|&c| c as f64 / spf).collect())
                    .collect()
            })
            .collect();
        self.predicted = self.observed.clone();

        let channel_arrived: Vec<u64> = self
            .metrics
            .channel_arrived
            .iter()
            .zip(&before.0)
            .map(|(a, b)| a - b)
            .collect();
        let channel_served: Vec<u64> = self
            .metrics
            .channel_served
            .iter()
            .zip(&before.1)
            .map(|(a, b)| a - b)
            .collect();
        let arrived: u64 = channel_arrived.iter().sum();
        let served: u64 = channel_served.iter().sum();
        let record = FrameRecord {
            episode: self.episode,
            frame: self.frame,
            arrived,
            served,
            dropped: arrived - served,
            throughput: throughput_rate(served, arrived),
            channel_arrived,
            channel_served,
            channel_priority: priorities,
            channel_cells: self.channels.iter().map(|c| c.cells.len()).collect(),
            channel_objective: self.plans.iter().map(|p| p.objective).collect(),
            cells: self.cells.len(),
            cloud_cells: self.cells.iter().filter(|c| c.has_cloud_share()).count(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            rewards: rewards.clone(),
            max_load_excess: self.frame_load_excess,
            indicator_breaches: self.frame_breaches,
            memory_ok,
        };
        self.frame += 1;
        self.metrics.frames += 1;
        Ok(FrameResult {
            rewards,
            observations: self.observe_all()?,
            record,
        })
    }

    /// One slot of arrivals against the current orchestration.
    pub fn step_slot(&mut self) -> Result<SlotResult> {
        let nodes = self.cfg.nodes;
        let counts = self.source.draw(self.slot, &mut self.rng);
        let channels = self.cfg.channels;
        let results: Vec<Option<ChannelSlot>> = (0..channels)
            .into_par_iter()
            .map(|p| match self.plans.get(p) {
                Some(plan) => dispatch_channel(plan, &counts[p]).map(Some),
                None => Ok(None),
            })
            .collect::<Result<_>>()?;

        let mut out = SlotResult {
            slot: self.slot,
            arrived: 0,
            served: 0,
            channel_served: vec![0; channels],
            max_load_excess: f64::NEG_INFINITY,
            indicator_breaches: 0,
        };
        for (p, result) in results.into_iter().enumerate() {
            for (l, per_i) in counts[p].iter().enumerate() {
                for i in 0..nodes {
                    let arrived = per_i[i];
                    let served = result.as_ref().map_or(0, |r| r.served[l][i]);
                    let c = &mut self.metrics.services[p][l];
                    c.arrived += arrived;
                    c.served += served;
                    c.sla_violations += arrived - served;
                    self.frame_arrived[p][l][i] += arrived;
                    self.frame_served[p][l][i] += served;
                    self.metrics.channel_arrived[p] += arrived;
                    self.metrics.channel_served[p] += served;
                    out.arrived += arrived;
                    out.served += served;
                    out.channel_served[p] += served;
                }
            }
            if let Some(r) = result {
                out.max_load_excess = out.max_load_excess.max(r.max_load_excess);
                out.indicator_breaches += r.breaches;
            }
        }
        self.metrics.max_load_excess = self.metrics.max_load_excess.max(out.max_load_excess);
        self.metrics.indicator_breaches += out.indicator_breaches;
        self.frame_load_excess = self.frame_load_excess.max(out.max_load_excess);
        self.frame_breaches += out.indicator_breaches;
        self.metrics.slots += 1;
        self.slot += 1;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = serde_json::json!({ "format": STATE_FORMAT, "state": self });
        std::fs::write(path, serde_json::to_vec(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_slice(&std::fs::read(path)?)?;
        let found = value
            .get("format")
            .and_then(|f| f.as_str())
            .unwrap_or("")
            .to_string();
        if found != STATE_FORMAT {
            return Err(Error::Version {
                found,
                expected: STATE_FORMAT.into(),
            });
        }
        let state = value
            .get_mut("state")
            .map(serde_json::Value::take)
            .ok_or_else(|| Error::Schema("missing field `state`".into()))?;
        Ok(serde_json::from_value(state)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub frames: Vec<FrameRecord>,
    /// Mean over agents of the summed frame rewards.
    pub episode_reward: f64,
    pub throughput: f64,
    pub metrics: Metrics,
}

/// Chains `frames` frame steps driven by `policy`.
pub fn run_episode(
    state: &mut SimState,
    observations: Vec<Vec<f64>>,
    policy: &mut dyn Policy,
    frames: usize,
) -> Result<EpisodeSummary> {
    let mut obs = observations;
    let mut records = Vec::with_capacity(frames);
    let mut returns = vec![0.0; state.num_agents()];
    for _ in 0..frames {
        let actions = policy.decide(&obs, state.cfg.action_dim())?;
        let result = state.step_frame(&actions)?;
        for (acc, r) in returns.iter_mut().zip(&result.rewards) {
            *acc += r;
        }
        records.push(result.record);
        obs = result.observations;
    }
    Ok(EpisodeSummary {
        episode: state.episode,
        frames: records,
        episode_reward: returns.iter().sum::<f64>() / returns.len().max(1) as f64,
        throughput: state.metrics.throughput(),
        metrics: state.metrics.clone(),
    })
}

/// Episode reward of `policy` on each of `episodes`, every episode starting
/// from its own reset.
pub fn evaluate_policy(
    cfg: &SimConfig,
    policy: &mut dyn Policy,
    episodes: impl IntoIterator<Item = u64>,
) -> Result<Vec<f64>> {
    episodes
        .into_iter()
        .map(|e| {
            let (mut state, obs) = reset_episode(cfg, e)?;
            Ok(run_episode(&mut state, obs, policy, cfg.frames_per_episode)?.episode_reward)
        })
        .collect()
}

/// The simulator as a training environment.
pub struct SimEnv {
    cfg: SimConfig,
    state: Option<SimState>,
}

impl SimEnv {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SimEnv { cfg, state: None })
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }
}

impl MultiAgentEnv for SimEnv {
    fn num_agents(&self) -> usize {
        self.cfg.nodes
    }

    fn observation_dim(&self) -> usize {
        self.cfg.observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.cfg.action_dim()
    }

    fn episode_length(&self) -> usize {
        self.cfg.frames_per_episode
    }

    fn reset(&mut self, episode: u64) -> Result<Vec<Vec<f64>>> {
        let (state, obs) = reset_episode(&self.cfg, episode)?;
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Config("environment stepped before reset".into()))?;
        let r = state.step_frame(actions)?;
        Ok((r.rewards, r.observations))
    }
}
