//! Exhaustive ground truth for small channel instances, plus samplers that
//! probe the value function for monotonicity and diminishing returns.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsord::{
    evaluate_omega, feasible_extensions, greedy_orchestrate, ratio_p, CellCapacity,
    ChannelInstance, OrchestrationSet,
};
use crate::model::{deadline_indicator, ServiceSpec};

/// Largest `services x cells` count the exhaustive search accepts.
pub const ENUMERATION_LIMIT: usize = 16;

pub const VIOLATION_TOL: f64 = 1e-6;

/// Bumped whenever `random_instance` changes its output for a given seed.
pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub channel_id: usize,
    pub optimum: f64,
    pub optimal_set: OrchestrationSet,
    pub greedy_value: f64,
    pub greedy_set: OrchestrationSet,
    pub ratio_p: usize,
    pub ratio_bound: f64,
    pub bound_satisfied: bool,
    pub enumerated_sets: usize,
}

fn pairs_of(instance: &ChannelInstance) -> Vec<(usize, usize)> {
    (0..instance.services.len())
        .flat_map(|l| (0..instance.cells.len()).map(move |m| (l, m)))
        .collect()
}

fn set_from_mask(pairs: &[(usize, usize)], mask: u32) -> OrchestrationSet {
    OrchestrationSet::from_pairs(
        pairs
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &p)| p),
    )
}

/// Maximum of the dispatch value over every memory-feasible orchestration
/// set, visited in increasing bitmask order. Ties keep the first set found,
/// so an all-zero instance reports the empty set.
pub fn brute_force_jsord(instance: &ChannelInstance) -> Result<(f64, OrchestrationSet)> {
    brute_force_counted(instance).map(|(v, s, _)| (v, s))
}

fn brute_force_counted(instance: &ChannelInstance) -> Result<(f64, OrchestrationSet, usize)> {
    instance.validate()?;
    let pairs = pairs_of(instance);
    if pairs.len() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            pairs: pairs.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best = (0.0, OrchestrationSet::new());
    let mut enumerated = 0;
    for mask in 0u32..(1u32 << pairs.len()) {
        let set = set_from_mask(&pairs, mask);
        if !set.is_feasible(instance) {
            continue;
        }
        enumerated += 1;
        let value = evaluate_omega(instance, &set)?;
        if value > best.0 {
            best = (value, set);
        }
    }
    Ok((best.0, best.1, enumerated))
}

/// Optimum, greedy value and the `1/(1 + p)` bound check for one instance.
pub fn oracle_report(instance: &ChannelInstance) -> Result<OracleReport> {
    let (optimum, optimal_set, enumerated_sets) = brute_force_counted(instance)?;
    let greedy = greedy_orchestrate(instance)?;
    let p = ratio_p(&instance.services);
    let ratio_bound = 1.0 / (1.0 + p as f64);
    Ok(OracleReport {
        channel_id: instance.channel_id,
        optimum,
        optimal_set,
        greedy_value: greedy.objective,
        greedy_set: greedy.set,
        ratio_p: p,
        ratio_bound,
        bound_satisfied: greedy.objective >= optimum * ratio_bound - VIOLATION_TOL,
        enumerated_sets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub smaller: OrchestrationSet,
    pub larger: OrchestrationSet,
    pub smaller_value: f64,
    pub larger_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodularityViolation {
    pub smaller: OrchestrationSet,
    pub larger: OrchestrationSet,
    pub element: (usize, usize),
    pub gain_on_smaller: f64,
    pub gain_on_larger: f64,
}

/// Random feasible set grown by visiting pairs in shuffled order and
/// keeping each feasible one with probability one half.
fn random_feasible_set(instance: &ChannelInstance, rng: &mut ChaCha8Rng) -> OrchestrationSet {
    let mut pairs = pairs_of(instance);
    pairs.shuffle(rng);
    let mut set = OrchestrationSet::new();
    for pair in pairs {
        if rng.random_bool(0.5) {
            let grown = set.with(pair);
            if grown.is_feasible(instance) {
                set = grown;
            }
        }
    }
    set
}

fn random_subset(set: &OrchestrationSet, rng: &mut ChaCha8Rng) -> OrchestrationSet {
    OrchestrationSet::from_pairs(set.iter().copied().filter(|_| rng.random_bool(0.5)))
}

/// Outcome of a sampled property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck<V> {
    /// Samples actually evaluated.
    pub checked: usize,
    pub violations: Vec<V>,
}

/// Samples nested feasible pairs `S1 ⊆ S2` and reports every one with
/// `value(S1) > value(S2)` beyond the tolerance.
pub fn check_monotonicity(
    instance: &ChannelInstance,
    samples: usize,
    seed: u64,
) -> Result<PropertyCheck<MonotonicityViolation>> {
    instance.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..samples {
        let larger = random_feasible_set(instance, &mut rng);
        let smaller = random_subset(&larger, &mut rng);
        let smaller_value = evaluate_omega(instance, &smaller)?;
        let larger_value = evaluate_omega(instance, &larger)?;
        if smaller_value > larger_value + VIOLATION_TOL {
            out.push(MonotonicityViolation {
                smaller,
                larger,
                smaller_value,
                larger_value,
            });
        }
    }
    Ok(PropertyCheck {
        checked: samples,
        violations: out,
    })
}

/// Samples `S1 ⊆ S2` and an element `e ∉ S2` with `S2 ∪ {e}` feasible, and
/// reports every triple where the gain of `e` on `S1` is smaller than on
/// `S2` beyond the tolerance. Samples whose `S2` admits no extension are
/// redrawn (up to a bounded number of attempts).
pub fn check_submodularity(
    instance: &ChannelInstance,
    samples: usize,
    seed: u64,
) -> Result<PropertyCheck<SubmodularityViolation>> {
    instance.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut drawn = 0;
    let mut attempts = 0;
    while drawn < samples && attempts < samples * 50 {
        attempts += 1;
        let larger = random_feasible_set(instance, &mut rng);
        let extensions = feasible_extensions(instance, &larger);
        let Some(&element) = extensions.choose(&mut rng) else {
            continue;
        };
        drawn += 1;
        let smaller = random_subset(&larger, &mut rng);
        let gain_on_smaller =
            evaluate_omega(instance, &smaller.with(element))? - evaluate_omega(instance, &smaller)?;
        let gain_on_larger =
            evaluate_omega(instance, &larger.with(element))? - evaluate_omega(instance, &larger)?;
        if gain_on_smaller < gain_on_larger - VIOLATION_TOL {
            out.push(SubmodularityViolation {
                smaller,
                larger,
                element,
                gain_on_smaller,
                gain_on_larger,
            });
        }
    }
    Ok(PropertyCheck {
        checked: drawn,
        violations: out,
    })
}

/// Which sufficient condition for diminishing returns a generated instance
/// satisfies, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Every cell can absorb the channel's entire compute demand.
    AmpleCompute,
    /// No cell can hold two replicas of any service.
    SingleReplica,
    /// Small cells; compute contention is likely.
    Contended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub max_services: usize,
    pub max_cells: usize,
    pub max_nodes: usize,
    pub regime: Regime,
}

impl GeneratorParams {
    pub fn small(regime: Regime) -> Self {
        GeneratorParams {
            max_services: 3,
            max_cells: 3,
            max_nodes: 4,
            regime,
        }
    }
}

/// Seeded random channel instance with value ranges scaled down from the
/// default simulation: 50-250 MB replicas, 100-500 MB cells, 0-6 requests
/// per (service, node) and 0-25 ms base latencies.
pub fn random_instance(params: &GeneratorParams, seed: u64) -> ChannelInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((GENERATOR_VERSION as u64) << 56));
    let num_l = rng.random_range(1..=params.max_services.max(1));
    let num_m = rng.random_range(1..=params.max_cells.max(1));
    let num_n = rng.random_range(1..=params.max_nodes.max(1));

    let services: Vec<ServiceSpec> = (0..num_l)
        .map(|l| {
            let exec_time = rng.random_range(1.0..5.0);
            ServiceSpec {
                channel_id: 1,
                service_id: l,
                packet_size: rng.random_range(8_000.0..80_000.0),
                memory_req: (rng.random_range(5..=25) * 10) as f64,
                compute_req: rng.random_range(0.05..0.5),
                deadline: exec_time + rng.random_range(5.0..30.0),
                exec_time,
            }
        })
        .collect();
    let arrivals: Vec<Vec<f64>> = (0..num_l)
        .map(|_| (0..num_n).map(|_| rng.random_range(0..=6) as f64).collect())
        .collect();
    let base: Vec<Vec<f64>> = (0..num_n)
        .map(|_| (0..num_m).map(|_| rng.random_range(0.0..25.0)).collect())
        .collect();
    let bandwidth: Vec<f64> = (0..num_n)
        .map(|_| if rng.random_bool(0.5) { 125.0 } else { 12.5 })
        .collect();

    let total_load: f64 = services
        .iter()
        .zip(&arrivals)
        .map(|(s, row)| s.compute_req * row.iter().sum::<f64>())
        .sum();
    let min_r = services
        .iter()
        .map(|s| s.memory_req)
        .fold(f64::INFINITY, f64::min);
    let cells: Vec<CellCapacity> = (0..num_m)
        .map(|m| {
            let (compute, memory) = match params.regime {
                Regime::AmpleCompute => (
                    total_load * rng.random_range(1.0..1.5) + 0.01,
                    rng.random_range(100.0..500.0),
                ),
                Regime::SingleReplica => (
                    rng.random_range(0.2..2.0),
                    rng.random_range(min_r..(2.0 * min_r - 1.0)),
                ),
                Regime::Contended => (rng.random_range(0.2..1.5), rng.random_range(100.0..500.0)),
            };
            CellCapacity {
                cell_id: m,
                compute,
                memory,
            }
        })
        .collect();

    let mut latency = Vec::with_capacity(num_l);
    let mut indicator = Vec::with_capacity(num_l);
    for s in &services {
        let lat: Vec<Vec<f64>> = (0..num_n)
            .map(|i| {
                let ser = s.packet_size / (bandwidth[i] * 1_000.0);
                base[i].iter().map(|b| b + ser).collect()
            })
            .collect();
        indicator.push(
            lat.iter()
                .map(|row| row.iter().map(|&t| deadline_indicator(s, t)).collect())
                .collect(),
        );
        latency.push(lat);
    }
    ChannelInstance {
        channel_id: 1,
        services,
        cells,
        num_nodes: num_n,
        arrivals,
        latency,
        indicator,
    }
}

/// True when `instance` meets either sufficient condition for
/// diminishing returns.
pub fn meets_submodularity_conditions(instance: &ChannelInstance) -> bool {
    let single_replica = instance.cells.iter().all(|c| {
        instance
            .services
            .iter()
            .all(|s| s.memory_req > 0.0 && (c.memory / s.memory_req).floor() <= 1.0)
    });
    let load: f64 = instance
        .services
        .iter()
        .zip(&instance.arrivals)
        .map(|(s, row)| s.compute_req * row.iter().sum::<f64>())
        .sum();
    let ample = instance.cells.iter().all(|c| load <= c.compute);
    single_replica || ample
}
