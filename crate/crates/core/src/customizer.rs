//! Resource cells from agent actions, and clustering of cells into
//! priority channels.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    channel_priority, CellCharacteristics, CellLimits, CellShare, CellSource, Channel, CloudCenter,
    ResourceCell, ServiceSpec, Topology, MB_PER_GB,
};

pub const MAX_KMEANS_ITERS: usize = 100;
pub const KMEANS_MOVEMENT_TOL: f64 = 1e-6;

/// Availability of one region's edge nodes plus what the cloud has lent out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionState {
    pub topology: Topology,
    pub cloud: CloudCenter,
    pub cloud_compute_used: f64,
    /// MB.
    pub cloud_memory_used: f64,
}

impl RegionState {
    pub fn new(topology: Topology, cloud: CloudCenter) -> Self {
        RegionState {
            topology,
            cloud,
            cloud_compute_used: 0.0,
            cloud_memory_used: 0.0,
        }
    }

    fn cloud_remaining(&self) -> (f64, f64) {
        use crate::model::Capacity;
        let compute = match self.cloud.compute_cap {
            Capacity::Finite(c) => (c - self.cloud_compute_used).max(0.0),
            Capacity::Unbounded => f64::INFINITY,
        };
        let memory = match self.cloud.memory_cap {
            Capacity::Finite(gb) => (gb * MB_PER_GB - self.cloud_memory_used).max(0.0),
            Capacity::Unbounded => f64::INFINITY,
        };
        (compute, memory)
    }
}

/// One agent action slot: the fractions of the cell limits to request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDemand {
    pub owner_node: usize,
    pub compute_frac: f64,
    pub memory_frac: f64,
}

impl CellDemand {
    pub fn compute_req(&self, limits: &CellLimits) -> f64 {
        limits.alpha * self.compute_frac
    }

    pub fn memory_req(&self, limits: &CellLimits) -> f64 {
        limits.beta * self.memory_frac
    }

    pub fn validate(&self) -> Result<()> {
        let in_box = |v: f64| (0.0..=1.0).contains(&v);
        if !in_box(self.compute_frac) || !in_box(self.memory_frac) {
            return Err(Error::Config(format!(
                "cell demand fractions must lie in [0, 1], got ({}, {})",
                self.compute_frac, self.memory_frac
            )));
        }
        if self.compute_frac == 0.0 && self.memory_frac == 0.0 {
            return Err(Error::Config("cell demand (0, 0) is degenerate".into()));
        }
        Ok(())
    }
}

/// Builds one cell for `demand`, drawing from the owner, then its neighbors
/// in ascending id, then the cloud. Availability is debited in `state`.
pub fn allocate_cell(
    state: &mut RegionState,
    demand: &CellDemand,
    cell_id: usize,
    limits: &CellLimits,
    epsilon: f64,
) -> Result<ResourceCell> {
    demand.validate()?;
    state.topology.node(demand.owner_node)?;
    let mut need_c = demand.compute_req(limits);
    let mut need_m = demand.memory_req(limits);

    let mut order = vec![demand.owner_node];
    order.extend(
        state
            .topology
            .neighborhood(demand.owner_node)
            .into_iter()
            .filter(|&j| j != demand.owner_node),
    );

    let mut composition = Vec::new();
    for j in order {
        if need_c <= 0.0 && need_m <= 0.0 {
            break;
        }
        let node = state.topology.node_mut(j)?;
        let take_c = need_c.min(node.available_compute).max(0.0);
        let take_m = need_m.min(node.available_memory_mb()).max(0.0);
        if take_c <= 0.0 && take_m <= 0.0 {
            continue;
        }
        node.available_compute = (node.available_compute - take_c).max(0.0);
        node.available_memory = (node.available_memory - take_m / MB_PER_GB).max(0.0);
        need_c -= take_c;
        need_m -= take_m;
        composition.push(CellShare {
            source: CellSource::Node(j),
            compute: take_c,
            memory: take_m,
        });
    }

    if need_c > 0.0 || need_m > 0.0 {
        let (cloud_c, cloud_m) = state.cloud_remaining();
        let take_c = need_c.max(0.0).min(cloud_c);
        let take_m = need_m.max(0.0).min(cloud_m);
        if take_c > 0.0 || take_m > 0.0 {
            state.cloud_compute_used += take_c;
            state.cloud_memory_used += take_m;
            composition.push(CellShare {
                source: CellSource::Cloud,
                compute: take_c,
                memory: take_m,
            });
        }
    }
    if composition.is_empty() {
        return Err(Error::Config(format!(
            "no resources left for a cell at node {}",
            demand.owner_node
        )));
    }
    ResourceCell::from_composition(cell_id, demand.owner_node, composition, limits, epsilon)
}

/// Returns every share of `cell` to its source.
pub fn release_cell(state: &mut RegionState, cell: &ResourceCell) -> Result<()> {
    for share in &cell.composition {
        match share.source {
            CellSource::Node(j) => {
                let node = state.topology.node_mut(j)?;
                node.available_compute =
                    (node.available_compute + share.compute).min(node.compute_cap);
                node.available_memory =
                    (node.available_memory + share.memory / MB_PER_GB).min(node.memory_cap);
            }
            CellSource::Cloud => {
                state.cloud_compute_used = (state.cloud_compute_used - share.compute).max(0.0);
                state.cloud_memory_used = (state.cloud_memory_used - share.memory).max(0.0);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Sorted by descending priority; ids are 1-based ranks.
    pub channels: Vec<Channel>,
    /// cell_id -> channel_id.
    pub assignments: BTreeMap<usize, usize>,
    /// Feature-space centroids in channel order.
    pub centroids: Vec<[f64; 3]>,
    pub iterations: usize,
}

fn features(c: &CellCharacteristics, epsilon: f64) -> [f64; 3] {
    [c.w_norm, c.r_norm, epsilon * c.edge_fraction]
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64; 3], centroids: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn seed_centroids(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick]);
    }
    centroids
}

/// Gives every empty cluster the point farthest from the centroid of the
/// currently largest cluster.
fn repair_empty(points: &[[f64; 3]], assign: &mut [usize], centroids: &mut [[f64; 3]]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k)
            .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
            .unwrap();
        if sizes[largest] < 2 {
            return;
        }
        let far = (0..points.len())
            .filter(|&i| assign[i] == largest)
            .max_by(|&a, &b| {
                dist2(&points[a], &centroids[largest])
                    .total_cmp(&dist2(&points[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        assign[far] = empty;
        centroids[empty] = points[far];
    }
}

/// Seeded k-means with `k = channels` over the cells' `(w, r, epsilon * u)`.
/// Channels come back ranked by descending priority with no services bound.
pub fn cluster_channels(
    cells: &[ResourceCell],
    channels: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ClusteringResult> {
    if channels == 0 {
        return Err(Error::Config("channel count must be positive".into()));
    }
    if cells.len() < channels {
        return Err(Error::Config(format!(
            "{} cells cannot form {channels} channels",
            cells.len()
        )));
    }
    let points: Vec<[f64; 3]> = cells
        .iter()
        .map(|c| features(&c.characteristics, epsilon))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(&points, channels, &mut rng);
    let mut assign = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < MAX_KMEANS_ITERS {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(&points, &mut next, &mut centroids);
        let changed = next != assign;
        assign = next;
        let mut sums = vec![[0.0; 3]; channels];
        let mut counts = vec![0usize; channels];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for d in 0..3 {
                sums[a][d] += p[d];
            }
        }
        let mut movement: f64 = 0.0;
        for k in 0..channels {
            if counts[k] > 0 {
                let mean = sums[k].map(|s| s / counts[k] as f64);
                movement = movement.max(dist2(&mean, &centroids[k]).sqrt());
                centroids[k] = mean;
            }
        }
        if !changed && movement < KMEANS_MOVEMENT_TOL {
            break;
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); channels];
    for (i, &a) in assign.iter().enumerate() {
        members[a].push(i);
    }
    let summaries: Vec<CellCharacteristics> = members
        .iter()
        .map(|idx| {
            let n = idx.len().max(1) as f64;
            let mean = |f: fn(&CellCharacteristics) -> f64| {
                idx.iter()
                    .map(|&i| f(&cells[i].characteristics))
                    .sum::<f64>()
                    / n
            };
            CellCharacteristics {
                w_norm: mean(|c| c.w_norm),
                r_norm: mean(|c| c.r_norm),
                edge_fraction: mean(|c| c.edge_fraction),
                epsilon,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..channels).collect();
    order.sort_by(|&a, &b| {
        channel_priority(&summaries[b])
            .total_cmp(&channel_priority(&summaries[a]))
            .then(a.cmp(&b))
    });

    let mut result = ClusteringResult {
        channels: Vec::with_capacity(channels),
        assignments: BTreeMap::new(),
        centroids: Vec::with_capacity(channels),
        iterations,
    };
    for (rank, &k) in order.iter().enumerate() {
        let channel_id = rank + 1;
        let cells_k: Vec<ResourceCell> = members[k].iter().map(|&i| cells[i].clone()).collect();
        for c in &cells_k {
            result.assignments.insert(c.cell_id, channel_id);
        }
        result.centroids.push(features(&summaries[k], epsilon));
        result
            .channels
            .push(Channel::new(channel_id, cells_k, Vec::new(), summaries[k]));
    }
    Ok(result)
}

/// Groups services by SLA class; class `p` binds to the channel ranked `p`.
pub fn assign_services_to_channels(
    services: &[ServiceSpec],
    channels: usize,
) -> Result<BTreeMap<usize, Vec<ServiceSpec>>> {
    let mut out: BTreeMap<usize, Vec<ServiceSpec>> = BTreeMap::new();
    for s in services {
        if s.channel_id == 0 || s.channel_id > channels {
            return Err(Error::Config(format!(
                "service {} has SLA class {} outside 1..={channels}",
                s.service_id, s.channel_id
            )));
        }
        out.entry(s.channel_id).or_default().push(s.clone());
    }
    Ok(out)
}
