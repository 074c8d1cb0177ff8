//! Domain types shared by every other module, plus the closed-form
//! formulas on them: cell characteristics, channel priority, transmission
//! latency, the deadline indicator and the per-agent reward.
//!
//! Units: compute in vCPUs, node memory in GB, cell and service memory in
//! MB, latencies in ms, packet sizes in bits and bandwidth in Mbps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used whenever capacities are compared.
pub const CAPACITY_TOL: f64 = 1e-9;

pub const MB_PER_GB: f64 = 1024.0;

/// Bits per millisecond carried by one Mbps.
const BITS_PER_MS_PER_MBPS: f64 = 1_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    /// SLA class, 1-based; class 1 binds to the highest-priority channel.
    pub channel_id: usize,
    /// Index of the service within its class.
    pub service_id: usize,
    /// Request packet size in bits.
    pub packet_size: f64,
    /// Memory footprint of one replica in MB.
    pub memory_req: f64,
    /// vCPU-slots consumed per request.
    pub compute_req: f64,
    /// Maximum response time in ms.
    pub deadline: f64,
    /// Execution time in ms.
    pub exec_time: f64,
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.packet_size,
            self.memory_req,
            self.compute_req,
            self.deadline,
            self.exec_time,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!(
                "service ({}, {})",
                self.channel_id, self.service_id
            )));
        }
        if self.packet_size <= 0.0
            || self.memory_req < 0.0
            || self.compute_req < 0.0
            || self.exec_time < 0.0
            || self.deadline <= self.exec_time
        {
            return Err(Error::Config(format!(
                "service ({}, {}) violates deadline > exec_time >= 0, packet_size > 0 or non-negative demands",
                self.channel_id, self.service_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub node_id: usize,
    pub compute_cap: f64,
    /// GB.
    pub memory_cap: f64,
    /// Mbps.
    pub bandwidth: f64,
    pub available_compute: f64,
    /// GB.
    pub available_memory: f64,
}

impl EdgeNode {
    pub fn new(node_id: usize, compute_cap: f64, memory_cap: f64, bandwidth: f64) -> Self {
        EdgeNode {
            node_id,
            compute_cap,
            memory_cap,
            bandwidth,
            available_compute: compute_cap,
            available_memory: memory_cap,
        }
    }

    pub fn available_memory_mb(&self) -> f64 {
        self.available_memory * MB_PER_GB
    }

    fn validate(&self) -> Result<()> {
        let ok = self.compute_cap >= 0.0
            && self.memory_cap >= 0.0
            && self.bandwidth > 0.0
            && self.available_compute >= -CAPACITY_TOL
            && self.available_compute <= self.compute_cap + CAPACITY_TOL
            && self.available_memory >= -CAPACITY_TOL
            && self.available_memory <= self.memory_cap + CAPACITY_TOL;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "edge node {} has inconsistent capacities",
                self.node_id
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Capacity {
    Finite(f64),
    Unbounded,
}

impl Capacity {
    pub fn covers(&self, amount: f64) -> bool {
        match self {
            Capacity::Finite(cap) => amount <= cap + CAPACITY_TOL,
            Capacity::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudCenter {
    pub compute_cap: Capacity,
    /// GB when finite.
    pub memory_cap: Capacity,
    pub edge_to_cloud_latency: f64,
}

impl CloudCenter {
    pub fn unbounded(edge_to_cloud_latency: f64) -> Self {
        CloudCenter {
            compute_cap: Capacity::Unbounded,
            memory_cap: Capacity::Unbounded,
            edge_to_cloud_latency,
        }
    }
}

impl Default for CloudCenter {
    fn default() -> Self {
        CloudCenter::unbounded(10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    /// ms.
    pub latency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyParts {
    nodes: Vec<EdgeNode>,
    links: Vec<Link>,
}

/// Edge nodes of one region plus the undirected links between them.
///
/// Node ids are positions in `nodes`. All-pairs path latencies are computed
/// once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyParts", into = "TopologyParts")]
pub struct Topology {
    nodes: Vec<EdgeNode>,
    links: Vec<Link>,
    paths: Vec<Vec<f64>>,
}

impl TryFrom<TopologyParts> for Topology {
    type Error = Error;

    fn try_from(parts: TopologyParts) -> Result<Self> {
        Topology::new(parts.nodes, parts.links)
    }
}

impl From<Topology> for TopologyParts {
    fn from(t: Topology) -> Self {
        TopologyParts {
            nodes: t.nodes,
            links: t.links,
        }
    }
}

impl Topology {
    pub fn new(nodes: Vec<EdgeNode>, links: Vec<Link>) -> Result<Self> {
        let n = nodes.len();
        for (idx, node) in nodes.iter().enumerate() {
            if node.node_id != idx {
                return Err(Error::Topology(format!(
                    "node at position {idx} has id {}",
                    node.node_id
                )));
            }
            node.validate()?;
        }
        let mut paths = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in paths.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for link in &links {
            if link.a >= n || link.b >= n || link.a == link.b {
                return Err(Error::Topology(format!(
                    "link ({}, {}) references a missing node or is a self-loop",
                    link.a, link.b
                )));
            }
            if !(link.latency >= 0.0 && link.latency.is_finite()) {
                return Err(Error::Topology(format!(
                    "link ({}, {}) has invalid latency {}",
                    link.a, link.b, link.latency
                )));
            }
            let best = paths[link.a][link.b].min(link.latency);
            paths[link.a][link.b] = best;
            paths[link.b][link.a] = best;
        }
        // Floyd-Warshall; regions are tens of nodes.
        for k in 0..n {
            for i in 0..n {
                let via = paths[i][k];
                if via.is_infinite() {
                    continue;
                }
                for j in 0..n {
                    let cand = via + paths[k][j];
                    if cand < paths[i][j] {
                        paths[i][j] = cand;
                    }
                }
            }
        }
        Ok(Topology {
            nodes,
            links,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[EdgeNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: usize) -> Result<&EdgeNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::Topology(format!("no node {id}")))
    }

    pub(crate) fn node_mut(&mut self, id: usize) -> Result<&mut EdgeNode> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| Error::Topology(format!("no node {id}")))
    }

    /// `{i}` plus every node sharing a link with `i`, ascending.
    pub fn neighborhood(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        for link in &self.links {
            if link.a == i {
                out.push(link.b);
            } else if link.b == i {
                out.push(link.a);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Shortest-path latency, `None` when `j` is unreachable from `i`.
    pub fn path_latency(&self, i: usize, j: usize) -> Option<f64> {
        let d = *self.paths.get(i)?.get(j)?;
        d.is_finite().then_some(d)
    }

    pub fn is_connected(&self) -> bool {
        self.paths
            .iter()
            .all(|row| row.iter().all(|d| d.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellSource {
    Node(usize),
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellShare {
    pub source: CellSource,
    pub compute: f64,
    /// MB.
    pub memory: f64,
}

/// Upper limits of a single cell; they scale agent actions and normalize
/// cell characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellLimits {
    /// vCPUs.
    pub alpha: f64,
    /// MB.
    pub beta: f64,
}

impl Default for CellLimits {
    fn default() -> Self {
        CellLimits {
            alpha: 2.0,
            beta: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCharacteristics {
    pub w_norm: f64,
    pub r_norm: f64,
    pub edge_fraction: f64,
    pub epsilon: f64,
}

impl CellCharacteristics {
    /// Clustering coordinates `(w, r, epsilon * u)`.
    pub fn features(&self) -> [f64; 3] {
        [self.w_norm, self.r_norm, self.epsilon * self.edge_fraction]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCell {
    pub cell_id: usize,
    pub owner_node: usize,
    pub compute: f64,
    /// MB.
    pub memory: f64,
    pub composition: Vec<CellShare>,
    pub characteristics: CellCharacteristics,
}

impl ResourceCell {
    /// Builds a cell whose totals are the sums of its shares.
    pub fn from_composition(
        cell_id: usize,
        owner_node: usize,
        composition: Vec<CellShare>,
        limits: &CellLimits,
        epsilon: f64,
    ) -> Result<Self> {
        let compute = composition.iter().map(|s| s.compute).sum();
        let memory = composition.iter().map(|s| s.memory).sum();
        let mut cell = ResourceCell {
            cell_id,
            owner_node,
            compute,
            memory,
            composition,
            characteristics: CellCharacteristics {
                w_norm: 0.0,
                r_norm: 0.0,
                edge_fraction: 0.0,
                epsilon,
            },
        };
        cell.characteristics = cell_characteristics(&cell, epsilon, limits)?;
        Ok(cell)
    }

    pub fn validate_composition(&self) -> Result<()> {
        if self.composition.iter().any(|s| {
            !(s.compute >= 0.0 && s.memory >= 0.0 && s.compute.is_finite() && s.memory.is_finite())
        }) {
            return Err(Error::Config(format!(
                "cell {} has a negative or non-finite share",
                self.cell_id
            )));
        }
        let compute: f64 = self.composition.iter().map(|s| s.compute).sum();
        let memory: f64 = self.composition.iter().map(|s| s.memory).sum();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !close(compute, self.compute) || !close(memory, self.memory) {
            return Err(Error::Config(format!(
                "cell {} shares do not sum to its totals",
                self.cell_id
            )));
        }
        Ok(())
    }

    pub fn has_cloud_share(&self) -> bool {
        self.composition
            .iter()
            .any(|s| s.source == CellSource::Cloud)
    }
}

/// Normalized `(w, r, u)` of a cell, with `u` the mean of the edge-sourced
/// compute share and edge-sourced memory share. A resource the cell does
/// not request is left out of the mean.
pub fn cell_characteristics(
    cell: &ResourceCell,
    epsilon: f64,
    limits: &CellLimits,
) -> Result<CellCharacteristics> {
    if !(limits.alpha > 0.0 && limits.beta > 0.0) {
        return Err(Error::Config(format!(
            "cell limits must be positive (alpha = {}, beta = {})",
            limits.alpha, limits.beta
        )));
    }
    cell.validate_composition()?;
    let w_norm = cell.compute / limits.alpha;
    let r_norm = cell.memory / limits.beta;
    if w_norm > 1.0 + 1e-9 || r_norm > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "cell {} exceeds the cell limits",
            cell.cell_id
        )));
    }
    let edge = |pick: fn(&CellShare) -> f64| -> f64 {
        cell.composition
            .iter()
            .filter(|s| matches!(s.source, CellSource::Node(_)))
            .map(pick)
            .sum()
    };
    let mut fractions = Vec::with_capacity(2);
    if cell.compute > 0.0 {
        fractions.push(edge(|s| s.compute) / cell.compute);
    }
    if cell.memory > 0.0 {
        fractions.push(edge(|s| s.memory) / cell.memory);
    }
    if fractions.is_empty() {
        return Err(Error::Config(format!("cell {} is empty", cell.cell_id)));
    }
    let edge_fraction = (fractions.iter().sum::<f64>() / fractions.len() as f64).clamp(0.0, 1.0);
    Ok(CellCharacteristics {
        w_norm: w_norm.min(1.0),
        r_norm: r_norm.min(1.0),
        edge_fraction,
        epsilon,
    })
}

/// Euclidean norm of a centroid's `(w, r, epsilon * u)`.
pub fn channel_priority(centroid: &CellCharacteristics) -> f64 {
    let [w, r, u] = centroid.features();
    (w * w + r * r + u * u).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// 1-based rank; 1 is the highest priority.
    pub channel_id: usize,
    pub cells: Vec<ResourceCell>,
    pub services: Vec<ServiceSpec>,
    pub priority: f64,
    pub centroid: CellCharacteristics,
}

impl Channel {
    pub fn new(
        channel_id: usize,
        cells: Vec<ResourceCell>,
        services: Vec<ServiceSpec>,
        centroid: CellCharacteristics,
    ) -> Self {
        Channel {
            channel_id,
            cells,
            services,
            priority: channel_priority(&centroid),
            centroid,
        }
    }
}

/// Latency from node `node_i` to `cell`: the slowest component path (cloud
/// components cost the edge-to-cloud constant) plus serializing one packet
/// at `node_i`'s bandwidth.
pub fn transmission_latency(
    topology: &Topology,
    cloud: &CloudCenter,
    node_i: usize,
    cell: &ResourceCell,
    service: &ServiceSpec,
) -> Result<f64> {
    let origin = topology.node(node_i)?;
    cell.validate_composition()?;
    let mut worst: f64 = 0.0;
    for share in &cell.composition {
        let hop = match share.source {
            CellSource::Node(j) => topology.path_latency(node_i, j).ok_or_else(|| {
                Error::Topology(format!("node {j} is unreachable from node {node_i}"))
            })?,
            CellSource::Cloud => cloud.edge_to_cloud_latency,
        };
        worst = worst.max(hop);
    }
    let serialization = service.packet_size / (origin.bandwidth * BITS_PER_MS_PER_MBPS);
    Ok(worst + serialization)
}

/// 1 when a request still meets its deadline after execution and transfer.
pub fn deadline_indicator(service: &ServiceSpec, t_im: f64) -> bool {
    service.deadline - service.exec_time - t_im > 0.0
}

/// `sum_p priority_p * sum_l rate_{p,l}` with `rates[p][l]` the throughput
/// rates of channel `p`'s services.
pub fn compute_reward(rates: &[Vec<f64>], priorities: &[f64]) -> f64 {
    rates
        .iter()
        .zip(priorities)
        .map(|(per_service, delta)| delta * per_service.iter().sum::<f64>())
        .sum()
}

/// Served over arrived, with no arrivals earning no credit.
pub fn throughput_rate(served: u64, arrived: u64) -> f64 {
    if arrived == 0 {
        0.0
    } else {
        served as f64 / arrived as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Slot,
    Frame,
}

/// Request counts `counts[p][l][i]` for one slot, or a per-slot average over
/// a frame. `p` is the 0-based channel position (`channel_id - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalMatrix {
    pub horizon: Horizon,
    pub counts: Vec<Vec<Vec<f64>>>,
}

impl ArrivalMatrix {
    pub fn zeros(horizon: Horizon, services_per_channel: &[usize], nodes: usize) -> Self {
        ArrivalMatrix {
            horizon,
            counts: services_per_channel
                .iter()
                .map(|&l| vec![vec![0.0; nodes]; l])
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self
            .counts
            .iter()
            .flatten()
            .flatten()
            .any(|c| !(c.is_finite() && *c >= 0.0));
        if bad {
            Err(Error::Config(
                "arrival counts must be finite and non-negative".into(),
            ))
        } else {
            Ok(())
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().flatten().sum()
    }
}

/// `x[l][m]` for one channel and frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestrationPlan {
    pub x: Vec<Vec<bool>>,
}

/// `y[l][i][m]` for one channel, flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub services: usize,
    pub nodes: usize,
    pub cells: usize,
    pub y: Vec<f64>,
}

impl DispatchPlan {
    pub fn zeros(services: usize, nodes: usize, cells: usize) -> Self {
        DispatchPlan {
            services,
            nodes,
            cells,
            y: vec![0.0; services * nodes * cells],
        }
    }

    fn index(&self, l: usize, i: usize, m: usize) -> usize {
        (l * self.nodes + i) * self.cells + m
    }

    pub fn get(&self, l: usize, i: usize, m: usize) -> f64 {
        self.y[self.index(l, i, m)]
    }

    pub fn set(&mut self, l: usize, i: usize, m: usize, value: f64) {
        let idx = self.index(l, i, m);
        self.y[idx] = value;
    }

    /// Total dispatch mass of requests for service `l` arriving at node `i`.
    pub fn mass(&self, l: usize, i: usize) -> f64 {
        (0..self.cells).map(|m| self.get(l, i, m)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_topology(latency: f64) -> Topology {
        let nodes = vec![
            EdgeNode::new(0, 4.0, 100.0, 125.0),
            EdgeNode::new(1, 4.0, 100.0, 125.0),
            EdgeNode::new(2, 4.0, 100.0, 125.0),
        ];
        Topology::new(
            nodes,
            vec![
                Link {
                    a: 0,
                    b: 1,
                    latency,
                },
                Link {
                    a: 1,
                    b: 2,
                    latency,
                },
            ],
        )
        .unwrap()
    }

    fn service(deadline: f64, exec_time: f64, packet_size: f64) -> ServiceSpec {
        ServiceSpec {
            channel_id: 1,
            service_id: 0,
            packet_size,
            memory_req: 100.0,
            compute_req: 0.1,
            deadline,
            exec_time,
        }
    }

    fn cell(composition: Vec<CellShare>) -> ResourceCell {
        ResourceCell::from_composition(0, 0, composition, &CellLimits::default(), 1.5).unwrap()
    }

    #[test]
    fn full_edge_cell_saturates_characteristics() {
        let c = cell(vec![CellShare {
            source: CellSource::Node(0),
            compute: 2.0,
            memory: 500.0,
        }]);
        let ch = c.characteristics;
        assert_eq!((ch.w_norm, ch.r_norm, ch.edge_fraction), (1.0, 1.0, 1.0));
        assert_eq!(ch.epsilon, 1.5);
        assert_eq!(ch.features()[2], 1.5);
    }

    #[test]
    fn cloud_only_cell_has_zero_edge_fraction() {
        let c = cell(vec![CellShare {
            source: CellSource::Cloud,
            compute: 1.0,
            memory: 100.0,
        }]);
        assert_eq!(c.characteristics.edge_fraction, 0.0);
    }

    #[test]
    fn zero_limits_are_rejected() {
        let c = cell(vec![CellShare {
            source: CellSource::Node(0),
            compute: 1.0,
            memory: 1.0,
        }]);
        let bad = CellLimits {
            alpha: 0.0,
            beta: 500.0,
        };
        assert!(matches!(
            cell_characteristics(&c, 1.5, &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn priority_examples() {
        let mk = |w, r, u, epsilon| CellCharacteristics {
            w_norm: w,
            r_norm: r,
            edge_fraction: u,
            epsilon,
        };
        assert_eq!(channel_priority(&mk(0.6, 0.8, 0.0, 1.5)), 1.0);
        assert_eq!(channel_priority(&mk(0.0, 0.0, 0.0, 1.5)), 0.0);
        let p = channel_priority(&mk(1.0, 1.0, 1.0, 1.5));
        assert!((p - 4.25f64.sqrt()).abs() < 1e-15);
        assert!((p - 2.0616).abs() < 1e-4);
    }

    #[test]
    fn latency_single_node_is_serialization_only() {
        let topo = line_topology(2.0);
        let c = cell(vec![CellShare {
            source: CellSource::Node(1),
            compute: 1.0,
            memory: 100.0,
        }]);
        // 125 Mbps = 125_000 bits/ms.
        let s = service(50.0, 10.0, 125_000.0);
        let t = transmission_latency(&topo, &CloudCenter::default(), 1, &c, &s).unwrap();
        assert_eq!(t, 1.0);
    }

    #[test]
    fn latency_spanning_neighbor_takes_worst_component() {
        let topo = line_topology(2.0);
        let c = cell(vec![
            CellShare {
                source: CellSource::Node(0),
                compute: 1.0,
                memory: 100.0,
            },
            CellShare {
                source: CellSource::Node(1),
                compute: 0.5,
                memory: 0.0,
            },
        ]);
        let s = service(50.0, 10.0, 125_000.0);
        let t = transmission_latency(&topo, &CloudCenter::default(), 0, &c, &s).unwrap();
        assert_eq!(t, 3.0);
        // Two hops to node 2.
        let far = cell(vec![CellShare {
            source: CellSource::Node(2),
            compute: 1.0,
            memory: 1.0,
        }]);
        let t = transmission_latency(&topo, &CloudCenter::default(), 0, &far, &s).unwrap();
        assert_eq!(t, 5.0);
    }

    #[test]
    fn latency_with_cloud_component_includes_constant() {
        let topo = line_topology(2.0);
        let c = cell(vec![
            CellShare {
                source: CellSource::Node(0),
                compute: 1.0,
                memory: 100.0,
            },
            CellShare {
                source: CellSource::Cloud,
                compute: 0.5,
                memory: 0.0,
            },
        ]);
        let s = service(50.0, 10.0, 1.0);
        let t = transmission_latency(&topo, &CloudCenter::default(), 0, &c, &s).unwrap();
        assert!(t >= 10.0);
    }

    #[test]
    fn latency_to_unreachable_component_is_an_error() {
        let nodes = vec![
            EdgeNode::new(0, 4.0, 100.0, 125.0),
            EdgeNode::new(1, 4.0, 100.0, 125.0),
        ];
        let topo = Topology::new(nodes, vec![]).unwrap();
        assert!(!topo.is_connected());
        let c = cell(vec![CellShare {
            source: CellSource::Node(1),
            compute: 1.0,
            memory: 1.0,
        }]);
        let s = service(50.0, 10.0, 1.0);
        assert!(matches!(
            transmission_latency(&topo, &CloudCenter::default(), 0, &c, &s),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn deadline_indicator_is_strict() {
        let s = service(50.0, 10.0, 1.0);
        assert!(deadline_indicator(&s, 20.0));
        assert!(!deadline_indicator(&s, 40.0));
        assert!(deadline_indicator(&s, 39.999));
    }

    #[test]
    fn reward_examples() {
        assert_eq!(compute_reward(&[vec![1.0]], &[1.0]), 1.0);
        assert_eq!(compute_reward(&[vec![0.0, 0.0]], &[2.0]), 0.0);
        assert_eq!(compute_reward(&[vec![0.5], vec![0.25]], &[1.0, 2.0]), 1.0);
        assert_eq!(throughput_rate(0, 0), 0.0);
    }

    #[test]
    fn neighborhood_contains_self() {
        let topo = line_topology(1.0);
        assert_eq!(topo.neighborhood(1), vec![0, 1, 2]);
        assert_eq!(topo.neighborhood(0), vec![0, 1]);
        let single = Topology::new(vec![EdgeNode::new(0, 1.0, 1.0, 1.0)], vec![]).unwrap();
        assert_eq!(single.neighborhood(0), vec![0]);
    }

    #[test]
    fn topology_round_trips_through_serde() {
        let topo = line_topology(1.5);
        let json = serde_json::to_string(&topo).unwrap();
        let back: Topology = serde_json::from_str(&json).unwrap();
        assert_eq!(back, topo);
        assert_eq!(back.path_latency(0, 2), Some(3.0));
    }

    #[test]
    fn invalid_service_is_rejected() {
        assert!(service(10.0, 10.0, 1.0).validate().is_err());
        assert!(service(10.0, 1.0, 0.0).validate().is_err());
        assert!(service(10.0, 1.0, 1.0).validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn chars(w: f64, r: f64, u: f64) -> CellCharacteristics {
            CellCharacteristics {
                w_norm: w,
                r_norm: r,
                edge_fraction: u,
                epsilon: 1.5,
            }
        }

        proptest! {
            #[test]
            fn priority_is_monotone(w in 0.0..1.0f64, r in 0.0..1.0f64, u in 0.0..1.0f64, d in 0.0..0.5f64, axis in 0..3usize) {
                let base = chars(w, r, u);
                let mut bumped = base;
                match axis {
                    0 => bumped.w_norm += d,
                    1 => bumped.r_norm += d,
                    _ => bumped.edge_fraction += d,
                }
                prop_assert!(channel_priority(&bumped) >= channel_priority(&base));
            }

            #[test]
            fn indicator_is_nonincreasing(t1 in 0.0..100.0f64, t2 in 0.0..100.0f64) {
                let s = service(50.0, 10.0, 1.0);
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(deadline_indicator(&s, lo) >= deadline_indicator(&s, hi));
            }

            #[test]
            fn reward_scales_with_priorities(
                rates in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 1..4), 1..4),
                c in 0.1..10.0f64,
            ) {
                let deltas: Vec<f64> = (0..rates.len()).map(|p| 0.5 + p as f64).collect();
                let scaled: Vec<f64> = deltas.iter().map(|d| d * c).collect();
                let base = compute_reward(&rates, &deltas);
                let bound: f64 = rates.iter().zip(&deltas).map(|(r, d)| d * r.len() as f64).sum();
                prop_assert!(base >= 0.0 && base <= bound + 1e-12);
                prop_assert!((compute_reward(&rates, &scaled) - c * base).abs() <= 1e-9 * (1.0 + base.abs() * c));
            }

            #[test]
            fn edge_fraction_extremes(edge_c in 0.0..1.0f64, edge_m in 0.0..250.0f64, cloud_c in 0.0..1.0f64, cloud_m in 0.0..250.0f64) {
                prop_assume!(edge_c + cloud_c > 1e-6 || edge_m + cloud_m > 1e-6);
                let mut comp = Vec::new();
                if edge_c > 0.0 || edge_m > 0.0 {
                    comp.push(CellShare { source: CellSource::Node(0), compute: edge_c, memory: edge_m });
                }
                if cloud_c > 0.0 || cloud_m > 0.0 {
                    comp.push(CellShare { source: CellSource::Cloud, compute: cloud_c, memory: cloud_m });
                }
                let c = ResourceCell::from_composition(0, 0, comp, &CellLimits::default(), 1.5).unwrap();
                let u = c.characteristics.edge_fraction;
                let has_cloud = c.has_cloud_share();
                let has_edge = c.composition.iter().any(|s| s.source != CellSource::Cloud);
                prop_assert_eq!(u == 1.0, !has_cloud);
                prop_assert_eq!(u == 0.0, !has_edge);
            }
        }
    }
}
