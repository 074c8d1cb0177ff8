//! Joint service orchestration and request dispatch for one channel.
//!
//! Dispatch is a linear program over `y[l][i][m]` once the orchestration
//! set is fixed; `evaluate_omega` is its optimal value. Orchestration is
//! the greedy set construction: start empty, repeatedly add the feasible
//! `(service, cell)` pair with the largest resulting value, stop when no
//! pair fits in memory.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LinearProgram;
use crate::model::{
    deadline_indicator, transmission_latency, Channel, CloudCenter, DispatchPlan,
    OrchestrationPlan, ServiceSpec, Topology, CAPACITY_TOL,
};

/// Relative slack under which two candidate values count as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCapacity {
    pub cell_id: usize,
    /// vCPUs.
    pub compute: f64,
    /// MB.
    pub memory: f64,
}

/// Everything the optimizer needs about one channel.
///
/// `arrivals[l][i]` is the demand used for orchestration (normally the
/// frame average); `latency[l][i][m]` and `indicator[l][i][m]` are the
/// transfer latency and deadline indicator for service `l` requested at
/// node `i` and served on cell `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInstance {
    pub channel_id: usize,
    pub services: Vec<ServiceSpec>,
    pub cells: Vec<CellCapacity>,
    pub num_nodes: usize,
    pub arrivals: Vec<Vec<f64>>,
    pub latency: Vec<Vec<Vec<f64>>>,
    pub indicator: Vec<Vec<Vec<bool>>>,
}

impl ChannelInstance {
    pub fn from_channel(
        channel: &Channel,
        topology: &Topology,
        cloud: &CloudCenter,
        arrivals: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = topology.len();
        let mut latency = Vec::with_capacity(channel.services.len());
        let mut indicator = Vec::with_capacity(channel.services.len());
        for service in &channel.services {
            let mut lat_rows = Vec::with_capacity(n);
            let mut ind_rows = Vec::with_capacity(n);
            for i in 0..n {
                let lat = channel
                    .cells
                    .iter()
                    .map(|cell| transmission_latency(topology, cloud, i, cell, service))
                    .collect::<Result<Vec<f64>>>()?;
                ind_rows.push(
                    lat.iter()
                        .map(|&t| deadline_indicator(service, t))
                        .collect(),
                );
                lat_rows.push(lat);
            }
            latency.push(lat_rows);
            indicator.push(ind_rows);
        }
        let instance = ChannelInstance {
            channel_id: channel.channel_id,
            services: channel.services.clone(),
            cells: channel
                .cells
                .iter()
                .map(|c| CellCapacity {
                    cell_id: c.cell_id,
                    compute: c.compute,
                    memory: c.memory,
                })
                .collect(),
            num_nodes: n,
            arrivals,
            latency,
            indicator,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn num_pairs(&self) -> usize {
        self.services.len() * self.cells.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (l, n, m) = (self.services.len(), self.num_nodes, self.cells.len());
        for s in &self.services {
            s.validate()?;
        }
        for c in &self.cells {
            if !(c.compute >= 0.0
                && c.memory >= 0.0
                && c.compute.is_finite()
                && c.memory.is_finite())
            {
                return Err(Error::Instance(format!(
                    "cell {} has invalid capacity",
                    c.cell_id
                )));
            }
        }
        let mut ids = HashSet::new();
        if !self.cells.iter().all(|c| ids.insert(c.cell_id)) {
            return Err(Error::Instance("duplicate cell id".into()));
        }
        check_arrivals(&self.arrivals, l, n)?;
        let tables_ok = self.latency.len() == l
            && self.indicator.len() == l
            && self.latency.iter().all(|rows| {
                rows.len() == n
                    && rows
                        .iter()
                        .all(|r| r.len() == m && r.iter().all(|t| *t >= 0.0))
            })
            && self
                .indicator
                .iter()
                .all(|rows| rows.len() == n && rows.iter().all(|r| r.len() == m));
        if !tables_ok {
            return Err(Error::Instance(format!(
                "latency/indicator tables must cover {l} services x {n} nodes x {m} cells"
            )));
        }
        Ok(())
    }
}

fn check_arrivals(arrivals: &[Vec<f64>], services: usize, nodes: usize) -> Result<()> {
    if arrivals.len() != services || arrivals.iter().any(|row| row.len() != nodes) {
        return Err(Error::Instance(format!(
            "arrivals must be {services} services x {nodes} nodes"
        )));
    }
    if arrivals
        .iter()
        .flatten()
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::Instance(
            "arrivals must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// A set of `(service index, cell index)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrchestrationSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl OrchestrationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        OrchestrationSet {
            pairs: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, pair: (usize, usize)) -> bool {
        self.pairs.insert(pair)
    }

    pub fn remove(&mut self, pair: &(usize, usize)) -> bool {
        self.pairs.remove(pair)
    }

    pub fn contains(&self, pair: &(usize, usize)) -> bool {
        self.pairs.contains(pair)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter()
    }

    pub fn is_subset(&self, other: &OrchestrationSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }

    pub fn with(&self, pair: (usize, usize)) -> OrchestrationSet {
        let mut out = self.clone();
        out.insert(pair);
        out
    }

    fn key(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().copied().collect()
    }

    /// Memory used on every cell of `instance`.
    pub fn memory_load(&self, instance: &ChannelInstance) -> Vec<f64> {
        let mut used = vec![0.0; instance.cells.len()];
        for &(l, m) in &self.pairs {
            used[m] += instance.services[l].memory_req;
        }
        used
    }

    /// True when every pair indexes the instance and no cell's memory is
    /// oversubscribed.
    pub fn is_feasible(&self, instance: &ChannelInstance) -> bool {
        if self
            .pairs
            .iter()
            .any(|&(l, m)| l >= instance.services.len() || m >= instance.cells.len())
        {
            return false;
        }
        self.memory_load(instance)
            .iter()
            .zip(&instance.cells)
            .all(|(used, cell)| *used <= cell.memory + CAPACITY_TOL)
    }

    pub fn to_plan(&self, instance: &ChannelInstance) -> OrchestrationPlan {
        let mut x = vec![vec![false; instance.cells.len()]; instance.services.len()];
        for &(l, m) in &self.pairs {
            x[l][m] = true;
        }
        OrchestrationPlan { x }
    }
}

/// Optimal dispatch for a fixed orchestration set and demand matrix.
///
/// The program is solved in request units `z = lambda * y`; per-request
/// mass rows become `sum_m z <= lambda` and cell rows keep their compute
/// weights. Cell rows that can never bind are dropped, and when none
/// remain the optimum is read off directly.
pub fn solve_dispatch_lp(
    instance: &ChannelInstance,
    orchestration: &OrchestrationSet,
    arrivals: &[Vec<f64>],
) -> Result<(DispatchPlan, f64)> {
    let (num_l, num_n, num_m) = (
        instance.services.len(),
        instance.num_nodes,
        instance.cells.len(),
    );
    check_arrivals(arrivals, num_l, num_n)?;
    if let Some(&(l, m)) = orchestration
        .iter()
        .find(|&&(l, m)| l >= num_l || m >= num_m)
    {
        return Err(Error::Instance(format!("pair ({l}, {m}) is out of range")));
    }

    // Variables grouped by (l, i) row, ascending in m.
    let mut vars: Vec<(usize, usize, usize)> = Vec::new();
    let mut row_spans: Vec<(usize, usize, std::ops::Range<usize>)> = Vec::new();
    for l in 0..num_l {
        for i in 0..num_n {
            if arrivals[l][i] <= 0.0 {
                continue;
            }
            let start = vars.len();
            for m in 0..num_m {
                if orchestration.contains(&(l, m)) && instance.indicator[l][i][m] {
                    vars.push((l, i, m));
                }
            }
            if vars.len() > start {
                row_spans.push((l, i, start..vars.len()));
            }
        }
    }

    let mut plan = DispatchPlan::zeros(num_l, num_n, num_m);
    if vars.is_empty() {
        return Ok((plan, 0.0));
    }

    let mut potential = vec![0.0; num_m];
    for &(l, i, m) in &vars {
        potential[m] += instance.services[l].compute_req * arrivals[l][i];
    }
    let binding: Vec<usize> = (0..num_m)
        .filter(|&m| potential[m] > instance.cells[m].compute + CAPACITY_TOL)
        .collect();

    if binding.is_empty() {
        let mut served = 0.0;
        for (l, i, span) in &row_spans {
            let (_, _, m) = vars[span.start];
            plan.set(*l, *i, m, 1.0);
            served += arrivals[*l][*i];
        }
        return Ok((plan, served));
    }

    let mut lp = LinearProgram::new(vec![1.0; vars.len()]);
    for (l, i, span) in &row_spans {
        lp.add_le(span.clone().map(|v| (v, 1.0)).collect(), arrivals[*l][*i])?;
    }
    for &m in &binding {
        let terms: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter(|(_, &(l, _, vm))| vm == m && instance.services[l].compute_req > 0.0)
            .map(|(v, &(l, _, _))| (v, instance.services[l].compute_req))
            .collect();
        lp.add_le(terms, instance.cells[m].compute)?;
    }
    let sol = lp.solve()?;
    for (v, &(l, i, m)) in vars.iter().enumerate() {
        let y = (sol.x[v] / arrivals[l][i]).clamp(0.0, 1.0);
        plan.set(l, i, m, y);
    }
    Ok((plan, sol.objective))
}

/// Optimal dispatch value of `orchestration` under the instance's own demand.
pub fn evaluate_omega(instance: &ChannelInstance, orchestration: &OrchestrationSet) -> Result<f64> {
    solve_dispatch_lp(instance, orchestration, &instance.arrivals).map(|(_, v)| v)
}

/// Largest violation of the dispatch constraints by `plan`: request mass,
/// cell compute, orchestration membership, deadline indicator and the
/// `[0, 1]` box.
pub fn max_constraint_violation(
    instance: &ChannelInstance,
    orchestration: &OrchestrationSet,
    arrivals: &[Vec<f64>],
    plan: &DispatchPlan,
) -> f64 {
    let mut worst: f64 = 0.0;
    let (num_l, num_n, num_m) = (
        instance.services.len(),
        instance.num_nodes,
        instance.cells.len(),
    );
    let mut load = vec![0.0; num_m];
    for l in 0..num_l {
        for i in 0..num_n {
            worst = worst.max(plan.mass(l, i) - 1.0);
            for m in 0..num_m {
                let y = plan.get(l, i, m);
                worst = worst.max(-y).max(y - 1.0);
                if !orchestration.contains(&(l, m)) || !instance.indicator[l][i][m] {
                    worst = worst.max(y.abs());
                }
                load[m] += instance.services[l].compute_req * arrivals[l][i] * y;
            }
        }
    }
    for (m, cell) in instance.cells.iter().enumerate() {
        worst = worst.max(load[m] - cell.compute);
    }
    worst
}

/// Every pair outside `current` that still fits in its cell's memory.
pub fn feasible_extensions(
    instance: &ChannelInstance,
    current: &OrchestrationSet,
) -> Vec<(usize, usize)> {
    let used = current.memory_load(instance);
    let mut out = Vec::new();
    for (l, service) in instance.services.iter().enumerate() {
        for (m, cell) in instance.cells.iter().enumerate() {
            if !current.contains(&(l, m))
                && used[m] + service.memory_req <= cell.memory + CAPACITY_TOL
            {
                out.push((l, m));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub channel_id: usize,
    pub set: OrchestrationSet,
    pub plan: OrchestrationPlan,
    pub dispatch: DispatchPlan,
    pub objective: f64,
    /// Distinct dispatch programs solved (cache hits excluded).
    pub evaluations: usize,
}

/// Greedy orchestration followed by the dispatch solve on the final set.
///
/// Candidates with values within a relative `1e-9` of the best are tied;
/// ties go to the lowest `(service, cell)` index. Candidate values of one
/// round may be computed concurrently on the current rayon pool.
pub fn greedy_orchestrate(instance: &ChannelInstance) -> Result<GreedyOutcome> {
    instance.validate()?;
    let mut set = OrchestrationSet::new();
    let mut cache: HashMap<Vec<(usize, usize)>, f64> = HashMap::new();
    let mut evaluations = 0;
    loop {
        let candidates = feasible_extensions(instance, &set);
        if candidates.is_empty() {
            break;
        }
        let keyed: Vec<(OrchestrationSet, Vec<(usize, usize)>)> = candidates
            .iter()
            .map(|&e| {
                let s = set.with(e);
                let k = s.key();
                (s, k)
            })
            .collect();
        let values: Vec<(f64, bool)> = keyed
            .par_iter()
            .map(|(s, k)| match cache.get(k) {
                Some(&v) => Ok((v, false)),
                None => evaluate_omega(instance, s).map(|v| (v, true)),
            })
            .collect::<Result<_>>()?;
        let mut best: Option<(usize, f64)> = None;
        for (idx, ((value, fresh), (_, key))) in values.iter().zip(keyed).enumerate() {
            if *fresh {
                evaluations += 1;
                cache.insert(key, *value);
            }
            match best {
                Some((_, b)) if *value <= b + TIE_TOL * b.abs().max(1.0) => {}
                _ => best = Some((idx, *value)),
            }
        }
        let (idx, _) = best.expect("candidates is non-empty");
        set.insert(candidates[idx]);
    }
    let (dispatch, objective) = solve_dispatch_lp(instance, &set, &instance.arrivals)?;
    Ok(GreedyOutcome {
        channel_id: instance.channel_id,
        plan: set.to_plan(instance),
        set,
        dispatch,
        objective,
        evaluations,
    })
}

/// Runs the greedy optimizer on every channel, using up to `workers`
/// threads (0 = the current rayon pool). Each result is identical to a standalone
/// `greedy_orchestrate` call on the same instance.
pub fn solve_all_channels(
    instances: &[ChannelInstance],
    workers: usize,
) -> Result<Vec<GreedyOutcome>> {
    let mut cells = HashSet::new();
    let mut services = HashSet::new();
    for inst in instances {
        for c in &inst.cells {
            if !cells.insert(c.cell_id) {
                return Err(Error::Instance(format!(
                    "cell {} appears in more than one channel",
                    c.cell_id
                )));
            }
        }
        for s in &inst.services {
            if !services.insert((s.channel_id, s.service_id)) {
                return Err(Error::Instance(format!(
                    "service ({}, {}) appears in more than one channel",
                    s.channel_id, s.service_id
                )));
            }
        }
    }
    let run = || instances.par_iter().map(greedy_orchestrate).collect();
    if workers == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(run)
}

/// Independence-system ratio `ceil(max r / min positive r)` of the memory
/// constraints; 1 when no service needs memory.
pub fn ratio_p(services: &[ServiceSpec]) -> usize {
    let max = services.iter().map(|s| s.memory_req).fold(0.0, f64::max);
    let min_pos = services
        .iter()
        .map(|s| s.memory_req)
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        return 1;
    }
    ((max / min_pos) - 1e-12).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn service(l: usize, memory: f64, compute: f64) -> ServiceSpec {
        ServiceSpec {
            channel_id: 1,
            service_id: l,
            packet_size: 1_000.0,
            memory_req: memory,
            compute_req: compute,
            deadline: 50.0,
            exec_time: 5.0,
        }
    }

    pub(crate) fn instance(
        services: Vec<ServiceSpec>,
        cells: Vec<(f64, f64)>,
        arrivals: Vec<Vec<f64>>,
    ) -> ChannelInstance {
        let n = arrivals.first().map_or(1, |r| r.len());
        let l = services.len();
        let m = cells.len();
        ChannelInstance {
            channel_id: 1,
            services,
            cells: cells
                .into_iter()
                .enumerate()
                .map(|(id, (compute, memory))| CellCapacity {
                    cell_id: id,
                    compute,
                    memory,
                })
                .collect(),
            num_nodes: n,
            arrivals,
            latency: vec![vec![vec![1.0; m]; n]; l],
            indicator: vec![vec![vec![true; m]; n]; l],
        }
    }

    #[test]
    fn single_pair_serves_everything() {
        let inst = instance(
            vec![service(0, 100.0, 0.1)],
            vec![(10.0, 500.0)],
            vec![vec![5.0]],
        );
        let set = OrchestrationSet::from_pairs([(0, 0)]);
        let (plan, psi) = solve_dispatch_lp(&inst, &set, &inst.arrivals).unwrap();
        assert_eq!(psi, 5.0);
        assert_eq!(plan.get(0, 0, 0), 1.0);
    }

    #[test]
    fn empty_set_dispatches_nothing() {
        let inst = instance(
            vec![service(0, 100.0, 0.1)],
            vec![(10.0, 500.0)],
            vec![vec![5.0]],
        );
        let (plan, psi) =
            solve_dispatch_lp(&inst, &OrchestrationSet::new(), &inst.arrivals).unwrap();
        assert_eq!(psi, 0.0);
        assert!(plan.y.iter().all(|&y| y == 0.0));
        assert_eq!(
            evaluate_omega(&inst, &OrchestrationSet::new()).unwrap(),
            0.0
        );
    }

    #[test]
    fn shared_cell_is_capped_by_compute() {
        // Two unit-cost services at 3 requests each share a 4 vCPU cell.
        let inst = instance(
            vec![service(0, 100.0, 1.0), service(1, 100.0, 1.0)],
            vec![(4.0, 500.0)],
            vec![vec![3.0], vec![3.0]],
        );
        let set = OrchestrationSet::from_pairs([(0, 0), (1, 0)]);
        let (plan, psi) = solve_dispatch_lp(&inst, &set, &inst.arrivals).unwrap();
        assert!((psi - 4.0).abs() < 1e-9);
        assert!(max_constraint_violation(&inst, &set, &inst.arrivals, &plan) <= 1e-9);
    }

    #[test]
    fn indicator_zero_blocks_dispatch() {
        let mut inst = instance(
            vec![service(0, 100.0, 0.1)],
            vec![(10.0, 500.0)],
            vec![vec![5.0]],
        );
        inst.indicator[0][0][0] = false;
        let set = OrchestrationSet::from_pairs([(0, 0)]);
        assert_eq!(evaluate_omega(&inst, &set).unwrap(), 0.0);
    }

    #[test]
    fn malformed_arrivals_are_rejected() {
        let inst = instance(
            vec![service(0, 100.0, 0.1)],
            vec![(10.0, 500.0)],
            vec![vec![5.0]],
        );
        let set = OrchestrationSet::from_pairs([(0, 0)]);
        assert!(solve_dispatch_lp(&inst, &set, &[vec![1.0, 2.0]]).is_err());
        let bad = OrchestrationSet::from_pairs([(3, 0)]);
        assert!(solve_dispatch_lp(&inst, &bad, &inst.arrivals).is_err());
    }

    #[test]
    fn extensions_without_constraints_cover_every_pair() {
        let inst = instance(
            vec![service(0, 100.0, 0.1), service(1, 100.0, 0.1)],
            vec![(1.0, 500.0), (1.0, 500.0), (1.0, 500.0)],
            vec![vec![1.0], vec![1.0]],
        );
        assert_eq!(
            feasible_extensions(&inst, &OrchestrationSet::new()).len(),
            6
        );
    }

    #[test]
    fn exhausted_cell_admits_no_pairs() {
        let inst = instance(
            vec![service(0, 2.0, 0.1), service(1, 3.0, 0.1)],
            vec![(1.0, 4.0), (1.0, 10.0)],
            vec![vec![1.0], vec![1.0]],
        );
        let set = OrchestrationSet::from_pairs([(0, 0)]);
        // 2 + 3 > 4: nothing more fits on cell 0; both services fit on cell 1.
        assert_eq!(feasible_extensions(&inst, &set), vec![(0, 1), (1, 1)]);
        let full = OrchestrationSet::from_pairs([(1, 0)]);
        let ext = feasible_extensions(&inst, &full);
        assert!(ext.iter().all(|&(_, m)| m == 1));
    }

    #[test]
    fn greedy_on_empty_instance() {
        let inst = instance(vec![], vec![(1.0, 1.0)], vec![]);
        let inst = ChannelInstance {
            num_nodes: 1,
            ..inst
        };
        let out = greedy_orchestrate(&inst).unwrap();
        assert!(out.set.is_empty());
        assert_eq!(out.objective, 0.0);
        let no_cells = instance(vec![service(0, 1.0, 0.1)], vec![], vec![vec![2.0]]);
        let out = greedy_orchestrate(&no_cells).unwrap();
        assert!(out.set.is_empty());
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn greedy_fills_memory_and_reports_final_dispatch() {
        let inst = instance(
            vec![service(0, 300.0, 0.1), service(1, 300.0, 0.1)],
            vec![(10.0, 400.0), (10.0, 400.0)],
            vec![vec![4.0], vec![1.0]],
        );
        let out = greedy_orchestrate(&inst).unwrap();
        // The first pick is the heavier service on the lowest cell.
        assert!(out.set.contains(&(0, 0)));
        assert_eq!(out.set.len(), 2);
        assert!(out.set.contains(&(1, 1)));
        assert_eq!(out.objective, 5.0);
        assert!(out.plan.x[0][0] && out.plan.x[1][1]);
    }

    #[test]
    fn ratio_p_examples() {
        let mk = |rs: &[f64]| -> Vec<ServiceSpec> {
            rs.iter()
                .enumerate()
                .map(|(l, &r)| service(l, r, 0.1))
                .collect()
        };
        assert_eq!(ratio_p(&mk(&[1.0, 1.0, 1.0])), 1);
        assert_eq!(ratio_p(&mk(&[2.0, 4.0])), 2);
        assert_eq!(ratio_p(&mk(&[3.0, 7.0])), 3);
        assert_eq!(ratio_p(&mk(&[0.0, 0.0])), 1);
        assert_eq!(ratio_p(&mk(&[0.0, 5.0])), 1);
    }

    #[test]
    fn overlapping_cells_across_channels_are_rejected() {
        let a = instance(
            vec![service(0, 1.0, 0.1)],
            vec![(1.0, 1.0)],
            vec![vec![1.0]],
        );
        let mut b = a.clone();
        b.channel_id = 2;
        b.services[0].channel_id = 2;
        assert!(solve_all_channels(&[a, b], 2).is_err());
    }
}
