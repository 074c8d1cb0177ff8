//! Seeded random geometric region.
//!
//! Node positions come from Gaussian blobs in the unit square; nodes within
//! `radius` are linked, and disconnected pieces are joined by their
//! shortest bridging edge. Link latency is distance times `ms_per_unit`.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::model::{EdgeNode, Link, Topology};

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn node_positions<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    let t = &cfg.topology;
    let centers: Vec<[f64; 2]> = (0..t.blobs)
        .map(|_| [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)])
        .collect();
    let noise = Normal::new(0.0, t.blob_spread).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..cfg.nodes)
        .map(|i| {
            let c = centers[i % centers.len()];
            [
                (c[0] + noise.sample(rng)).clamp(0.0, 1.0),
                (c[1] + noise.sample(rng)).clamp(0.0, 1.0),
            ]
        })
        .collect())
}

/// Radius links plus the bridges needed to connect every node.
pub fn geometric_links(positions: &[[f64; 2]], radius: f64, ms_per_unit: f64) -> Vec<Link> {
    let n = positions.len();
    let latency = |a: usize, b: usize| distance(positions[a], positions[b]) * ms_per_unit;
    let mut links = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if distance(positions[a], positions[b]) <= radius {
                links.push(Link {
                    a,
                    b,
                    latency: latency(a, b),
                });
            }
        }
    }
    // Label components, then repeatedly bridge component 0 to its nearest
    // outside node.
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while comp[r] != r {
            r = comp[r];
        }
        comp[x] = r;
        r
    }
    for l in &links {
        let (ra, rb) = (find(&mut comp, l.a), find(&mut comp, l.b));
        comp[ra.max(rb)] = ra.min(rb);
    }
    loop {
        let root = find(&mut comp, 0);
        let inside: Vec<bool> = (0..n).map(|i| find(&mut comp, i) == root).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for a in (0..n).filter(|&i| inside[i]) {
            for b in (0..n).filter(|&i| !inside[i]) {
                let d = distance(positions[a], positions[b]);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        links.push(Link {
            a: a.min(b),
            b: a.max(b),
            latency: latency(a, b),
        });
        let rb = find(&mut comp, b);
        comp[rb] = root;
    }
    links
}

pub fn generate_topology<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Topology> {
    let positions = node_positions(cfg, rng)?;
    let nodes = (0..cfg.nodes)
        .map(|i| {
            let compute = rng.random_range(cfg.compute_range[0]..=cfg.compute_range[1]);
            let memory = rng.random_range(cfg.memory_range_gb[0]..=cfg.memory_range_gb[1]);
            let bandwidth = *cfg
                .bandwidth_choices
                .choose(rng)
                .expect("validated non-empty");
            EdgeNode::new(i, compute, memory, bandwidth)
        })
        .collect();
    let links = geometric_links(&positions, cfg.topology.radius, cfg.topology.ms_per_unit);
    Topology::new(nodes, links)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_regions_are_connected() {
        for seed in 0..20 {
            for radius in [0.0, 0.1, 0.35] {
                let mut cfg = SimConfig::default();
                cfg.topology.radius = radius;
                cfg.topology.blobs = 1 + seed as usize % 3;
                let topo = generate_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                assert_eq!(topo.len(), 10);
                assert!(topo.is_connected());
            }
        }
    }

    #[test]
    fn single_node_region() {
        let cfg = SimConfig {
            nodes: 1,
            ..SimConfig::default()
        };
        let topo = generate_topology(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(topo.links().is_empty());
        assert_eq!(topo.neighborhood(0), vec![0]);
    }

    #[test]
    fn latency_tracks_distance() {
        let links = geometric_links(&[[0.0, 0.0], [0.3, 0.4]], 1.0, 10.0);
        assert_eq!(links.len(), 1);
        assert!((links[0].latency - 5.0).abs() < 1e-12);
    }
}
