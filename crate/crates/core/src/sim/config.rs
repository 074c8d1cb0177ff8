//! Simulation configuration, read from TOML with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CellLimits;
use crate::nmac::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Nodes closer than this (unit square) are linked.
    pub radius: f64,
    /// Number of Gaussian blobs node positions are drawn from.
    pub blobs: usize,
    /// Standard deviation of each blob.
    pub blob_spread: f64,
    /// Link latency per unit of distance, ms.
    pub ms_per_unit: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            radius: 0.35,
            blobs: 1,
            blob_spread: 0.3,
            ms_per_unit: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Inclusive range of services per SLA class.
    pub per_channel: [usize; 2],
    pub memory_mb: [f64; 2],
    pub compute: [f64; 2],
    pub exec_ms: [f64; 2],
    pub packet_kbits: [f64; 2],
    /// Class `p` gets deadline `base + step * (p - 1) + U[0, jitter]`.
    pub deadline_base_ms: f64,
    pub deadline_step_ms: f64,
    pub deadline_jitter_ms: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            per_channel: [2, 4],
            memory_mb: [50.0, 250.0],
            compute: [0.05, 0.2],
            exec_ms: [1.0, 5.0],
            packet_kbits: [8.0, 80.0],
            deadline_base_ms: 12.0,
            deadline_step_ms: 8.0,
            deadline_jitter_ms: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Mean requests per slot for each (service, node), drawn uniformly.
    pub rate_range: [f64; 2],
    pub diurnal_amplitude: f64,
    pub diurnal_period_slots: f64,
    pub burstiness: f64,
    /// Trace CSV whose per-slot counts replace the synthetic rates.
    pub trace: Option<PathBuf>,
    pub slot_width_s: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            rate_range: [0.5, 3.0],
            diurnal_amplitude: 0.3,
            diurnal_period_slots: 1000.0,
            burstiness: 0.0,
            trace: None,
            slot_width_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub nodes: usize,
    pub channels: usize,
    pub slots_per_frame: usize,
    pub frames_per_episode: usize,
    pub cells_per_node: usize,
    pub epsilon: f64,
    pub cloud_latency_ms: f64,
    /// Largest cell compute, vCPUs.
    pub cell_compute: f64,
    /// Largest cell memory, MB.
    pub cell_memory_mb: f64,
    pub compute_range: [f64; 2],
    pub memory_range_gb: [f64; 2],
    /// Each node's bandwidth is drawn uniformly from this list, Mbps.
    pub bandwidth_choices: Vec<f64>,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub services: ServiceConfig,
    pub workload: WorkloadConfig,
    pub train: TrainConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 10,
            channels: 6,
            slots_per_frame: 100,
            frames_per_episode: 10,
            cells_per_node: 6,
            epsilon: 1.5,
            cloud_latency_ms: 10.0,
            cell_compute: 2.0,
            cell_memory_mb: 500.0,
            compute_range: [2.0, 4.0],
            memory_range_gb: [100.0, 200.0],
            bandwidth_choices: vec![125.0, 12.5],
            seed: 0,
            topology: TopologyConfig::default(),
            services: ServiceConfig::default(),
            workload: WorkloadConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2], allow_zero: bool) -> Result<()> {
    let lower_ok = if allow_zero { r[0] >= 0.0 } else { r[0] > 0.0 };
    if lower_ok && r[0] <= r[1] && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be an ordered positive range, got {r:?}"
        )))
    }
}

impl SimConfig {
    pub fn limits(&self) -> CellLimits {
        CellLimits {
            alpha: self.cell_compute,
            beta: self.cell_memory_mb,
        }
    }

    /// Per-agent action length: compute and memory fraction per cell slot.
    pub fn action_dim(&self) -> usize {
        2 * self.cells_per_node
    }

    pub fn max_services(&self) -> usize {
        self.services.per_channel[1]
    }

    /// Length of every agent's observation.
    pub fn observation_dim(&self) -> usize {
        self.channels * self.max_services() * 4 + self.cells_per_node * 3 + 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nodes == 0
            || self.channels == 0
            || self.slots_per_frame == 0
            || self.cells_per_node == 0
        {
            return bad(
                "nodes, channels, slots_per_frame and cells_per_node must be positive".into(),
            );
        }
        if self.frames_per_episode == 0 {
            return bad("frames_per_episode must be positive".into());
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("cell_compute", self.cell_compute),
            ("cell_memory_mb", self.cell_memory_mb),
            ("topology.ms_per_unit", self.topology.ms_per_unit),
            ("workload.slot_width_s", self.workload.slot_width_s),
            (
                "workload.diurnal_period_slots",
                self.workload.diurnal_period_slots,
            ),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.cloud_latency_ms >= 0.0 && self.cloud_latency_ms.is_finite()) {
            return bad("cloud_latency_ms must be non-negative".into());
        }
        check_range("compute_range", self.compute_range, true)?;
        check_range("memory_range_gb", self.memory_range_gb, true)?;
        check_range("services.memory_mb", self.services.memory_mb, true)?;
        check_range("services.compute", self.services.compute, true)?;
        check_range("services.exec_ms", self.services.exec_ms, true)?;
        check_range("services.packet_kbits", self.services.packet_kbits, false)?;
        check_range("workload.rate_range", self.workload.rate_range, true)?;
        if self.bandwidth_choices.is_empty() || self.bandwidth_choices.iter().any(|b| !(*b > 0.0)) {
            return bad("bandwidth_choices must be non-empty and positive".into());
        }
        let [lo, hi] = self.services.per_channel;
        if lo == 0 || lo > hi {
            return bad(format!(
                "services.per_channel must be an ordered positive range, got {:?}",
                self.services.per_channel
            ));
        }
        if self.services.deadline_base_ms <= self.services.exec_ms[1] {
            return bad("services.deadline_base_ms must exceed the longest execution time".into());
        }
        if self.services.deadline_step_ms < 0.0 || self.services.deadline_jitter_ms < 0.0 {
            return bad("deadline step and jitter must be non-negative".into());
        }
        if self.topology.blobs == 0
            || !(self.topology.radius >= 0.0)
            || !(self.topology.blob_spread >= 0.0)
        {
            return bad("topology needs at least one blob and non-negative radius/spread".into());
        }
        if !(0.0..=1.0).contains(&self.workload.diurnal_amplitude)
            || !(self.workload.burstiness >= 0.0)
        {
            return bad(
                "diurnal_amplitude must lie in [0, 1] and burstiness be non-negative".into(),
            );
        }
        self.train.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `key.path=value` overrides, where `value` is a TOML literal
    /// (bare words are taken as strings).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Small region used by the learning acceptance check: four nodes and
    /// two channels with resources tight enough that cell sizing matters.
    pub fn acceptance_fixture() -> Self {
        SimConfig {
            nodes: 4,
            channels: 2,
            slots_per_frame: 10,
            frames_per_episode: 5,
            cells_per_node: 2,
            compute_range: [1.0, 2.0],
            memory_range_gb: [0.5, 1.0],
            seed: 2024,
            services: ServiceConfig {
                per_channel: [2, 2],
                ..ServiceConfig::default()
            },
            workload: WorkloadConfig {
                rate_range: [1.0, 3.0],
                diurnal_amplitude: 0.0,
                ..WorkloadConfig::default()
            },
            train: TrainConfig {
                batch_size: 32,
                exploration_episodes: 20,
                seed: 1,
                ..TrainConfig::default()
            },
            ..SimConfig::default()
        }
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty key in `{assignment}`")))?;
    let mut cursor = table;
    for part in parts {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    cursor.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.observation_dim(), 116);
        let back = SimConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        SimConfig::acceptance_fixture().validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = SimConfig::default()
            .with_overrides(&[
                "nodes=4".into(),
                "topology.radius=0.5".into(),
                "workload.rate_range=[1.0, 2.0]".into(),
            ])
            .unwrap();
        assert_eq!(cfg.nodes, 4);
        assert_eq!(cfg.topology.radius, 0.5);
        assert_eq!(cfg.workload.rate_range, [1.0, 2.0]);
        assert!(SimConfig::default()
            .with_overrides(&["nodes".into()])
            .is_err());
        assert!(SimConfig::default()
            .with_overrides(&["nodes=0".into()])
            .is_err());
        assert!(SimConfig::default()
            .with_overrides(&["bogus=1".into()])
            .is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(SimConfig::from_toml_str("nodez = 3").is_err());
        assert!(SimConfig::from_toml_str("slots_per_frame = 0").is_err());
        assert!(SimConfig::from_toml_str("epsilon = -1.0").is_err());
        let partial = SimConfig::from_toml_str("nodes = 3\n[topology]\nblobs = 2\n").unwrap();
        assert_eq!(partial.nodes, 3);
        assert_eq!(partial.topology.blobs, 2);
        assert_eq!(partial.channels, 6);
    }
}
