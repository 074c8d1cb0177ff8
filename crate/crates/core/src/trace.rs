//! Request traces, synthetic workloads and the channel-instance file format.
//!
//! Trace files are CSV with the header
//! `timestamp_s,node_id,sla_class,service_id,request_count,cpu_req,mem_req,deadline_ms`.
//! Rows are binned into slots of `slot_width_s` seconds counted from the
//! first timestamp. Instance files are JSON tagged `"version": "jsord-instance/1"`.

use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsord::ChannelInstance;

pub const TRACE_COLUMNS: [&str; 8] = [
    "timestamp_s",
    "node_id",
    "sla_class",
    "service_id",
    "request_count",
    "cpu_req",
    "mem_req",
    "deadline_ms",
];

pub const INSTANCE_VERSION: &str = "jsord-instance/1";

#[derive(Debug, Clone, Deserialize)]
struct TraceRow {
    timestamp_s: f64,
    node_id: usize,
    sla_class: usize,
    service_id: usize,
    request_count: u64,
    cpu_req: f64,
    mem_req: f64,
    deadline_ms: f64,
}

/// How trace rows map onto the simulated region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBinning {
    pub slot_width_s: f64,
    pub nodes: usize,
    /// Number of services in each SLA class, class 1 first.
    pub services_per_channel: Vec<usize>,
}

/// Request counts per slot, indexed `slots[t][p][l][i]` with `p` the
/// 0-based channel rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcess {
    pub nodes: usize,
    pub services_per_channel: Vec<usize>,
    pub slots: Vec<Vec<Vec<Vec<u64>>>>,
}

impl ArrivalProcess {
    pub fn empty_slot(services_per_channel: &[usize], nodes: usize) -> Vec<Vec<Vec<u64>>> {
        services_per_channel
            .iter()
            .map(|&l| vec![vec![0; nodes]; l])
            .collect()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn total(&self) -> u64 {
        self.slots.iter().flatten().flatten().flatten().sum()
    }
}

fn row_error(line: usize, message: impl Into<String>) -> Error {
    Error::Trace {
        line,
        message: message.into(),
    }
}

/// Parses trace bytes; pure apart from reading `reader`.
pub fn parse_trace<R: Read>(reader: R, binning: &TraceBinning) -> Result<ArrivalProcess> {
    if !(binning.slot_width_s > 0.0 && binning.slot_width_s.is_finite()) {
        return Err(Error::Config("slot width must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| row_error(1, e.to_string()))?
        .clone();
    if header.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(Error::Schema(format!(
            "trace header must be `{}`, found `{}`",
            TRACE_COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = ArrivalProcess {
        nodes: binning.nodes,
        services_per_channel: binning.services_per_channel.clone(),
        slots: Vec::new(),
    };
    let mut first: Option<f64> = None;
    let mut last = f64::NEG_INFINITY;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            row_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: TraceRow = record
            .deserialize(Some(&header))
            .map_err(|e| row_error(line, e.to_string()))?;
        let finite = [row.timestamp_s, row.cpu_req, row.mem_req, row.deadline_ms]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite {
            return Err(row_error(
                line,
                "numeric fields must be finite and non-negative",
            ));
        }
        if row.timestamp_s < last {
            return Err(row_error(
                line,
                format!("timestamp {} decreases (previous {last})", row.timestamp_s),
            ));
        }
        last = row.timestamp_s;
        if row.node_id >= binning.nodes {
            return Err(row_error(
                line,
                format!("node_id {} out of range", row.node_id),
            ));
        }
        let classes = binning.services_per_channel.len();
        if row.sla_class == 0 || row.sla_class > classes {
            return Err(row_error(
                line,
                format!("sla_class {} outside 1..={classes}", row.sla_class),
            ));
        }
        let p = row.sla_class - 1;
        if row.service_id >= binning.services_per_channel[p] {
            return Err(row_error(
                line,
                format!(
                    "service_id {} out of range for class {}",
                    row.service_id, row.sla_class
                ),
            ));
        }
        let t0 = *first.get_or_insert(row.timestamp_s);
        let slot = ((row.timestamp_s - t0) / binning.slot_width_s).floor() as usize;
        while out.slots.len() <= slot {
            out.slots.push(ArrivalProcess::empty_slot(
                &binning.services_per_channel,
                binning.nodes,
            ));
        }
        out.slots[slot][p][row.service_id][row.node_id] += row.request_count;
    }
    if first.is_none() {
        return Err(Error::Trace {
            line: 1,
            message: "trace has no data rows".into(),
        });
    }
    Ok(out)
}

pub fn load_trace(path: &Path, binning: &TraceBinning) -> Result<ArrivalProcess> {
    parse_trace(std::fs::File::open(path)?, binning)
}

/// Writes `process` back out as trace rows, one per non-zero count, with
/// timestamps at slot starts. Resource columns are filled from `describe`.
pub fn write_trace<W: std::io::Write>(
    writer: W,
    process: &ArrivalProcess,
    slot_width_s: f64,
    describe: impl Fn(usize, usize) -> (f64, f64, f64),
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS)
        .map_err(|e| Error::Schema(e.to_string()))?;
    for (t, slot) in process.slots.iter().enumerate() {
        for (p, per_l) in slot.iter().enumerate() {
            for (l, per_i) in per_l.iter().enumerate() {
                for (i, &count) in per_i.iter().enumerate() {
                    if count == 0 {
                        continue;
                    }
                    let (cpu, mem, deadline) = describe(p, l);
                    w.serialize((
                        t as f64 * slot_width_s,
                        i,
                        p + 1,
                        l,
                        count,
                        cpu,
                        mem,
                        deadline,
                    ))
                    .map_err(|e| Error::Schema(e.to_string()))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Base rates with a sinusoidal daily cycle and a shared per-slot burst
/// multiplier drawn from a unit-mean Gamma distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadModel {
    /// Requests per slot, `rates[p][l][i]`.
    pub rates: Vec<Vec<Vec<f64>>>,
    /// Relative swing in `[0, 1]`; 0 disables the cycle.
    pub diurnal_amplitude: f64,
    /// Cycle length in slots.
    pub diurnal_period: f64,
    /// Variance of the burst multiplier; 0 gives plain Poisson arrivals.
    pub burstiness: f64,
    pub seed: u64,
}

impl WorkloadModel {
    pub fn validate(&self) -> Result<()> {
        if self
            .rates
            .iter()
            .flatten()
            .flatten()
            .any(|r| !(r.is_finite() && *r >= 0.0))
        {
            return Err(Error::Config(
                "workload rates must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.diurnal_amplitude) {
            return Err(Error::Config("diurnal amplitude must lie in [0, 1]".into()));
        }
        if !(self.diurnal_period > 0.0 && self.diurnal_period.is_finite()) {
            return Err(Error::Config("diurnal period must be positive".into()));
        }
        if !(self.burstiness >= 0.0 && self.burstiness.is_finite()) {
            return Err(Error::Config("burstiness must be non-negative".into()));
        }
        Ok(())
    }

    pub fn modulation(&self, slot: u64) -> f64 {
        1.0 + self.diurnal_amplitude * (TAU * slot as f64 / self.diurnal_period).sin()
    }

    /// One slot of counts scaled by `pattern(p, l, i)` on top of the model's
    /// modulation.
    pub fn draw_slot<R: Rng + ?Sized>(&self, slot: u64, rng: &mut R) -> Vec<Vec<Vec<u64>>> {
        let burst = if self.burstiness > 0.0 {
            let k = 1.0 / self.burstiness;
            Gamma::new(k, self.burstiness).map_or(1.0, |g| g.sample(rng))
        } else {
            1.0
        };
        let scale = self.modulation(slot) * burst;
        self.rates
            .iter()
            .map(|per_l| {
                per_l
                    .iter()
                    .map(|per_i| per_i.iter().map(|&r| poisson(r * scale, rng)).collect())
                    .collect()
            })
            .collect()
    }
}

/// Poisson draw that accepts a zero rate.
pub fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map_or(0, |d| d.sample(rng) as u64)
}

pub fn synth_trace(
    model: &WorkloadModel,
    frames: usize,
    slots_per_frame: usize,
) -> Result<ArrivalProcess> {
    model.validate()?;
    let nodes = model
        .rates
        .iter()
        .flatten()
        .map(|r| r.len())
        .next()
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let slots = (0..(frames * slots_per_frame) as u64)
        .map(|t| model.draw_slot(t, &mut rng))
        .collect();
    Ok(ArrivalProcess {
        nodes,
        services_per_channel: model.rates.iter().map(|r| r.len()).collect(),
        slots,
    })
}

#[derive(Serialize, Deserialize)]
struct InstanceDocument {
    version: String,
    #[serde(flatten)]
    instance: ChannelInstance,
}

pub fn export_instance(instance: &ChannelInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceDocument {
        version: INSTANCE_VERSION.into(),
        instance: instance.clone(),
    })?)
}

pub fn import_instance(text: &str) -> Result<ChannelInstance> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(INSTANCE_VERSION) => {}
        Some(other) => {
            return Err(Error::Version {
                found: other.into(),
                expected: INSTANCE_VERSION.into(),
            })
        }
        None => return Err(Error::Schema("missing field `version`".into())),
    }
    let doc: InstanceDocument =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    doc.instance.validate()?;
    Ok(doc.instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binning() -> TraceBinning {
        TraceBinning {
            slot_width_s: 1.0,
            nodes: 3,
            services_per_channel: vec![2, 1],
        }
    }

    const HEADER: &str =
        "timestamp_s,node_id,sla_class,service_id,request_count,cpu_req,mem_req,deadline_ms\n";

    fn parse(body: &str) -> Result<ArrivalProcess> {
        parse_trace(format!("{HEADER}{body}").as_bytes(), &binning())
    }

    #[test]
    fn single_row() {
        let p = parse("0.0,2,1,1,5,0.1,100,20\n").unwrap();
        assert_eq!(p.num_slots(), 1);
        assert_eq!(p.slots[0][0][1][2], 5);
        assert_eq!(p.total(), 5);
    }

    #[test]
    fn two_slot_widths_make_two_bins() {
        let p =
            parse("10.0,0,1,0,3,0.1,100,20\n10.5,1,2,0,4,0.1,100,20\n11.2,0,1,0,2,0.1,100,20\n")
                .unwrap();
        assert_eq!(p.num_slots(), 2);
        assert_eq!(p.total(), 9);
        assert_eq!(p.slots[1][0][0][0], 2);
    }

    #[test]
    fn decreasing_timestamps_are_rejected() {
        let err = parse("2.0,0,1,0,1,0.1,100,20\n1.0,0,1,0,1,0.1,100,20\n").unwrap_err();
        assert!(matches!(err, Error::Trace { line: 3, .. }), "{err}");
    }

    #[test]
    fn out_of_range_ids_name_the_line() {
        assert!(matches!(
            parse("0,0,1,2,1,0.1,100,20\n"),
            Err(Error::Trace { line: 2, .. })
        ));
        assert!(matches!(
            parse("0,0,3,0,1,0.1,100,20\n"),
            Err(Error::Trace { line: 2, .. })
        ));
        assert!(matches!(
            parse("0,0,1,0,1,0.1,100,20\n0,5,1,0,1,0.1,100,20\n"),
            Err(Error::Trace { line: 3, .. })
        ));
        assert!(matches!(
            parse("0,0,1,0,x,0.1,100,20\n"),
            Err(Error::Trace { line: 2, .. })
        ));
    }

    #[test]
    fn empty_and_headerless_files_fail() {
        assert!(parse("").is_err());
        assert!(parse_trace("".as_bytes(), &binning()).is_err());
        assert!(matches!(
            parse_trace("a,b\n1,2\n".as_bytes(), &binning()),
            Err(Error::Schema(_))
        ));
    }

    fn model(rate: f64) -> WorkloadModel {
        WorkloadModel {
            rates: vec![vec![vec![rate; 2]]],
            diurnal_amplitude: 0.0,
            diurnal_period: 100.0,
            burstiness: 0.0,
            seed: 4,
        }
    }

    #[test]
    fn zero_rates_give_zero_process() {
        assert_eq!(synth_trace(&model(0.0), 3, 10).unwrap().total(), 0);
    }

    #[test]
    fn constant_rate_mean_is_within_three_sigma() {
        let p = synth_trace(&model(2.0), 10, 100).unwrap();
        let n = 1000.0;
        let mean = p.slots.iter().map(|s| s[0][0][0] as f64).sum::<f64>() / n;
        assert!(
            (mean - 2.0).abs() <= 3.0 * (2.0f64 / n).sqrt(),
            "mean {mean}"
        );
        assert_eq!(p, synth_trace(&model(2.0), 10, 100).unwrap());
    }
}
