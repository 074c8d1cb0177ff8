//! JSON-lines metrics to tidy CSV, one file per figure family.

use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use slasched_core::nmac::EpisodeLog;
use slasched_core::sim::FrameRecord;

use crate::bench::{write_bench_csv, BenchRow};
use crate::simulate::SweepPoint;
use crate::{io, Context, Outcome, Report};

/// Largest gap tolerated between summed channel shares and the frame
/// throughput recomputed from raw counts.
pub const SHARE_TOL: f64 = 1e-12;

#[derive(Debug, Serialize)]
struct ShareRow {
    episode: u64,
    frame: u64,
    channel: usize,
    priority: f64,
    cells: usize,
    arrived: u64,
    served: u64,
    share: f64,
    frame_throughput: f64,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    episode: usize,
    exploring: bool,
    noise_scale: f64,
    mean_return: f64,
    critic_loss: Option<f64>,
    actor_grad_norm: Option<f64>,
    updates: usize,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    parameter: String,
    value: f64,
    throughput: f64,
    episode_reward: f64,
    arrived: u64,
    served: u64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-channel shares of every frame. Each share is served requests of
/// one channel over all arrivals in the frame, so a frame's shares add up
/// to its throughput.
fn channel_shares(frames: &[FrameRecord]) -> Result<Vec<ShareRow>> {
    let mut rows = Vec::new();
    for f in frames {
        let arrived: u64 = f.channel_arrived.iter().sum();
        let served: u64 = f.channel_served.iter().sum();
        let throughput = if arrived == 0 {
            0.0
        } else {
            served as f64 / arrived as f64
        };
        let mut total = 0.0;
        for (p, (&a, &s)) in f.channel_arrived.iter().zip(&f.channel_served).enumerate() {
            let share = if arrived == 0 {
                0.0
            } else {
                s as f64 / arrived as f64
            };
            total += share;
            rows.push(ShareRow {
                episode: f.episode,
                frame: f.frame,
                channel: p + 1,
                priority: f.channel_priority[p],
                cells: f.channel_cells[p],
                arrived: a,
                served: s,
                share,
                frame_throughput: throughput,
            });
        }
        if (total - throughput).abs() > SHARE_TOL || (f.throughput - throughput).abs() > SHARE_TOL {
            bail!(
                "frame {}: channel shares sum to {total}, throughput is {throughput}",
                f.frame
            );
        }
    }
    Ok(rows)
}

pub fn export(ctx: &Context, metrics_dir: &Path) -> Result<Report> {
    if !metrics_dir.is_dir() {
        bail!("metrics directory {} does not exist", metrics_dir.display());
    }
    let mut outputs = Vec::new();

    let frames = metrics_dir.join("frames.jsonl");
    if frames.is_file() {
        let rows = channel_shares(&io::read_jsonl::<FrameRecord>(&frames)?)?;
        let out = ctx.path("channel_share.csv");
        write_csv(&out, &rows)?;
        outputs.push(out);
    }

    let curve = metrics_dir.join("learning_curve.jsonl");
    if curve.is_file() {
        let rows: Vec<CurveRow> = io::read_jsonl::<EpisodeLog>(&curve)?
            .into_iter()
            .map(|e| CurveRow {
                episode: e.episode,
                exploring: e.exploring,
                noise_scale: e.noise_scale,
                mean_return: e.mean_return,
                critic_loss: e.critic_loss,
                actor_grad_norm: e.actor_grad_norm,
                updates: e.updates,
            })
            .collect();
        let out = ctx.path("learning_curve.csv");
        write_csv(&out, &rows)?;
        outputs.push(out);
    }

    for family in ["heterogeneity", "bandwidth"] {
        let src = metrics_dir.join(format!("sweep_{family}.jsonl"));
        if src.is_file() {
            let rows: Vec<SweepRow> = io::read_jsonl::<SweepPoint>(&src)?
                .into_iter()
                .map(|p| SweepRow {
                    parameter: p.parameter,
                    value: p.value,
                    throughput: p.throughput,
                    episode_reward: p.episode_reward,
                    arrived: p.arrived,
                    served: p.served,
                })
                .collect();
            let out = ctx.path(&format!("{family}_sweep.csv"));
            write_csv(&out, &rows)?;
            outputs.push(out);
        }
    }

    let bench = metrics_dir.join("bench.jsonl");
    if bench.is_file() {
        let out = ctx.path("runtime_bench.csv");
        write_bench_csv(&out, &io::read_jsonl::<BenchRow>(&bench)?)?;
        outputs.push(out);
    }

    if outputs.is_empty() {
        bail!("no metrics files found in {}", metrics_dir.display());
    }
    Ok(Report {
        outcome: Outcome::Success,
        outputs,
    })
}
