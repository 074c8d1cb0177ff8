use std::time::Instant;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use slasched_core::jsord::{greedy_orchestrate, solve_all_channels, GreedyOutcome};
use slasched_core::sim::{reset, Policy, RandomPolicy};

use crate::{io, Context, Outcome, Report};

/// Columns of `runtime_bench.csv`, in order.
pub const BENCH_COLUMNS: [&str; 5] = ["nodes", "services", "decomposed_ms", "global_ms", "speedup"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub services: usize,
    pub decomposed_ms: f64,
    pub global_ms: f64,
    pub speedup: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

pub fn bench(ctx: &Context, runs: usize, nodes: &[usize]) -> Result<Report> {
    if runs == 0 {
        bail!("--runs must be positive");
    }
    let sizes = if nodes.is_empty() {
        vec![ctx.cfg.nodes]
    } else {
        nodes.to_vec()
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for n in sizes {
        let mut cfg = ctx.cfg.clone();
        cfg.nodes = n;
        let (mut state, obs) = reset(&cfg)?;
        let actions = RandomPolicy::new(cfg.seed).decide(&obs, cfg.action_dim())?;
        let instances = state.customize(&actions)?;
        let merged = state.merged_instance()?;

        let sequential: Vec<GreedyOutcome> = instances
            .iter()
            .map(greedy_orchestrate)
            .collect::<slasched_core::Result<_>>()?;
        let mut decomposed = Vec::with_capacity(runs);
        let mut global = Vec::with_capacity(runs);
        for _ in 0..runs {
            let (out, ms) = time_ms(|| solve_all_channels(&instances, 0));
            if out? != sequential {
                bail!("decomposed solve differs from the sequential per-channel solve");
            }
            decomposed.push(ms);
            let (out, ms) = time_ms(|| greedy_orchestrate(&merged));
            out?;
            global.push(ms);
        }
        let (d, g) = (median(decomposed), median(global));
        let row = BenchRow {
            nodes: n,
            services: merged.services.len(),
            decomposed_ms: d,
            global_ms: g,
            speedup: if d > 0.0 { g / d } else { f64::INFINITY },
        };
        log::info!(
            "{n} nodes: decomposed {d:.3} ms, global {g:.3} ms, speedup {:.1}",
            row.speedup
        );
        rows.push(row);
    }
    let jsonl = ctx.path("bench.jsonl");
    io::write_jsonl(&jsonl, &rows)?;
    let csv = ctx.path("runtime_bench.csv");
    write_bench_csv(&csv, &rows)?;
    Ok(Report {
        outcome: Outcome::Success,
        outputs: vec![jsonl, csv],
    })
}

pub fn write_bench_csv(path: &std::path::Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_COLUMNS)?;
    for r in rows {
        w.serialize((r.nodes, r.services, r.decomposed_ms, r.global_ms, r.speedup))?;
    }
    w.flush()?;
    Ok(())
}
