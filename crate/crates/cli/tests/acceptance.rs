//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use slasched_cli::run_args;
use slasched_core::jsord::{
    greedy_orchestrate, max_constraint_violation, ratio_p, solve_all_channels, solve_dispatch_lp,
    ChannelInstance, OrchestrationSet,
};
use slasched_core::model::CAPACITY_TOL;
use slasched_core::nmac::gradcheck::{self, GRAD_TOL};
use slasched_core::oracle::{
    brute_force_jsord, random_instance, meets_submodularity_conditions, GeneratorParams, Regime,
};
use slasched_core::sim::{reset, FrameRecord, Policy, RandomPolicy, SimConfig};

const TOL: f64 = 1e-6;

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["slasched"];
    full.extend_from_slice(args);
    run_args(full)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).expect("output file")).expect("json output")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Greedy value lies within the approximation sandwich on instances that
/// meet a sufficient condition for diminishing returns.
fn sandwich() -> Check {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for seed in 0..200u64 {
        let regime = if seed % 4 == 3 {
            Regime::SingleReplica
        } else {
            Regime::AmpleCompute
        };
        let inst = random_instance(&GeneratorParams::small(regime), seed);
        ensure(
            meets_submodularity_conditions(&inst),
            format!("seed {seed} meets neither diminishing-returns condition"),
        )?;
        let (opt, _) = brute_force_jsord(&inst).map_err(|e| e.to_string())?;
        let greedy = greedy_orchestrate(&inst)
            .map_err(|e| e.to_string())?
            .objective;
        let p = ratio_p(&inst.services) as f64;
        let lower = opt / (1.0 + p) - TOL;
        ensure(
            greedy >= lower && greedy <= opt + TOL,
            format!(
                "seed {seed}: greedy {greedy} outside [{lower}, {}]",
                opt + TOL
            ),
        )?;
        if opt > 0.0 {
            worst = worst.min(greedy / opt);
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), format!("took {took:?}"))?;
    Ok(format!(
        "200 instances, worst greedy/optimum {worst:.4}, {took:.1?}"
    ))
}

fn verify_suite(suite: &str, key: &str) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let code = cli(&[
        "--out",
        s(dir.path()),
        "verify",
        suite,
        "--instances",
        "100",
        "--samples",
        "20",
    ]);
    let report = read_json(&dir.path().join("verify_report.json"));
    let r = &report[0];
    let found = r[key].as_array().map_or(usize::MAX, Vec::len);
    ensure(code == 0, format!("exit code {code}"))?;
    ensure(
        r["instances"] == 100 && r["samples"] == 20,
        "suite size differs",
    )?;
    let checked = r["checked"].as_u64().unwrap_or(0);
    ensure(found == 0, format!("{found} violations"))?;
    ensure(
        checked == 2000,
        format!("only {checked} of 2000 samples evaluated"),
    )?;
    Ok(format!(
        "100 instances x 20 samples, {checked} evaluated, 0 violations"
    ))
}

/// Best objective over all vertices of `max c.x, A x <= b, x >= 0`.
fn vertex_enumeration(c: &[f64], rows: &[(Vec<f64>, f64)]) -> f64 {
    let n = c.len();
    let mut all: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        all.push((e, 0.0));
    }
    let mut best = f64::NEG_INFINITY;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&pick.iter().map(|&k| all[k].clone()).collect::<Vec<_>>()) {
            let feasible = all
                .iter()
                .all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
            if feasible {
                best = best.max(c.iter().zip(&x).map(|(u, v)| u * v).sum());
            }
        }
        // Next n-combination of the constraint indices.
        let m = all.len();
        let mut k = n;
        while k > 0 && pick[k - 1] == m - n + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        pick[k - 1] += 1;
        for j in k..n {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// Solves the square system with rows as equalities; `None` if singular.
fn solve_square(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(*b);
            v
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..=n {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// The dispatch program written directly in dispatch fractions.
fn dispatch_oracle(inst: &ChannelInstance, set: &OrchestrationSet) -> f64 {
    let mut vars = Vec::new();
    for l in 0..inst.services.len() {
        for i in 0..inst.num_nodes {
            for m in 0..inst.cells.len() {
                if inst.arrivals[l][i] > 0.0 && set.contains(&(l, m)) && inst.indicator[l][i][m] {
                    vars.push((l, i, m));
                }
            }
        }
    }
    if vars.is_empty() {
        return 0.0;
    }
    let c: Vec<f64> = vars.iter().map(|&(l, i, _)| inst.arrivals[l][i]).collect();
    let mut rows = Vec::new();
    for l in 0..inst.services.len() {
        for i in 0..inst.num_nodes {
            let a: Vec<f64> = vars
                .iter()
                .map(|&(vl, vi, _)| f64::from(u8::from(vl == l && vi == i)))
                .collect();
            if a.iter().any(|&v| v > 0.0) {
                rows.push((a, 1.0));
            }
        }
    }
    for m in 0..inst.cells.len() {
        let a: Vec<f64> = vars
            .iter()
            .map(|&(l, i, vm)| {
                if vm == m {
                    inst.services[l].compute_req * inst.arrivals[l][i]
                } else {
                    0.0
                }
            })
            .collect();
        if a.iter().any(|&v| v > 0.0) {
            rows.push((a, inst.cells[m].compute));
        }
    }
    vertex_enumeration(&c, &rows)
}

fn dispatch_lp() -> Check {
    let params = GeneratorParams {
        max_services: 2,
        max_cells: 2,
        max_nodes: 2,
        regime: Regime::Contended,
    };
    let mut worst_gap: f64 = 0.0;
    let mut worst_violation: f64 = 0.0;
    for seed in 0..100u64 {
        let inst = random_instance(&params, 10_000 + seed);
        let set = OrchestrationSet::from_pairs(
            (0..inst.services.len()).flat_map(|l| (0..inst.cells.len()).map(move |m| (l, m))),
        );
        let (plan, value) =
            solve_dispatch_lp(&inst, &set, &inst.arrivals).map_err(|e| e.to_string())?;
        let oracle = dispatch_oracle(&inst, &set);
        let gap = (value - oracle).abs() / oracle.abs().max(1.0);
        let violation = max_constraint_violation(&inst, &set, &inst.arrivals, &plan);
        ensure(
            gap <= TOL,
            format!("seed {seed}: lp {value} vs enumeration {oracle}"),
        )?;
        ensure(
            violation <= TOL,
            format!("seed {seed}: constraint violation {violation}"),
        )?;
        worst_gap = worst_gap.max(gap);
        worst_violation = worst_violation.max(violation);
    }
    Ok(format!(
        "100 instances, max relative gap {worst_gap:.2e}, max violation {worst_violation:.2e}"
    ))
}

fn decomposition() -> Check {
    let cfg = SimConfig::default();
    let (mut state, obs) = reset(&cfg).map_err(|e| e.to_string())?;
    let actions = RandomPolicy::new(cfg.seed)
        .decide(&obs, cfg.action_dim())
        .map_err(|e| e.to_string())?;
    let instances = state.customize(&actions).map_err(|e| e.to_string())?;
    let sequential: Vec<_> = instances
        .iter()
        .map(|i| greedy_orchestrate(i).unwrap())
        .collect();
    for workers in [0, 1, 4] {
        let parallel = solve_all_channels(&instances, workers).map_err(|e| e.to_string())?;
        ensure(
            serde_json::to_string(&parallel).unwrap()
                == serde_json::to_string(&sequential).unwrap(),
            format!("{workers} workers: decomposed output differs from sequential"),
        )?;
    }
    let dir = tempfile::tempdir().unwrap();
    let code = cli(&["--out", s(dir.path()), "bench", "--runs", "5"]);
    ensure(code == 0, format!("bench exit code {code}"))?;
    let mut rd = csv::Reader::from_path(dir.path().join("runtime_bench.csv")).unwrap();
    let row = rd
        .records()
        .next()
        .ok_or("empty bench table")?
        .map_err(|e| e.to_string())?;
    let speedup: f64 = row[4].parse().map_err(|_| "bad speedup")?;
    ensure(speedup > 1.0, format!("speedup {speedup}"))?;
    Ok(format!(
        "bit-identical at 0/1/4 workers, P = 6 speedup {speedup:.1}x"
    ))
}

fn gradients() -> Check {
    let reports = gradcheck::run_all(20, 2024).map_err(|e| e.to_string())?;
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    ensure(
        reports.iter().all(|r| r.points == 20 && r.passed),
        format!("{reports:?}"),
    )?;
    ensure(worst < GRAD_TOL, format!("max relative error {worst}"))?;
    let (monotone, losses) =
        gradcheck::check_critic_descent(50, 0.01, 2024).map_err(|e| e.to_string())?;
    ensure(
        monotone && losses.len() >= 50,
        "critic loss not monotone over 50 steps",
    )?;
    Ok(format!(
        "max relative error {worst:.2e}; loss {:.4} -> {:.4} over 50 steps",
        losses[0],
        losses[losses.len() - 1]
    ))
}

fn learning() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fixture.toml");
    std::fs::write(
        &config,
        SimConfig::acceptance_fixture().to_toml_string().unwrap(),
    )
    .unwrap();
    let start = Instant::now();
    let code = cli(&[
        "--config",
        s(&config),
        "--out",
        s(dir.path()),
        "train",
        "--episodes",
        "200",
        "--eval-episodes",
        "20",
    ]);
    let took = start.elapsed();
    ensure(code == 0, format!("train exit code {code}"))?;
    let e = read_json(&dir.path().join("evaluation.json"));
    let (random, trained) = (
        e["random_mean"].as_f64().unwrap(),
        e["trained_mean"].as_f64().unwrap(),
    );
    ensure(
        e["trained_rewards"].as_array().unwrap().len() == 20,
        "need 20 evaluation episodes",
    )?;
    ensure(
        trained >= 1.10 * random,
        format!("trained {trained:.3} < 1.10 x random {random:.3}"),
    )?;
    ensure(took < Duration::from_secs(900), format!("took {took:?}"))?;
    Ok(format!(
        "random {random:.3}, trained {trained:.3} ({:.2}x), {took:.1?}",
        trained / random
    ))
}

fn simulate_default(dir: &Path) -> i32 {
    cli(&["--out", s(dir), "simulate", "--frames", "50"])
}

fn simulator_invariants(run: &Path) -> Check {
    let rerun = tempfile::tempdir().unwrap();
    ensure(simulate_default(rerun.path()) == 0, "rerun failed")?;
    let frames_a = std::fs::read(run.join("frames.jsonl")).unwrap();
    let frames_b = std::fs::read(rerun.path().join("frames.jsonl")).unwrap();
    ensure(frames_a == frames_b, "reruns differ")?;
    ensure(
        std::fs::read(run.join("summary.json")).unwrap()
            == std::fs::read(rerun.path().join("summary.json")).unwrap(),
        "summaries differ",
    )?;
    let frames: Vec<FrameRecord> = frames_a
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    ensure(frames.len() == 50, format!("{} frames", frames.len()))?;
    let mut worst_excess = f64::NEG_INFINITY;
    for f in &frames {
        ensure(
            f.served + f.dropped == f.arrived,
            format!("frame {}: conservation", f.frame),
        )?;
        ensure(
            f.channel_arrived.iter().sum::<u64>() == f.arrived
                && f.channel_served.iter().sum::<u64>() == f.served,
            format!("frame {}: channel totals", f.frame),
        )?;
        ensure(
            f.max_load_excess <= CAPACITY_TOL,
            format!("frame {}: load excess {}", f.frame, f.max_load_excess),
        )?;
        ensure(
            f.indicator_breaches == 0,
            format!("frame {}: deadline-infeasible dispatch", f.frame),
        )?;
        ensure(f.memory_ok, format!("frame {}: memory overfilled", f.frame))?;
        let active: Vec<f64> = f
            .channel_priority
            .iter()
            .zip(&f.channel_cells)
            .filter(|(_, &c)| c > 0)
            .map(|(&p, _)| p)
            .collect();
        ensure(
            active.windows(2).all(|w| w[0] >= w[1]),
            format!("frame {}: channels out of priority order", f.frame),
        )?;
        let first_empty = f
            .channel_cells
            .iter()
            .position(|&c| c == 0)
            .unwrap_or(f.channel_cells.len());
        ensure(
            f.channel_cells[first_empty..].iter().all(|&c| c == 0),
            "empty channel ranked above a populated one",
        )?;
        worst_excess = worst_excess.max(f.max_load_excess);
    }
    Ok(format!(
        "50 frames, max load excess {worst_excess:.2e}, reruns identical"
    ))
}

fn channel_shares(run: &Path) -> Check {
    let out = tempfile::tempdir().unwrap();
    let code = cli(&["--out", s(out.path()), "export-plots", s(run)]);
    ensure(code == 0, format!("export-plots exit code {code}"))?;
    let summary = read_json(&run.join("summary.json"));
    ensure(summary["frames"] == 50, "summary frame count")?;
    let arrived = summary["arrived"].as_u64().unwrap() as f64;
    let served = summary["served"].as_u64().unwrap() as f64;
    let shares: f64 = summary["channel_share"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    ensure(
        (shares - served / arrived).abs() <= 1e-12,
        format!("summary shares {shares} vs {}", served / arrived),
    )?;

    let mut per_frame: std::collections::BTreeMap<u64, (f64, u64, u64)> = Default::default();
    let mut rd = csv::Reader::from_path(out.path().join("channel_share.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (fc, sc, ac, vc) = (col("frame"), col("share"), col("arrived"), col("served"));
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let e = per_frame.entry(rec[fc].parse().unwrap()).or_default();
        e.0 += rec[sc].parse::<f64>().unwrap();
        e.1 += rec[ac].parse::<u64>().unwrap();
        e.2 += rec[vc].parse::<u64>().unwrap();
        rows += 1;
    }
    ensure(
        rows == 50 * SimConfig::default().channels,
        format!("{rows} share rows"),
    )?;
    for (frame, (share, a, v)) in &per_frame {
        let throughput = if *a == 0 { 0.0 } else { *v as f64 / *a as f64 };
        ensure(
            (share - throughput).abs() <= 1e-12,
            format!("frame {frame}: shares {share} vs {throughput}"),
        )?;
    }
    let split: Vec<String> = summary["channel_share"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| format!("{:.3}", v.as_f64().unwrap()))
        .collect();
    Ok(format!(
        "shares [{}] sum to throughput {:.4}",
        split.join(", "),
        served / arrived
    ))
}

fn main() {
    let run = tempfile::tempdir().unwrap();
    let default_run = simulate_default(run.path());

    let criteria: Vec<Criterion<'_>> = vec![
        (1, "greedy approximation sandwich", Box::new(sandwich)),
        (
            2,
            "monotonicity suite",
            Box::new(|| verify_suite("monotonicity", "violations")),
        ),
        (
            3,
            "submodularity suite",
            Box::new(|| verify_suite("submodularity", "violations")),
        ),
        (
            4,
            "dispatch LP against vertex enumeration",
            Box::new(dispatch_lp),
        ),
        (
            5,
            "channel decomposition exactness and speedup",
            Box::new(decomposition),
        ),
        (6, "NMAC gradient checks", Box::new(gradients)),
        (7, "learning beats random", Box::new(learning)),
        (
            8,
            "simulator invariants",
            Box::new(|| {
                ensure(
                    default_run == 0,
                    format!("simulate exit code {default_run}"),
                )?;
                simulator_invariants(run.path())
            }),
        ),
        (
            9,
            "per-channel share report",
            Box::new(|| channel_shares(run.path())),
        ),
    ];

    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail} [{took:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why} [{took:.1?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
