use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;
use slasched_core::jsord::{feasible_extensions, ChannelInstance, OrchestrationSet};
use slasched_core::nmac::gradcheck::{self, GradCheckReport, GRAD_TOL};
use slasched_core::oracle::{
    check_monotonicity, check_submodularity, oracle_report, random_instance, GeneratorParams,
    MonotonicityViolation, OracleReport, Regime, SubmodularityViolation, VIOLATION_TOL,
};
use slasched_core::trace::export_instance;

use crate::{io, Context, Outcome, Report, Suite};

const DESCENT_STEPS: usize = 50;
const DESCENT_RATE: f64 = 0.01;
const GRAD_POINTS: usize = 20;

#[derive(Debug, Serialize)]
#[serde(tag = "suite", rename_all = "lowercase")]
pub enum SuiteResult {
    Approximation {
        instances: usize,
        violations: usize,
        reports: Vec<OracleReport>,
    },
    Monotonicity {
        instances: usize,
        samples: usize,
        checked: usize,
        violations: Vec<(u64, MonotonicityViolation)>,
    },
    Submodularity {
        instances: usize,
        samples: usize,
        checked: usize,
        skipped_degenerate: usize,
        violations: Vec<(u64, SubmodularityViolation)>,
    },
    Gradients {
        reports: Vec<GradCheckReport>,
        max_rel_error: f64,
        descent_monotone: bool,
        descent_losses: Vec<f64>,
    },
}

impl SuiteResult {
    fn violations(&self) -> usize {
        match self {
            SuiteResult::Approximation { violations, .. } => *violations,
            SuiteResult::Monotonicity { violations, .. } => violations.len(),
            SuiteResult::Submodularity { violations, .. } => violations.len(),
            SuiteResult::Gradients {
                reports,
                descent_monotone,
                ..
            } => reports.iter().filter(|r| !r.passed).count() + usize::from(!descent_monotone),
        }
    }
}

/// Instance `k` of a suite. Approximation instances are mostly
/// ample-compute with every fourth single-replica.
fn approximation_instance(seed: u64, k: usize) -> ChannelInstance {
    let regime = if k % 4 == 3 {
        Regime::SingleReplica
    } else {
        Regime::AmpleCompute
    };
    random_instance(&GeneratorParams::small(regime), seed.wrapping_add(k as u64))
}

fn any_regime_instance(seed: u64, k: usize) -> ChannelInstance {
    let regime = [
        Regime::AmpleCompute,
        Regime::SingleReplica,
        Regime::Contended,
    ][k % 3];
    random_instance(&GeneratorParams::small(regime), seed.wrapping_add(k as u64))
}

struct Dumps {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Dumps {
    fn write(&mut self, suite: &str, k: usize, inst: &ChannelInstance) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{suite}-{k}.json"));
        std::fs::write(&path, export_instance(inst)?)?;
        self.written.push(path);
        Ok(())
    }
}

fn approximation(seed: u64, n: usize, dumps: &mut Dumps) -> Result<SuiteResult> {
    let mut reports = Vec::with_capacity(n);
    let mut violations = 0;
    for k in 0..n {
        let inst = approximation_instance(seed, k);
        let r = oracle_report(&inst)?;
        if !r.bound_satisfied || r.greedy_value > r.optimum + VIOLATION_TOL {
            violations += 1;
            dumps.write("approximation", k, &inst)?;
        }
        reports.push(r);
    }
    Ok(SuiteResult::Approximation {
        instances: n,
        violations,
        reports,
    })
}

fn monotonicity(seed: u64, n: usize, samples: usize, dumps: &mut Dumps) -> Result<SuiteResult> {
    let (mut violations, mut checked) = (Vec::new(), 0);
    for k in 0..n {
        let inst = any_regime_instance(seed, k);
        let found = check_monotonicity(&inst, samples, seed.wrapping_add(k as u64))?;
        checked += found.checked;
        if !found.violations.is_empty() {
            dumps.write("monotonicity", k, &inst)?;
        }
        violations.extend(found.violations.into_iter().map(|v| (k as u64, v)));
    }
    Ok(SuiteResult::Monotonicity {
        instances: n,
        samples,
        checked,
        violations,
    })
}

/// Draws ample-compute instances until `n` admit at least one feasible
/// pair; instances without one make every triple vacuous and are skipped.
fn submodularity(seed: u64, n: usize, samples: usize, dumps: &mut Dumps) -> Result<SuiteResult> {
    let (mut violations, mut checked, mut skipped) = (Vec::new(), 0, 0);
    let mut used = 0;
    let mut k = 0usize;
    while used < n {
        let inst_seed = seed.wrapping_add(k as u64);
        k += 1;
        let inst = random_instance(&GeneratorParams::small(Regime::AmpleCompute), inst_seed);
        if feasible_extensions(&inst, &OrchestrationSet::new()).is_empty() {
            skipped += 1;
            continue;
        }
        used += 1;
        let found = check_submodularity(&inst, samples, inst_seed)?;
        checked += found.checked;
        if !found.violations.is_empty() {
            dumps.write("submodularity", k - 1, &inst)?;
        }
        violations.extend(found.violations.into_iter().map(|v| (inst_seed, v)));
    }
    Ok(SuiteResult::Submodularity {
        instances: n,
        samples,
        checked,
        skipped_degenerate: skipped,
        violations,
    })
}

fn gradients(seed: u64) -> Result<SuiteResult> {
    let reports = gradcheck::run_all(GRAD_POINTS, seed)?;
    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let (descent_monotone, descent_losses) =
        gradcheck::check_critic_descent(DESCENT_STEPS, DESCENT_RATE, seed)?;
    log::info!("gradients: max relative error {max_rel_error:.3e} (tolerance {GRAD_TOL:e})");
    Ok(SuiteResult::Gradients {
        reports,
        max_rel_error,
        descent_monotone,
        descent_losses,
    })
}

pub fn verify(
    ctx: &Context,
    suite: Suite,
    instances: Option<usize>,
    samples: usize,
) -> Result<Report> {
    let seed = ctx.cfg.seed;
    let mut dumps = Dumps {
        dir: ctx.path("counterexamples"),
        written: Vec::new(),
    };
    let run = |s: Suite, dumps: &mut Dumps| -> Result<SuiteResult> {
        match s {
            Suite::Approximation => approximation(seed, instances.unwrap_or(200), dumps),
            Suite::Monotonicity => monotonicity(seed, instances.unwrap_or(100), samples, dumps),
            Suite::Submodularity => submodularity(seed, instances.unwrap_or(100), samples, dumps),
            Suite::Gradients => gradients(seed),
            Suite::All => unreachable!("expanded below"),
        }
    };
    let suites = match suite {
        Suite::All => vec![
            Suite::Monotonicity,
            Suite::Submodularity,
            Suite::Approximation,
            Suite::Gradients,
        ],
        one => vec![one],
    };
    let mut results = Vec::with_capacity(suites.len());
    for s in suites {
        let r = run(s, &mut dumps)?;
        log::info!("{s:?}: {} violations", r.violations());
        results.push(r);
    }
    let total: usize = results.iter().map(SuiteResult::violations).sum();
    let out = ctx.path("verify_report.json");
    io::write_json(&out, &results)?;
    let mut outputs = vec![out];
    outputs.append(&mut dumps.written);
    Ok(Report {
        outcome: if total == 0 {
            Outcome::Success
        } else {
            Outcome::Violations
        },
        outputs,
    })
}
