use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Result};

use fpps_core::nn::NnBackend;
use fpps_core::registration::IcpResult;

use crate::cli::CompareArgs;
use crate::config;
use crate::report::{emit, CompareReport, CompareRun};

use super::bench::run_sequence;

/// Transform entries, fitness, and iteration counts must agree across
/// backends before any speedup is reported.
const EQUIVALENCE_TOL: f64 = 1e-12;

pub fn run(args: &CompareArgs) -> Result<ExitCode> {
    let mut backends = Vec::new();
    for name in &args.backends {
        let backend = NnBackend::from_str(name)?;
        if !backends.contains(&backend) {
            backends.push(backend);
        }
    }
    if backends.len() < 2 {
        bail!(
            "compare needs at least two distinct backends, got {:?}",
            args.backends
        );
    }

    let settings = config::resolve(&args.icp)?;
    let runs: Vec<_> = backends
        .iter()
        .map(|&backend| {
            run_sequence(&args.seq_dir, settings, backend, args.two_stage, false)
                .map(|outcome| (backend, outcome))
        })
        .collect::<Result<_>>()?;

    // Equivalence gates reporting: abort on the first differing frame/field.
    let (baseline_backend, baseline_outcome) = &runs[0];
    for (backend, outcome) in &runs[1..] {
        if outcome.results.len() != baseline_outcome.results.len() {
            bail!(
                "equivalence violation: {} produced {} pairs, {} produced {}",
                baseline_backend,
                baseline_outcome.results.len(),
                backend,
                outcome.results.len()
            );
        }
        for ((frame, reference), (_, candidate)) in
            baseline_outcome.results.iter().zip(&outcome.results)
        {
            check_pair(*frame, baseline_backend, reference, backend, candidate)?;
        }
    }

    let baseline_latency = baseline_outcome.report.aggregates.average_latency_ms;
    let report = CompareReport {
        baseline: baseline_backend.to_string(),
        equivalent: true,
        runs: runs
            .into_iter()
            .map(|(backend, outcome)| CompareRun {
                backend: backend.to_string(),
                speedup_vs_baseline: baseline_latency
                    / outcome.report.aggregates.average_latency_ms,
                report: outcome.report,
            })
            .collect(),
    };

    emit(&args.output, report.to_text(), report.to_csv(), &report)?;
    Ok(ExitCode::SUCCESS)
}

fn check_pair(
    frame: usize,
    a_name: &NnBackend,
    a: &IcpResult,
    b_name: &NnBackend,
    b: &IcpResult,
) -> Result<()> {
    let fail = |field: &str, diff: f64| {
        bail!(
            "equivalence violation at frame {frame}: field `{field}` differs between \
             {a_name} and {b_name} by {diff:.3e}"
        )
    };
    let transform_diff = (a.final_transform.to_homogeneous() - b.final_transform.to_homogeneous())
        .abs()
        .max();
    if transform_diff > EQUIVALENCE_TOL {
        return fail("final_transform", transform_diff);
    }
    if a.iterations_run != b.iterations_run {
        return fail(
            "iterations",
            (a.iterations_run as f64 - b.iterations_run as f64).abs(),
        );
    }
    if a.converged != b.converged {
        return fail("converged", 1.0);
    }
    let rmse_diff = (a.fitness_rmse - b.fitness_rmse).abs();
    if rmse_diff > EQUIVALENCE_TOL {
        return fail("fitness_rmse", rmse_diff);
    }
    Ok(())
}
