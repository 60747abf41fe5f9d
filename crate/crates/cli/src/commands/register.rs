use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;

use fpps_core::registration::align_with_backend;

use crate::cli::RegisterArgs;
use crate::config;
use crate::report::{emit, RegisterReport};

use super::load_cloud;

pub fn run(args: &RegisterArgs) -> Result<ExitCode> {
    let settings = config::resolve(&args.icp)?;
    let (source, source_io_ms) = load_cloud(&args.source)?;
    let (target, target_io_ms) = load_cloud(&args.target)?;

    let started = Instant::now();
    let result = align_with_backend(&source, &target, &settings.icp_config(), settings.backend)?;
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;

    let report = RegisterReport::from_parts(
        settings.backend.to_string(),
        &result.final_transform,
        result.converged,
        result.iterations_run,
        result.fitness_rmse,
        latency_ms,
        args.include_io.then_some(source_io_ms + target_io_ms),
    );
    emit(&args.output, report.to_text(), report.to_csv(), &report)?;

    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
