use std::fmt::Write as _;
use std::fs;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fpps_core::dataflow::{estimate_pipeline, PipelineEstimate, PipelineGeometry};

use crate::cli::ModelArgs;
use crate::report::{emit, model_csv_header, model_csv_row, model_text};

#[derive(Debug, Serialize)]
struct ModelRow {
    geometry: PipelineGeometry,
    n_source: u64,
    n_target: u64,
    estimate: PipelineEstimate,
}

pub fn run(args: &ModelArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.geometry)
        .with_context(|| format!("reading geometry config {}", args.geometry.display()))?;
    let base: PipelineGeometry = toml::from_str(&text)
        .with_context(|| format!("parsing geometry config {}", args.geometry.display()))?;

    let geometries = match &args.sweep {
        Some(spec) => sweep_geometries(&base, spec)?,
        None => vec![base],
    };

    let rows: Vec<ModelRow> = geometries
        .into_iter()
        .map(|geometry| {
            let estimate = estimate_pipeline(&geometry, args.n_source, args.n_target)?;
            Ok(ModelRow {
                geometry,
                n_source: args.n_source,
                n_target: args.n_target,
                estimate,
            })
        })
        .collect::<Result<_>>()?;

    let mut text_out = String::new();
    let mut csv_out = String::from(model_csv_header());
    csv_out.push('\n');
    for row in &rows {
        text_out.push_str(&model_text(
            &row.geometry,
            row.n_source,
            row.n_target,
            &row.estimate,
        ));
        text_out.push('\n');
        writeln!(
            csv_out,
            "{}",
            model_csv_row(&row.geometry, row.n_source, row.n_target, &row.estimate)
        )
        .unwrap();
    }

    emit(&args.output, text_out, csv_out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

/// Parses `field=v1,v2,...` and instantiates one geometry per value.
fn sweep_geometries(base: &PipelineGeometry, spec: &str) -> Result<Vec<PipelineGeometry>> {
    let Some((field, values)) = spec.split_once('=') else {
        bail!("--sweep expects `field=v1,v2,...`, got `{spec}`");
    };
    let field = field.trim();
    let mut out = Vec::new();
    for raw in values.split(',') {
        let raw = raw.trim();
        let mut g = *base;
        match field {
            "pe_rows" => g.pe_rows = parse(raw, field)?,
            "pe_cols" => g.pe_cols = parse(raw, field)?,
            "fifo_depth" => g.fifo_depth = parse(raw, field)?,
            "read_width" => g.read_width = parse(raw, field)?,
            "clock_mhz" => {
                g.clock_mhz = raw
                    .parse()
                    .with_context(|| format!("invalid clock_mhz value `{raw}`"))?
            }
            other => bail!(
                "unknown sweep field `{other}` (expected pe_rows, pe_cols, fifo_depth, \
                 read_width, or clock_mhz)"
            ),
        }
        out.push(g);
    }
    if out.is_empty() {
        bail!("--sweep got no values in `{spec}`");
    }
    Ok(out)
}

fn parse(raw: &str, field: &str) -> Result<u64> {
    raw.parse()
        .with_context(|| format!("invalid {field} value `{raw}`"))
}
