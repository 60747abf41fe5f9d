//! Report types and rendering.
//!
//! CSV schemas:
//! * `register` / `bench`: `frame,rmse_m,latency_ms,iterations,converged`
//!   (plus a trailing `io_ms` column under `--include-io`);
//! * `compare`: `backend,avg_rmse_m,avg_latency_ms,speedup_vs_baseline`;
//! * `model`: one row per evaluated geometry, see [`model_csv_header`].
//!
//! Numeric fields print with shortest round-trip formatting, so parsing a
//! report back recovers the exact values. Registration outcomes are
//! deterministic for fixed inputs and seed; measured latency fields are the
//! one exception.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fpps_core::dataflow::{PipelineEstimate, PipelineGeometry};
use fpps_core::geometry::RigidTransform;

use crate::cli::{OutputFormat, OutputOpts};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub rmse_m: f64,
    pub latency_ms: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub io_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    pub frames: usize,
    pub converged: usize,
    pub average_rmse_m: f64,
    pub average_latency_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup_vs_baseline: Option<f64>,
}

/// Per-pair deviation from ground-truth relative motion. Reported in the
/// pose frame as supplied; no sensor-to-sensor calibration is applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairError {
    pub frame: usize,
    pub translation_error_m: f64,
    pub rotation_error_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub label: String,
    pub per_pair: Vec<PairError>,
    pub average_translation_error_m: f64,
    pub average_rotation_error_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub backend: String,
    pub records: Vec<FrameRecord>,
    pub aggregates: Aggregates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryReport>,
}

impl BenchReport {
    pub fn new(backend: String, records: Vec<FrameRecord>) -> Self {
        let frames = records.len();
        let converged = records.iter().filter(|r| r.converged).count();
        let average_rmse_m = mean(records.iter().map(|r| r.rmse_m));
        let average_latency_ms = mean(records.iter().map(|r| r.latency_ms));
        Self {
            backend,
            records,
            aggregates: Aggregates {
                frames,
                converged,
                average_rmse_m,
                average_latency_ms,
                baseline: None,
                speedup_vs_baseline: None,
            },
            trajectory: None,
        }
    }

    pub fn with_baseline(mut self, name: String, baseline_avg_latency_ms: f64) -> Self {
        self.aggregates.speedup_vs_baseline =
            Some(baseline_avg_latency_ms / self.aggregates.average_latency_ms);
        self.aggregates.baseline = Some(name);
        self
    }

    pub fn to_csv(&self, include_io: bool) -> String {
        let mut out = String::new();
        if include_io {
            out.push_str("frame,rmse_m,latency_ms,iterations,converged,io_ms\n");
        } else {
            out.push_str("frame,rmse_m,latency_ms,iterations,converged\n");
        }
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{}",
                r.frame, r.rmse_m, r.latency_ms, r.iterations, r.converged
            )
            .unwrap();
            if include_io {
                write!(out, ",{}", r.io_ms.unwrap_or(0.0)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "backend: {}", self.backend).unwrap();
        writeln!(out, "{:>6} {:>12} {:>12} {:>6} {:>10}", "frame", "rmse_m", "latency_ms", "iters", "converged").unwrap();
        for r in &self.records {
            writeln!(
                out,
                "{:>6} {:>12.6} {:>12.3} {:>6} {:>10}",
                r.frame, r.rmse_m, r.latency_ms, r.iterations, r.converged
            )
            .unwrap();
        }
        let a = &self.aggregates;
        writeln!(
            out,
            "frames: {} ({} converged)  avg rmse: {:.6} m  avg latency: {:.3} ms",
            a.frames, a.converged, a.average_rmse_m, a.average_latency_ms
        )
        .unwrap();
        if let (Some(name), Some(speedup)) = (&a.baseline, a.speedup_vs_baseline) {
            writeln!(out, "speedup vs {name}: {speedup:.2}x").unwrap();
        }
        if let Some(t) = &self.trajectory {
            writeln!(out, "{}", t.label).unwrap();
            writeln!(
                out,
                "  avg translation error: {:.6} m  avg rotation error: {:.6} rad",
                t.average_translation_error_m, t.average_rotation_error_rad
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRun {
    pub backend: String,
    pub speedup_vs_baseline: f64,
    pub report: BenchReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub baseline: String,
    pub equivalent: bool,
    pub runs: Vec<CompareRun>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("backend,avg_rmse_m,avg_latency_ms,speedup_vs_baseline\n");
        for run in &self.runs {
            writeln!(
                out,
                "{},{},{},{}",
                run.backend,
                run.report.aggregates.average_rmse_m,
                run.report.aggregates.average_latency_ms,
                run.speedup_vs_baseline
            )
            .unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "results identical across backends; speedups relative to `{}`",
            self.baseline
        )
        .unwrap();
        writeln!(
            out,
            "{:>10} {:>12} {:>14} {:>9}",
            "backend", "avg_rmse_m", "avg_latency_ms", "speedup"
        )
        .unwrap();
        for run in &self.runs {
            writeln!(
                out,
                "{:>10} {:>12.6} {:>14.3} {:>8.2}x",
                run.backend,
                run.report.aggregates.average_rmse_m,
                run.report.aggregates.average_latency_ms,
                run.speedup_vs_baseline
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegisterReport {
    pub backend: String,
    pub converged: bool,
    pub iterations: usize,
    pub rmse_m: f64,
    pub latency_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub io_ms: Option<f64>,
    /// Row-major 4×4 homogeneous final transform.
    pub transform: [[f64; 4]; 4],
}

impl RegisterReport {
    pub fn from_parts(
        backend: String,
        transform: &RigidTransform,
        converged: bool,
        iterations: usize,
        rmse_m: f64,
        latency_ms: f64,
        io_ms: Option<f64>,
    ) -> Self {
        let h = transform.to_homogeneous();
        let mut m = [[0.0f64; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = h[(r, c)];
            }
        }
        Self {
            backend,
            converged,
            iterations,
            rmse_m,
            latency_ms,
            io_ms,
            transform: m,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "backend: {}", self.backend).unwrap();
        writeln!(
            out,
            "converged: {} ({} iterations)",
            self.converged, self.iterations
        )
        .unwrap();
        writeln!(out, "fitness rmse: {:.6} m", self.rmse_m).unwrap();
        match self.io_ms {
            Some(io) => writeln!(
                out,
                "latency: {:.3} ms align, {:.3} ms file io",
                self.latency_ms, io
            )
            .unwrap(),
            None => writeln!(out, "latency: {:.3} ms (align only)", self.latency_ms).unwrap(),
        }
        writeln!(out, "final transform:").unwrap();
        for row in &self.transform {
            writeln!(
                out,
                "  [{:>12.8} {:>12.8} {:>12.8} {:>12.6}]",
                row[0], row[1], row[2], row[3]
            )
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,rmse_m,latency_ms,iterations,converged\n");
        writeln!(
            out,
            "0,{},{},{},{}",
            self.rmse_m, self.latency_ms, self.iterations, self.converged
        )
        .unwrap();
        out
    }
}

pub fn model_csv_header() -> &'static str {
    "pe_rows,pe_cols,read_width,fifo_depth,clock_mhz,n_source,n_target,\
     read_cycles,distance_cycles,compare_cycles,accumulate_cycles,\
     total_cycles,batch_rows,lanes,throughput_pts_per_cycle,latency_ms"
}

pub fn model_csv_row(
    g: &PipelineGeometry,
    n_source: u64,
    n_target: u64,
    e: &PipelineEstimate,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        g.pe_rows,
        g.pe_cols,
        g.read_width,
        g.fifo_depth,
        g.clock_mhz,
        n_source,
        n_target,
        e.per_stage_cycles[0],
        e.per_stage_cycles[1],
        e.per_stage_cycles[2],
        e.per_stage_cycles[3],
        e.total_cycles,
        e.batch_rows,
        e.lanes,
        e.steady_state_throughput,
        e.latency_ms
    )
}

pub fn model_text(
    g: &PipelineGeometry,
    n_source: u64,
    n_target: u64,
    e: &PipelineEstimate,
) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "geometry: {}x{} PEs, read width {}, fifo depth {}, {} MHz",
        g.pe_rows, g.pe_cols, g.read_width, g.fifo_depth, g.clock_mhz
    )
    .unwrap();
    writeln!(out, "inputs: {n_source} source x {n_target} target points").unwrap();
    writeln!(
        out,
        "tiling: {} batch rows, {} lanes",
        e.batch_rows, e.lanes
    )
    .unwrap();
    writeln!(
        out,
        "stage cycles: read {}, distance {}, compare {}, accumulate {}",
        e.per_stage_cycles[0], e.per_stage_cycles[1], e.per_stage_cycles[2], e.per_stage_cycles[3]
    )
    .unwrap();
    writeln!(
        out,
        "total: {} cycles  throughput: {:.6} points/cycle  latency: {:.3} ms",
        e.total_cycles, e.steady_state_throughput, e.latency_ms
    )
    .unwrap();
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Renders the report in the requested format, writes it to stdout, and
/// mirrors the same bytes to `--out` when given.
pub fn emit<S: Serialize>(
    output: &OutputOpts,
    text: String,
    csv: String,
    json_payload: &S,
) -> Result<()> {
    let rendered = match output.format {
        OutputFormat::Text => text,
        OutputFormat::Csv => csv,
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(json_payload).context("serializing report")?;
            s.push('\n');
            s
        }
    };
    print!("{rendered}");
    if let Some(path) = &output.out {
        write_report(path, &rendered)?;
    }
    Ok(())
}

fn write_report(path: &Path, rendered: &str) -> Result<()> {
    fs::write(path, rendered).with_context(|| format!("writing report to {}", path.display()))
}
