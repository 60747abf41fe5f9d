//! Analytical performance model of the four-stage streaming NN-search
//! pipeline: batch read, distance computation, comparison-tree reduction,
//! result accumulation, connected by FIFOs.
//!
//! Two independent routes compute the same model:
//!
//! * [`estimate_pipeline`] — closed form over the batch schedule (max-plus
//!   pipeline algebra, no cycle stepping);
//! * [`simulate_pipeline`] — an instrumented discrete walk that advances one
//!   cycle at a time through explicit stage and FIFO state machines.
//!
//! They agree exactly, by construction, and the tests hold them to that.
//!
//! This is a first-order model, not a cycle-accurate simulator: it accounts
//! for beats, fill/drain, and reduction depth only. Every coefficient lives
//! in [`cost`] for recalibration.
//!
//! Schedule semantics: a geometry only sets upper bounds on parallel
//! resources. The controller tiles work using the best canonical tiling that
//! fits (batch rows ≤ `pe_rows`, lanes ≤ `pe_cols`), so growing the array
//! never slows the modeled pipeline down — lanes a smaller tiling would not
//! use are simply left idle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Model coefficients, kept in one place.
pub mod cost {
    /// Target words stored per lane of partitioned memory; together with the
    /// lane count and read width this bounds the admissible target size.
    /// The default geometry (16 lanes, read width 1) stores 131072 points.
    pub const TARGET_WORDS_PER_LANE: u64 = 8192;

    /// Crossing one inter-stage FIFO costs its full depth in fill latency.
    /// Capacity never throttles in this first-order model.
    pub fn fifo_hop_cycles(fifo_depth: u64) -> u64 {
        fifo_depth
    }

    /// Comparison-tree depth over `lanes` candidates; a stage occupies at
    /// least one cycle per batch.
    pub fn comparison_tree_cycles(lanes: u64) -> u64 {
        lanes.next_power_of_two().trailing_zeros().max(1) as u64
    }
}

#[derive(Debug, Error)]
pub enum DataflowError {
    #[error("invalid pipeline geometry: {reason}")]
    InvalidGeometry { reason: &'static str },
    #[error("invalid input: {reason}")]
    InvalidInput { reason: &'static str },
    #[error(
        "target size {n_target} exceeds the capacity {capacity} implied by the geometry \
         (pe_cols × read_width × {words} words per lane)",
        words = cost::TARGET_WORDS_PER_LANE
    )]
    CapacityExceeded { n_target: u64, capacity: u64 },
}

/// Dimensions of the modeled PE array. Rows stage source points in parallel;
/// columns are target-broadcast lanes; `read_width` is how many points per
/// cycle the partitioned storage can deliver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineGeometry {
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub fifo_depth: u64,
    pub clock_mhz: f64,
    pub read_width: u64,
}

impl Default for PipelineGeometry {
    fn default() -> Self {
        Self {
            pe_rows: 256,
            pe_cols: 16,
            fifo_depth: 8,
            clock_mhz: 200.0,
            read_width: 1,
        }
    }
}

impl PipelineGeometry {
    pub fn validate(&self) -> Result<(), DataflowError> {
        for (value, reason) in [
            (self.pe_rows, "pe_rows must be at least 1"),
            (self.pe_cols, "pe_cols must be at least 1"),
            (self.fifo_depth, "fifo_depth must be at least 1"),
            (self.read_width, "read_width must be at least 1"),
        ] {
            if value == 0 {
                return Err(DataflowError::InvalidGeometry { reason });
            }
        }
        if !(self.clock_mhz > 0.0) {
            return Err(DataflowError::InvalidGeometry {
                reason: "clock_mhz must be positive",
            });
        }
        Ok(())
    }

    /// Largest target cloud the partitioned storage can hold.
    pub fn target_capacity(&self) -> u64 {
        self.pe_cols * self.read_width * cost::TARGET_WORDS_PER_LANE
    }
}

/// Modeled outcome for one (geometry, source size, target size) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineEstimate {
    pub total_cycles: u64,
    /// Busy cycles per stage: (read, distance, compare, accumulate).
    pub per_stage_cycles: [u64; 4],
    /// Source points retired per cycle over the whole run.
    pub steady_state_throughput: f64,
    pub latency_ms: f64,
    /// Batch rows the controller actually used (≤ `pe_rows`).
    pub batch_rows: u64,
    /// Lanes the controller actually used (≤ `pe_cols`).
    pub lanes: u64,
}

/// Per-batch stage latencies, all ≥ 1 cycle.
///
/// * read: the batch loads at `read_width` points per cycle;
/// * distance: the whole target streams across the lanes,
///   `ceil(n_target / (lanes · read_width))` beats;
/// * compare: the per-batch comparison-tree drain, `log₂(lanes)` deep;
/// * accumulate: winners retire one per cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BatchLatency {
    stages: [u64; 4],
}

fn batch_latency(batch_points: u64, n_target: u64, lanes: u64, read_width: u64) -> BatchLatency {
    let read = batch_points.div_ceil(read_width);
    let distance = n_target.div_ceil(lanes * read_width);
    let compare = cost::comparison_tree_cycles(lanes);
    let accumulate = batch_points;
    BatchLatency {
        stages: [read, distance, compare, accumulate],
    }
}

/// The tiling the controller settles on: batch rows and lane count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tiling {
    rows: u64,
    lanes: u64,
}

/// Batch schedule for a tiling: `batches - 1` full batches of `rows` points
/// and one trailing batch with the remainder.
#[derive(Debug, Clone, Copy)]
struct Schedule {
    batches: u64,
    body: BatchLatency,
    tail: BatchLatency,
}

fn schedule(tiling: Tiling, n_source: u64, n_target: u64, read_width: u64) -> Schedule {
    let batches = n_source.div_ceil(tiling.rows);
    let tail_points = n_source - (batches - 1) * tiling.rows;
    Schedule {
        batches,
        body: batch_latency(tiling.rows, n_target, tiling.lanes, read_width),
        tail: batch_latency(tail_points, n_target, tiling.lanes, read_width),
    }
}

/// Closed-form makespan of the four-stage pipeline over a schedule.
///
/// With constant body latencies `L_s`, hop latency `H` between stages, and
/// batch `b` (0-based), the recurrence
/// `start_s(b) = max(finish_{s-1}(b) + H, finish_s(b-1))` solves to
/// `start_s(b) = C_s + b·max_u(L_u)` where `C_s = Σ_{u<s}(L_u + H)`; the
/// ragged tail batch then takes one explicit recurrence step.
fn analytic_makespan(sched: &Schedule, hop: u64) -> u64 {
    let l = &sched.body.stages;
    if sched.batches == 1 {
        let mut finish = 0;
        for s in 0..4 {
            let start = if s == 0 { 0 } else { finish + hop };
            finish = start + sched.tail.stages[s];
        }
        return finish;
    }

    let bottleneck = *l.iter().max().expect("four stages");
    let mut c = [0u64; 4];
    for s in 1..4 {
        c[s] = c[s - 1] + l[s - 1] + hop;
    }
    // Finish times of the last body batch (index batches - 2).
    let body_count = sched.batches - 1;
    let mut finish = [0u64; 4];
    for s in 0..4 {
        finish[s] = c[s] + (body_count - 1) * bottleneck + l[s];
    }
    // One recurrence step for the tail batch.
    let mut tail_finish = 0;
    for s in 0..4 {
        let upstream = if s == 0 { 0 } else { tail_finish + hop };
        let start = upstream.max(finish[s]);
        tail_finish = start + sched.tail.stages[s];
    }
    tail_finish
}

fn per_stage_busy(sched: &Schedule) -> [u64; 4] {
    let mut out = [0u64; 4];
    for s in 0..4 {
        out[s] = (sched.batches - 1) * sched.body.stages[s] + sched.tail.stages[s];
    }
    out
}

/// Canonical tilings the controller considers: for every achievable batch
/// count the smallest rows producing it, and for every achievable beat count
/// the smallest lane count producing it. Growing `pe_rows`/`pe_cols` only
/// adds candidates, which is what makes the modeled latency monotone in the
/// array size.
fn candidate_tilings(geometry: &PipelineGeometry, n_source: u64, n_target: u64) -> Vec<Tiling> {
    let max_rows = geometry.pe_rows.min(n_source);
    let mut rows = Vec::new();
    let mut batches = n_source.div_ceil(max_rows);
    loop {
        let r = n_source.div_ceil(batches);
        rows.push(r);
        if r == 1 {
            break;
        }
        batches = n_source.div_ceil(r - 1);
    }

    let target_words = n_target.div_ceil(geometry.read_width);
    let max_lanes = geometry.pe_cols.min(target_words.max(1));
    let mut lanes = Vec::new();
    let mut beats = target_words.div_ceil(max_lanes);
    loop {
        let c = target_words.div_ceil(beats);
        lanes.push(c);
        if c == 1 {
            break;
        }
        beats = target_words.div_ceil(c - 1);
    }

    let mut tilings = Vec::with_capacity(rows.len() * lanes.len());
    for &r in &rows {
        for &c in &lanes {
            tilings.push(Tiling { rows: r, lanes: c });
        }
    }
    tilings
}

fn checked_inputs(
    geometry: &PipelineGeometry,
    n_source: u64,
    n_target: u64,
) -> Result<(), DataflowError> {
    geometry.validate()?;
    if n_source == 0 {
        return Err(DataflowError::InvalidInput {
            reason: "n_source must be at least 1",
        });
    }
    if n_target == 0 {
        return Err(DataflowError::InvalidInput {
            reason: "n_target must be at least 1",
        });
    }
    let capacity = geometry.target_capacity();
    if n_target > capacity {
        return Err(DataflowError::CapacityExceeded { n_target, capacity });
    }
    Ok(())
}

fn best_tiling(geometry: &PipelineGeometry, n_source: u64, n_target: u64) -> (Tiling, Schedule) {
    let hop = cost::fifo_hop_cycles(geometry.fifo_depth);
    candidate_tilings(geometry, n_source, n_target)
        .into_iter()
        .map(|t| {
            let s = schedule(t, n_source, n_target, geometry.read_width);
            (analytic_makespan(&s, hop), t, s)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.rows.cmp(&b.1.rows)))
        .map(|(_, t, s)| (t, s))
        .expect("candidate set is never empty")
}

/// Closed-form latency estimate for searching `n_source` points against
/// `n_target` points on the given geometry.
pub fn estimate_pipeline(
    geometry: &PipelineGeometry,
    n_source: u64,
    n_target: u64,
) -> Result<PipelineEstimate, DataflowError> {
    checked_inputs(geometry, n_source, n_target)?;
    let hop = cost::fifo_hop_cycles(geometry.fifo_depth);
    let (tiling, sched) = best_tiling(geometry, n_source, n_target);
    let total_cycles = analytic_makespan(&sched, hop);
    Ok(PipelineEstimate {
        total_cycles,
        per_stage_cycles: per_stage_busy(&sched),
        steady_state_throughput: n_source as f64 / total_cycles as f64,
        latency_ms: total_cycles as f64 / (geometry.clock_mhz * 1e3),
        batch_rows: tiling.rows,
        lanes: tiling.lanes,
    })
}

/// Instrumented discrete walk of the same model: explicit stage and FIFO
/// state machines advanced one cycle at a time, counting busy cycles as they
/// happen. Slower than [`estimate_pipeline`] but shares none of its algebra.
pub fn simulate_pipeline(
    geometry: &PipelineGeometry,
    n_source: u64,
    n_target: u64,
) -> Result<PipelineEstimate, DataflowError> {
    checked_inputs(geometry, n_source, n_target)?;
    let hop = cost::fifo_hop_cycles(geometry.fifo_depth);
    let (tiling, sched) = best_tiling(geometry, n_source, n_target);

    let latency_of = |batch: u64| -> [u64; 4] {
        if batch == sched.batches - 1 {
            sched.tail.stages
        } else {
            sched.body.stages
        }
    };

    // Stage state: the batch in flight and cycles left on it.
    let mut stages: [Option<(u64, u64)>; 4] = [None; 4];
    // FIFO entries become visible downstream `hop` cycles after the push.
    let mut fifos: [std::collections::VecDeque<(u64, u64)>; 3] = Default::default();
    let mut next_batch = 0u64;
    let mut busy = [0u64; 4];
    let mut now = 0u64;

    loop {
        // Issue: an idle stage picks up its next batch if one is visible.
        for s in 0..4 {
            if stages[s].is_some() {
                continue;
            }
            if s == 0 {
                if next_batch < sched.batches {
                    stages[0] = Some((next_batch, latency_of(next_batch)[0]));
                    next_batch += 1;
                }
            } else if let Some(&(ready_at, batch)) = fifos[s - 1].front() {
                if ready_at <= now {
                    fifos[s - 1].pop_front();
                    stages[s] = Some((batch, latency_of(batch)[s]));
                }
            }
        }

        // Burn one cycle in every busy stage.
        for s in 0..4 {
            if let Some((batch, remaining)) = stages[s] {
                busy[s] += 1;
                if remaining == 1 {
                    stages[s] = None;
                    if s < 3 {
                        fifos[s].push_back((now + 1 + hop, batch));
                    } else if batch == sched.batches - 1 {
                        let total_cycles = now + 1;
                        return Ok(PipelineEstimate {
                            total_cycles,
                            per_stage_cycles: busy,
                            steady_state_throughput: n_source as f64 / total_cycles as f64,
                            latency_ms: total_cycles as f64 / (geometry.clock_mhz * 1e3),
                            batch_rows: tiling.rows,
                            lanes: tiling.lanes,
                        });
                    }
                } else {
                    stages[s] = Some((batch, remaining - 1));
                }
            }
        }

        now += 1;
    }
}
