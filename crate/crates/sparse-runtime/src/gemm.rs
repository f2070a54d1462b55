//! Sparse GEMM over packed layers.
//!
//! `output = dense(packed) · input`, touching only kept columns. The three
//! tuning knobs trade scheduling granularity for locality without touching
//! the arithmetic: per output element the accumulation order is always
//! ascending global column, so results are bitwise identical across tile
//! sizes, worker counts, and any band permutation.
//!
//! Parallelism splits over groups of bands — each band owns a disjoint set
//! of output rows, computed into a task-local buffer and written back to the
//! band's original row range afterwards (inverting the permutation).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::SparseError;
use crate::packed::PackedSparseLayer;

/// Execution parameters for one (layer, device-class) pairing: bands per
/// parallel task, batch columns per inner tile, and worker threads. Tiles
/// larger than the matrix clamp to it at execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TuningConfig {
    pub row_tile: usize,
    pub col_tile: usize,
    pub workers: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            row_tile: 4,
            col_tile: 32,
            workers: available_workers(),
        }
    }
}

impl TuningConfig {
    pub fn new(row_tile: usize, col_tile: usize, workers: usize) -> Result<Self, SparseError> {
        if row_tile == 0 || col_tile == 0 || workers == 0 {
            return Err(SparseError::DimMismatch(format!(
                "tuning parameters must be >= 1, got {row_tile}/{col_tile}/{workers}"
            )));
        }
        Ok(TuningConfig { row_tile, col_tile, workers })
    }

    /// Single-threaded variant of the default, for the general-purpose lane.
    pub fn serial() -> Self {
        TuningConfig { workers: 1, ..TuningConfig::default() }
    }
}

pub fn available_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `input` is C x batch row-major; returns M x batch row-major.
pub fn sparse_gemm(
    packed: &PackedSparseLayer,
    input: &[f32],
    batch: usize,
    tuning: &TuningConfig,
) -> Result<Vec<f32>, SparseError> {
    Ok(gemm_inner(packed, input, batch, tuning)?.0)
}

/// [`sparse_gemm`] plus the exact number of multiplies the inner loop
/// performed — the work-proportionality instrument.
pub fn sparse_gemm_counted(
    packed: &PackedSparseLayer,
    input: &[f32],
    batch: usize,
    tuning: &TuningConfig,
) -> Result<(Vec<f32>, u64), SparseError> {
    gemm_inner(packed, input, batch, tuning)
}

struct BandTask {
    /// First original output row.
    row_start: usize,
    rows: usize,
    /// Block range `tile_start..tile_start + col_blocks` in physical order.
    tile_start: usize,
    /// Start into `locals` for the first block of the band.
    local_start: usize,
}

fn gemm_inner(
    packed: &PackedSparseLayer,
    input: &[f32],
    batch: usize,
    tuning: &TuningConfig,
) -> Result<(Vec<f32>, u64), SparseError> {
    let (m, c) = (packed.rows(), packed.cols());
    if input.len() != c * batch {
        return Err(SparseError::DimMismatch(format!(
            "layer `{}` expects {c} input rows x {batch}, got {} values",
            packed.layer_id,
            input.len()
        )));
    }
    let mut out = vec![0f32; m * batch];
    if batch == 0 {
        return Ok((out, 0));
    }

    let grid = packed.grid();
    let cb = grid.col_blocks;
    let mut tasks = Vec::with_capacity(grid.bands);
    let mut local_at = 0usize;
    for p in 0..grid.bands {
        let band = packed.block_order[p] as usize;
        let rows = grid.band_rows(band);
        tasks.push(BandTask {
            row_start: rows.start,
            rows: rows.len(),
            tile_start: p * cb,
            local_start: local_at,
        });
        local_at += packed.counts[p * cb..(p + 1) * cb]
            .iter()
            .map(|&n| n as usize)
            .sum::<usize>();
    }

    let col_tile = tuning.col_tile.min(batch);
    let run_group = |group: &[BandTask]| -> (Vec<f32>, u64) {
        let rows_total: usize = group.iter().map(|t| t.rows).sum();
        let mut local_out = vec![0f32; rows_total * batch];
        let mut macs = 0u64;
        let mut row_base = 0usize;
        for task in group {
            band_kernel(
                packed,
                task,
                input,
                batch,
                col_tile,
                &mut local_out[row_base * batch..(row_base + task.rows) * batch],
                &mut macs,
            );
            row_base += task.rows;
        }
        (local_out, macs)
    };

    let groups: Vec<&[BandTask]> = tasks.chunks(tuning.row_tile.max(1)).collect();
    let results: Vec<(Vec<f32>, u64)> = if tuning.workers <= 1 || groups.len() <= 1 {
        groups.iter().map(|g| run_group(g)).collect()
    } else {
        pool_for(tuning.workers).install(|| groups.par_iter().map(|g| run_group(g)).collect())
    };

    // Write-back: route each band's rows to their original positions.
    let mut macs = 0u64;
    for (group, (local_out, group_macs)) in groups.iter().zip(results) {
        macs += group_macs;
        let mut row_base = 0usize;
        for task in *group {
            out[task.row_start * batch..(task.row_start + task.rows) * batch]
                .copy_from_slice(&local_out[row_base * batch..(row_base + task.rows) * batch]);
            row_base += task.rows;
        }
    }
    Ok((out, macs))
}

/// One band's rows against the whole batch. Per output element the kept
/// columns are visited in ascending global order — (column-block, local
/// index) — regardless of batch tiling.
fn band_kernel(
    packed: &PackedSparseLayer,
    task: &BandTask,
    input: &[f32],
    batch: usize,
    col_tile: usize,
    out: &mut [f32],
    macs: &mut u64,
) {
    let grid = packed.grid();
    let rows = task.rows;
    let mut bt = 0;
    while bt < batch {
        let bt_end = (bt + col_tile).min(batch);
        let mut local_at = task.local_start;
        for cb in 0..grid.col_blocks {
            let t = task.tile_start + cb;
            let count = packed.counts[t] as usize;
            let base_col = cb * packed.cfg.gn;
            let vals_at = packed.offsets[t] as usize;
            for k in 0..count {
                let col = base_col + packed.locals[local_at + k] as usize;
                let in_row = &input[col * batch..(col + 1) * batch];
                let run = &packed.values[vals_at + k * rows..vals_at + (k + 1) * rows];
                for (r, &w) in run.iter().enumerate() {
                    let out_row = &mut out[r * batch..(r + 1) * batch];
                    for b in bt..bt_end {
                        out_row[b] += w * in_row[b];
                    }
                }
                *macs += (rows * (bt_end - bt)) as u64;
            }
            local_at += count;
        }
        bt = bt_end;
    }
}

/// Thread pools keyed by worker count, built once. The tuner sweeps worker
/// counts, so repeated builds would dominate its timings.
fn pool_for(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut pools = pools.lock().unwrap();
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}
