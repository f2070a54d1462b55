//! Offline profiling: measure a model's branch costs on this machine.
//!
//! Each branch is timed on each lane by running the whole model with every
//! branch forced onto that lane and reading the per-branch trace events;
//! the median of five runs (after one warmup) smooths scheduler noise. The
//! copy model comes from timing buffer copies at a few sizes and fitting a
//! line. Both lanes execute on this host — the fast lane through the tuned
//! parallel kernel path, the general lane through the serial one — so the
//! measured contrast is a software-level stand-in for a real two-device
//! split; the decision machinery downstream is indifferent to the source
//! of the numbers.

use std::hint::black_box;
use std::time::Instant;

use model_graph::ModelGraph;
use sparse_runtime::{run_model, BranchAssignments, Lane, PackedModel};

use crate::error::SchedError;
use crate::profile::{CopyModel, DeviceProfile, StructureCosts};

/// Timed runs per lane (one extra warmup run is not counted).
pub const PROFILE_RUNS: usize = 5;

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2.0
    }
}

/// Runs the model `PROFILE_RUNS` times with every branch on `lane` and
/// returns per-structure branch-time samples (ms) plus samples of the
/// summed non-branch layer time.
fn time_lane(
    model: &ModelGraph,
    packed: &PackedModel,
    input: &[f32],
    lane: Lane,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>), SchedError> {
    let assignments: BranchAssignments = model
        .branch_structures
        .iter()
        .map(|s| vec![lane; s.branches.len()])
        .collect();
    let mut branch_samples: Vec<Vec<Vec<f64>>> = model
        .branch_structures
        .iter()
        .map(|s| vec![Vec::with_capacity(PROFILE_RUNS); s.branches.len()])
        .collect();
    let mut sequential_samples = Vec::with_capacity(PROFILE_RUNS);
    run_model(model, packed, input, Some(&assignments))?;
    for _ in 0..PROFILE_RUNS {
        let result = run_model(model, packed, input, Some(&assignments))?;
        let mut sequential = 0.0;
        for event in &result.trace {
            let ms = event.duration.as_secs_f64() * 1e3;
            match event.branch {
                Some((s, b)) => branch_samples[s][b].push(ms),
                None => sequential += ms,
            }
        }
        sequential_samples.push(sequential);
    }
    Ok((branch_samples, sequential_samples))
}

/// Times one buffer copy of `bytes` and returns the median of five, ms.
fn copy_time_ms(bytes: usize) -> f64 {
    let source = vec![0u8; bytes];
    black_box(source.to_vec());
    let samples = (0..PROFILE_RUNS)
        .map(|_| {
            let started = Instant::now();
            let copy = source.to_vec();
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            black_box(&copy);
            elapsed
        })
        .collect();
    median(samples)
}

/// Fits `tau(bytes) = base + slope * bytes` to the measured copy times by
/// least squares, clamping both constants to zero so the model stays
/// nonnegative and nondecreasing even under timing noise.
fn fit_copy_model() -> CopyModel {
    let sizes = [256 * 1024usize, 1024 * 1024, 4 * 1024 * 1024];
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&bytes| (bytes as f64, copy_time_ms(bytes)))
        .collect();
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let covariance: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let variance: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let slope = (covariance / variance).max(0.0);
    let base = (mean_y - slope * mean_x).max(0.0);
    CopyModel {
        base_ms: base,
        ms_per_byte: slope,
    }
}

/// Measures a device profile for `model`: every branch on every lane, the
/// sequential remainder, and the copy-cost line. The result validates and
/// covers the model by construction.
pub fn profile_branches(
    model: &ModelGraph,
    packed: &PackedModel,
    input: &[f32],
) -> Result<DeviceProfile, SchedError> {
    let (fast_samples, sequential_samples) = time_lane(model, packed, input, Lane::Fast)?;
    let (general_samples, _) = time_lane(model, packed, input, Lane::General)?;
    let structures = fast_samples
        .into_iter()
        .zip(general_samples)
        .map(|(t_g, t_c)| StructureCosts {
            t_g: t_g.into_iter().map(median).collect(),
            t_c: t_c.into_iter().map(median).collect(),
        })
        .collect();
    let profile = DeviceProfile {
        structures,
        copy: fit_copy_model(),
        sequential_ms: median(sequential_samples),
    };
    profile.validate()?;
    Ok(profile)
}
