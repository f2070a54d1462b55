//! Whole-model scheduling.
//!
//! Branch structures are decided independently — no branch's cost depends
//! on another structure's assignment, so optimizing each structure in
//! isolation is globally optimal, and the greedy walk below is exact (the
//! test suite cross-checks this against brute force over all combined
//! assignments). Layers outside any structure run sequentially on the fast
//! lane; their time is an additive constant the decisions cannot affect.

use model_graph::{BranchKind, ModelGraph};
use sparse_runtime::BranchAssignments;

use crate::decide::{decide_conv_branch, decide_nonconv_branches};
use crate::error::SchedError;
use crate::profile::DeviceProfile;

/// A complete lane plan: what to hand `run_model`, plus the predicted cost
/// that justified it.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Per-structure, per-branch lanes, aligned with `branch_structures`.
    pub assignments: BranchAssignments,
    /// Predicted makespan of each structure, ms.
    pub structure_ms: Vec<f64>,
    /// Predicted time of the layers outside any structure, ms.
    pub sequential_ms: f64,
    /// `sequential_ms` plus all structure makespans.
    pub total_ms: f64,
}

/// Chooses lanes for every branch structure of `model` and predicts the
/// end-to-end time. The profile must cover exactly the model's structures.
pub fn schedule_model(
    model: &ModelGraph,
    profile: &DeviceProfile,
) -> Result<Schedule, SchedError> {
    profile.validate()?;
    profile.matches(model)?;
    let mut assignments = BranchAssignments::new();
    let mut structure_ms = Vec::new();
    for (structure, costs) in model.branch_structures.iter().zip(&profile.structures) {
        let decision = match structure.kind {
            BranchKind::ConvBranches => {
                decide_conv_branch(costs, profile.copy.tau(structure.copy_bytes))?
            }
            BranchKind::NonConvBranches => decide_nonconv_branches(costs)?,
        };
        assignments.push(decision.lanes);
        structure_ms.push(decision.makespan_ms);
    }
    let total_ms = profile.sequential_ms + structure_ms.iter().sum::<f64>();
    Ok(Schedule {
        assignments,
        structure_ms,
        sequential_ms: profile.sequential_ms,
        total_ms,
    })
}
