//! Per-structure lane decisions.
//!
//! A branch structure's branches are mutually independent, so the only
//! question is which lane runs each branch. Branches sharing a lane run
//! sequentially; the two lanes overlap; the structure finishes when the
//! slower lane does. That makespan is what both deciders minimize, each
//! under the cost model appropriate to its structure kind:
//!
//! - Conv structures pair one compute-heavy branch, pinned to the fast
//!   lane, with one candidate for offload. Offloading charges the copy
//!   cost for the tensors that cross lanes.
//! - Pointwise/reshape head structures enumerate all `2^k` assignments;
//!   their operands already live on both lanes, so no copy is charged.
//!
//! Ties prefer fewer fast-lane branches (the fast lane is the contended
//! resource), then the lexicographically first assignment with the general
//! lane ordered before the fast lane.

use sparse_runtime::Lane;

use crate::error::SchedError;
use crate::profile::StructureCosts;

/// Cap on branches per enumerated structure; the search is `2^k`.
pub const MAX_ENUM_BRANCHES: usize = 20;

/// One structure's chosen assignment and its predicted makespan.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureDecision {
    /// Lane per branch, in the structure's branch order.
    pub lanes: Vec<Lane>,
    pub makespan_ms: f64,
}

fn check_costs(costs: &StructureCosts) -> Result<(), SchedError> {
    if costs.t_g.len() != costs.t_c.len() {
        return Err(SchedError::InvalidProfile(format!(
            "{} t_g entries vs {} t_c entries",
            costs.t_g.len(),
            costs.t_c.len()
        )));
    }
    for &t in costs.t_g.iter().chain(&costs.t_c) {
        if !t.is_finite() || t < 0.0 {
            return Err(SchedError::InvalidProfile(format!(
                "branch time is {t}, must be finite and >= 0"
            )));
        }
    }
    Ok(())
}

/// Decides a two-branch conv structure given the one-way copy cost in ms.
///
/// The branch with the larger fast-lane time (ties keep declaration order)
/// is pinned to the fast lane. The remaining choice is two-way: run the
/// lighter branch concurrently on the general lane, finishing in
/// `max(t_g_heavy, t_c_light + copy_ms)`, or stack both on the fast lane,
/// finishing in `t_g_heavy + t_g_light`. The smaller wins; a tie goes to
/// the overlapped option, which keeps one branch off the fast lane.
pub fn decide_conv_branch(
    costs: &StructureCosts,
    copy_ms: f64,
) -> Result<StructureDecision, SchedError> {
    check_costs(costs)?;
    if !copy_ms.is_finite() || copy_ms < 0.0 {
        return Err(SchedError::InvalidProfile(format!(
            "copy cost is {copy_ms}, must be finite and >= 0"
        )));
    }
    if costs.t_g.len() != 2 {
        return Err(SchedError::ConvBranchCount {
            found: costs.t_g.len(),
        });
    }
    let (heavy, light) = if costs.t_g[0] >= costs.t_g[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let t_par = costs.t_g[heavy].max(costs.t_c[light] + copy_ms);
    let t_ser = costs.t_g[heavy] + costs.t_g[light];
    let mut lanes = vec![Lane::Fast; 2];
    let makespan_ms = if t_par <= t_ser {
        lanes[light] = Lane::General;
        t_par
    } else {
        t_ser
    };
    Ok(StructureDecision { lanes, makespan_ms })
}

/// Decides a k-branch head structure by exhaustive enumeration.
///
/// Every one of the `2^k` assignments is costed as
/// `max(sum of general-lane times, sum of fast-lane times)` — no copy
/// charge — and the minimum wins under the tie-break described in the
/// module docs. Errors when `k` exceeds [`MAX_ENUM_BRANCHES`].
pub fn decide_nonconv_branches(costs: &StructureCosts) -> Result<StructureDecision, SchedError> {
    check_costs(costs)?;
    let k = costs.t_g.len();
    if k > MAX_ENUM_BRANCHES {
        return Err(SchedError::TooManyBranches { found: k });
    }
    // Bit b of a mask puts branch b on the fast lane. The tie-break key
    // reorders those bits so branch 0 is most significant and "fast" sorts
    // after "general": smaller key = lexicographically earlier assignment.
    let mut best_mask = 0u32;
    let mut best_total = f64::INFINITY;
    let mut best_key = (u32::MAX, u32::MAX);
    for mask in 0..1u32 << k {
        let mut on_general = 0.0;
        let mut on_fast = 0.0;
        let mut fast_count = 0;
        for b in 0..k {
            if mask >> b & 1 == 1 {
                on_fast += costs.t_g[b];
                fast_count += 1;
            } else {
                on_general += costs.t_c[b];
            }
        }
        let total = on_general.max(on_fast);
        let lex = (0..k).fold(0u32, |v, b| v << 1 | (mask >> b & 1));
        if total < best_total || (total == best_total && (fast_count, lex) < best_key) {
            best_mask = mask;
            best_total = total;
            best_key = (fast_count, lex);
        }
    }
    let lanes = (0..k)
        .map(|b| {
            if best_mask >> b & 1 == 1 {
                Lane::Fast
            } else {
                Lane::General
            }
        })
        .collect();
    Ok(StructureDecision {
        lanes,
        makespan_ms: best_total,
    })
}
