//! Measured (or fixture-supplied) branch costs for one machine.
//!
//! A profile holds everything the decision formulas consume: per-branch
//! execution times on each lane, a linear copy-cost model for tensors that
//! cross lanes, and the sequential time of the layers outside any branch
//! structure. Profiles round-trip through a human-readable TOML file so a
//! schedule computed from a checked-in fixture is reproducible to the bit.

use std::fs;
use std::path::Path;

use model_graph::ModelGraph;
use serde::{Deserialize, Serialize};

use crate::error::SchedError;

/// Cost of moving `bytes` across lanes: `base_ms + ms_per_byte * bytes`.
///
/// `ms_per_byte` is the reciprocal of the copy bandwidth; both constants are
/// nonnegative, so the cost is nondecreasing in the buffer size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyModel {
    pub base_ms: f64,
    pub ms_per_byte: f64,
}

impl CopyModel {
    /// Predicted one-way transfer time in milliseconds.
    pub fn tau(&self, bytes: u64) -> f64 {
        self.base_ms + self.ms_per_byte * bytes as f64
    }
}

/// Per-branch times for one branch structure, milliseconds. Index `b` holds
/// branch `b`'s cost on the fast lane (`t_g`) and general lane (`t_c`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureCosts {
    pub t_g: Vec<f64>,
    pub t_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// Aligned index-for-index with the model's `branch_structures`.
    /// Defaults to empty so a profile for a branch-free model — which
    /// renders with no `[[structures]]` blocks at all — parses back.
    #[serde(default)]
    pub structures: Vec<StructureCosts>,
    pub copy: CopyModel,
    /// Total time of all layers outside branch structures, run in order.
    pub sequential_ms: f64,
}

impl DeviceProfile {
    /// Rejects negative or non-finite times and ragged cost tables.
    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |what: String| Err(SchedError::InvalidProfile(what));
        let check = |value: f64, what: &str| {
            if value.is_finite() && value >= 0.0 {
                Ok(())
            } else {
                bad(format!("{what} is {value}, must be finite and >= 0"))
            }
        };
        check(self.sequential_ms, "sequential_ms")?;
        check(self.copy.base_ms, "copy base_ms")?;
        check(self.copy.ms_per_byte, "copy ms_per_byte")?;
        for (s, costs) in self.structures.iter().enumerate() {
            if costs.t_g.len() != costs.t_c.len() {
                return bad(format!(
                    "structure {s} has {} t_g entries but {} t_c entries",
                    costs.t_g.len(),
                    costs.t_c.len()
                ));
            }
            for (b, (&g, &c)) in costs.t_g.iter().zip(&costs.t_c).enumerate() {
                check(g, &format!("t_g[{s}][{b}]"))?;
                check(c, &format!("t_c[{s}][{b}]"))?;
            }
        }
        Ok(())
    }

    /// Checks that the profile covers every branch of every structure of
    /// `model`, exactly.
    pub fn matches(&self, model: &ModelGraph) -> Result<(), SchedError> {
        if self.structures.len() != model.branch_structures.len() {
            return Err(SchedError::StructureCount {
                expected: model.branch_structures.len(),
                found: self.structures.len(),
            });
        }
        for (s, (costs, structure)) in self
            .structures
            .iter()
            .zip(&model.branch_structures)
            .enumerate()
        {
            let branches = structure.branches.len();
            if costs.t_g.len() != branches || costs.t_c.len() != branches {
                return Err(SchedError::MissingEntry {
                    structure: s,
                    expected: branches,
                    found: costs.t_g.len().min(costs.t_c.len()),
                });
            }
        }
        Ok(())
    }
}

/// Parses a profile from its TOML text and validates it.
pub fn parse_profile(text: &str) -> Result<DeviceProfile, SchedError> {
    let profile: DeviceProfile = toml::from_str(text)?;
    profile.validate()?;
    Ok(profile)
}

/// Renders a profile as TOML. Floats use shortest round-trip formatting, so
/// `parse_profile(&render_profile(p))` reproduces `p` bit-for-bit.
pub fn render_profile(profile: &DeviceProfile) -> Result<String, SchedError> {
    Ok(toml::to_string_pretty(profile)?)
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<DeviceProfile, SchedError> {
    parse_profile(&fs::read_to_string(path)?)
}

pub fn save_profile(profile: &DeviceProfile, path: impl AsRef<Path>) -> Result<(), SchedError> {
    profile.validate()?;
    Ok(fs::write(path, render_profile(profile)?)?)
}
