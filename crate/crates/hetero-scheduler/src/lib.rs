//! Two-lane branch scheduling for packed models.
//!
//! A model's branch structures can overlap a fast-parallel lane ("G") and a
//! general-purpose lane ("C"). Given measured per-branch costs, this crate
//! decides which branch runs where so the predicted makespan — the finish
//! time of the slower lane, summed with the sequential remainder — is
//! minimal, exactly: every decision equals exhaustive enumeration over its
//! assignment space.
//!
//! The pieces: [`DeviceProfile`] holds the costs (measured by
//! [`profile_branches`] or loaded from a TOML fixture for reproducible
//! runs), [`decide_conv_branch`] and [`decide_nonconv_branches`] solve one
//! structure, and [`schedule_model`] walks a whole model, emitting lane
//! assignments in the exact shape `run_model` consumes.

mod decide;
mod error;
mod measure;
mod profile;
mod schedule;

pub use decide::{
    decide_conv_branch, decide_nonconv_branches, StructureDecision, MAX_ENUM_BRANCHES,
};
pub use error::SchedError;
pub use measure::{profile_branches, PROFILE_RUNS};
pub use profile::{
    load_profile, parse_profile, render_profile, save_profile, CopyModel, DeviceProfile,
    StructureCosts,
};
pub use schedule::{schedule_model, Schedule};
