//! Machine-readable verification reports. Field ordering is fixed (BTreeMap
//! plus struct order), so two runs with identical inputs produce
//! byte-identical JSON except for the wall-time field.

use crate::scene::SceneFile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
    NotApplicable,
}

/// Outcome of one check over all sampled points.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub status: CheckStatus,
    /// Worst residual over the samples, when the check is residual-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Measured quantity for value-type checks (dimensions, counts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Sample point realizing the worst residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_point: Option<Vec<f64>>,
    /// Whether the scene expected this check to pass.
    pub expected_pass: bool,
    /// `status == pass` agrees with `expected_pass` (skipped checks never
    /// match; not-applicable checks always do).
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub scene: SceneFile,
    pub seed: u64,
    pub sample_count: usize,
    pub checks: BTreeMap<String, CheckReport>,
    /// True when every executed check matched its expectation.
    pub all_matched: bool,
    /// Excluded from determinism comparisons.
    pub wall_time_ms: u64,
}

pub const SCHEMA_VERSION: u32 = 1;

impl Report {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Copy with the wall-time field zeroed, for byte-exact comparisons.
    pub fn without_wall_time(&self) -> Report {
        let mut r = self.clone();
        r.wall_time_ms = 0;
        r
    }
}
