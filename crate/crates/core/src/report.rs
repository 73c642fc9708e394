//! Outcome records for invariant checks: one [`PropReport`] per checked
//! identity or bound, with both sides, the numeric slack and, on failure,
//! a replayable witness.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// One side of a checked relation: an information quantity in bits or an
/// exact distribution digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bits(f64),
    Dist(String),
}

/// The query behind a failing check, embedded so the failure can be rerun
/// from the report alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryWitness {
    /// Canonical model text.
    pub scm: String,
    /// Protocol distribution in pmf-literal syntax.
    pub protocol: String,
    pub intervened: String,
    pub targets: Vec<String>,
    pub given: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub prop: String,
    pub status: Status,
    pub lhs: Side,
    pub rhs: Side,
    pub slack: f64,
    pub witness: Option<QueryWitness>,
}

impl PropReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}
