//! Exact inference and information-theoretic metrics for finite discrete
//! structural causal models.
//!
//! The crate computes, with rational arithmetic end to end, the entailed
//! distribution of a model, post-intervention distributions under atomic,
//! stochastic and general interventions, and the derived information
//! quantities: entropy, mutual information, intervention-weighted entropy
//! (`Hc`), entropy gain under intervention (`Ic`), their conditional
//! variants and the post-intervention mutual information. On top of that
//! sit a small text format for models, a seeded model generator, an
//! invariant suite and counterexample hunters.
//!
//! Probabilities are exact [`rational::Rational`]s; floating point appears
//! only in logarithms, so distribution-level identities are tested as exact
//! equalities and entropy-level identities within [`info::ENTROPY_TOL`].
//!
//! With the default `parallel` feature the suite and hunters fan out over
//! a rayon pool; results are merged in trial order either way, so output
//! never depends on the schedule.

pub mod causal;
pub mod dist;
pub mod dsl;
mod error;
pub mod expr;
pub mod gen;
pub mod info;
pub mod intervene;
pub mod rational;
pub mod report;
pub mod scm;
pub mod suite;

pub use dist::{FiniteRange, Pmf, VarId};
pub use error::{Error, Result};
pub use info::{Bits, ENTROPY_TOL};
pub use intervene::{Intervention, Protocol};
pub use rational::Rational;
pub use report::{PropReport, QueryWitness, Side, Status};
pub use scm::{Assignment, Mechanism, Scm, ValidationReport, Variable, Violation};
